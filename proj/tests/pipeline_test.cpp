// SPDX-License-Identifier: Apache-2.0
#include "test_support.hpp"

#include "hoi/checkpoint.hpp"
#include "hoi/errors.hpp"
#include "hoi/pipeline.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

using namespace hoi;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kFixtures = fs::path(HOI_SOURCE_DIR) / "tests" / "fixtures";

std::string readFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

struct CliRun {
  int code = -1;
  std::string out, err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("hoi_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args) {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(HOI_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, readFile(out), readFile(err)};
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  /// Generates `count` tiny sequences into name and returns the config used.
  RunConfig tinyData(const std::string& name, int count, int seed) {
    const CliRun r = run("gen-data --config " + (kFixtures / "tiny_config.json").string() + " --count " +
                      std::to_string(count) + " --seed " + std::to_string(seed) + " --out " + path(name));
    EXPECT_EQ(r.code, 0) << r.err;
    return loadRunConfig((kFixtures / "tiny_config.json").string());
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenDataIsDeterministicAndMatchesTheLibrary) {
  const RunConfig cfg = tinyData("a.jsonl", 3, 4);
  tinyData("b.jsonl", 3, 4);
  tinyData("c.jsonl", 3, 5);
  const std::string a = readFile(path("a.jsonl"));
  EXPECT_EQ(lines(a).size(), 3u);
  EXPECT_EQ(a, readFile(path("b.jsonl")));
  EXPECT_NE(a, readFile(path("c.jsonl")));
  data::writeDataset(path("lib.jsonl"), pipeline::generateDataset(cfg, 3, 4));
  EXPECT_EQ(readFile(path("lib.jsonl")), a);
  data::writeDataset(path("again.jsonl"), data::readDataset(path("a.jsonl")));
  EXPECT_EQ(readFile(path("again.jsonl")), a);
}

TEST_F(Cli, GenDataRejectsAnEmptyRequest) {
  const CliRun r = run("gen-data --config " + (kFixtures / "tiny_config.json").string() + " --count 0 --seed 1 --out " +
                    path("x.jsonl"));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("empty dataset requested"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("x.jsonl")));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("gen-data --count 2").code, 1);
  const CliRun missing = run("eval --checkpoint " + path("none.ckpt") + " --data " + path("none.jsonl") + " --seed 1");
  EXPECT_EQ(missing.code, 2);
  EXPECT_EQ(missing.err.rfind("error: ", 0), 0u) << missing.err;
}

TEST_F(Cli, TrainSampleAndEvalMatchTheLibrary) {
  RunConfig cfg = tinyData("train.jsonl", 2, 1);
  const CliRun train = run("train --config " + (kFixtures / "tiny_config.json").string() + " --data " +
                        path("train.jsonl") + " --out-dir " + path("run") + " --seed 3");
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_NE(train.out.find("checkpoint " + path("run/stage3.ckpt")), std::string::npos);

  cfg.seed = 3;
  const auto dataset = data::readDataset(path("train.jsonl"));
  auto library = training::train(dataset, cfg);
  std::vector<std::string> expected;
  for (const auto& row : library.log) expected.push_back(training::formatLogRow(row));
  EXPECT_EQ(lines(readFile(path("run/loss.log"))), expected);
  CoopModel restored = training::modelFromCheckpoint(checkpoint::load(path("run/stage3.ckpt")));
  EXPECT_EQ(checkpoint::checksum(restored), checkpoint::checksum(library.model));

  // Sampling is stable under a fixed seed and matches the library path.
  const std::string sample = "sample --checkpoint " + path("run/stage3.ckpt") + " --data " + path("train.jsonl") +
                             " --seed 8 --out ";
  ASSERT_EQ(run(sample + path("p1.jsonl")).code, 0);
  ASSERT_EQ(run(sample + path("p2.jsonl")).code, 0);
  const std::string predicted = readFile(path("p1.jsonl"));
  EXPECT_EQ(predicted, readFile(path("p2.jsonl")));
  metrics::ModelForecaster forecaster(restored);
  std::string libraryText;
  for (const auto& r : pipeline::sampleDataset(forecaster, dataset, 8)) libraryText += r.dump() + '\n';
  EXPECT_EQ(predicted, libraryText);

  const auto records = lines(predicted);
  ASSERT_EQ(records.size(), 2u);
  const auto reread = data::readDataset(path("p1.jsonl"));
  for (size_t i = 0; i < records.size(); ++i) {
    const json rec = json::parse(records[i]);
    const json& pred = rec.at("prediction");
    EXPECT_EQ(pred.at("first_frame"), dataset[i].pastLen);
    ASSERT_EQ(pred.at("contact_human").size(), static_cast<size_t>(dataset[i].futureLen));
    // Object-side contacts recomputed from the emitted poses: Gram-Schmidt
    // on the 6D rotation, then R p + c for every rest slot.
    const Eigen::MatrixX3d slots = reread[i].restContactSlots();
    double worst = 0.0;
    for (int f = 0; f < dataset[i].futureLen; ++f) {
      const data::ObjectPose& pose = reread[i].object[static_cast<size_t>(dataset[i].pastLen + f)];
      const Eigen::Vector3d a = pose.rotation.a.normalized();
      const Eigen::Vector3d b = (pose.rotation.b - a.dot(pose.rotation.b) * a).normalized();
      Eigen::Matrix3d r;
      r << a, b, a.cross(b);
      for (Eigen::Index s = 0; s < slots.rows(); ++s) {
        const Eigen::Vector3d world = r * slots.row(s).transpose() + pose.centroid;
        for (int c = 0; c < 3; ++c) {
          worst = std::max(worst, std::abs(pred.at("contact_object")[f][s * 3 + c].get<double>() - world(c)));
        }
      }
    }
    EXPECT_LT(worst, 1e-12);
  }

  ASSERT_EQ(run("eval --checkpoint " + path("run/stage3.ckpt") + " --data " + path("train.jsonl") +
                " --seed 8 --samples 2 --out " + path("eval.json"))
                .code,
            0);
  EXPECT_EQ(json::parse(readFile(path("eval.json"))), metrics::evaluate(forecaster, dataset, 8, 2).toJson());
}

TEST_F(Cli, OracleEvalMatchesTheLibraryBitwise) {
  tinyData("gt.jsonl", 3, 2);
  checkpoint::Checkpoint oracle;
  oracle.metadata = {{"kind", "oracle"}};
  checkpoint::save(path("oracle.ckpt"), oracle);
  const CliRun r = run("eval --checkpoint " + path("oracle.ckpt") + " --data " + path("gt.jsonl") + " --seed 4 --out " +
                    path("eval.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("MPJPE-H"), std::string::npos);
  metrics::OracleForecaster forecaster;
  const auto expected = metrics::evaluate(forecaster, data::readDataset(path("gt.jsonl")), 4, 1).toJson();
  EXPECT_EQ(readFile(path("eval.json")), expected.dump() + '\n');
  EXPECT_EQ(expected.at("mean").at("mpjpe_h"), 0.0);
}

TEST_F(Cli, AblationMatchesTheLibrary) {
  RunConfig cfg = tinyData("train.jsonl", 2, 1);
  tinyData("held.jsonl", 3, 9);
  const CliRun r = run("ablate --config " + (kFixtures / "tiny_config.json").string() + " --data " +
                    path("train.jsonl") + " --eval-data " + path("held.jsonl") + " --seeds 2 --out " +
                    path("ablate.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto result = pipeline::runAblation(cfg, data::readDataset(path("train.jsonl")),
                                            data::readDataset(path("held.jsonl")), {2});
  EXPECT_EQ(json::parse(readFile(path("ablate.json"))), result.toJson());
  ASSERT_EQ(result.rows.size(), 4u);
  EXPECT_EQ(result.himIdentity, std::vector<bool>{true});
  EXPECT_FALSE(result.at(pipeline::Variant::Joint, 2).metrics.contactGap.has_value());
  EXPECT_TRUE(result.at(pipeline::Variant::Full, 2).metrics.contactGap.has_value());
}

TEST_F(Cli, PlotMatchesTheGoldenFile) {
  const CliRun r = run("plot --predictions " + (kFixtures / "plot_pred.jsonl").string() + " --gt " +
                    (kFixtures / "plot_gt.jsonl").string() + " --out-dir " + path("svg"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(readFile(path("svg/sequence_0000.svg")), readFile(kFixtures / "plot_golden.svg"));
}

TEST_F(Cli, PlotCoordinatesFollowTheProjection) {
  const auto truth = data::readDataset((kFixtures / "plot_gt.jsonl").string()).front();
  const auto pred = data::readDataset((kFixtures / "plot_pred.jsonl").string()).front();
  double lo[2] = {1e300, 1e300}, hi[2] = {-1e300, -1e300};
  std::vector<std::vector<std::pair<double, double>>> tracks;  // truth joints, truth object, then prediction
  for (const auto* s : {&truth, &pred}) {
    for (int j = 0; j <= s->numJoints(); ++j) {
      std::vector<std::pair<double, double>> track;
      for (int f = 0; f < s->numFrames(); ++f) {
        const Eigen::Vector3d p = j < s->numJoints()
                                      ? Eigen::Vector3d(s->human[f].jointPositions.row(j).transpose())
                                      : s->object[f].centroid;
        track.emplace_back(p.x(), p.z());
        lo[0] = std::min(lo[0], p.x());
        hi[0] = std::max(hi[0], p.x());
        lo[1] = std::min(lo[1], p.z());
        hi[1] = std::max(hi[1], p.z());
      }
      tracks.push_back(track);
    }
  }
  const double scale = 440.0 / std::max(hi[0] - lo[0], hi[1] - lo[1]);
  const std::string svg = readFile(kFixtures / "plot_golden.svg");
  const std::regex polyline("points=\"([^\"]*)\"");
  size_t index = 0;
  double worst = 0.0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), polyline); it != std::sregex_iterator(); ++it, ++index) {
    ASSERT_LT(index, tracks.size());
    std::istringstream pts((*it)[1].str());
    std::string pair;
    size_t f = 0;
    while (pts >> pair) {
      const double u = std::stod(pair.substr(0, pair.find(','))), v = std::stod(pair.substr(pair.find(',') + 1));
      const auto [x, z] = tracks[index][f++];
      worst = std::max({worst, std::abs(u - (20.0 + (x - lo[0]) * scale)), std::abs(v - (460.0 - (z - lo[1]) * scale))});
    }
    EXPECT_EQ(f, tracks[index].size());
  }
  EXPECT_EQ(index, tracks.size());
  EXPECT_LE(worst, 0.0005 + 1e-9);
}

TEST_F(Cli, PlotFailsWhenGroundTruthIsMissing) {
  const CliRun r = run("plot --predictions " + (kFixtures / "plot_pred.jsonl").string() + " --gt " + path("none.jsonl") +
                    " --out-dir " + path("svg"));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("ground-truth file not found"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("svg/sequence_0000.svg")));
}

TEST(Pipeline, DatasetStatistics) {
  const RunConfig cfg = hoi::testing::tinyRun();
  const auto dataset = pipeline::generateDataset(cfg, 4, 1);
  const auto stats = pipeline::datasetStats(dataset);
  EXPECT_EQ(stats.sequences, 4);
  int withContact = 0, frames = 0;
  double active = 0.0;
  for (const auto& s : dataset) {
    for (const auto& c : s.contacts) {
      ++frames;
      int n = 0;
      for (auto m : c.mask) n += m != 0;
      withContact += n > 0;
      active += n;
    }
  }
  EXPECT_DOUBLE_EQ(stats.contactFrameFraction, double(withContact) / frames);
  EXPECT_DOUBLE_EQ(stats.meanActiveGroups, withContact ? active / withContact : 0.0);
  EXPECT_THROW(pipeline::generateDataset(cfg, 0, 1), ConfigError);
}
