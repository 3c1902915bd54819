// SPDX-License-Identifier: Apache-2.0
#include "test_support.hpp"

#include "hoi/checkpoint.hpp"
#include "hoi/errors.hpp"
#include "hoi/metrics.hpp"
#include "hoi/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace hoi;
namespace fs = std::filesystem;

namespace {

fs::path scratchDir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = fs::temp_directory_path() / (std::string("hoi_training_") + info->name());
  fs::remove_all(dir);
  return dir;
}

std::vector<std::string> formatted(const std::vector<training::LogRow>& log) {
  std::vector<std::string> out;
  for (const auto& r : log) out.push_back(training::formatLogRow(r));
  return out;
}

std::vector<std::string> readLines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

RunConfig loggedRun() {
  RunConfig cfg = hoi::testing::tinyRun();
  cfg.training.logEvery = 2;
  return cfg;
}

}  // namespace

TEST(LogRow, FormatsAllFields) {
  EXPECT_EQ(training::formatLogRow({12, 3, 0.5, 0.25, 0.125, 1.0}),
            "step 12 stage 3 L_human 0.5 L_object 0.25 L_consistency 0.125 L_all 1");
}

TEST(StageGroups, FollowTheSchedule) {
  const ModelConfig cfg = hoi::testing::tinyModel();
  CoopModel m(cfg, 1);
  using G = std::vector<ParamGroup>;
  EXPECT_EQ(training::stageGroups(m, 1), (G{ParamGroup::Human, ParamGroup::Object}));
  EXPECT_EQ(training::stageGroups(m, 2), G{ParamGroup::Him});
  EXPECT_EQ(training::stageGroups(m, 3), (G{ParamGroup::Human, ParamGroup::Object}));
  m.attachHim();
  EXPECT_EQ(training::stageGroups(m, 3), (G{ParamGroup::Human, ParamGroup::Object, ParamGroup::Him}));
  EXPECT_THROW(training::stageGroups(m, 4), ConfigError);
  ModelConfig joint = cfg;
  joint.kind = ModelKind::Joint;
  EXPECT_EQ(training::stageGroups(CoopModel(joint, 1), 1), G{ParamGroup::Joint});
}

TEST(Training, StageTwoRequiresControl) {
  const RunConfig cfg = hoi::testing::tinyRun();
  std::vector<SequenceTensors> data{prepare(hoi::testing::tinyDataset(cfg, 1)[0], cfg.model)};
  CoopModel m(cfg.model, 1);
  EXPECT_THROW(training::trainStage(m, data, cfg, 2), ConfigError);
}

TEST(Training, StageTwoKeepsBranchChecksums) {
  const RunConfig cfg = hoi::testing::tinyRun();
  std::vector<SequenceTensors> data;
  for (const auto& s : hoi::testing::tinyDataset(cfg, 3)) data.push_back(prepare(s, cfg.model));
  CoopModel m(cfg.model, 2);
  training::trainStage(m, data, cfg, 1);
  m.attachHim();
  auto branches = [&]() {
    checkpoint::Checkpoint c;
    for (auto group : {ParamGroup::Human, ParamGroup::Object}) {
      m.visitGroup(group, [&](const std::string& n, nn::Parameter& p) { c.tensors[n] = p.value; });
    }
    return checkpoint::encode(c);
  };
  const std::string before = branches();
  const std::uint64_t all = checkpoint::checksum(m);
  training::trainStage(m, data, cfg, 2);
  EXPECT_EQ(branches(), before);
  EXPECT_NE(checkpoint::checksum(m), all);
  // Every parameter is trainable again once the stage ends.
  int frozen = 0;
  m.visitParameters([&](const std::string&, nn::Parameter& p) { frozen += !p.trainable; });
  EXPECT_EQ(frozen, 0);
}

TEST(Training, WritesLoadableCheckpointsAndLog) {
  const RunConfig cfg = loggedRun();
  const auto dataset = hoi::testing::tinyDataset(cfg, 3);
  const fs::path dir = scratchDir();
  auto result = training::train(dataset, cfg, {dir.string(), "", nullptr});
  ASSERT_EQ(result.checkpoints.size(), 3u);
  for (int stage = 1; stage <= 3; ++stage) {
    const fs::path p = dir / ("stage" + std::to_string(stage) + ".ckpt");
    EXPECT_EQ(result.checkpoints[stage - 1], p.string());
    const auto ckpt = checkpoint::load(p.string());
    EXPECT_EQ(ckpt.metadata.at("stage"), stage);
    EXPECT_EQ(ckpt.metadata.at("him"), stage >= 2);
    CoopModel restored = training::modelFromCheckpoint(ckpt);
    EXPECT_EQ(restored.hasHim(), stage >= 2);
  }
  CoopModel last = training::modelFromCheckpoint(checkpoint::load((dir / "stage3.ckpt").string()));
  EXPECT_EQ(checkpoint::checksum(last), checkpoint::checksum(result.model));
  EXPECT_EQ(readLines(dir / "loss.log"), formatted(result.log));
  // Steps 2 and 4 of stage 1, 2 and the last of stage 2 (7), 9 and the last of stage 3 (10).
  std::vector<long> steps;
  for (const auto& r : result.log) steps.push_back(r.step);
  EXPECT_EQ(steps, (std::vector<long>{2, 4, 6, 7, 9, 10}));
  for (const auto& r : result.log) {
    EXPECT_TRUE(std::isfinite(r.all));
    EXPECT_NEAR(r.all, cfg.training.weights.human * r.human + cfg.training.weights.object * r.object +
                           cfg.training.weights.consistency * r.consistency,
                1e-9);
  }
  fs::remove_all(dir);
}

TEST(Training, SameSeedReproducesTheLogBitwise) {
  const RunConfig cfg = loggedRun();
  const auto dataset = hoi::testing::tinyDataset(cfg, 3);
  const auto a = training::train(dataset, cfg);
  const auto b = training::train(dataset, cfg);
  EXPECT_EQ(formatted(a.log), formatted(b.log));
  RunConfig other = cfg;
  other.seed = cfg.seed + 1;
  EXPECT_NE(formatted(training::train(dataset, other).log), formatted(a.log));
}

TEST(Training, ResumeMatchesTheUninterruptedRun) {
  const RunConfig cfg = loggedRun();
  const auto dataset = hoi::testing::tinyDataset(cfg, 3);
  const fs::path dir = scratchDir();
  auto full = training::train(dataset, cfg, {(dir / "full").string(), "", nullptr});
  auto resumed = training::train(dataset, cfg, {(dir / "resumed").string(), (dir / "full" / "stage1.ckpt").string(), nullptr});
  const auto fullRows = formatted(full.log);
  const auto resumedRows = formatted(resumed.log);
  ASSERT_EQ(resumedRows.size(), 4u);
  EXPECT_EQ(resumedRows, std::vector<std::string>(fullRows.end() - 4, fullRows.end()));
  EXPECT_EQ(checkpoint::checksum(resumed.model), checkpoint::checksum(full.model));

  EXPECT_THROW(training::train(dataset, cfg, {"", (dir / "full" / "stage2.ckpt").string(), nullptr}),
               CheckpointError);
  RunConfig wider = cfg;
  wider.model.humanDecoder.width = wider.model.humanEncoder.width = 16;
  EXPECT_THROW(training::train(dataset, wider, {"", (dir / "full" / "stage1.ckpt").string(), nullptr}),
               ConfigError);
  fs::remove_all(dir);
}

TEST(Training, WithoutControlStageTwoIsSkipped) {
  RunConfig cfg = loggedRun();
  cfg.training.useHim = false;
  const fs::path dir = scratchDir();
  auto result = training::train(hoi::testing::tinyDataset(cfg, 2), cfg, {dir.string(), "", nullptr});
  EXPECT_FALSE(result.model.hasHim());
  EXPECT_EQ(result.checkpoints.size(), 2u);
  EXPECT_FALSE(fs::exists(dir / "stage2.ckpt"));
  for (const auto& r : result.log) EXPECT_NE(r.stage, 2);
  fs::remove_all(dir);
}

TEST(Training, JointModelTrainsWithoutConsistency) {
  RunConfig cfg = loggedRun();
  cfg.model.kind = ModelKind::Joint;
  auto result = training::train(hoi::testing::tinyDataset(cfg, 2), cfg);
  ASSERT_FALSE(result.log.empty());
  for (const auto& r : result.log) EXPECT_EQ(r.consistency, 0.0);
}

TEST(Training, NonFiniteLossIsReported) {
  const RunConfig cfg = hoi::testing::tinyRun();
  std::vector<SequenceTensors> data{prepare(hoi::testing::tinyDataset(cfg, 1)[0], cfg.model)};
  CoopModel m(cfg.model, 1);
  m.visitParameters([](const std::string& name, nn::Parameter& p) {
    if (name == "object.head.bias") p.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  });
  try {
    training::trainStage(m, data, cfg, 1);
    FAIL() << "expected NaNLoss";
  } catch (const NaNLoss& e) {
    EXPECT_EQ(e.stage(), 1);
    EXPECT_EQ(e.step(), 1);
  }
}

TEST(Training, RejectsEmptyDataset) {
  EXPECT_THROW(training::train({}, hoi::testing::tinyRun()), ConfigError);
}

namespace {

struct ProbeResult {
  std::vector<double> stageTwoObject;  // logged interval means
  double trainedMpjpe = 0.0;
  double untrainedMpjpe = 0.0;
};

/// Full schedule on four sequences for the reference seeds 1, 2, 3, scored
/// on four held-out sequences. Computed once and shared.
const std::vector<ProbeResult>& referenceRuns() {
  static const std::vector<ProbeResult> runs = [] {
    std::vector<ProbeResult> out;
    for (std::uint64_t seed : {1, 2, 3}) {
      RunConfig cfg = hoi::testing::tinyRun(16, 2);
      cfg.seed = seed;
      cfg.training.stages = {StagePlan{1, 300, 1e-3}, StagePlan{2, 300, 1e-3}, StagePlan{3, 300, 1e-3}};
      cfg.training.batchSize = 4;
      cfg.training.logEvery = 30;
      ProbeResult r;
      training::TrainOptions opts;
      opts.onLog = [&](const training::LogRow& row) {
        if (row.stage == 2) r.stageTwoObject.push_back(row.object);
      };
      auto trained = training::train(hoi::testing::tinyDataset(cfg, 4, 11), cfg, opts);
      CoopModel fresh(cfg.model, seed);
      const auto heldOut = hoi::testing::tinyDataset(cfg, 4, 100);
      metrics::ModelForecaster a(trained.model), b(fresh);
      r.trainedMpjpe = metrics::evaluate(a, heldOut, 5, 1).mean.mpjpeH;
      r.untrainedMpjpe = metrics::evaluate(b, heldOut, 5, 1).mean.mpjpeH;
      out.push_back(r);
    }
    return out;
  }();
  return runs;
}

}  // namespace

TEST(TrainingProbe, StageTwoObjectLossMostlyDecreases) {
  for (const auto& r : referenceRuns()) {
    ASSERT_EQ(r.stageTwoObject.size(), 10u);
    int decreases = 0;
    for (size_t i = 1; i < r.stageTwoObject.size(); ++i) decreases += r.stageTwoObject[i] < r.stageTwoObject[i - 1];
    EXPECT_GT(2 * decreases, static_cast<int>(r.stageTwoObject.size()) - 1);
  }
}

TEST(TrainingProbe, TrainedModelBeatsUntrainedOnHeldOutMpjpe) {
  for (const auto& r : referenceRuns()) EXPECT_LT(r.trainedMpjpe, r.untrainedMpjpe);
}
