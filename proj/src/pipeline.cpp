// SPDX-License-Identifier: Apache-2.0
#include "hoi/pipeline.hpp"

#include "hoi/checkpoint.hpp"
#include "hoi/errors.hpp"
#include "hoi/geometry.hpp"
#include "hoi/plot.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

namespace hoi::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t sequenceSeed(std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedu};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

json matrixJson(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void writeText(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << text;
  if (!f) throw Error("failed writing " + path);
}

}  // namespace

std::vector<data::HoiSequence> generateDataset(const RunConfig& cfg, int count, std::uint64_t seed) {
  if (count <= 0) throw ConfigError("empty dataset requested");
  const data::SyntheticConfig sc = cfg.syntheticConfig();
  std::vector<data::HoiSequence> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(data::generateSynthetic(sc, sequenceSeed(seed, i)));
  return out;
}

DatasetStats datasetStats(const std::vector<data::HoiSequence>& dataset) {
  DatasetStats st;
  st.sequences = static_cast<int>(dataset.size());
  long frames = 0, contactFrames = 0, activeGroups = 0;
  for (const auto& s : dataset) {
    for (const auto& c : s.contacts) {
      ++frames;
      int active = 0;
      for (auto m : c.mask) active += m != 0;
      if (active > 0) {
        ++contactFrames;
        activeGroups += active;
      }
    }
  }
  if (frames > 0) st.contactFrameFraction = static_cast<double>(contactFrames) / static_cast<double>(frames);
  if (contactFrames > 0) st.meanActiveGroups = static_cast<double>(activeGroups) / static_cast<double>(contactFrames);
  return st;
}

void cmdGenData(const RunConfig& cfg, int count, std::uint64_t seed, const std::string& outPath, std::ostream& out) {
  const auto dataset = generateDataset(cfg, count, seed);
  data::writeDataset(outPath, dataset);
  const DatasetStats st = datasetStats(dataset);
  out << "wrote " << st.sequences << " sequences to " << outPath << '\n'
      << "frames with contact: " << std::fixed << std::setprecision(3) << st.contactFrameFraction
      << ", mean active groups per contact frame: " << st.meanActiveGroups << '\n';
}

void cmdTrain(const RunConfig& cfg, const std::string& dataPath, const std::string& outDir,
              const std::string& resumeFrom, std::ostream& out) {
  const auto dataset = data::readDataset(dataPath);
  training::TrainOptions opts;
  opts.outDir = outDir;
  opts.resumeFrom = resumeFrom;
  opts.onLog = [&out](const training::LogRow& row) { out << training::formatLogRow(row) << '\n'; };
  const training::TrainResult result = training::train(dataset, cfg, opts);
  for (const auto& path : result.checkpoints) out << "checkpoint " << path << '\n';
}

json predictionRecord(const data::HoiSequence& s, const metrics::Forecast& f) {
  const Eigen::MatrixXd truthHuman = data::humanMatrix(s);
  if (f.human.rows() != truthHuman.rows() || f.human.cols() != truthHuman.cols()) {
    throw ShapeMismatch("forecast does not match the sequence layout");
  }
  data::HoiSequence predicted = s;
  for (int i = s.pastLen; i < s.numFrames(); ++i) {
    const auto at = static_cast<size_t>(i);
    predicted.human[at] = data::humanPoseFromRow(f.human.row(i));
    predicted.object[at] = data::objectPoseFromRow(f.object.row(i));
  }
  json record = json::parse(data::serializeSequence(predicted));
  const Eigen::MatrixXd emittedObject = data::objectMatrix(predicted).bottomRows(s.futureLen);
  json prediction = {{"first_frame", s.pastLen}};
  prediction["contact_human"] = f.contact.size() != 0 ? matrixJson(f.contact.bottomRows(s.futureLen)) : json(nullptr);
  prediction["contact_object"] = matrixJson(metrics::objectContacts(emittedObject, s.restContactSlots()));
  record["prediction"] = std::move(prediction);
  return record;
}

std::vector<json> sampleDataset(metrics::Forecaster& forecaster, const std::vector<data::HoiSequence>& dataset,
                                std::uint64_t seed) {
  std::vector<json> out;
  for (size_t i = 0; i < dataset.size(); ++i) {
    out.push_back(predictionRecord(dataset[i], forecaster.forecast(dataset[i], metrics::sampleSeed(seed, i, 0))));
  }
  return out;
}

void cmdSample(const std::string& checkpointPath, const std::string& dataPath, std::uint64_t seed,
               const std::string& outPath, std::ostream& out) {
  std::unique_ptr<CoopModel> storage;
  const auto forecaster = metrics::forecasterFromCheckpoint(checkpointPath, storage);
  const auto dataset = data::readDataset(dataPath);
  std::string text;
  for (const auto& record : sampleDataset(*forecaster, dataset, seed)) text += record.dump() + '\n';
  writeText(outPath, text);
  out << "wrote " << dataset.size() << " predicted sequences to " << outPath << '\n';
}

metrics::EvalReport cmdEval(const std::string& checkpointPath, const std::string& dataPath, std::uint64_t seed,
                            int samplesPerSequence, const std::string& outPath, std::ostream& out) {
  std::unique_ptr<CoopModel> storage;
  const auto forecaster = metrics::forecasterFromCheckpoint(checkpointPath, storage);
  const auto dataset = data::readDataset(dataPath);
  const metrics::EvalReport report = metrics::evaluate(*forecaster, dataset, seed, samplesPerSequence);
  out << report.table();
  if (!outPath.empty()) writeText(outPath, report.toJson().dump() + '\n');
  return report;
}

std::string variantLabel(Variant v) {
  switch (v) {
    case Variant::Joint:
      return "(a) joint";
    case Variant::Decoupled:
      return "(b) decoupled";
    case Variant::Consistency:
      return "(c) +consistency";
    case Variant::Full:
      return "(d) +HIM";
  }
  return "?";
}

const AblationRow& AblationResult::at(Variant v, std::uint64_t seed) const {
  for (const auto& r : rows) {
    if (r.variant == v && r.seed == seed) return r;
  }
  throw RangeError("no ablation row for " + variantLabel(v) + " seed " + std::to_string(seed));
}

std::string AblationResult::table() const {
  std::ostringstream os;
  os << std::left << std::setw(18) << "variant" << std::setw(6) << "seed" << std::right << std::setw(11) << "MPJPE-H"
     << std::setw(11) << "Trans.Err" << std::setw(11) << "Rot.Err" << std::setw(11) << "Pene." << std::setw(11)
     << "Gap" << '\n';
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    os << std::left << std::setw(18) << variantLabel(r.variant) << std::setw(6) << r.seed << std::right << std::fixed
       << std::setprecision(2) << std::setw(11) << m.mpjpeH << std::setw(11) << m.transErr << std::setw(11)
       << m.rotErr << std::setw(11) << m.pene << std::setw(11);
    if (m.contactGap) {
      os << *m.contactGap;
    } else {
      os << "n/a";
    }
    os << '\n';
  }
  return os.str();
}

json AblationResult::toJson() const {
  json j = {{"format", "hoi-ablation"}, {"version", 1}, {"rows", json::array()}};
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    j["rows"].push_back({{"variant", variantLabel(r.variant)},
                         {"seed", r.seed},
                         {"mpjpe_h", m.mpjpeH},
                         {"trans_err", m.transErr},
                         {"rot_err", m.rotErr},
                         {"pene", m.pene},
                         {"contact_gap", m.contactGap ? json(*m.contactGap) : json(nullptr)}});
  }
  j["him_identity"] = himIdentity;
  return j;
}

AblationResult runAblation(const RunConfig& cfg, const std::vector<data::HoiSequence>& train,
                           const std::vector<data::HoiSequence>& heldOut, const std::vector<std::uint64_t>& seeds,
                           std::ostream* progress) {
  cfg.validate();
  if (train.empty() || heldOut.empty()) throw ConfigError("ablation needs training and held-out sequences");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  ModelConfig decoupledModel = cfg.model;
  decoupledModel.kind = ModelKind::Decoupled;
  std::vector<SequenceTensors> tensors;
  for (const auto& s : train) tensors.push_back(prepare(s, decoupledModel));

  AblationResult result;
  auto score = [&](CoopModel& model, Variant v, std::uint64_t seed) {
    metrics::ModelForecaster f(model);
    result.rows.push_back({v, seed, metrics::evaluate(f, heldOut, seed, cfg.eval.samplesPerSequence).mean});
    if (progress) *progress << "evaluated " << variantLabel(v) << " seed " << seed << '\n' << std::flush;
  };
  auto branchStages = [&](CoopModel& model, const RunConfig& rc) {
    training::trainStage(model, tensors, rc, 1);
    training::trainStage(model, tensors, rc, 3);
  };

  for (const std::uint64_t seed : seeds) {
    RunConfig rc = cfg;
    rc.seed = seed;
    rc.model = decoupledModel;

    RunConfig jointCfg = rc;
    jointCfg.model.kind = ModelKind::Joint;
    CoopModel joint(jointCfg.model, seed);
    branchStages(joint, jointCfg);
    score(joint, Variant::Joint, seed);

    RunConfig plainCfg = rc;
    plainCfg.training.weights.consistency = 0.0;
    CoopModel plain(rc.model, seed);
    branchStages(plain, plainCfg);
    score(plain, Variant::Decoupled, seed);

    CoopModel consistent(rc.model, seed);
    training::trainStage(consistent, tensors, rc, 1);
    CoopModel full = consistent;
    full.attachHim();
    {
      metrics::ModelForecaster withHim(full), without(consistent);
      const std::uint64_t s0 = metrics::sampleSeed(seed, 0, 0);
      const metrics::Forecast a = withHim.forecast(heldOut.front(), s0);
      const metrics::Forecast b = without.forecast(heldOut.front(), s0);
      result.himIdentity.push_back(a.human == b.human && a.contact == b.contact && a.object == b.object);
    }
    training::trainStage(consistent, tensors, rc, 3);
    score(consistent, Variant::Consistency, seed);

    training::trainStage(full, tensors, rc, 2);
    training::trainStage(full, tensors, rc, 3);
    score(full, Variant::Full, seed);
  }
  return result;
}

void cmdAblate(const RunConfig& cfg, const std::string& dataPath, const std::string& evalDataPath,
               const std::vector<std::uint64_t>& seeds, const std::string& outPath, std::ostream& out) {
  const auto train = data::readDataset(dataPath);
  const auto heldOut = evalDataPath.empty()
                           ? generateDataset(cfg, cfg.data.evalSequences, sequenceSeed(cfg.seed, -1))
                           : data::readDataset(evalDataPath);
  const AblationResult result = runAblation(cfg, train, heldOut, seeds, &out);
  out << result.table();
  if (!outPath.empty()) writeText(outPath, result.toJson().dump() + '\n');
}

std::vector<std::string> cmdPlot(const std::string& predictionsPath, const std::string& gtPath,
                                 const std::string& outDir) {
  if (!fs::exists(gtPath)) throw Error("ground-truth file not found: " + gtPath);
  if (!fs::exists(predictionsPath)) throw Error("predictions file not found: " + predictionsPath);
  const auto predicted = data::readDataset(predictionsPath);
  const auto truth = data::readDataset(gtPath);
  if (predicted.size() != truth.size()) {
    throw ShapeMismatch("predictions and ground truth hold different sequence counts");
  }
  fs::create_directories(outDir);
  std::vector<std::string> paths;
  for (size_t i = 0; i < truth.size(); ++i) {
    std::ostringstream name;
    name << "sequence_" << std::setw(4) << std::setfill('0') << i << ".svg";
    const std::string path = (fs::path(outDir) / name.str()).string();
    writeText(path, plot::trajectorySvg(predicted[i], truth[i]));
    paths.push_back(path);
  }
  return paths;
}

}  // namespace hoi::pipeline
