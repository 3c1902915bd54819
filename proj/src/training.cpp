// SPDX-License-Identifier: Apache-2.0
#include "hoi/training.hpp"

#include "hoi/errors.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace hoi::training {

namespace {

struct MaskedSum {
  Var sum;
  double count = 0.0;
};

Matrix pastRowsZeroed(Matrix w, int pastLen, bool includePast) {
  if (!includePast) w.topRows(pastLen).setZero();
  return w;
}

MaskedSum humanSum(Var motion, Var contact, const SequenceTensors& s, bool includePast) {
  const Matrix motionWeight = pastRowsZeroed(Matrix::Ones(s.human.rows(), s.human.cols()), s.pastLen, includePast);
  const Matrix contactWeight = pastRowsZeroed(s.channelMask, s.pastLen, includePast);
  const Var sum = ad::add(ad::weightedSquaredError(motion, s.human, motionWeight),
                          ad::weightedSquaredError(contact, s.contacts, contactWeight));
  return {sum, motionWeight.sum() + contactWeight.sum()};
}

MaskedSum objectSum(Var object, const SequenceTensors& s, bool includePast) {
  const Matrix w = pastRowsZeroed(Matrix::Ones(s.object.rows(), s.object.cols()), s.pastLen, includePast);
  return {ad::weightedSquaredError(object, s.object, w), w.sum()};
}

MaskedSum consistencySum(Var contactHuman, Var objectPose, const Matrix& restSlots, const Matrix& channelMask) {
  if (contactHuman.rows() != objectPose.rows() || contactHuman.cols() != restSlots.rows() * 3 ||
      channelMask.rows() != contactHuman.rows() || channelMask.cols() != contactHuman.cols()) {
    throw ShapeMismatch("consistency loss: contact, pose and mask layouts disagree");
  }
  const Var fromObject = ad::rigidContacts(objectPose, restSlots);
  return {ad::weightedSquaredDiff(contactHuman, fromObject, channelMask), channelMask.sum()};
}

Var normalized(Graph& g, const std::vector<MaskedSum>& parts) {
  double count = 0.0;
  for (const auto& p : parts) count += p.count;
  if (count == 0.0) return g.constant(Matrix::Zero(1, 1));
  Var total = parts.front().sum;
  for (size_t i = 1; i < parts.size(); ++i) total = ad::add(total, parts[i].sum);
  return ad::scale(total, 1.0 / count);
}

Var weightedTotal(const LossValues& l, const LossWeights& w) {
  const Var all = ad::add(ad::scale(l.human, w.human), ad::scale(l.object, w.object));
  return ad::add(all, ad::scale(l.consistency, w.consistency));
}

std::uint64_t stageSeed(std::uint64_t seed, int stage) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

Var lossConsistency(Var contactHuman, Var objectPose, const Matrix& restSlots, const Matrix& channelMask) {
  Graph& g = *contactHuman.graph();
  return normalized(g, {consistencySum(contactHuman, objectPose, restSlots, channelMask)});
}

Var lossHuman(Var motion, Var contact, const SequenceTensors& s, bool includePast) {
  return normalized(*motion.graph(), {humanSum(motion, contact, s, includePast)});
}

Var lossObject(Var object, const SequenceTensors& s, bool includePast) {
  return normalized(*object.graph(), {objectSum(object, s, includePast)});
}

LossValues computeLosses(Graph& g, CoopModel& model, const diffusion::NoiseSchedule& sched,
                         const std::vector<const SequenceTensors*>& batch, const std::vector<int>& t,
                         const std::vector<Matrix>& noise, const LossWeights& weights, bool useHim) {
  if (batch.empty() || t.size() != batch.size() || noise.size() != batch.size()) {
    throw ShapeMismatch("loss batch, steps and noise must have equal nonzero length");
  }
  const bool includePast = model.config().noisePast;
  std::vector<MaskedSum> human, object, consistency;
  for (size_t i = 0; i < batch.size(); ++i) {
    const SequenceTensors& s = *batch[i];
    const Matrix clean = model.cleanState(s);
    Matrix noised = diffusion::qSample(clean, t[i], noise[i], sched);
    if (!includePast) noised.topRows(s.pastLen) = clean.topRows(s.pastLen);
    const CoopModel::Context ctx = model.encode(g, s);
    const CoopModel::Prediction p = model.predict(g, ctx, g.constant(noised), t[i], useHim);
    if (model.decoupled()) {
      human.push_back(humanSum(p.motion, p.contact, s, includePast));
      consistency.push_back(consistencySum(p.contact, p.object, s.restSlots,
                                           pastRowsZeroed(s.channelMask, s.pastLen, includePast)));
    } else {
      const Matrix w = pastRowsZeroed(Matrix::Ones(s.human.rows(), s.human.cols()), s.pastLen, includePast);
      human.push_back({ad::weightedSquaredError(p.motion, s.human, w), w.sum()});
    }
    object.push_back(objectSum(p.object, s, includePast));
  }
  LossValues out;
  out.human = normalized(g, human);
  out.object = normalized(g, object);
  out.consistency = consistency.empty() ? g.constant(Matrix::Zero(1, 1)) : normalized(g, consistency);
  out.all = weightedTotal(out, weights);
  return out;
}

std::string formatLogRow(const LogRow& row) {
  std::ostringstream os;
  os.precision(17);
  os << "step " << row.step << " stage " << row.stage << " L_human " << row.human << " L_object " << row.object
     << " L_consistency " << row.consistency << " L_all " << row.all;
  return os.str();
}

std::vector<ParamGroup> stageGroups(const CoopModel& model, int stage) {
  if (!model.decoupled()) return {ParamGroup::Joint};
  switch (stage) {
    case 1:
      return {ParamGroup::Human, ParamGroup::Object};
    case 2:
      return {ParamGroup::Him};
    case 3:
      if (model.hasHim()) return {ParamGroup::Human, ParamGroup::Object, ParamGroup::Him};
      return {ParamGroup::Human, ParamGroup::Object};
    default:
      throw ConfigError("stage must be 1, 2 or 3, got " + std::to_string(stage));
  }
}

void trainStage(CoopModel& model, const std::vector<SequenceTensors>& data, const RunConfig& cfg, int stage,
                const StageOptions& opts) {
  if (data.empty()) throw ConfigError("training needs a nonempty dataset");
  if (stage == 2 && !model.hasHim()) throw ConfigError("stage 2 trains the HIM, which is not attached");
  const StagePlan& plan = cfg.training.stages[static_cast<size_t>(stage - 1)];
  model.setTrainable(stageGroups(model, stage));
  nn::Adam adam(model.trainableParameters(), plan.learningRate, cfg.training.gradClip);
  const diffusion::NoiseSchedule sched = diffusion::makeSchedule(cfg.model.diffusionSteps, cfg.model.schedule);
  std::mt19937_64 rng(stageSeed(cfg.seed, stage));
  std::uniform_int_distribution<int> stepDist(0, sched.steps - 1);
  const bool useHim = model.hasHim() && stage >= 2;

  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = order.size();
  LogRow interval;
  int inInterval = 0;
  for (long k = 1; k <= plan.steps; ++k) {
    const long step = opts.stepOffset + k;
    std::vector<const SequenceTensors*> batch;
    std::vector<int> t;
    std::vector<Matrix> noise;
    for (int b = 0; b < cfg.training.batchSize; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const SequenceTensors& s = data[order[cursor++]];
      batch.push_back(&s);
      t.push_back(stepDist(rng));
      noise.push_back(diffusion::standardNormal(s.frames(), model.stateChannels(), rng));
    }
    Graph g;
    const LossValues l = computeLosses(g, model, sched, batch, t, noise, cfg.training.weights, useHim);
    const double all = l.all.scalar();
    if (!std::isfinite(all)) throw NaNLoss(stage, step);
    adam.zeroGrad();
    g.backward(l.all);
    adam.step();

    const LogRow row{step, stage, l.human.scalar(), l.object.scalar(), l.consistency.scalar(), all};
    if (opts.onStep) opts.onStep(row);
    interval.human += row.human;
    interval.object += row.object;
    interval.consistency += row.consistency;
    interval.all += row.all;
    if (++inInterval == cfg.training.logEvery || k == plan.steps) {
      const double n = inInterval;
      const LogRow mean{step, stage, interval.human / n, interval.object / n, interval.consistency / n,
                        interval.all / n};
      if (opts.onLog) opts.onLog(mean);
      interval = LogRow{};
      inInterval = 0;
    }
  }
  model.setTrainable({ParamGroup::Human, ParamGroup::Object, ParamGroup::Him, ParamGroup::Joint});
}

checkpoint::Checkpoint captureModel(CoopModel& model, int stage) {
  nlohmann::json meta = {{"kind", "model"},
                         {"stage", stage},
                         {"him", model.hasHim()},
                         {"model", toJson(model.config())}};
  return checkpoint::capture(model, meta);
}

CoopModel modelFromCheckpoint(const checkpoint::Checkpoint& ckpt) {
  const nlohmann::json& meta = ckpt.metadata;
  if (!meta.contains("kind") || meta["kind"] != "model" || !meta.contains("model")) {
    throw CheckpointError("checkpoint does not describe a model");
  }
  ModelConfig cfg;
  try {
    cfg = modelConfigFromJson(meta["model"]);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint model config: ") + e.what());
  }
  CoopModel model(cfg, 0);
  if (meta.value("him", false)) model.attachHim();
  checkpoint::restore(model, ckpt);
  return model;
}

TrainResult train(const std::vector<data::HoiSequence>& dataset, const RunConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("training needs a nonempty dataset");
  std::vector<SequenceTensors> data;
  data.reserve(dataset.size());
  for (const auto& s : dataset) data.push_back(prepare(s, cfg.model));

  TrainResult result;
  std::ofstream logFile;
  if (!opts.outDir.empty()) {
    std::filesystem::create_directories(opts.outDir);
    logFile.open(std::filesystem::path(opts.outDir) / "loss.log", std::ios::app);
    if (!logFile) throw Error("cannot open loss log in " + opts.outDir);
  }
  StageOptions stageOpts;
  stageOpts.onLog = [&](const LogRow& row) {
    result.log.push_back(row);
    if (logFile.is_open()) logFile << formatLogRow(row) << '\n' << std::flush;
    if (opts.onLog) opts.onLog(row);
  };
  auto finishStage = [&](int stage) {
    if (opts.outDir.empty()) return;
    const std::string path = (std::filesystem::path(opts.outDir) / ("stage" + std::to_string(stage) + ".ckpt")).string();
    checkpoint::save(path, captureModel(result.model, stage));
    result.checkpoints.push_back(path);
  };

  int firstStage = 1;
  if (!opts.resumeFrom.empty()) {
    const checkpoint::Checkpoint ckpt = checkpoint::load(opts.resumeFrom);
    if (ckpt.metadata.value("stage", 0) != 1) throw CheckpointError("resume expects a stage-1 checkpoint");
    result.model = modelFromCheckpoint(ckpt);
    if (toJson(result.model.config()) != toJson(cfg.model)) {
      throw ConfigError("resume checkpoint was trained with a different model config");
    }
    firstStage = 2;
    stageOpts.stepOffset = cfg.training.stages[0].steps;
  } else {
    result.model = CoopModel(cfg.model, cfg.seed);
  }
  const bool withHim = cfg.training.useHim && result.model.decoupled();
  for (int stage = firstStage; stage <= 3; ++stage) {
    if (stage == 2) {
      if (!withHim) continue;
      result.model.attachHim();
    }
    trainStage(result.model, data, cfg, stage, stageOpts);
    stageOpts.stepOffset += cfg.training.stages[static_cast<size_t>(stage - 1)].steps;
    finishStage(stage);
  }
  return result;
}

}  // namespace hoi::training
