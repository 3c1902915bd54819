// SPDX-License-Identifier: Apache-2.0
#include "hoi/config.hpp"

#include "hoi/errors.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace hoi {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects any it was not asked about.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError("config section \"" + path_ + "\" must be an object");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key \"" + path_ + key + "\" has the wrong type");
    }
  }

  const json* section(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return path_ + key + "."; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) {
        throw ConfigError("unknown config key \"" + path_ + key + "\"");
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json blockJson(const nn::BlockConfig& b) {
  return {{"layers", b.layers}, {"width", b.width}, {"heads", b.heads}, {"ff_mult", b.ffMult}};
}

void readBlock(StrictObject& parent, const char* key, nn::BlockConfig& b) {
  if (const json* s = parent.section(key)) {
    StrictObject o(*s, parent.path(key));
    o.read("layers", b.layers);
    o.read("width", b.width);
    o.read("heads", b.heads);
    o.read("ff_mult", b.ffMult);
    o.finish();
  }
}

ModelKind parseKind(const std::string& s) {
  if (s == "decoupled") return ModelKind::Decoupled;
  if (s == "joint") return ModelKind::Joint;
  throw ConfigError("unknown model kind \"" + s + "\"");
}

HimFusion parseFusion(const std::string& s) {
  if (s == "per_layer") return HimFusion::PerLayer;
  if (s == "final") return HimFusion::Final;
  throw ConfigError("unknown HIM fusion \"" + s + "\"");
}

}  // namespace

std::string toString(ModelKind k) {
  return k == ModelKind::Decoupled ? "decoupled" : "joint";
}

std::string toString(HimFusion f) {
  return f == HimFusion::PerLayer ? "per_layer" : "final";
}

void ModelConfig::validate() const {
  humanEncoder.validate();
  humanDecoder.validate();
  objectEncoder.validate();
  objectDecoder.validate();
  if (humanEncoder.width != humanDecoder.width || objectEncoder.width != objectDecoder.width) {
    throw ConfigError("encoder and decoder widths must match within a branch");
  }
  if (joints < 1 || groups < 1 || samplesPerGroup < 1 || pastLen < 1 || futureLen < 1) {
    throw ConfigError("model layout sizes must be positive");
  }
  if (groups != joints) {
    throw ConfigError("contact groups must equal the joint count (one group per joint region)");
  }
  if (diffusionSteps < 2) {
    throw ConfigError("diffusion needs at least 2 steps");
  }
  if (contactTokens < 1) {
    throw ConfigError("at least one learnable contact token is required");
  }
}

void LossWeights::validate() const {
  for (double w : {human, object, consistency}) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ConfigError("loss weights must be finite and nonnegative");
    }
  }
}

void TrainConfig::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (stages[static_cast<size_t>(i)].stage != i + 1) {
      throw ConfigError("stage plans must be listed in order 1, 2, 3");
    }
    if (stages[static_cast<size_t>(i)].steps < 0 || !(stages[static_cast<size_t>(i)].learningRate > 0.0)) {
      throw ConfigError("stage steps must be >= 0 and learning rates > 0");
    }
  }
  if (batchSize < 1 || logEvery < 1) {
    throw ConfigError("batch_size and log_every must be positive");
  }
  weights.validate();
}

data::SyntheticConfig RunConfig::syntheticConfig() const {
  data::SyntheticConfig s = data.synthetic;
  s.joints = model.joints;
  s.pastLen = model.pastLen;
  s.futureLen = model.futureLen;
  s.contactSamples = model.samplesPerGroup;
  return s;
}

void RunConfig::validate() const {
  model.validate();
  training.validate();
  syntheticConfig().validate();
  if (data.trainSequences < 0 || data.evalSequences < 0) {
    throw ConfigError("sequence counts must be nonnegative");
  }
  if (eval.samplesPerSequence < 1) {
    throw ConfigError("samples_per_sequence must be positive");
  }
}

json toJson(const ModelConfig& c) {
  return {{"kind", toString(c.kind)},
          {"human_encoder", blockJson(c.humanEncoder)},
          {"human_decoder", blockJson(c.humanDecoder)},
          {"object_encoder", blockJson(c.objectEncoder)},
          {"object_decoder", blockJson(c.objectDecoder)},
          {"joints", c.joints},
          {"groups", c.groups},
          {"samples_per_group", c.samplesPerGroup},
          {"past_len", c.pastLen},
          {"future_len", c.futureLen},
          {"diffusion_steps", c.diffusionSteps},
          {"schedule", diffusion::toString(c.schedule)},
          {"contact_tokens", c.contactTokens},
          {"share_contact_aggregation", c.shareContactAggregation},
          {"him_fusion", toString(c.himFusion)},
          {"noise_past", c.noisePast}};
}

ModelConfig modelConfigFromJson(const json& j) {
  ModelConfig c;
  StrictObject o(j, "model.");
  std::string kind = toString(c.kind), schedule = diffusion::toString(c.schedule), fusion = toString(c.himFusion);
  o.read("kind", kind);
  readBlock(o, "human_encoder", c.humanEncoder);
  readBlock(o, "human_decoder", c.humanDecoder);
  readBlock(o, "object_encoder", c.objectEncoder);
  readBlock(o, "object_decoder", c.objectDecoder);
  o.read("joints", c.joints);
  o.read("groups", c.groups);
  o.read("samples_per_group", c.samplesPerGroup);
  o.read("past_len", c.pastLen);
  o.read("future_len", c.futureLen);
  o.read("diffusion_steps", c.diffusionSteps);
  o.read("schedule", schedule);
  o.read("contact_tokens", c.contactTokens);
  o.read("share_contact_aggregation", c.shareContactAggregation);
  o.read("him_fusion", fusion);
  o.read("noise_past", c.noisePast);
  o.finish();
  c.kind = parseKind(kind);
  c.schedule = diffusion::parseScheduleKind(schedule);
  c.himFusion = parseFusion(fusion);
  c.validate();
  return c;
}

json toJson(const RunConfig& c) {
  json stages = json::array();
  for (const auto& s : c.training.stages) {
    stages.push_back({{"steps", s.steps}, {"learning_rate", s.learningRate}});
  }
  const auto& syn = c.data.synthetic;
  return {{"model", toJson(c.model)},
          {"data",
           {{"surface_points", syn.surfacePoints},
            {"frame_rate", syn.frameRate},
            {"grasp_radius", syn.graspRadius},
            {"contact_window_min", syn.contactWindowMin},
            {"contact_window_max", syn.contactWindowMax},
            {"keyframe_spacing", syn.keyframeSpacing},
            {"train_sequences", c.data.trainSequences},
            {"eval_sequences", c.data.evalSequences}}},
          {"training",
           {{"stages", stages},
            {"batch_size", c.training.batchSize},
            {"loss_weights",
             {{"human", c.training.weights.human},
              {"object", c.training.weights.object},
              {"consistency", c.training.weights.consistency}}},
            {"grad_clip", c.training.gradClip},
            {"use_him", c.training.useHim},
            {"log_every", c.training.logEvery}}},
          {"eval", {{"samples_per_sequence", c.eval.samplesPerSequence}}},
          {"seed", c.seed}};
}

RunConfig runConfigFromJson(const json& j) {
  RunConfig c;
  StrictObject root(j, "");
  if (const json* m = root.section("model")) {
    c.model = modelConfigFromJson(*m);
  }
  if (const json* d = root.section("data")) {
    StrictObject o(*d, "data.");
    auto& syn = c.data.synthetic;
    o.read("surface_points", syn.surfacePoints);
    o.read("frame_rate", syn.frameRate);
    o.read("grasp_radius", syn.graspRadius);
    o.read("contact_window_min", syn.contactWindowMin);
    o.read("contact_window_max", syn.contactWindowMax);
    o.read("keyframe_spacing", syn.keyframeSpacing);
    o.read("train_sequences", c.data.trainSequences);
    o.read("eval_sequences", c.data.evalSequences);
    o.finish();
  }
  if (const json* t = root.section("training")) {
    StrictObject o(*t, "training.");
    if (const json* stages = o.section("stages")) {
      if (!stages->is_array() || stages->size() != 3) {
        throw ConfigError("training.stages must list exactly three stages");
      }
      for (size_t i = 0; i < 3; ++i) {
        StrictObject s((*stages)[i], "training.stages[" + std::to_string(i) + "].");
        s.read("steps", c.training.stages[i].steps);
        s.read("learning_rate", c.training.stages[i].learningRate);
        s.finish();
      }
    }
    o.read("batch_size", c.training.batchSize);
    if (const json* w = o.section("loss_weights")) {
      StrictObject lw(*w, "training.loss_weights.");
      lw.read("human", c.training.weights.human);
      lw.read("object", c.training.weights.object);
      lw.read("consistency", c.training.weights.consistency);
      lw.finish();
    }
    o.read("grad_clip", c.training.gradClip);
    o.read("use_him", c.training.useHim);
    o.read("log_every", c.training.logEvery);
    o.finish();
  }
  if (const json* e = root.section("eval")) {
    StrictObject o(*e, "eval.");
    o.read("samples_per_sequence", c.eval.samplesPerSequence);
    o.finish();
  }
  root.read("seed", c.seed);
  root.finish();
  c.validate();
  return c;
}

RunConfig loadRunConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config " + path);
  }
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return runConfigFromJson(j);
}

}  // namespace hoi
