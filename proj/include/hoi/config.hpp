// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hoi/data.hpp"
#include "hoi/diffusion.hpp"
#include "hoi/nn.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace hoi {

enum class ModelKind {
  Decoupled,  // separate human and object branches
  Joint,      // one network over concatenated human and object channels
};

enum class HimFusion { PerLayer, Final };

struct ModelConfig {
  ModelKind kind = ModelKind::Decoupled;
  nn::BlockConfig humanEncoder;
  nn::BlockConfig humanDecoder;
  nn::BlockConfig objectEncoder;
  nn::BlockConfig objectDecoder;
  int joints = 21;
  int groups = 21;
  int samplesPerGroup = 4;
  int pastLen = 10;
  int futureLen = 10;
  int diffusionSteps = 100;
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::Cosine;
  int contactTokens = 8;
  bool shareContactAggregation = true;
  HimFusion himFusion = HimFusion::PerLayer;
  /// When false the past frames stay clean in the diffusion state and are
  /// clamped to the observation during sampling.
  bool noisePast = true;

  int frames() const { return pastLen + futureLen; }
  int humanChannels() const { return joints * data::kJointChannels; }
  int contactChannels() const { return groups * samplesPerGroup * 3; }
  void validate() const;
};

struct LossWeights {
  double human = 1.0;
  double object = 1.0;
  double consistency = 0.5;

  void validate() const;
};

struct StagePlan {
  int stage = 1;
  long steps = 0;
  double learningRate = 1e-4;
};

struct TrainConfig {
  std::array<StagePlan, 3> stages{StagePlan{1, 2000, 1e-4}, StagePlan{2, 500, 1e-4}, StagePlan{3, 500, 1e-4}};
  int batchSize = 8;
  LossWeights weights;
  double gradClip = 1.0;
  bool useHim = true;
  int logEvery = 1;

  void validate() const;
};

struct DataConfig {
  data::SyntheticConfig synthetic;
  int trainSequences = 8;
  int evalSequences = 8;
};

struct EvalConfig {
  int samplesPerSequence = 1;
};

struct RunConfig {
  ModelConfig model;
  DataConfig data;
  TrainConfig training;
  EvalConfig eval;
  std::uint64_t seed = 0;

  /// Synthetic generator settings implied by the model layout.
  data::SyntheticConfig syntheticConfig() const;
  void validate() const;
};

nlohmann::json toJson(const ModelConfig& c);
nlohmann::json toJson(const RunConfig& c);
/// Strict parsing: unknown keys and wrong types raise ConfigError. Missing
/// keys keep their defaults.
ModelConfig modelConfigFromJson(const nlohmann::json& j);
RunConfig runConfigFromJson(const nlohmann::json& j);
RunConfig loadRunConfig(const std::string& path);

std::string toString(ModelKind k);
std::string toString(HimFusion f);

}  // namespace hoi
