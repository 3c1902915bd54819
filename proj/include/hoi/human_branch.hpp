// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hoi/config.hpp"
#include "hoi/nn.hpp"

#include <random>
#include <string>
#include <vector>

namespace hoi::human {

using nn::Graph;
using nn::Matrix;
using nn::Var;

/// Transformer condition encoder plus an L-layer decoder predictor that maps
/// a noised per-frame state and timestep to a clean estimate of that state.
class SequenceDenoiser {
 public:
  SequenceDenoiser() = default;
  SequenceDenoiser(int stateChannels, int conditionChannels, const nn::BlockConfig& encoder,
                   const nn::BlockConfig& decoder, int diffusionSteps, std::mt19937_64& rng);

  /// conditions: T_p x conditionChannels -> T_p x width.
  Var encode(Graph& g, const Matrix& conditions);

  struct Output {
    Var clean;   // T x stateChannels
    Var hidden;  // T x width, output of the last decoder block
  };
  Output predict(Graph& g, Var noised, int t, Var context);

  int width() const { return width_; }
  int stateChannels() const { return stateChannels_; }
  int conditionChannels() const { return conditionChannels_; }
  void visit(const std::string& prefix, const nn::ParamVisitor& f);

 private:
  int stateChannels_ = 0;
  int conditionChannels_ = 0;
  int width_ = 0;
  nn::Linear conditionIn_;
  std::vector<nn::EncoderBlock> encoder_;
  nn::LayerNorm encoderNorm_;
  nn::Linear stateIn_;
  nn::TimestepEmbedding timestep_;
  std::vector<nn::DecoderBlock> decoder_;
  nn::LayerNorm decoderNorm_;
  nn::Linear head_;
};

/// History for the human branch: T_p rows of [motion, contacts, group mask].
struct HumanConditions {
  Matrix historyMotion;    // T_p x J*9
  Matrix historyContacts;  // T_p x N*k*3, zero where masked
  Matrix historyMask;      // T_p x N
};

/// Human dynamics branch: state per frame is [h, C] (J*9 + N*k*3 channels).
class HumanBranch {
 public:
  HumanBranch() = default;
  HumanBranch(const ModelConfig& cfg, std::mt19937_64& rng);

  Var encodeConditions(Graph& g, const HumanConditions& c);

  struct Output {
    Var motion;   // T x J*9
    Var contact;  // T x N*k*3, the human-side contact estimate
    Var full;     // T x (J*9 + N*k*3)
    Var hidden;   // T x width
  };
  Output predict(Graph& g, Var noised, int t, Var context);

  int motionChannels() const { return motionChannels_; }
  int contactChannels() const { return contactChannels_; }
  int width() const { return net_.width(); }
  void visitParameters(const nn::ParamVisitor& f);

 private:
  int motionChannels_ = 0;
  int contactChannels_ = 0;
  SequenceDenoiser net_;
};

/// Single network over concatenated [h, o] used as the non-decoupled baseline.
class JointBranch {
 public:
  JointBranch() = default;
  JointBranch(const ModelConfig& cfg, std::mt19937_64& rng);

  /// history: T_p x (J*9 + 9)
  Var encodeConditions(Graph& g, const Matrix& history);
  SequenceDenoiser::Output predict(Graph& g, Var noised, int t, Var context);
  void visitParameters(const nn::ParamVisitor& f);

 private:
  SequenceDenoiser net_;
};

}  // namespace hoi::human
