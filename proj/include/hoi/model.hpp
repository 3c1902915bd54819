// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hoi/config.hpp"
#include "hoi/data.hpp"
#include "hoi/him.hpp"
#include "hoi/human_branch.hpp"
#include "hoi/object_branch.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace hoi {

using nn::Graph;
using nn::Matrix;
using nn::Var;

/// Dense per-sequence arrays in the layout the networks consume.
struct SequenceTensors {
  int pastLen = 0;
  Matrix human;        // T x J*9
  Matrix contacts;     // T x N*k*3, zero where masked
  Matrix channelMask;  // T x N*k*3
  Matrix groupMask;    // T x N
  Matrix object;       // T x 9
  Matrix restCloud;    // M x 3
  Matrix restSlots;    // N*k x 3

  int frames() const { return static_cast<int>(human.rows()); }
};

/// Throws ShapeMismatch when the sequence layout differs from the model's.
SequenceTensors prepare(const data::HoiSequence& s, const ModelConfig& cfg);

/// Parameter groups that a training stage may update.
enum class ParamGroup { Human, Object, Him, Joint };

/// Both branches plus the optional HIM, or the single joint network.
class CoopModel {
 public:
  CoopModel() = default;
  CoopModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  bool decoupled() const { return cfg_.kind == ModelKind::Decoupled; }

  /// Clones the object predictor into a fresh HIM (replacing any existing one).
  void attachHim();
  bool hasHim() const { return him_.has_value(); }
  void detachHim() { him_.reset(); }

  /// History encodings for one sequence; reusable across denoising steps of
  /// the same graph.
  struct Context {
    Var human;                       // decoupled: human history context
    Var object;                      // decoupled: object history context
    std::vector<Var> contactTokens;  // decoupled
    Var joint;                       // joint model
  };
  Context encode(Graph& g, const SequenceTensors& s);

  struct Prediction {
    Var motion;    // T x J*9
    Var contact;   // T x N*k*3 (decoupled only)
    Var object;    // T x 9
  };
  /// noised holds [h, C, o] for the decoupled model and [h, o] for the joint
  /// model. HIM is used when attached and `useHim` is set.
  Prediction predict(Graph& g, const Context& ctx, Var noised, int t, bool useHim = true);

  /// Diffusion state width: J*9 + N*k*3 + 9 (decoupled) or J*9 + 9 (joint).
  int stateChannels() const;
  Matrix cleanState(const SequenceTensors& s) const;

  void visitParameters(const nn::ParamVisitor& f);
  void visitGroup(ParamGroup group, const nn::ParamVisitor& f);
  /// Marks only the listed groups trainable.
  void setTrainable(const std::vector<ParamGroup>& groups);
  std::vector<nn::Parameter*> trainableParameters();

  human::HumanBranch& humanBranch() { return human_; }
  object::ObjectBranch& objectBranch() { return object_; }
  human::JointBranch& jointBranch() { return joint_; }
  object::HimParams& him() { return *him_; }

 private:
  ModelConfig cfg_;
  human::HumanBranch human_;
  object::ObjectBranch object_;
  human::JointBranch joint_;
  std::optional<object::HimParams> him_;
};

}  // namespace hoi
