// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hoi/human_branch.hpp"
#include "hoi/object_branch.hpp"

#include <vector>

namespace hoi::object {

/// Trainable copy of the object predictor blocks. Human features enter each
/// copied block through a zero-initialized input connector; each block's
/// output goes through a zero-initialized output connector and is added to
/// the object stream.
struct HimParams {
  std::vector<ObjectDecoderBlock> blocks;
  std::vector<nn::ZeroLinear> inConnectors;   // human width -> object width
  std::vector<nn::ZeroLinear> outConnectors;  // object width -> object width

  void visitParameters(const nn::ParamVisitor& f);
};

}  // namespace hoi::object

namespace hoi::him {

using object::HimParams;

/// Deep-copies the object decoder blocks and creates zeroed connectors.
HimParams initHim(const object::ObjectBranch& objectBranch, int humanWidth);

/// Per-frame hidden states of the human predictor's last decoder block on the
/// current human denoising state.
nn::Var humanFeatures(nn::Graph& g, human::HumanBranch& humanBranch, nn::Var noisedHuman, int t, nn::Var context);

}  // namespace hoi::him
