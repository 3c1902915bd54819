// SPDX-License-Identifier: Apache-2.0
#include "hoi/him.hpp"

namespace hoi::object {

void HimParams::visitParameters(const nn::ParamVisitor& f) {
  for (size_t i = 0; i < blocks.size(); ++i) {
    const std::string at = std::to_string(i) + ".";
    blocks[i].visit("him.block." + at, f);
    inConnectors[i].visit("him.in." + at, f);
    outConnectors[i].visit("him.out." + at, f);
  }
}

}  // namespace hoi::object

namespace hoi::him {

HimParams initHim(const object::ObjectBranch& objectBranch, int humanWidth) {
  HimParams p;
  p.blocks = objectBranch.decoderBlocks();
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    p.inConnectors.emplace_back(humanWidth, objectBranch.width());
    p.outConnectors.emplace_back(objectBranch.width(), objectBranch.width());
  }
  return p;
}

nn::Var humanFeatures(nn::Graph& g, human::HumanBranch& humanBranch, nn::Var noisedHuman, int t, nn::Var context) {
  return humanBranch.predict(g, noisedHuman, t, context).hidden;
}

}  // namespace hoi::him
