// SPDX-License-Identifier: Apache-2.0
#include "hoi/human_branch.hpp"

#include "hoi/errors.hpp"

namespace hoi::human {

SequenceDenoiser::SequenceDenoiser(int stateChannels, int conditionChannels, const nn::BlockConfig& encoder,
                                   const nn::BlockConfig& decoder, int diffusionSteps, std::mt19937_64& rng)
    : stateChannels_(stateChannels),
      conditionChannels_(conditionChannels),
      width_(decoder.width),
      conditionIn_(conditionChannels, encoder.width, rng),
      encoderNorm_(encoder.width),
      stateIn_(stateChannels, decoder.width, rng),
      timestep_(decoder.width, diffusionSteps, rng),
      decoderNorm_(decoder.width),
      head_(decoder.width, stateChannels, rng) {
  encoder.validate();
  decoder.validate();
  for (int i = 0; i < encoder.layers; ++i) encoder_.emplace_back(encoder, rng);
  for (int i = 0; i < decoder.layers; ++i) decoder_.emplace_back(decoder, rng);
}

Var SequenceDenoiser::encode(Graph& g, const Matrix& conditions) {
  if (conditions.cols() != conditionChannels_) {
    throw ShapeMismatch("condition encoder expects " + std::to_string(conditionChannels_) + " channels, got " +
                        std::to_string(conditions.cols()));
  }
  const auto rows = static_cast<int>(conditions.rows());
  Var x = ad::add(conditionIn_.forward(g, g.constant(conditions)),
                  g.constant(nn::positionalEncoding(rows, encoderNorm_.gain.value.cols())));
  for (auto& block : encoder_) x = block.forward(g, x);
  return encoderNorm_.forward(g, x);
}

SequenceDenoiser::Output SequenceDenoiser::predict(Graph& g, Var noised, int t, Var context) {
  if (noised.cols() != stateChannels_) {
    throw ShapeMismatch("predictor expects " + std::to_string(stateChannels_) + " channels, got " +
                        std::to_string(noised.cols()));
  }
  if (context.cols() != width_) {
    throw ShapeMismatch("context width does not match the predictor");
  }
  const auto rows = static_cast<int>(noised.rows());
  Var x = ad::add(stateIn_.forward(g, noised), g.constant(nn::positionalEncoding(rows, width_)));
  x = ad::addRow(x, timestep_.forward(g, t));
  for (auto& block : decoder_) x = block.forward(g, x, context);
  return {head_.forward(g, decoderNorm_.forward(g, x)), x};
}

void SequenceDenoiser::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  conditionIn_.visit(prefix + "cond_in.", f);
  for (size_t i = 0; i < encoder_.size(); ++i) encoder_[i].visit(prefix + "encoder." + std::to_string(i) + ".", f);
  encoderNorm_.visit(prefix + "encoder_norm.", f);
  stateIn_.visit(prefix + "state_in.", f);
  timestep_.visit(prefix + "timestep.", f);
  for (size_t i = 0; i < decoder_.size(); ++i) decoder_[i].visit(prefix + "decoder." + std::to_string(i) + ".", f);
  decoderNorm_.visit(prefix + "decoder_norm.", f);
  head_.visit(prefix + "head.", f);
}

HumanBranch::HumanBranch(const ModelConfig& cfg, std::mt19937_64& rng)
    : motionChannels_(cfg.humanChannels()),
      contactChannels_(cfg.contactChannels()),
      net_(cfg.humanChannels() + cfg.contactChannels(), cfg.humanChannels() + cfg.contactChannels() + cfg.groups,
           cfg.humanEncoder, cfg.humanDecoder, cfg.diffusionSteps, rng) {}

Var HumanBranch::encodeConditions(Graph& g, const HumanConditions& c) {
  const auto rows = c.historyMotion.rows();
  if (c.historyContacts.rows() != rows || c.historyMask.rows() != rows) {
    throw ShapeMismatch("human conditions must share the history length");
  }
  if (c.historyMotion.cols() != motionChannels_ || c.historyContacts.cols() != contactChannels_) {
    throw ShapeMismatch("human conditions have the wrong channel layout");
  }
  Matrix packed(rows, c.historyMotion.cols() + c.historyContacts.cols() + c.historyMask.cols());
  packed << c.historyMotion, c.historyContacts, c.historyMask;
  return net_.encode(g, packed);
}

HumanBranch::Output HumanBranch::predict(Graph& g, Var noised, int t, Var context) {
  const SequenceDenoiser::Output out = net_.predict(g, noised, t, context);
  return {ad::sliceCols(out.clean, 0, motionChannels_), ad::sliceCols(out.clean, motionChannels_, contactChannels_),
          out.clean, out.hidden};
}

void HumanBranch::visitParameters(const nn::ParamVisitor& f) {
  net_.visit("human.", f);
}

JointBranch::JointBranch(const ModelConfig& cfg, std::mt19937_64& rng)
    : net_(cfg.humanChannels() + data::kObjectChannels, cfg.humanChannels() + data::kObjectChannels,
           cfg.humanEncoder, cfg.humanDecoder, cfg.diffusionSteps, rng) {}

Var JointBranch::encodeConditions(Graph& g, const Matrix& history) {
  return net_.encode(g, history);
}

SequenceDenoiser::Output JointBranch::predict(Graph& g, Var noised, int t, Var context) {
  return net_.predict(g, noised, t, context);
}

void JointBranch::visitParameters(const nn::ParamVisitor& f) {
  net_.visit("joint.", f);
}

}  // namespace hoi::human
