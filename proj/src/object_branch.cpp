// SPDX-License-Identifier: Apache-2.0
#include "hoi/object_branch.hpp"

#include "hoi/data.hpp"
#include "hoi/errors.hpp"
#include "hoi/him.hpp"

namespace hoi::object {

namespace {

Matrix randomMatrix(int rows, int cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m = Matrix::NullaryExpr(rows, cols, [&]() { return n(rng); });
  ad::roundToFloat(m);
  return m;
}

}  // namespace

ShapeEncoder::ShapeEncoder(int width, std::mt19937_64& rng) : pointIn(3, width, rng), out(width, width, rng) {}

Var ShapeEncoder::forward(Graph& g, const Matrix& cloud) {
  if (cloud.rows() == 0 || cloud.cols() != 3) {
    throw ShapeMismatch("shape embedding needs a nonempty M x 3 cloud");
  }
  return out.forward(g, ad::maxRows(ad::gelu(pointIn.forward(g, g.constant(cloud)))));
}

void ShapeEncoder::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  pointIn.visit(prefix + "point_in.", f);
  out.visit(prefix + "out.", f);
}

ContactAggregator::ContactAggregator(const ModelConfig& cfg, std::mt19937_64& rng)
    : pointIn(3, cfg.objectDecoder.width, rng),
      norm1(cfg.objectDecoder.width),
      norm2(cfg.objectDecoder.width),
      self(cfg.objectDecoder.width, cfg.objectDecoder.heads, rng),
      ff(cfg.objectDecoder.width, cfg.objectDecoder.width * cfg.objectDecoder.ffMult, rng),
      samplesPerGroup(cfg.samplesPerGroup) {
  tokens.value = randomMatrix(cfg.contactTokens, cfg.objectDecoder.width, 0.5, rng);
  regionEmbed.value = randomMatrix(cfg.groups, cfg.objectDecoder.width, 0.5, rng);
}

Var ContactAggregator::forward(Graph& g, const ContactHistory& history) {
  const auto groups = regionEmbed.value.rows();
  const int k = samplesPerGroup;
  const int width = static_cast<int>(tokens.value.cols());
  if (history.mask.cols() != groups || history.positions.cols() != groups * k * 3 ||
      history.positions.rows() != history.mask.rows()) {
    throw ShapeMismatch("contact history does not match the N x k layout");
  }
  std::vector<std::pair<Eigen::Index, Eigen::Index>> entries;  // (frame, slot)
  for (Eigen::Index f = 0; f < history.mask.rows(); ++f) {
    for (Eigen::Index gi = 0; gi < groups; ++gi) {
      if (history.mask(f, gi) == 0.0) continue;
      for (int s = 0; s < k; ++s) entries.emplace_back(f, gi * k + s);
    }
  }
  const Var tok = g.param(tokens);
  Var stacked = tok;
  if (!entries.empty()) {
    const auto e = static_cast<Eigen::Index>(entries.size());
    Matrix points(e, 3), onehot = Matrix::Zero(e, groups), pos(e, width);
    for (Eigen::Index i = 0; i < e; ++i) {
      const auto [f, slot] = entries[static_cast<size_t>(i)];
      points.row(i) = history.positions.block(f, slot * 3, 1, 3);
      onehot(i, slot / k) = 1.0;
      pos.row(i) = nn::sinusoid(static_cast<double>(f), width);
    }
    Var embedded = ad::add(pointIn.forward(g, g.constant(points)), ad::matmul(g.constant(onehot), g.param(regionEmbed)));
    embedded = ad::add(embedded, g.constant(pos));
    stacked = ad::concatRows({tok, embedded});
  }
  const Var h = norm1.forward(g, stacked);
  const Var queries = ad::sliceRows(h, 0, tokens.value.rows());
  Var y = ad::add(tok, self.forward(g, queries, h, h));
  return ad::add(y, ff.forward(g, norm2.forward(g, y)));
}

void ContactAggregator::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  f(prefix + "tokens", tokens);
  f(prefix + "region_embed", regionEmbed);
  pointIn.visit(prefix + "point_in.", f);
  norm1.visit(prefix + "norm1.", f);
  self.visit(prefix + "self.", f);
  norm2.visit(prefix + "norm2.", f);
  ff.visit(prefix + "ff.", f);
}

ObjectDecoderBlock::ObjectDecoderBlock(const nn::BlockConfig& cfg, std::mt19937_64& rng)
    : norm1(cfg.width), norm2(cfg.width), norm3(cfg.width), norm4(cfg.width),
      self(cfg.width, cfg.heads, rng), crossHistory(cfg.width, cfg.heads, rng),
      crossContact(cfg.width, cfg.heads, rng), ff(cfg.width, cfg.width * cfg.ffMult, rng) {}

Var ObjectDecoderBlock::forward(Graph& g, Var x, Var history, Var contactTokens) {
  const Var h = norm1.forward(g, x);
  x = ad::add(x, self.forward(g, h, h, h));
  x = ad::add(x, crossHistory.forward(g, norm2.forward(g, x), history, history));
  x = ad::add(x, crossContact.forward(g, norm3.forward(g, x), contactTokens, contactTokens));
  return ad::add(x, ff.forward(g, norm4.forward(g, x)));
}

void ObjectDecoderBlock::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  norm1.visit(prefix + "norm1.", f);
  self.visit(prefix + "self.", f);
  norm2.visit(prefix + "norm2.", f);
  crossHistory.visit(prefix + "cross_history.", f);
  norm3.visit(prefix + "norm3.", f);
  crossContact.visit(prefix + "cross_contact.", f);
  norm4.visit(prefix + "norm4.", f);
  ff.visit(prefix + "ff.", f);
}

ObjectBranch::ObjectBranch(const ModelConfig& cfg, std::mt19937_64& rng)
    : width_(cfg.objectDecoder.width),
      shape_(cfg.objectEncoder.width, rng),
      conditionIn_(data::kObjectChannels, cfg.objectEncoder.width, rng),
      encoderNorm_(cfg.objectEncoder.width),
      stateIn_(data::kObjectChannels, cfg.objectDecoder.width, rng),
      timestep_(cfg.objectDecoder.width, cfg.diffusionSteps, rng),
      decoderNorm_(cfg.objectDecoder.width),
      head_(cfg.objectDecoder.width, data::kObjectChannels, rng) {
  for (int i = 0; i < cfg.objectEncoder.layers; ++i) encoder_.emplace_back(cfg.objectEncoder, rng);
  const int aggregatorCount = cfg.shareContactAggregation ? 1 : cfg.objectDecoder.layers;
  for (int i = 0; i < aggregatorCount; ++i) aggregators_.emplace_back(cfg, rng);
  for (int i = 0; i < cfg.objectDecoder.layers; ++i) decoder_.emplace_back(cfg.objectDecoder, rng);
  // Start the rotation channels at the identity so the 6D decode is well conditioned.
  head_.bias.value << 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0;
}

Var ObjectBranch::embedShape(Graph& g, const Matrix& restCloud) {
  return shape_.forward(g, restCloud);
}

Var ObjectBranch::encodeConditions(Graph& g, const Matrix& historyMotion, const Matrix& restCloud) {
  if (historyMotion.cols() != data::kObjectChannels) {
    throw ShapeMismatch("object history must have 9 channels per frame");
  }
  const auto rows = static_cast<int>(historyMotion.rows());
  const int w = static_cast<int>(encoderNorm_.gain.value.cols());
  const Var motion = ad::add(conditionIn_.forward(g, g.constant(historyMotion)),
                             g.constant(nn::positionalEncoding(rows, w)));
  Var x = ad::concatRows({embedShape(g, restCloud), motion});
  for (auto& block : encoder_) x = block.forward(g, x);
  return encoderNorm_.forward(g, x);
}

std::vector<Var> ObjectBranch::aggregateContacts(Graph& g, const ContactHistory& history) {
  std::vector<Var> out;
  for (auto& a : aggregators_) out.push_back(a.forward(g, history));
  return out;
}

Var ObjectBranch::predict(Graph& g, Var noised, int t, const std::vector<Var>& contactTokens, Var context,
                          const HimInjection* him) {
  if (noised.cols() != data::kObjectChannels) {
    throw ShapeMismatch("object predictor expects 9 channels per frame, got " + std::to_string(noised.cols()));
  }
  if (contactTokens.size() != aggregators_.size()) {
    throw ShapeMismatch("contact token sets do not match the aggregation layout");
  }
  const auto rows = static_cast<int>(noised.rows());
  Var x = ad::add(stateIn_.forward(g, noised), g.constant(nn::positionalEncoding(rows, width_)));
  x = ad::addRow(x, timestep_.forward(g, t));
  Var controlStream = x;
  HimParams* control = him != nullptr ? him->params : nullptr;
  if (control != nullptr) {
    if (control->blocks.size() != decoder_.size()) {
      throw ShapeMismatch("HIM block count differs from the object predictor");
    }
    if (him->humanFeatures.rows() != noised.rows()) {
      throw ShapeMismatch("human features must have one row per frame");
    }
  }
  for (size_t l = 0; l < decoder_.size(); ++l) {
    const Var tokens = contactTokens[aggregators_.size() == 1 ? 0 : l];
    if (control != nullptr) {
      const Var injected = ad::add(controlStream, control->inConnectors[l].forward(g, him->humanFeatures));
      controlStream = control->blocks[l].forward(g, injected, context, tokens);
    }
    x = decoder_[l].forward(g, x, context, tokens);
    if (control != nullptr && him->fusion == HimFusion::PerLayer) {
      x = ad::add(x, control->outConnectors[l].forward(g, controlStream));
    }
  }
  if (control != nullptr && him->fusion == HimFusion::Final) {
    x = ad::add(x, control->outConnectors.back().forward(g, controlStream));
  }
  return head_.forward(g, decoderNorm_.forward(g, x));
}

void ObjectBranch::visitParameters(const nn::ParamVisitor& f) {
  shape_.visit("object.shape.", f);
  conditionIn_.visit("object.cond_in.", f);
  for (size_t i = 0; i < encoder_.size(); ++i) encoder_[i].visit("object.encoder." + std::to_string(i) + ".", f);
  encoderNorm_.visit("object.encoder_norm.", f);
  for (size_t i = 0; i < aggregators_.size(); ++i) {
    aggregators_[i].visit("object.contact." + std::to_string(i) + ".", f);
  }
  stateIn_.visit("object.state_in.", f);
  timestep_.visit("object.timestep.", f);
  for (size_t i = 0; i < decoder_.size(); ++i) decoder_[i].visit("object.decoder." + std::to_string(i) + ".", f);
  decoderNorm_.visit("object.decoder_norm.", f);
  head_.visit("object.head.", f);
}

}  // namespace hoi::object
