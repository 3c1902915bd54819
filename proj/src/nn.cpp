// SPDX-License-Identifier: Apache-2.0
#include "hoi/nn.hpp"

#include "hoi/errors.hpp"

#include <cmath>

namespace hoi::nn {

void BlockConfig::validate() const {
  if (layers < 1 || width < 1 || heads < 1 || ffMult < 1) {
    throw ConfigError("block config values must be positive");
  }
  if (width % heads != 0) {
    throw ConfigError("width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

Linear::Linear(int in, int out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  weight.value = Matrix::NullaryExpr(out, in, [&]() { return u(rng); });
  bias.value = Matrix::NullaryExpr(1, out, [&]() { return u(rng); });
  ad::roundToFloat(weight.value);
  ad::roundToFloat(bias.value);
}

Var Linear::forward(Graph& g, Var x) {
  return ad::addRow(ad::matmulNT(x, g.param(weight)), g.param(bias));
}

void Linear::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + "weight", weight);
  f(prefix + "bias", bias);
}

ZeroLinear::ZeroLinear(int in, int out) {
  weight.value = Matrix::Zero(out, in);
  bias.value = Matrix::Zero(1, out);
}

Eigen::VectorXd zeroLinearApply(const ZeroLinear& z, const Eigen::VectorXd& x) {
  if (x.size() != z.weight.value.cols()) {
    throw ShapeMismatch("connector expects " + std::to_string(z.weight.value.cols()) + " inputs, got " +
                        std::to_string(x.size()));
  }
  return z.weight.value * x + z.bias.value.row(0).transpose();
}

LayerNorm::LayerNorm(int width) {
  gain.value = Matrix::Ones(1, width);
  shift.value = Matrix::Zero(1, width);
}

Var LayerNorm::forward(Graph& g, Var x) {
  return ad::layerNorm(x, g.param(gain), g.param(shift));
}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + "gain", gain);
  f(prefix + "shift", shift);
}

MultiHeadAttention::MultiHeadAttention(int width, int heads_, std::mt19937_64& rng)
    : query(width, width, rng), key(width, width, rng), value(width, width, rng), out(width, width, rng),
      heads(heads_) {}

Var MultiHeadAttention::forward(Graph& g, Var queries, Var keys, Var values, const BoolMatrix* mask) {
  if (keys.rows() != values.rows()) {
    throw ShapeMismatch("attention: key and value sequence lengths differ");
  }
  const int width = query.inFeatures();
  if (queries.cols() != width || keys.cols() != width || values.cols() != width) {
    throw ShapeMismatch("attention: inputs must have width " + std::to_string(width));
  }
  if (mask != nullptr && (mask->rows() != queries.rows() || mask->cols() != keys.rows())) {
    throw ShapeMismatch("attention: mask must be queries x keys");
  }
  const Var q = query.forward(g, queries);
  const Var k = key.forward(g, keys);
  const Var v = value.forward(g, values);
  const int dh = width / heads;
  const double scaleFactor = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> parts;
  parts.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = ad::sliceCols(q, h * dh, dh);
    const Var kh = ad::sliceCols(k, h * dh, dh);
    const Var vh = ad::sliceCols(v, h * dh, dh);
    const Var scores = ad::scale(ad::matmulNT(qh, kh), scaleFactor);
    parts.push_back(ad::matmul(ad::softmaxRows(scores, mask), vh));
  }
  const Var merged = heads == 1 ? parts.front() : ad::concatCols(parts);
  return out.forward(g, merged);
}

void MultiHeadAttention::visit(const std::string& prefix, const ParamVisitor& f) {
  query.visit(prefix + "query.", f);
  key.visit(prefix + "key.", f);
  value.visit(prefix + "value.", f);
  out.visit(prefix + "out.", f);
}

FeedForward::FeedForward(int width, int hidden, std::mt19937_64& rng) : in(width, hidden, rng), out(hidden, width, rng) {}

Var FeedForward::forward(Graph& g, Var x) {
  return out.forward(g, ad::gelu(in.forward(g, x)));
}

void FeedForward::visit(const std::string& prefix, const ParamVisitor& f) {
  in.visit(prefix + "in.", f);
  out.visit(prefix + "out.", f);
}

EncoderBlock::EncoderBlock(const BlockConfig& cfg, std::mt19937_64& rng)
    : norm1(cfg.width), norm2(cfg.width), self(cfg.width, cfg.heads, rng),
      ff(cfg.width, cfg.width * cfg.ffMult, rng) {}

Var EncoderBlock::forward(Graph& g, Var x) {
  const Var h = norm1.forward(g, x);
  x = ad::add(x, self.forward(g, h, h, h));
  return ad::add(x, ff.forward(g, norm2.forward(g, x)));
}

void EncoderBlock::visit(const std::string& prefix, const ParamVisitor& f) {
  norm1.visit(prefix + "norm1.", f);
  self.visit(prefix + "self.", f);
  norm2.visit(prefix + "norm2.", f);
  ff.visit(prefix + "ff.", f);
}

DecoderBlock::DecoderBlock(const BlockConfig& cfg, std::mt19937_64& rng)
    : norm1(cfg.width), norm2(cfg.width), norm3(cfg.width), self(cfg.width, cfg.heads, rng),
      cross(cfg.width, cfg.heads, rng), ff(cfg.width, cfg.width * cfg.ffMult, rng) {}

Var DecoderBlock::forward(Graph& g, Var x, Var context) {
  const Var h = norm1.forward(g, x);
  x = ad::add(x, self.forward(g, h, h, h));
  x = ad::add(x, cross.forward(g, norm2.forward(g, x), context, context));
  return ad::add(x, ff.forward(g, norm3.forward(g, x)));
}

void DecoderBlock::visit(const std::string& prefix, const ParamVisitor& f) {
  norm1.visit(prefix + "norm1.", f);
  self.visit(prefix + "self.", f);
  norm2.visit(prefix + "norm2.", f);
  cross.visit(prefix + "cross.", f);
  norm3.visit(prefix + "norm3.", f);
  ff.visit(prefix + "ff.", f);
}

Eigen::RowVectorXd sinusoid(double t, int width) {
  Eigen::RowVectorXd e(width);
  for (int i = 0; i < width; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / width);
    e[i] = std::sin(t * freq);
    if (i + 1 < width) e[i + 1] = std::cos(t * freq);
  }
  return e;
}

Matrix positionalEncoding(int rows, int width) {
  Matrix m(rows, width);
  for (int r = 0; r < rows; ++r) m.row(r) = sinusoid(r, width);
  return m;
}

TimestepEmbedding::TimestepEmbedding(int width, int steps_, std::mt19937_64& rng)
    : proj1(width, width, rng), proj2(width, width, rng), steps(steps_) {}

Var TimestepEmbedding::forward(Graph& g, int t) {
  if (t < 0 || t >= steps) {
    throw RangeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps) + ")");
  }
  const Var raw = g.constant(sinusoid(t, proj1.inFeatures()));
  return proj2.forward(g, ad::silu(proj1.forward(g, raw)));
}

void TimestepEmbedding::visit(const std::string& prefix, const ParamVisitor& f) {
  proj1.visit(prefix + "proj1.", f);
  proj2.visit(prefix + "proj2.", f);
}

double gradientNorm(const std::vector<Parameter*>& params) {
  double total = 0.0;
  for (const Parameter* p : params) {
    if (p->grad.size() == p->value.size()) total += p->grad.squaredNorm();
  }
  return std::sqrt(total);
}

Adam::Adam(std::vector<Parameter*> params, double learningRate, double clipNorm, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(learningRate), clip_(clipNorm), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  zeroGrad();
}

void Adam::zeroGrad() {
  for (Parameter* p : params_) p->zeroGrad();
}

void Adam::step() {
  ++t_;
  const double norm = gradientNorm(params_);
  const double factor = (clip_ > 0.0 && norm > clip_) ? clip_ / norm : 1.0;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    const Matrix g = p.grad * factor;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseAbs2();
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    ad::roundToFloat(p.value);
  }
}

}  // namespace hoi::nn
