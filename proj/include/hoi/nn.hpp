// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hoi/autodiff.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace hoi::nn {

using ad::Graph;
using ad::Matrix;
using ad::Parameter;
using ad::Var;

using ParamVisitor = std::function<void(const std::string& name, Parameter& p)>;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct BlockConfig {
  int layers = 8;
  int width = 256;
  int heads = 4;
  int ffMult = 2;

  void validate() const;
};

/// y = x W^T + b with W stored out x in.
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(int in, int out, std::mt19937_64& rng);

  Var forward(Graph& g, Var x);
  void visit(const std::string& prefix, const ParamVisitor& f);
  int inFeatures() const { return static_cast<int>(weight.value.cols()); }
  int outFeatures() const { return static_cast<int>(weight.value.rows()); }
};

/// Linear connector whose weight and bias start at exactly zero.
struct ZeroLinear : Linear {
  ZeroLinear() = default;
  ZeroLinear(int in, int out);
};

/// Plain (non-graph) evaluation of a connector on one vector.
Eigen::VectorXd zeroLinearApply(const ZeroLinear& z, const Eigen::VectorXd& x);

struct LayerNorm {
  Parameter gain;
  Parameter shift;

  LayerNorm() = default;
  explicit LayerNorm(int width);

  Var forward(Graph& g, Var x);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct MultiHeadAttention {
  Linear query, key, value, out;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(int width, int heads, std::mt19937_64& rng);

  /// Scaled dot-product attention over projected inputs. mask(i, j) false
  /// removes key j from query i.
  Var forward(Graph& g, Var queries, Var keys, Var values, const BoolMatrix* mask = nullptr);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct FeedForward {
  Linear in, out;

  FeedForward() = default;
  FeedForward(int width, int hidden, std::mt19937_64& rng);

  Var forward(Graph& g, Var x);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

/// Pre-norm self-attention + feed-forward block.
struct EncoderBlock {
  LayerNorm norm1, norm2;
  MultiHeadAttention self;
  FeedForward ff;

  EncoderBlock() = default;
  EncoderBlock(const BlockConfig& cfg, std::mt19937_64& rng);

  Var forward(Graph& g, Var x);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

/// Pre-norm self-attention, cross-attention (query from the self-attention
/// stream, key/value from context) and feed-forward, each residual.
struct DecoderBlock {
  LayerNorm norm1, norm2, norm3;
  MultiHeadAttention self, cross;
  FeedForward ff;

  DecoderBlock() = default;
  DecoderBlock(const BlockConfig& cfg, std::mt19937_64& rng);

  Var forward(Graph& g, Var x, Var context);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

/// Raw sinusoid: entry 2i = sin(t w_i), 2i+1 = cos(t w_i), w_i = 10000^(-2i/width).
Eigen::RowVectorXd sinusoid(double t, int width);
/// Frame-index sinusoids for rows [0, rows).
Matrix positionalEncoding(int rows, int width);

struct TimestepEmbedding {
  Linear proj1, proj2;
  int steps = 0;

  TimestepEmbedding() = default;
  TimestepEmbedding(int width, int steps, std::mt19937_64& rng);

  /// Throws RangeError unless 0 <= t < steps. Output is 1 x width.
  Var forward(Graph& g, int t);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

/// Global L2 norm of all trainable gradients.
double gradientNorm(const std::vector<Parameter*>& params);

/// Adaptive moment estimation with global-norm clipping. Updated values are
/// rounded to float32.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, double learningRate, double clipNorm = 1.0, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void zeroGrad();
  void step();
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_, v_;
  double lr_, clip_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace hoi::nn
