// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hoi/config.hpp"
#include "hoi/nn.hpp"

#include <random>
#include <string>
#include <vector>

namespace hoi::object {

using nn::Graph;
using nn::Matrix;
using nn::Var;

/// Observed contacts for the object branch, history frames only.
struct ContactHistory {
  Matrix positions;  // T_p x N*k*3
  Matrix mask;       // T_p x N
};

/// Permutation-invariant point-cloud embedding: per-point projection, GELU,
/// max-pool over points, output projection.
struct ShapeEncoder {
  nn::Linear pointIn, out;

  ShapeEncoder() = default;
  ShapeEncoder(int width, std::mt19937_64& rng);

  Var forward(Graph& g, const Matrix& cloud);  // M x 3 -> 1 x width
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

/// Learnable tokens that summarize the contact history. Observed contact
/// entries are embedded and attended to together with the tokens; only the
/// token rows are returned. Masked entries never enter the key set.
struct ContactAggregator {
  nn::Parameter tokens;        // Q x width
  nn::Parameter regionEmbed;   // N x width
  nn::Linear pointIn;          // 3 -> width
  nn::LayerNorm norm1, norm2;
  nn::MultiHeadAttention self;
  nn::FeedForward ff;
  int samplesPerGroup = 1;

  ContactAggregator() = default;
  ContactAggregator(const ModelConfig& cfg, std::mt19937_64& rng);

  Var forward(Graph& g, const ContactHistory& history);  // Q x width
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

/// Self-attention, cross-attention over the encoded history, cross-attention
/// over the contact tokens, then feed-forward; pre-norm residual throughout.
struct ObjectDecoderBlock {
  nn::LayerNorm norm1, norm2, norm3, norm4;
  nn::MultiHeadAttention self, crossHistory, crossContact;
  nn::FeedForward ff;

  ObjectDecoderBlock() = default;
  ObjectDecoderBlock(const nn::BlockConfig& cfg, std::mt19937_64& rng);

  Var forward(Graph& g, Var x, Var history, Var contactTokens);
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

struct HimParams;

/// Human-driven control injected into the object predictor (see him.hpp).
struct HimInjection {
  HimParams* params = nullptr;
  Var humanFeatures;  // T x human width
  HimFusion fusion = HimFusion::PerLayer;
};

class ObjectBranch {
 public:
  ObjectBranch() = default;
  ObjectBranch(const ModelConfig& cfg, std::mt19937_64& rng);

  Var embedShape(Graph& g, const Matrix& restCloud);
  /// Encodes [shape token; history motion] into the history context.
  Var encodeConditions(Graph& g, const Matrix& historyMotion, const Matrix& restCloud);
  /// One set of tokens per decoder layer; a single shared set unless the
  /// aggregation is configured per layer.
  std::vector<Var> aggregateContacts(Graph& g, const ContactHistory& history);

  /// Clean object-motion estimate, T x 9.
  Var predict(Graph& g, Var noised, int t, const std::vector<Var>& contactTokens, Var context,
              const HimInjection* him = nullptr);

  int width() const { return width_; }
  int layers() const { return static_cast<int>(decoder_.size()); }
  const std::vector<ObjectDecoderBlock>& decoderBlocks() const { return decoder_; }
  std::vector<ContactAggregator>& aggregators() { return aggregators_; }
  ObjectDecoderBlock& decoderBlock(int i) { return decoder_[static_cast<size_t>(i)]; }
  void visitParameters(const nn::ParamVisitor& f);

 private:
  int width_ = 0;
  ShapeEncoder shape_;
  nn::Linear conditionIn_;
  std::vector<nn::EncoderBlock> encoder_;
  nn::LayerNorm encoderNorm_;
  std::vector<ContactAggregator> aggregators_;
  nn::Linear stateIn_;
  nn::TimestepEmbedding timestep_;
  std::vector<ObjectDecoderBlock> decoder_;
  nn::LayerNorm decoderNorm_;
  nn::Linear head_;
};

}  // namespace hoi::object
