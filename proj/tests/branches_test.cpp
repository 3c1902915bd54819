// SPDX-License-Identifier: Apache-2.0
#include "grad_check.hpp"
#include "test_support.hpp"

#include "hoi/errors.hpp"
#include "hoi/human_branch.hpp"
#include "hoi/object_branch.hpp"
#include "hoi/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace hoi;
using hoi::nn::Graph;
using hoi::nn::Matrix;
using hoi::testing::randomMatrix;

namespace {

// Plain-matrix reference pieces for the contact aggregator.
Matrix linearRef(const nn::Linear& l, const Matrix& x) {
  return (x * l.weight.value.transpose()).rowwise() + l.bias.value.row(0);
}

Matrix layerNormRef(const nn::LayerNorm& n, const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    out.row(r) = ((x.row(r).array() - mean) / std::sqrt(var + 1e-5)).matrix();
    out.row(r) = out.row(r).cwiseProduct(n.gain.value.row(0)) + n.shift.value.row(0);
  }
  return out;
}

Matrix attentionRef(const nn::MultiHeadAttention& a, const Matrix& q, const Matrix& kv) {
  const Matrix Q = linearRef(a.query, q), K = linearRef(a.key, kv), V = linearRef(a.value, kv);
  const int dh = static_cast<int>(Q.cols()) / a.heads;
  Matrix mixed(Q.rows(), Q.cols());
  for (int h = 0; h < a.heads; ++h) {
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
      std::vector<double> w(static_cast<size_t>(K.rows()));
      double maxScore = -1e300, total = 0.0;
      for (Eigen::Index j = 0; j < K.rows(); ++j) {
        w[j] = Q.row(i).segment(h * dh, dh).dot(K.row(j).segment(h * dh, dh)) / std::sqrt(double(dh));
        maxScore = std::max(maxScore, w[j]);
      }
      for (auto& x : w) total += (x = std::exp(x - maxScore));
      for (int c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < K.rows(); ++j) acc += w[j] / total * V(j, h * dh + c);
        mixed(i, h * dh + c) = acc;
      }
    }
  }
  return linearRef(a.out, mixed);
}

double geluRef(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

/// Aggregator output for explicitly listed entries (position, group, frame).
Matrix aggregatorRef(const object::ContactAggregator& a, const std::vector<std::tuple<Eigen::Vector3d, int, int>>& e) {
  const Matrix& tokens = a.tokens.value;
  const int w = static_cast<int>(tokens.cols());
  Matrix x(tokens.rows() + static_cast<Eigen::Index>(e.size()), w);
  x.topRows(tokens.rows()) = tokens;
  for (size_t i = 0; i < e.size(); ++i) {
    const auto& [p, g, f] = e[i];
    x.row(tokens.rows() + i) = linearRef(a.pointIn, p.transpose()) + a.regionEmbed.value.row(g) + nn::sinusoid(f, w);
  }
  const Matrix h = layerNormRef(a.norm1, x);
  const Matrix y = tokens + attentionRef(a.self, h.topRows(tokens.rows()), h);
  Matrix hidden = linearRef(a.ff.in, layerNormRef(a.norm2, y));
  hidden = hidden.unaryExpr(&geluRef);
  return y + linearRef(a.ff.out, hidden);
}

object::ContactHistory emptyHistory(const ModelConfig& cfg) {
  return {Matrix::Zero(cfg.pastLen, cfg.contactChannels()), Matrix::Zero(cfg.pastLen, cfg.groups)};
}

}  // namespace

TEST(HumanBranch, ShapesAndTimestepSensitivity) {
  const ModelConfig cfg = hoi::testing::tinyModel();
  std::mt19937_64 rng(1);
  human::HumanBranch branch(cfg, rng);
  const human::HumanConditions c{randomMatrix(cfg.pastLen, cfg.humanChannels(), rng),
                                 randomMatrix(cfg.pastLen, cfg.contactChannels(), rng),
                                 Matrix::Ones(cfg.pastLen, cfg.groups)};
  Graph g;
  const auto ctx = branch.encodeConditions(g, c);
  EXPECT_EQ(ctx.rows(), cfg.pastLen);
  EXPECT_EQ(ctx.cols(), 8);
  const auto x = g.constant(randomMatrix(16, cfg.humanChannels() + cfg.contactChannels(), rng));
  const auto a = branch.predict(g, x, 3, ctx), b = branch.predict(g, x, 11, ctx);
  EXPECT_EQ(a.full.rows(), 16);
  EXPECT_EQ(a.full.cols(), x.cols());
  EXPECT_EQ(a.motion.value(), a.full.value().leftCols(cfg.humanChannels()));
  EXPECT_EQ(a.contact.value(), a.full.value().rightCols(cfg.contactChannels()));
  EXPECT_EQ(a.hidden.cols(), 8);
  EXPECT_NE(a.full.value(), b.full.value());
  EXPECT_THROW(branch.predict(g, g.constant(Matrix::Zero(4, 5)), 0, ctx), ShapeMismatch);
}

TEST(HumanBranch, FrameOrderMatters) {
  const ModelConfig cfg = hoi::testing::tinyModel();
  std::mt19937_64 rng(2);
  human::HumanBranch branch(cfg, rng);
  human::HumanConditions c{randomMatrix(cfg.pastLen, cfg.humanChannels(), rng),
                           randomMatrix(cfg.pastLen, cfg.contactChannels(), rng),
                           Matrix::Ones(cfg.pastLen, cfg.groups)};
  Graph g;
  const Matrix a = branch.encodeConditions(g, c).value();
  c.historyMotion = c.historyMotion.colwise().reverse().eval();
  c.historyContacts = c.historyContacts.colwise().reverse().eval();
  const Matrix b = branch.encodeConditions(g, c).value();
  EXPECT_GT((a.colwise().reverse() - b).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(HumanBranch, GradientMatchesFiniteDifferences) {
  const ModelConfig cfg = hoi::testing::tinyModel();
  std::mt19937_64 rng(3);
  human::HumanBranch branch(cfg, rng);
  const human::HumanConditions c{randomMatrix(cfg.pastLen, cfg.humanChannels(), rng),
                                 randomMatrix(cfg.pastLen, cfg.contactChannels(), rng),
                                 Matrix::Ones(cfg.pastLen, cfg.groups)};
  const double err = hoi::testing::gradientError(
      [&](Graph& g, const std::vector<nn::Var>& v) {
        const auto ctx = branch.encodeConditions(g, c);
        return hoi::testing::readout(g, branch.predict(g, v[0], 7, ctx).full);
      },
      {randomMatrix(3, cfg.humanChannels() + cfg.contactChannels(), rng)});
  EXPECT_LT(err, 1e-6);
}

TEST(JointBranch, OneNetworkOverHumanAndObject) {
  ModelConfig cfg = hoi::testing::tinyModel();
  cfg.kind = ModelKind::Joint;
  std::mt19937_64 rng(4);
  human::JointBranch branch(cfg, rng);
  Graph g;
  const auto ctx = branch.encodeConditions(g, randomMatrix(cfg.pastLen, cfg.humanChannels() + 9, rng));
  const auto out = branch.predict(g, g.constant(randomMatrix(8, cfg.humanChannels() + 9, rng)), 0, ctx);
  EXPECT_EQ(out.clean.cols(), cfg.humanChannels() + 9);
}

TEST(ShapeEncoder, PermutationInvariantAndShapeSensitive) {
  std::mt19937_64 rng(5);
  object::ShapeEncoder enc(8, rng);
  const Matrix cloud = randomMatrix(20, 3, rng, 0.1);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(20);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 20, rng);
  Graph g;
  const Matrix a = enc.forward(g, cloud).value();
  const Matrix b = enc.forward(g, perm * cloud).value();
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-6);

  Matrix box(8, 3), rod(8, 3);
  for (int i = 0; i < 8; ++i) {
    box.row(i) << ((i & 1) ? 0.1 : -0.1), ((i & 2) ? 0.1 : -0.1), ((i & 4) ? 0.1 : -0.1);
    rod.row(i) << 0.01 * std::cos(i), -0.3 + 0.6 * i / 7.0, 0.01 * std::sin(i);
  }
  EXPECT_GT((enc.forward(g, box).value() - enc.forward(g, rod).value()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_THROW(enc.forward(g, Matrix(0, 3)), ShapeMismatch);
}

TEST(ShapeEncoder, SinglePointIsItsOwnProjection) {
  std::mt19937_64 rng(6);
  object::ShapeEncoder enc(8, rng);
  const Matrix p = randomMatrix(1, 3, rng);
  Graph g;
  const Matrix expected = linearRef(enc.out, linearRef(enc.pointIn, p).unaryExpr(&geluRef));
  EXPECT_LT((enc.forward(g, p).value() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ContactAggregator, MatchesReferenceIncludingDuplicatedPoints) {
  ModelConfig cfg = hoi::testing::tinyModel();
  cfg.samplesPerGroup = 2;
  std::mt19937_64 rng(7);
  object::ContactAggregator agg(cfg, rng);
  object::ContactHistory h = emptyHistory(cfg);
  const Eigen::Vector3d p(0.1, -0.2, 0.3), q(0.05, 0.0, -0.1);
  // Group 5 at frame 1 with two distinct samples, then with the first repeated.
  h.mask(1, 5) = 1.0;
  h.positions.block(1, 5 * 6, 1, 3) = p.transpose();
  h.positions.block(1, 5 * 6 + 3, 1, 3) = q.transpose();
  Graph g;
  const Matrix distinct = agg.forward(g, h).value();
  EXPECT_EQ(distinct.rows(), 3);
  EXPECT_EQ(distinct.cols(), 8);
  EXPECT_LT((distinct - aggregatorRef(agg, {{p, 5, 1}, {q, 5, 1}})).cwiseAbs().maxCoeff(), 1e-12);
  h.positions.block(1, 5 * 6 + 3, 1, 3) = p.transpose();
  const Matrix duplicated = agg.forward(g, h).value();
  EXPECT_LT((duplicated - aggregatorRef(agg, {{p, 5, 1}, {p, 5, 1}})).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((duplicated - distinct).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ContactAggregator, FullyMaskedHistoryLeavesOnlyTokens) {
  const ModelConfig cfg = hoi::testing::tinyModel();
  std::mt19937_64 rng(8);
  object::ContactAggregator agg(cfg, rng);
  object::ContactHistory h = emptyHistory(cfg);
  h.positions = randomMatrix(cfg.pastLen, cfg.contactChannels(), rng);
  Graph g;
  const Matrix out = agg.forward(g, h).value();
  EXPECT_LT((out - aggregatorRef(agg, {})).cwiseAbs().maxCoeff(), 1e-12);
  h.positions = randomMatrix(cfg.pastLen, cfg.contactChannels(), rng);
  EXPECT_EQ(agg.forward(g, h).value(), out);
}

TEST(ObjectBranch, ShapesAndIdentityHeadBias) {
  const ModelConfig cfg = hoi::testing::tinyModel();
  std::mt19937_64 rng(9);
  object::ObjectBranch branch(cfg, rng);
  Graph g;
  const auto ctx = branch.encodeConditions(g, randomMatrix(cfg.pastLen, 9, rng), randomMatrix(12, 3, rng, 0.1));
  EXPECT_EQ(ctx.rows(), cfg.pastLen + 1);  // shape token plus history
  const auto tokens = branch.aggregateContacts(g, emptyHistory(cfg));
  ASSERT_EQ(tokens.size(), 1u);
  const auto out = branch.predict(g, g.constant(randomMatrix(8, 9, rng)), 5, tokens, ctx);
  EXPECT_EQ(out.rows(), 8);
  EXPECT_EQ(out.cols(), 9);
  EXPECT_THROW(branch.predict(g, g.constant(randomMatrix(8, 7, rng)), 5, tokens, ctx), ShapeMismatch);
}

TEST(ObjectBranch, PerLayerAggregation) {
  ModelConfig cfg = hoi::testing::tinyModel();
  cfg.shareContactAggregation = false;
  std::mt19937_64 rng(10);
  object::ObjectBranch branch(cfg, rng);
  Graph g;
  EXPECT_EQ(branch.aggregateContacts(g, emptyHistory(cfg)).size(), 2u);
}

TEST(ObjectBranch, MaskedContactsCannotReachTheOutput) {
  const ModelConfig cfg = hoi::testing::tinyModel();
  std::mt19937_64 rng(11);
  object::ObjectBranch branch(cfg, rng);
  const Matrix hist = randomMatrix(cfg.pastLen, 9, rng), cloud = randomMatrix(12, 3, rng, 0.1);
  const Matrix x = randomMatrix(8, 9, rng);
  auto run = [&](const object::ContactHistory& h) {
    Graph g;
    const auto ctx = branch.encodeConditions(g, hist, cloud);
    return branch.predict(g, g.constant(x), 4, branch.aggregateContacts(g, h), ctx).value();
  };
  object::ContactHistory h = emptyHistory(cfg);
  h.positions = randomMatrix(cfg.pastLen, cfg.contactChannels(), rng);
  const Matrix a = run(h);
  h.positions = randomMatrix(cfg.pastLen, cfg.contactChannels(), rng);
  EXPECT_EQ(run(h), a);
}

TEST(ObjectBranch, ZeroedContactValuesIsolateTheContactPathway) {
  const ModelConfig cfg = hoi::testing::tinyModel();
  std::mt19937_64 rng(12);
  object::ObjectBranch branch(cfg, rng);
  const Matrix hist = randomMatrix(cfg.pastLen, 9, rng), cloud = randomMatrix(12, 3, rng, 0.1);
  const Matrix x = randomMatrix(8, 9, rng);
  auto run = [&](const object::ContactHistory& h) {
    Graph g;
    const auto ctx = branch.encodeConditions(g, hist, cloud);
    return branch.predict(g, g.constant(x), 4, branch.aggregateContacts(g, h), ctx).value();
  };
  object::ContactHistory a = emptyHistory(cfg), b = emptyHistory(cfg);
  a.mask.setOnes();
  b.mask.setOnes();
  a.positions = randomMatrix(cfg.pastLen, cfg.contactChannels(), rng);
  b.positions = randomMatrix(cfg.pastLen, cfg.contactChannels(), rng);
  EXPECT_NE(run(a), run(b));
  for (int l = 0; l < branch.layers(); ++l) {
    branch.decoderBlock(l).crossContact.value.weight.value.setZero();
    branch.decoderBlock(l).crossContact.value.bias.value.setZero();
  }
  EXPECT_EQ(run(a), run(b));
}

TEST(ObjectBranch, GradientMatchesFiniteDifferences) {
  const ModelConfig cfg = hoi::testing::tinyModel();
  std::mt19937_64 rng(13);
  object::ObjectBranch branch(cfg, rng);
  const Matrix hist = randomMatrix(cfg.pastLen, 9, rng), cloud = randomMatrix(12, 3, rng, 0.1);
  object::ContactHistory h = emptyHistory(cfg);
  h.mask.setOnes();
  h.positions = randomMatrix(cfg.pastLen, cfg.contactChannels(), rng);
  const double err = hoi::testing::gradientError(
      [&](Graph& g, const std::vector<nn::Var>& v) {
        const auto ctx = branch.encodeConditions(g, hist, cloud);
        return hoi::testing::readout(g, branch.predict(g, v[0], 2, branch.aggregateContacts(g, h), ctx));
      },
      {randomMatrix(3, 9, rng)});
  EXPECT_LT(err, 1e-6);
}

namespace {

/// Trains one branch alone on a single sequence and returns the ratio of the
/// last logged interval mean to the first step's loss.
double overfitRatio(bool humanSide) {
  RunConfig cfg = hoi::testing::tinyRun(16, 2);
  cfg.training.stages[0] = {1, 2000, 1e-3};
  cfg.training.batchSize = 1;
  cfg.training.logEvery = 50;
  cfg.training.weights = humanSide ? LossWeights{1, 0, 0} : LossWeights{0, 1, 0};
  std::vector<SequenceTensors> data{prepare(hoi::testing::tinyDataset(cfg, 1)[0], cfg.model)};
  CoopModel m(cfg.model, 1);
  double first = -1.0, last = 0.0;
  training::StageOptions opts;
  opts.onStep = [&](const training::LogRow& r) {
    if (first < 0.0) first = humanSide ? r.human : r.object;
  };
  opts.onLog = [&](const training::LogRow& r) { last = humanSide ? r.human : r.object; };
  training::trainStage(m, data, cfg, 1, opts);
  return last / first;
}

}  // namespace

TEST(HumanBranch, OverfitsOneSequence) { EXPECT_LT(overfitRatio(true), 0.01); }

TEST(ObjectBranch, OverfitsOneSequence) { EXPECT_LT(overfitRatio(false), 0.01); }
