// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace hoi::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// A named trainable tensor. Values are kept float32-representable (see
/// roundToFloat) so checkpoints in 32-bit form reload bitwise.
struct Parameter {
  Matrix value;
  Matrix grad;
  bool trainable = true;

  void zeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

/// Rounds every entry to the nearest float32.
void roundToFloat(Matrix& m);

class Graph;

/// Handle to a node on a Graph. Cheap to copy; only valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requiresGrad() const;
  double scalar() const { return value()(0, 0); }

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Append-only computation tape. Creation order is a topological order, so
/// backward() walks the nodes in reverse.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Matrix& upstream)>;

  Var constant(Matrix value);
  /// Leaf that accumulates its own gradient (used by tests on inputs).
  Var leaf(Matrix value);
  /// Leaf bound to a Parameter; gradients accumulate into p.grad when trainable.
  Var param(Parameter& p);

  /// Seeds d(loss)/d(loss) = 1; loss must be 1x1.
  void backward(Var loss);

  Var record(Matrix value, bool requiresGrad, BackwardFn fn);
  void accumulate(int id, const Matrix& g);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const;
  bool requiresGrad(int id) const { return nodes_[id].requiresGrad; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requiresGrad = false;
    bool hasGrad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
  Matrix empty_;
};

// Elementwise / structural ops. Shapes are validated; mismatches throw ShapeMismatch.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a (R x C) plus a 1 x C row broadcast over rows.
Var addRow(Var a, Var row);
Var matmul(Var a, Var b);
/// a * b^T
Var matmulNT(Var a, Var b);
Var gelu(Var a);
Var silu(Var a);
Var layerNorm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Row softmax. Where mask(i, j) is false the probability is exactly zero;
/// each row needs at least one unmasked entry.
Var softmaxRows(Var x, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>* mask = nullptr);
Var sliceCols(Var a, Eigen::Index start, Eigen::Index count);
Var sliceRows(Var a, Eigen::Index start, Eigen::Index count);
Var concatCols(const std::vector<Var>& parts);
Var concatRows(const std::vector<Var>& parts);
/// Column-wise max over rows -> 1 x C.
Var maxRows(Var a);
Var sum(Var a);
/// sum(weight .* (a - target)^2) as a 1x1 node.
Var weightedSquaredError(Var a, const Matrix& target, const Matrix& weight);
/// sum(weight .* (a - b)^2) with both sides differentiable.
Var weightedSquaredDiff(Var a, Var b, const Matrix& weight);

/// Rigid contact map per row. pose is T x 9 laid out [translation(3), a(3), b(3)]
/// with (a, b) a 6D rotation; restPoints is Q x 3. Output row t holds
/// R_t p_q + L_t for every q, flattened point-major (T x 3Q).
Var rigidContacts(Var pose, const Matrix& restPoints);

}  // namespace hoi::ad
