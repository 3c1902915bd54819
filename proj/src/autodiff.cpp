// SPDX-License-Identifier: Apache-2.0
#include "hoi/autodiff.hpp"

#include "hoi/errors.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <string>

namespace hoi::ad {

namespace {

std::string shapeOf(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void requireSameShape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch(std::string(op) + ": " + shapeOf(a) + " vs " + shapeOf(b));
  }
}

Graph& graphOf(Var a) {
  return *a.graph();
}

bool anyGrad(std::initializer_list<Var> vs) {
  for (const Var& v : vs) {
    if (v.requiresGrad()) {
      return true;
    }
  }
  return false;
}

constexpr double kGeluK = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluC = 0.044715;

}  // namespace

void roundToFloat(Matrix& m) {
  m = m.cast<float>().cast<double>();
}

const Matrix& Var::value() const {
  return graph_->value(id_);
}

const Matrix& Var::grad() const {
  return graph_->grad(id_);
}

bool Var::requiresGrad() const {
  return graph_->requiresGrad(id_);
}

Var Graph::constant(Matrix value) {
  return record(std::move(value), false, nullptr);
}

Var Graph::leaf(Matrix value) {
  return record(std::move(value), true, nullptr);
}

Var Graph::param(Parameter& p) {
  Var v = record(p.value, p.trainable, nullptr);
  if (p.trainable) {
    nodes_[v.id()].param = &p;
  }
  return v;
}

Var Graph::record(Matrix value, bool requiresGrad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requiresGrad = requiresGrad;
  if (requiresGrad) {
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requiresGrad) {
    return;
  }
  if (!n.hasGrad) {
    n.grad = g;
    n.hasGrad = true;
  } else {
    n.grad += g;
  }
}

const Matrix& Graph::grad(int id) const {
  const Node& n = nodes_[id];
  return n.hasGrad ? n.grad : empty_;
}

void Graph::backward(Var loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeMismatch("backward() needs a scalar loss, got " + shapeOf(loss.value()));
  }
  accumulate(loss.id(), Matrix::Ones(1, 1));
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.hasGrad) {
      continue;
    }
    if (n.backward) {
      n.backward(*this, n.grad);
    }
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols()) {
        n.param->zeroGrad();
      }
      n.param->grad += n.grad;
    }
  }
}

Var add(Var a, Var b) {
  requireSameShape(a.value(), b.value(), "add");
  const int ia = a.id(), ib = b.id();
  return graphOf(a).record(a.value() + b.value(), anyGrad({a, b}), [ia, ib](Graph& g, const Matrix& up) {
    g.accumulate(ia, up);
    g.accumulate(ib, up);
  });
}

Var sub(Var a, Var b) {
  requireSameShape(a.value(), b.value(), "sub");
  const int ia = a.id(), ib = b.id();
  return graphOf(a).record(a.value() - b.value(), anyGrad({a, b}), [ia, ib](Graph& g, const Matrix& up) {
    g.accumulate(ia, up);
    g.accumulate(ib, -up);
  });
}

Var mul(Var a, Var b) {
  requireSameShape(a.value(), b.value(), "mul");
  const int ia = a.id(), ib = b.id();
  return graphOf(a).record(a.value().cwiseProduct(b.value()), anyGrad({a, b}),
                           [ia, ib](Graph& g, const Matrix& up) {
                             if (g.requiresGrad(ia)) g.accumulate(ia, up.cwiseProduct(g.value(ib)));
                             if (g.requiresGrad(ib)) g.accumulate(ib, up.cwiseProduct(g.value(ia)));
                           });
}

Var scale(Var a, double s) {
  const int ia = a.id();
  return graphOf(a).record(a.value() * s, a.requiresGrad(),
                           [ia, s](Graph& g, const Matrix& up) { g.accumulate(ia, up * s); });
}

Var addRow(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeMismatch("addRow: " + shapeOf(a.value()) + " + " + shapeOf(row.value()));
  }
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return graphOf(a).record(std::move(out), anyGrad({a, row}), [ia, ir](Graph& g, const Matrix& up) {
    g.accumulate(ia, up);
    if (g.requiresGrad(ir)) g.accumulate(ir, up.colwise().sum());
  });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw ShapeMismatch("matmul: " + shapeOf(a.value()) + " * " + shapeOf(b.value()));
  }
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return graphOf(a).record(std::move(out), anyGrad({a, b}), [ia, ib](Graph& g, const Matrix& up) {
    if (g.requiresGrad(ia)) g.accumulate(ia, up * g.value(ib).transpose());
    if (g.requiresGrad(ib)) g.accumulate(ib, g.value(ia).transpose() * up);
  });
}

Var matmulNT(Var a, Var b) {
  if (a.cols() != b.cols()) {
    throw ShapeMismatch("matmulNT: " + shapeOf(a.value()) + " * (" + shapeOf(b.value()) + ")^T");
  }
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value().transpose();
  return graphOf(a).record(std::move(out), anyGrad({a, b}), [ia, ib](Graph& g, const Matrix& up) {
    if (g.requiresGrad(ia)) g.accumulate(ia, up * g.value(ib));
    if (g.requiresGrad(ib)) g.accumulate(ib, up.transpose() * g.value(ia));
  });
}

Var gelu(Var a) {
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluK * (v + kGeluC * v * v * v)));
  });
  return graphOf(a).record(std::move(out), a.requiresGrad(), [ia](Graph& g, const Matrix& up) {
    const Matrix d = g.value(ia).unaryExpr([](double v) {
      const double th = std::tanh(kGeluK * (v + kGeluC * v * v * v));
      return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluK * (1.0 + 3.0 * kGeluC * v * v);
    });
    g.accumulate(ia, up.cwiseProduct(d));
  });
}

Var silu(Var a) {
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
  return graphOf(a).record(std::move(out), a.requiresGrad(), [ia](Graph& g, const Matrix& up) {
    const Matrix d = g.value(ia).unaryExpr([](double v) {
      const double s = 1.0 / (1.0 + std::exp(-v));
      return s * (1.0 + v * (1.0 - s));
    });
    g.accumulate(ia, up.cwiseProduct(d));
  });
}

Var layerNorm(Var x, Var gamma, Var beta, double eps) {
  const Eigen::Index cols = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != cols || beta.rows() != 1 || beta.cols() != cols) {
    throw ShapeMismatch("layerNorm: gain/bias must be 1x" + std::to_string(cols));
  }
  const Matrix& in = x.value();
  Matrix xhat(in.rows(), cols);
  Eigen::VectorXd invStd(in.rows());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    const double mean = in.row(r).mean();
    const double var = (in.row(r).array() - mean).square().mean();
    invStd[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (in.row(r).array() - mean) * invStd[r];
  }
  Matrix out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return graphOf(x).record(
      std::move(out), anyGrad({x, gamma, beta}),
      [ix, ig, ib, xhat = std::move(xhat), invStd = std::move(invStd)](Graph& g, const Matrix& up) {
        if (g.requiresGrad(ig)) g.accumulate(ig, up.cwiseProduct(xhat).colwise().sum());
        if (g.requiresGrad(ib)) g.accumulate(ib, up.colwise().sum());
        if (g.requiresGrad(ix)) {
          Matrix dxhat = up;
          dxhat.array().rowwise() *= g.value(ig).row(0).array();
          const double n = static_cast<double>(dxhat.cols());
          Matrix dx(dxhat.rows(), dxhat.cols());
          for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
            const double m1 = dxhat.row(r).sum() / n;
            const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
            dx.row(r) = invStd[r] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
          }
          g.accumulate(ix, dx);
        }
      });
}

Var softmaxRows(Var x, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>* mask) {
  const Matrix& in = x.value();
  if (mask != nullptr && (mask->rows() != in.rows() || mask->cols() != in.cols())) {
    throw ShapeMismatch("softmaxRows: mask shape does not match scores " + shapeOf(in));
  }
  Matrix p = Matrix::Zero(in.rows(), in.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < in.cols(); ++c) {
      if (mask == nullptr || (*mask)(r, c)) mx = std::max(mx, in(r, c));
    }
    if (!std::isfinite(mx)) {
      throw ShapeMismatch("softmaxRows: row " + std::to_string(r) + " is fully masked");
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < in.cols(); ++c) {
      if (mask == nullptr || (*mask)(r, c)) {
        p(r, c) = std::exp(in(r, c) - mx);
        total += p(r, c);
      }
    }
    p.row(r) /= total;
  }
  const int ix = x.id();
  Matrix probs = p;
  return graphOf(x).record(std::move(p), x.requiresGrad(), [ix, probs = std::move(probs)](Graph& g, const Matrix& up) {
    const Eigen::VectorXd dots = up.cwiseProduct(probs).rowwise().sum();
    Matrix dx = up;
    dx.colwise() -= dots;
    g.accumulate(ix, dx.cwiseProduct(probs));
  });
}

Var sliceCols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeMismatch("sliceCols out of range on " + shapeOf(a.value()));
  }
  const int ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return graphOf(a).record(a.value().middleCols(start, count), a.requiresGrad(),
                           [ia, start, count, rows, cols](Graph& g, const Matrix& up) {
                             Matrix full = Matrix::Zero(rows, cols);
                             full.middleCols(start, count) = up;
                             g.accumulate(ia, full);
                           });
}

Var sliceRows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ShapeMismatch("sliceRows out of range on " + shapeOf(a.value()));
  }
  const int ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return graphOf(a).record(a.value().middleRows(start, count), a.requiresGrad(),
                           [ia, start, count, rows, cols](Graph& g, const Matrix& up) {
                             Matrix full = Matrix::Zero(rows, cols);
                             full.middleRows(start, count) = up;
                             g.accumulate(ia, full);
                           });
}

Var concatCols(const std::vector<Var>& parts) {
  if (parts.empty()) {
    throw ShapeMismatch("concatCols of nothing");
  }
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool needGrad = false;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeMismatch("concatCols: row counts differ");
    cols += p.cols();
    needGrad = needGrad || p.requiresGrad();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), p.cols());
    at += p.cols();
  }
  return graphOf(parts[0]).record(std::move(out), needGrad, [spans](Graph& g, const Matrix& up) {
    Eigen::Index off = 0;
    for (const auto& [id, n] : spans) {
      if (g.requiresGrad(id)) g.accumulate(id, up.middleCols(off, n));
      off += n;
    }
  });
}

Var concatRows(const std::vector<Var>& parts) {
  if (parts.empty()) {
    throw ShapeMismatch("concatRows of nothing");
  }
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool needGrad = false;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeMismatch("concatRows: column counts differ");
    rows += p.rows();
    needGrad = needGrad || p.requiresGrad();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id(), p.rows());
    at += p.rows();
  }
  return graphOf(parts[0]).record(std::move(out), needGrad, [spans](Graph& g, const Matrix& up) {
    Eigen::Index off = 0;
    for (const auto& [id, n] : spans) {
      if (g.requiresGrad(id)) g.accumulate(id, up.middleRows(off, n));
      off += n;
    }
  });
}

Var maxRows(Var a) {
  const Matrix& in = a.value();
  if (in.rows() == 0) {
    throw ShapeMismatch("maxRows of an empty matrix");
  }
  Matrix out(1, in.cols());
  std::vector<Eigen::Index> argmax(static_cast<size_t>(in.cols()));
  for (Eigen::Index c = 0; c < in.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < in.rows(); ++r) {
      if (in(r, c) > in(best, c)) best = r;
    }
    argmax[static_cast<size_t>(c)] = best;
    out(0, c) = in(best, c);
  }
  const int ia = a.id();
  const Eigen::Index rows = in.rows();
  return graphOf(a).record(std::move(out), a.requiresGrad(), [ia, rows, argmax](Graph& g, const Matrix& up) {
    Matrix full = Matrix::Zero(rows, up.cols());
    for (Eigen::Index c = 0; c < up.cols(); ++c) full(argmax[static_cast<size_t>(c)], c) = up(0, c);
    g.accumulate(ia, full);
  });
}

Var sum(Var a) {
  const int ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return graphOf(a).record(std::move(out), a.requiresGrad(), [ia, rows, cols](Graph& g, const Matrix& up) {
    g.accumulate(ia, Matrix::Constant(rows, cols, up(0, 0)));
  });
}

Var weightedSquaredError(Var a, const Matrix& target, const Matrix& weight) {
  requireSameShape(a.value(), target, "weightedSquaredError");
  requireSameShape(a.value(), weight, "weightedSquaredError(weight)");
  Matrix diff = a.value() - target;
  Matrix out(1, 1);
  out(0, 0) = weight.cwiseProduct(diff.cwiseAbs2()).sum();
  const int ia = a.id();
  return graphOf(a).record(std::move(out), a.requiresGrad(),
                           [ia, diff = std::move(diff), weight](Graph& g, const Matrix& up) {
                             g.accumulate(ia, (2.0 * up(0, 0)) * weight.cwiseProduct(diff));
                           });
}

Var weightedSquaredDiff(Var a, Var b, const Matrix& weight) {
  requireSameShape(a.value(), b.value(), "weightedSquaredDiff");
  requireSameShape(a.value(), weight, "weightedSquaredDiff(weight)");
  Matrix diff = a.value() - b.value();
  Matrix out(1, 1);
  out(0, 0) = weight.cwiseProduct(diff.cwiseAbs2()).sum();
  const int ia = a.id(), ib = b.id();
  return graphOf(a).record(std::move(out), anyGrad({a, b}),
                           [ia, ib, diff = std::move(diff), weight](Graph& g, const Matrix& up) {
                             const Matrix d = (2.0 * up(0, 0)) * weight.cwiseProduct(diff);
                             if (g.requiresGrad(ia)) g.accumulate(ia, d);
                             if (g.requiresGrad(ib)) g.accumulate(ib, -d);
                           });
}

namespace {

constexpr double kNormFloor = 1e-8;

struct FrameBasis {
  Eigen::Vector3d a, b, an, bp, bn, c;
  double na, nbp;
};

FrameBasis decodeFrame(const Matrix& pose, Eigen::Index t) {
  FrameBasis f;
  f.a = pose.block<1, 3>(t, 3).transpose();
  f.b = pose.block<1, 3>(t, 6).transpose();
  f.na = std::max(f.a.norm(), kNormFloor);
  f.an = f.a / f.na;
  f.bp = f.b - f.an.dot(f.b) * f.an;
  f.nbp = std::max(f.bp.norm(), kNormFloor);
  f.bn = f.bp / f.nbp;
  f.c = f.an.cross(f.bn);
  return f;
}

// Backward of y = v / |v| given y and |v|.
Eigen::Vector3d normalizeBackward(const Eigen::Vector3d& y, double norm, const Eigen::Vector3d& gy) {
  return (gy - y * y.dot(gy)) / norm;
}

}  // namespace

Var rigidContacts(Var pose, const Matrix& restPoints) {
  if (pose.cols() != 9) {
    throw ShapeMismatch("rigidContacts: pose must have 9 columns, got " + shapeOf(pose.value()));
  }
  if (restPoints.cols() != 3) {
    throw ShapeMismatch("rigidContacts: rest points must be Q x 3");
  }
  const Matrix& pv = pose.value();
  const Eigen::Index frames = pv.rows(), q = restPoints.rows();
  Matrix out(frames, 3 * q);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const FrameBasis f = decodeFrame(pv, t);
    const Eigen::Vector3d trans = pv.block<1, 3>(t, 0).transpose();
    for (Eigen::Index i = 0; i < q; ++i) {
      const Eigen::Vector3d x =
          f.an * restPoints(i, 0) + f.bn * restPoints(i, 1) + f.c * restPoints(i, 2) + trans;
      out.block<1, 3>(t, 3 * i) = x.transpose();
    }
  }
  const int ip = pose.id();
  return graphOf(pose).record(std::move(out), pose.requiresGrad(), [ip, restPoints](Graph& g, const Matrix& up) {
    const Matrix& pv = g.value(ip);
    Matrix dpose = Matrix::Zero(pv.rows(), 9);
    for (Eigen::Index t = 0; t < pv.rows(); ++t) {
      const FrameBasis f = decodeFrame(pv, t);
      Eigen::Vector3d gL = Eigen::Vector3d::Zero(), gan = Eigen::Vector3d::Zero(),
                      gbn = Eigen::Vector3d::Zero(), gc = Eigen::Vector3d::Zero();
      for (Eigen::Index i = 0; i < restPoints.rows(); ++i) {
        const Eigen::Vector3d gx = up.block<1, 3>(t, 3 * i).transpose();
        gL += gx;
        gan += restPoints(i, 0) * gx;
        gbn += restPoints(i, 1) * gx;
        gc += restPoints(i, 2) * gx;
      }
      // c = an x bn
      gan += f.bn.cross(gc);
      gbn += gc.cross(f.an);
      // bn = bp / |bp|, bp = b - (an . b) an
      const Eigen::Vector3d gbp = normalizeBackward(f.bn, f.nbp, gbn);
      const double s = f.an.dot(f.b);
      const Eigen::Vector3d gb = gbp - f.an * f.an.dot(gbp);
      gan += -s * gbp - f.b * f.an.dot(gbp);
      const Eigen::Vector3d ga = normalizeBackward(f.an, f.na, gan);
      dpose.block<1, 3>(t, 0) = gL.transpose();
      dpose.block<1, 3>(t, 3) = ga.transpose();
      dpose.block<1, 3>(t, 6) = gb.transpose();
    }
    g.accumulate(ip, dpose);
  });
}

}  // namespace hoi::ad
