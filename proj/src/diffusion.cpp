// SPDX-License-Identifier: Apache-2.0
#include "hoi/diffusion.hpp"

#include "hoi/errors.hpp"

#include <algorithm>
#include <cmath>

namespace hoi::diffusion {

namespace {

void requireStep(const NoiseSchedule& sched, int t) {
  if (t < 0 || t >= sched.steps) {
    throw RangeError("diffusion step " + std::to_string(t) + " outside [0, " + std::to_string(sched.steps) + ")");
  }
}

void requireSameShape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch(std::string(what) + ": shapes differ");
  }
}

}  // namespace

ScheduleKind parseScheduleKind(const std::string& name) {
  if (name == "cosine") return ScheduleKind::Cosine;
  if (name == "linear") return ScheduleKind::Linear;
  throw ConfigError("unknown noise schedule \"" + name + "\" (expected cosine or linear)");
}

std::string toString(ScheduleKind kind) {
  return kind == ScheduleKind::Cosine ? "cosine" : "linear";
}

NoiseSchedule makeSchedule(int steps, ScheduleKind kind) {
  if (steps < 2) {
    throw ConfigError("noise schedule needs at least 2 steps");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(static_cast<size_t>(steps));
  if (kind == ScheduleKind::Cosine) {
    constexpr double offset = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / steps + offset) / (1.0 + offset) * M_PI / 2.0);
      return c * c;
    };
    for (int t = 0; t < steps; ++t) {
      s.beta[static_cast<size_t>(t)] = std::min(1.0 - f(t + 1.0) / f(t), 0.999);
    }
  } else {
    const double start = 1e-4;
    const double end = std::min(0.02 * 1000.0 / steps, 0.999);
    for (int t = 0; t < steps; ++t) {
      s.beta[static_cast<size_t>(t)] = start + (end - start) * t / (steps - 1);
    }
  }
  s.alphaBar.resize(static_cast<size_t>(steps));
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    prod *= 1.0 - s.beta[static_cast<size_t>(t)];
    s.alphaBar[static_cast<size_t>(t)] = prod;
  }
  if (!(s.alphaBar.front() > 0.99)) {
    throw ConfigError(toString(kind) + " schedule with " + std::to_string(steps) +
                      " steps corrupts too much at the first step; use more steps");
  }
  return s;
}

Matrix qSample(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& sched) {
  requireSameShape(x0, eps, "qSample");
  requireStep(sched, t);
  const double ab = sched.alphaBar[static_cast<size_t>(t)];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

PosteriorCoefficients posteriorCoefficients(const NoiseSchedule& sched, int t) {
  requireStep(sched, t);
  const double ab = sched.alphaBar[static_cast<size_t>(t)];
  const double abPrev = t > 0 ? sched.alphaBar[static_cast<size_t>(t - 1)] : 1.0;
  const double beta = sched.beta[static_cast<size_t>(t)];
  PosteriorCoefficients c;
  c.cleanCoef = std::sqrt(abPrev) * beta / (1.0 - ab);
  c.noisyCoef = std::sqrt(1.0 - beta) * (1.0 - abPrev) / (1.0 - ab);
  c.variance = beta * (1.0 - abPrev) / (1.0 - ab);
  return c;
}

Matrix ddpmStep(const Matrix& xt, const Matrix& x0Hat, int t, const NoiseSchedule& sched, const Matrix& noise) {
  requireSameShape(xt, x0Hat, "ddpmStep");
  const PosteriorCoefficients c = posteriorCoefficients(sched, t);
  Matrix mean = c.cleanCoef * x0Hat + c.noisyCoef * xt;
  if (t == 0) {
    return mean;
  }
  requireSameShape(xt, noise, "ddpmStep(noise)");
  return mean + std::sqrt(c.variance) * noise;
}

Matrix standardNormal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = n(rng);
  }
  return m;
}

Matrix sampleLoop(const Denoiser& denoiser, Eigen::Index rows, Eigen::Index cols, const NoiseSchedule& sched,
                  std::uint64_t seed, const StateProjection& project) {
  std::mt19937_64 rng(seed);
  Matrix x = standardNormal(rows, cols, rng);
  for (int t = sched.steps - 1; t >= 0; --t) {
    if (project) project(x, t);
    Matrix x0Hat = denoiser(x, t);
    if (x0Hat.rows() != rows || x0Hat.cols() != cols) {
      throw ShapeMismatch("denoiser changed the sample shape");
    }
    if (t == 0) {
      return x0Hat;
    }
    x = ddpmStep(x, x0Hat, t, sched, standardNormal(rows, cols, rng));
  }
  return x;
}

}  // namespace hoi::diffusion
