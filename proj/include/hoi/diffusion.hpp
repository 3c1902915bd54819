// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace hoi::diffusion {

using Matrix = Eigen::MatrixXd;

enum class ScheduleKind { Cosine, Linear };

ScheduleKind parseScheduleKind(const std::string& name);
std::string toString(ScheduleKind kind);

/// Step indices are 0-based: step t in [0, steps) is diffusion time t + 1, so
/// alphaBar[0] is the lightest corruption and t = 0 is the final reverse step.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alphaBar;
};

NoiseSchedule makeSchedule(int steps, ScheduleKind kind);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Matrix qSample(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& sched);

struct PosteriorCoefficients {
  double cleanCoef;  // multiplies the x0 estimate
  double noisyCoef;  // multiplies x_t
  double variance;
};

PosteriorCoefficients posteriorCoefficients(const NoiseSchedule& sched, int t);

/// One ancestral step from x_t given a clean-sample estimate. At t = 0 the
/// posterior mean is returned without noise.
Matrix ddpmStep(const Matrix& xt, const Matrix& x0Hat, int t, const NoiseSchedule& sched, const Matrix& noise);

/// Maps (x_t, t) to a clean-sample estimate of the same shape.
using Denoiser = std::function<Matrix(const Matrix& xt, int t)>;
/// Optional in-place constraint applied to every intermediate state (used to
/// clamp observed entries).
using StateProjection = std::function<void(Matrix& x, int t)>;

Matrix standardNormal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// Runs t = steps-1 .. 0 from Gaussian noise and returns the last clean
/// estimate. Deterministic under seed.
Matrix sampleLoop(const Denoiser& denoiser, Eigen::Index rows, Eigen::Index cols, const NoiseSchedule& sched,
                  std::uint64_t seed, const StateProjection& project = nullptr);

}  // namespace hoi::diffusion
