// SPDX-License-Identifier: Apache-2.0
#include "hoi/diffusion.hpp"
#include "hoi/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace hoi::diffusion;

TEST(Schedule, Invariants) {
  for (ScheduleKind kind : {ScheduleKind::Cosine, ScheduleKind::Linear}) {
    for (int steps : {50, 100, 1000}) {
      const NoiseSchedule s = makeSchedule(steps, kind);
      ASSERT_EQ(s.beta.size(), static_cast<size_t>(steps));
      EXPECT_GT(s.alphaBar.front(), 0.99);
      EXPECT_LT(s.alphaBar.back(), 0.05);
      for (int t = 0; t < steps; ++t) {
        EXPECT_GT(s.beta[t], 0.0);
        EXPECT_LT(s.beta[t], 1.0);
        if (t > 0) EXPECT_LT(s.alphaBar[t], s.alphaBar[t - 1]);
      }
    }
  }
}

TEST(Schedule, CosineMatchesClosedForm) {
  const int steps = 100;
  const NoiseSchedule s = makeSchedule(steps, ScheduleKind::Cosine);
  auto f = [&](double t) {
    const double c = std::cos((t / steps + 0.008) / 1.008 * std::numbers::pi / 2.0);
    return c * c;
  };
  for (int t = 0; t + 1 < steps; ++t) EXPECT_NEAR(s.alphaBar[t], f(t + 1) / f(0), 1e-12);
}

TEST(Schedule, LinearEndpoints) {
  const NoiseSchedule s = makeSchedule(1000, ScheduleKind::Linear);
  EXPECT_DOUBLE_EQ(s.beta.front(), 1e-4);
  EXPECT_DOUBLE_EQ(s.beta.back(), 0.02);
  const NoiseSchedule shortRun = makeSchedule(100, ScheduleKind::Linear);
  EXPECT_DOUBLE_EQ(shortRun.beta.back(), 0.2);
}

TEST(Schedule, RejectsBadSettings) {
  EXPECT_THROW(makeSchedule(1, ScheduleKind::Linear), hoi::ConfigError);
  EXPECT_THROW(makeSchedule(4, ScheduleKind::Cosine), hoi::ConfigError);
  EXPECT_THROW(parseScheduleKind("quadratic"), hoi::ConfigError);
  EXPECT_EQ(parseScheduleKind("cosine"), ScheduleKind::Cosine);
}

TEST(QSample, MonteCarloMomentsWithinThreeSigma) {
  const NoiseSchedule s = makeSchedule(100, ScheduleKind::Cosine);
  const int draws = 100000;
  const double x0 = 0.7;
  std::mt19937_64 rng(3);
  for (int t : {0, 37, 99}) {
    double sum = 0.0, sumSq = 0.0;
    for (int i = 0; i < draws; ++i) {
      const Matrix eps = standardNormal(1, 1, rng);
      const double x = qSample(Matrix::Constant(1, 1, x0), t, eps, s)(0, 0);
      sum += x;
      sumSq += x * x;
    }
    const double ab = s.alphaBar[t];
    const double mean = sum / draws;
    const double var = sumSq / draws - mean * mean;
    const double trueVar = 1.0 - ab;
    EXPECT_LT(std::abs(mean - std::sqrt(ab) * x0), 3.0 * std::sqrt(trueVar / draws)) << "t=" << t;
    // Sample variance of a Gaussian has standard deviation sigma^2 sqrt(2 / (n - 1)).
    EXPECT_LT(std::abs(var - trueVar), 3.0 * trueVar * std::sqrt(2.0 / (draws - 1))) << "t=" << t;
  }
}

TEST(QSample, RangeAndShapeChecks) {
  const NoiseSchedule s = makeSchedule(10, ScheduleKind::Linear);
  EXPECT_THROW(qSample(Matrix::Zero(2, 2), 10, Matrix::Zero(2, 2), s), hoi::RangeError);
  EXPECT_THROW(qSample(Matrix::Zero(2, 2), -1, Matrix::Zero(2, 2), s), hoi::RangeError);
  EXPECT_THROW(qSample(Matrix::Zero(2, 2), 0, Matrix::Zero(2, 3), s), hoi::ShapeMismatch);
}

TEST(Posterior, CoefficientsMatchGaussianConditioning) {
  const NoiseSchedule s = makeSchedule(50, ScheduleKind::Linear);
  for (int t = 1; t < 50; t += 7) {
    const double abPrev = s.alphaBar[t - 1], beta = s.beta[t];
    // x_{t-1} | x_0 ~ N(sqrt(abPrev) x0, 1 - abPrev); x_t | x_{t-1} ~ N(sqrt(1-beta) x_{t-1}, beta).
    // Conditioning the joint Gaussian on x_t gives the posterior.
    const double varPrior = 1.0 - abPrev;
    const double a = std::sqrt(1.0 - beta);
    const double gain = varPrior * a / (a * a * varPrior + beta);
    const double variance = varPrior - gain * a * varPrior;
    const double noisy = gain;
    const double clean = std::sqrt(abPrev) * (1.0 - gain * a);
    const PosteriorCoefficients c = posteriorCoefficients(s, t);
    EXPECT_NEAR(c.variance, variance, 1e-14);
    EXPECT_NEAR(c.noisyCoef, noisy, 1e-12);
    EXPECT_NEAR(c.cleanCoef, clean, 1e-12);
  }
  const PosteriorCoefficients last = posteriorCoefficients(s, 0);
  EXPECT_NEAR(last.cleanCoef, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(last.noisyCoef, 0.0);
  EXPECT_DOUBLE_EQ(last.variance, 0.0);
}

TEST(Sampling, CheatingDenoiserRecoversTheTarget) {
  std::mt19937_64 rng(5);
  const Matrix target = standardNormal(20, 15, rng);
  for (ScheduleKind kind : {ScheduleKind::Cosine, ScheduleKind::Linear}) {
    const NoiseSchedule s = makeSchedule(100, kind);
    const Matrix out = sampleLoop([&](const Matrix&, int) { return target; }, 20, 15, s, 9);
    EXPECT_LT((out - target).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(Sampling, DeterministicAndSeedSensitive) {
  const NoiseSchedule s = makeSchedule(30, ScheduleKind::Cosine);
  // A denoiser that depends on its input so the noise draws matter.
  auto shrink = [](const Matrix& x, int) -> Matrix { return 0.5 * x; };
  const Matrix a = sampleLoop(shrink, 4, 3, s, 11);
  EXPECT_EQ(a, sampleLoop(shrink, 4, 3, s, 11));
  EXPECT_NE(a, sampleLoop(shrink, 4, 3, s, 12));
}

TEST(Sampling, ProjectionIsAppliedEveryStep) {
  const NoiseSchedule s = makeSchedule(30, ScheduleKind::Cosine);
  int calls = 0;
  sampleLoop([](const Matrix& x, int) -> Matrix { return x; }, 2, 2, s, 1,
             [&](Matrix& x, int) {
               ++calls;
               x(0, 0) = 3.0;
             });
  EXPECT_EQ(calls, 30);
}
