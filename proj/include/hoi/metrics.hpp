// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hoi/data.hpp"
#include "hoi/geometry.hpp"
#include "hoi/model.hpp"

#include "json.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hoi::metrics {

using geometry::Vec3;

/// Mean Euclidean distance between corresponding points. Rows are frames,
/// columns are K points x 3 coordinates.
double mpjpe(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt);

/// min(|qa - qb|, |qa + qb|)
double quaternionDistance(const geometry::Quat& a, const geometry::Quat& b);

struct PoseErrors {
  double translation = 0.0;  // mean centroid distance
  double rotation = 0.0;     // mean sign-invariant quaternion distance
};
PoseErrors transRotErr(const std::vector<data::ObjectPose>& pred, const std::vector<data::ObjectPose>& gt);

struct Capsule {
  Vec3 a, b;
  double radius = 0.0;
};

inline constexpr double kCapsuleRadius = 0.05;

/// One capsule per bone of the built-in skeleton (joint -> parent).
std::vector<Capsule> skeletonCapsules(const Eigen::MatrixX3d& joints, double radius = kCapsuleRadius);
/// Signed distance to the capsule union, positive inside.
double capsuleSignedDistance(const Vec3& p, const std::vector<Capsule>& body);
/// 100 x fraction of points with signed distance >= 0.
double penetration(const Eigen::MatrixX3d& objectPoints, const std::vector<Capsule>& body);

/// Full-window prediction for one sequence (T = T_p + T_f rows).
struct Forecast {
  Eigen::MatrixXd human;    // T x J*9
  Eigen::MatrixXd contact;  // T x N*k*3, empty when the predictor has no contact channels
  Eigen::MatrixXd object;   // T x 9
};

class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual Forecast forecast(const data::HoiSequence& s, std::uint64_t seed) = 0;
};

/// Samples the joint diffusion state of a model through the reverse chain.
class ModelForecaster : public Forecaster {
 public:
  explicit ModelForecaster(CoopModel& model, bool useHim = true) : model_(model), useHim_(useHim) {}
  Forecast forecast(const data::HoiSequence& s, std::uint64_t seed) override;

 private:
  CoopModel& model_;
  bool useHim_;
};

/// Returns the ground truth; used as a test double for the evaluation path.
class OracleForecaster : public Forecaster {
 public:
  Forecast forecast(const data::HoiSequence& s, std::uint64_t seed) override;
};

/// Rigid contacts implied by each predicted object row, T x N*k*3.
Eigen::MatrixXd objectContacts(const Eigen::MatrixXd& objectRows, const Eigen::MatrixX3d& restSlots);

/// Metrics in report units: millimeters for distances, quaternion distance
/// x 1000 and penetration percent x 10.
struct SequenceMetrics {
  double mpjpeH = 0.0;
  double mpjpeO = 0.0;
  double transErr = 0.0;
  double rotErr = 0.0;
  double pene = 0.0;
  std::optional<double> contactGap;  // mean |C_H - C_O| over observed future contacts
  double contactCount = 0.0;
};

/// Scores the future frames of a forecast.
SequenceMetrics scoreForecast(const data::HoiSequence& s, const Forecast& f);

struct EvalReport {
  std::uint64_t seed = 0;
  int samplesPerSequence = 1;
  SequenceMetrics mean;
  std::vector<SequenceMetrics> perSequence;

  nlohmann::json toJson() const;
  /// Aligned human-readable table.
  std::string table() const;
};

EvalReport evaluate(Forecaster& forecaster, const std::vector<data::HoiSequence>& dataset, std::uint64_t seed,
                    int samplesPerSequence);

/// Seed used for sample `sample` of sequence `index`.
std::uint64_t sampleSeed(std::uint64_t seed, std::size_t index, int sample);

/// Loads either a model checkpoint or an oracle test-double checkpoint.
std::unique_ptr<Forecaster> forecasterFromCheckpoint(const std::string& path, std::unique_ptr<CoopModel>& storage);

}  // namespace hoi::metrics
