// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <vector>

namespace hoi::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Vector4d;  // (w, x, y, z), scalar first

/// Continuous 6D rotation: the first two columns of a rotation matrix
/// before orthonormalization.
struct Rotation6D {
  Vec3 a = Vec3::UnitX();
  Vec3 b = Vec3::UnitY();

  static Rotation6D fromArray(const double* v) {
    return {Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])};
  }
  void toArray(double* v) const {
    for (int i = 0; i < 3; ++i) {
      v[i] = a[i];
      v[3 + i] = b[i];
    }
  }
  bool operator==(const Rotation6D&) const = default;
};

/// Rotation followed by translation, x -> R x + L.
class RigidTransform {
 public:
  RigidTransform() = default;
  /// Throws NotARotation unless R is orthonormal with det +1 (tol 1e-5).
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform fromRotation6D(const Rotation6D& r, const Vec3& translation);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }
  RigidTransform operator*(const RigidTransform& rhs) const;
  RigidTransform inverse() const;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// M x 3 point set in meters. Construction rejects empty or non-finite input.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(Eigen::MatrixX3d points);
  explicit PointCloud(const std::vector<Vec3>& points);

  Eigen::Index size() const { return points_.rows(); }
  bool empty() const { return points_.rows() == 0; }
  Vec3 point(Eigen::Index i) const { return points_.row(i).transpose(); }
  const Eigen::MatrixX3d& points() const { return points_; }

  bool operator==(const PointCloud& rhs) const { return points_ == rhs.points_; }

 private:
  Eigen::MatrixX3d points_;
};

/// Gram-Schmidt decoding: first column a/|a|, second the normalized part of b
/// orthogonal to it, third their cross product.
Mat3 rot6dToMatrix(const Rotation6D& r);

Rotation6D matrixToRot6d(const Mat3& m);

PointCloud applyRigid(const RigidTransform& t, const PointCloud& pc);

/// Transports rest-pose contact points by a (predicted) object pose.
PointCloud contactFromObject(const RigidTransform& pred, const PointCloud& restContacts);

/// Unit quaternion, scalar first, canonical sign w >= 0.
Quat matrixToQuaternion(const Mat3& m);

Mat3 quaternionToMatrix(const Quat& q);

/// Max |m^T m - I| entry.
double orthonormalityError(const Mat3& m);

Mat3 axisAngle(const Vec3& axis, double angle);

}  // namespace hoi::geometry
