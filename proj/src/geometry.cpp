// SPDX-License-Identifier: Apache-2.0
#include "hoi/geometry.hpp"

#include "hoi/errors.hpp"

#include <cmath>
#include <string>

namespace hoi::geometry {

namespace {

constexpr double kDegenerateTol = 1e-8;
constexpr double kRotationTol = 1e-5;

void requireRotation(const Mat3& m) {
  if (!m.allFinite()) {
    throw NotARotation("matrix has non-finite entries");
  }
  const double err = orthonormalityError(m);
  if (err > kRotationTol) {
    throw NotARotation("matrix is not orthonormal (max |M^T M - I| = " + std::to_string(err) + ")");
  }
  if (m.determinant() < 0.0) {
    throw NotARotation("matrix is a reflection (det < 0)");
  }
}

}  // namespace

double orthonormalityError(const Mat3& m) {
  return (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
}

Mat3 axisAngle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  requireRotation(rotation_);
}

RigidTransform RigidTransform::fromRotation6D(const Rotation6D& r, const Vec3& translation) {
  RigidTransform t;
  t.rotation_ = rot6dToMatrix(r);
  t.translation_ = translation;
  return t;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation_ = rotation_ * rhs.rotation_;
  out.translation_ = rotation_ * rhs.translation_ + translation_;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.rotation_ * translation_);
  return out;
}

PointCloud::PointCloud(Eigen::MatrixX3d points) : points_(std::move(points)) {
  if (points_.rows() == 0) {
    throw ShapeMismatch("point cloud must contain at least one point");
  }
  if (!points_.allFinite()) {
    throw ShapeMismatch("point cloud has non-finite coordinates");
  }
}

PointCloud::PointCloud(const std::vector<Vec3>& points)
    : PointCloud([&] {
        Eigen::MatrixX3d m(static_cast<Eigen::Index>(points.size()), 3);
        for (size_t i = 0; i < points.size(); ++i) {
          m.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
        }
        return m;
      }()) {}

Mat3 rot6dToMatrix(const Rotation6D& r) {
  const double na = r.a.norm();
  if (!(na > kDegenerateTol)) {
    throw DegenerateRotation("6D rotation has a near-zero first column");
  }
  const Vec3 c0 = r.a / na;
  const Vec3 bPerp = r.b - c0.dot(r.b) * c0;
  const double nb = bPerp.norm();
  if (!(nb > kDegenerateTol)) {
    throw DegenerateRotation("6D rotation columns are parallel");
  }
  const Vec3 c1 = bPerp / nb;
  Mat3 m;
  m.col(0) = c0;
  m.col(1) = c1;
  m.col(2) = c0.cross(c1);
  return m;
}

Rotation6D matrixToRot6d(const Mat3& m) {
  requireRotation(m);
  return {m.col(0), m.col(1)};
}

PointCloud applyRigid(const RigidTransform& t, const PointCloud& pc) {
  Eigen::MatrixX3d out = pc.points() * t.rotation().transpose();
  out.rowwise() += t.translation().transpose();
  return PointCloud(std::move(out));
}

PointCloud contactFromObject(const RigidTransform& pred, const PointCloud& restContacts) {
  return applyRigid(pred, restContacts);
}

Quat matrixToQuaternion(const Mat3& m) {
  requireRotation(m);
  // Shepperd's method: branch on the largest diagonal term for stability.
  const double trace = m.trace();
  Quat q;
  if (trace > m(0, 0) && trace > m(1, 1) && trace > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    q << 0.25 * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    q << (m(2, 1) - m(1, 2)) / s, 0.25 * s, (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
    q << (m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, 0.25 * s, (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
    q << (m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, 0.25 * s;
  }
  q.normalize();
  if (q[0] < 0.0) {
    q = -q;
  }
  return q;
}

Mat3 quaternionToMatrix(const Quat& q) {
  const Eigen::Quaterniond eq(q[0], q[1], q[2], q[3]);
  return eq.normalized().toRotationMatrix();
}

}  // namespace hoi::geometry
