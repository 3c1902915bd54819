// SPDX-License-Identifier: Apache-2.0
#include "hoi/data.hpp"

#include "hoi/errors.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <set>
#include <string>

namespace hoi::data {

GroupAssignment groupContacts(const Eigen::MatrixX3d& contactPoints, const Eigen::MatrixX3d& joints,
                              int numGroups) {
  if (numGroups != joints.rows()) {
    throw ConfigError("contact grouping needs one group per joint (N = " + std::to_string(numGroups) +
                      ", J = " + std::to_string(joints.rows()) + ")");
  }
  GroupAssignment out;
  out.groups.resize(static_cast<size_t>(numGroups));
  out.mask.assign(static_cast<size_t>(numGroups), 0);
  for (Eigen::Index i = 0; i < contactPoints.rows(); ++i) {
    int best = 0;
    double bestDist = (joints.row(0) - contactPoints.row(i)).squaredNorm();
    for (Eigen::Index j = 1; j < joints.rows(); ++j) {
      const double d = (joints.row(j) - contactPoints.row(i)).squaredNorm();
      if (d < bestDist) {
        bestDist = d;
        best = static_cast<int>(j);
      }
    }
    out.groups[static_cast<size_t>(best)].push_back(static_cast<int>(i));
  }
  for (size_t g = 0; g < out.groups.size(); ++g) {
    out.mask[g] = out.groups[g].empty() ? 0 : 1;
  }
  return out;
}

std::vector<std::vector<int>> sampleContactSubsets(const std::vector<std::vector<int>>& groups, int k,
                                                   std::uint64_t seed) {
  if (k < 1) {
    throw ConfigError("contact subset size must be >= 1");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int>> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    std::vector<int> chosen;
    if (g.empty()) {
      chosen.assign(static_cast<size_t>(k), -1);
    } else if (static_cast<int>(g.size()) >= k) {
      std::vector<int> pool = g;
      std::shuffle(pool.begin(), pool.end(), rng);
      chosen.assign(pool.begin(), pool.begin() + k);
    } else {
      std::uniform_int_distribution<size_t> pick(0, g.size() - 1);
      for (int i = 0; i < k; ++i) {
        chosen.push_back(g[pick(rng)]);
      }
    }
    out.push_back(std::move(chosen));
  }
  return out;
}

ContactSet contactsFromSkeleton(const Eigen::MatrixX3d& joints, const Eigen::MatrixX3d& objectPoints, int k,
                                double threshold) {
  const auto n = static_cast<size_t>(joints.rows());
  ContactSet cs;
  cs.groups.resize(n);
  cs.mask.assign(n, 0);
  cs.subsets = Eigen::MatrixX3d::Zero(static_cast<Eigen::Index>(n) * k, 3);
  for (Eigen::Index j = 0; j < joints.rows(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index p = 0; p < objectPoints.rows(); ++p) {
      best = std::min(best, (objectPoints.row(p) - joints.row(j)).norm());
    }
    if (best <= threshold) {
      cs.groups[static_cast<size_t>(j)] = {static_cast<int>(j)};
      cs.mask[static_cast<size_t>(j)] = 1;
      for (int s = 0; s < k; ++s) {
        cs.subsets.row(j * k + s) = joints.row(j);
      }
    }
  }
  return cs;
}

PointCloud HoiSequence::restContacts() const {
  std::vector<Vec3> pts;
  pts.reserve(restContactIndices.size());
  for (int idx : restContactIndices) {
    pts.push_back(restCloud.point(idx));
  }
  if (pts.empty()) {
    return PointCloud();
  }
  return PointCloud(pts);
}

Eigen::MatrixX3d HoiSequence::restContactSlots() const {
  const int n = numGroups(), k = samplesPerGroup();
  Eigen::MatrixX3d slots = Eigen::MatrixX3d::Zero(static_cast<Eigen::Index>(n) * k, 3);
  for (int g = 0; g < n; ++g) {
    for (int s = 0; s < k; ++s) {
      const int idx = subsetIndices[static_cast<size_t>(g)][static_cast<size_t>(s)];
      if (idx >= 0) {
        slots.row(g * k + s) = restCloud.points().row(idx);
      }
    }
  }
  return slots;
}

void HoiSequence::validate() const {
  if (pastLen < 1 || futureLen < 0) {
    throw ShapeMismatch("sequence needs positive past_len and nonnegative future_len");
  }
  const auto t = static_cast<size_t>(numFrames());
  if (human.size() != t || object.size() != t || contacts.size() != t) {
    throw ShapeMismatch("frame arrays must all have past_len + future_len entries");
  }
  const int j = numJoints();
  const int n = numGroups();
  const int k = samplesPerGroup();
  for (const auto& row : subsetIndices) {
    if (static_cast<int>(row.size()) != k) {
      throw ShapeMismatch("subset_indices rows differ in length");
    }
    for (int idx : row) {
      if (idx < -1 || idx >= restCloud.size()) {
        throw ShapeMismatch("subset index " + std::to_string(idx) + " outside rest cloud");
      }
    }
  }
  for (int idx : restContactIndices) {
    if (idx < 0 || idx >= restCloud.size()) {
      throw ShapeMismatch("rest contact index " + std::to_string(idx) + " outside rest cloud");
    }
  }
  for (size_t f = 0; f < t; ++f) {
    if (human[f].numJoints() != j || static_cast<int>(human[f].jointRotations.size()) != j) {
      throw ShapeMismatch("joint count differs at frame " + std::to_string(f));
    }
    const ContactSet& c = contacts[f];
    if (c.numGroups() != n || static_cast<int>(c.groups.size()) != n || c.subsets.rows() != n * k) {
      throw ShapeMismatch("contact layout differs at frame " + std::to_string(f));
    }
    for (int g = 0; g < n; ++g) {
      const bool nonempty = !c.groups[static_cast<size_t>(g)].empty();
      if ((c.mask[static_cast<size_t>(g)] != 0) != nonempty) {
        throw ShapeMismatch("mask disagrees with group occupancy at frame " + std::to_string(f));
      }
    }
  }
}

Eigen::MatrixXd humanMatrix(const HoiSequence& s) {
  const int t = s.numFrames(), j = s.numJoints();
  Eigen::MatrixXd m(t, j * kJointChannels);
  for (int f = 0; f < t; ++f) {
    const HumanPose& p = s.human[static_cast<size_t>(f)];
    for (int i = 0; i < j; ++i) {
      for (int c = 0; c < 3; ++c) m(f, i * kJointChannels + c) = p.jointPositions(i, c);
      double r6[6];
      p.jointRotations[static_cast<size_t>(i)].toArray(r6);
      for (int c = 0; c < 6; ++c) m(f, i * kJointChannels + 3 + c) = r6[c];
    }
  }
  return m;
}

Eigen::MatrixXd contactMatrix(const HoiSequence& s) {
  const int t = s.numFrames();
  const int width = s.numGroups() * s.samplesPerGroup() * 3;
  Eigen::MatrixXd m(t, width);
  for (int f = 0; f < t; ++f) {
    const Eigen::MatrixX3d& sub = s.contacts[static_cast<size_t>(f)].subsets;
    for (Eigen::Index r = 0; r < sub.rows(); ++r) {
      for (int c = 0; c < 3; ++c) m(f, r * 3 + c) = sub(r, c);
    }
  }
  return m;
}

Eigen::MatrixXd contactMask(const HoiSequence& s) {
  const int t = s.numFrames(), n = s.numGroups();
  Eigen::MatrixXd m(t, n);
  for (int f = 0; f < t; ++f) {
    for (int g = 0; g < n; ++g) {
      m(f, g) = s.contacts[static_cast<size_t>(f)].mask[static_cast<size_t>(g)] ? 1.0 : 0.0;
    }
  }
  return m;
}

Eigen::MatrixXd contactChannelMask(const HoiSequence& s) {
  const Eigen::MatrixXd m = contactMask(s);
  const int per = s.samplesPerGroup() * 3;
  Eigen::MatrixXd out(m.rows(), m.cols() * per);
  for (Eigen::Index g = 0; g < m.cols(); ++g) {
    out.middleCols(g * per, per) = m.col(g).replicate(1, per);
  }
  return out;
}

Eigen::MatrixXd objectMatrix(const HoiSequence& s) {
  const int t = s.numFrames();
  Eigen::MatrixXd m(t, kObjectChannels);
  for (int f = 0; f < t; ++f) {
    const ObjectPose& o = s.object[static_cast<size_t>(f)];
    double r6[6];
    o.rotation.toArray(r6);
    for (int c = 0; c < 3; ++c) m(f, c) = o.centroid[c];
    for (int c = 0; c < 6; ++c) m(f, 3 + c) = r6[c];
  }
  return m;
}

Eigen::MatrixXd jointPositions(const HoiSequence& s, int firstFrame, int count) {
  const int j = s.numJoints();
  Eigen::MatrixXd m(count, j * 3);
  for (int f = 0; f < count; ++f) {
    const HumanPose& p = s.human[static_cast<size_t>(firstFrame + f)];
    for (int i = 0; i < j; ++i) {
      for (int c = 0; c < 3; ++c) m(f, i * 3 + c) = p.jointPositions(i, c);
    }
  }
  return m;
}

HumanPose humanPoseFromRow(const Eigen::RowVectorXd& row) {
  if (row.size() % kJointChannels != 0) {
    throw ShapeMismatch("human row width is not a multiple of 9");
  }
  const int j = static_cast<int>(row.size() / kJointChannels);
  HumanPose p;
  p.jointPositions.resize(j, 3);
  for (int i = 0; i < j; ++i) {
    p.jointPositions.row(i) = row.segment(i * kJointChannels, 3);
    p.jointRotations.push_back(Rotation6D::fromArray(row.data() + i * kJointChannels + 3));
  }
  return p;
}

ObjectPose objectPoseFromRow(const Eigen::RowVectorXd& row) {
  if (row.size() != kObjectChannels) {
    throw ShapeMismatch("object row must have 9 entries");
  }
  ObjectPose o;
  o.centroid = row.segment(0, 3).transpose();
  o.rotation = Rotation6D::fromArray(row.data() + 3);
  return o;
}

}  // namespace hoi::data
