// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hoi/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace hoi::data {

using geometry::PointCloud;
using geometry::Rotation6D;
using geometry::Vec3;

/// Channels per joint in the flattened human layout: position then 6D rotation.
inline constexpr int kJointChannels = 9;
/// Flattened object layout: centroid then 6D rotation.
inline constexpr int kObjectChannels = 9;

struct HumanPose {
  Eigen::MatrixX3d jointPositions;           // J x 3, meters
  std::vector<Rotation6D> jointRotations;    // J, world-frame joint orientation

  int numJoints() const { return static_cast<int>(jointPositions.rows()); }
};

struct ObjectPose {
  Vec3 centroid = Vec3::Zero();
  Rotation6D rotation;  // relative to the rest cloud

  geometry::RigidTransform transform() const {
    return geometry::RigidTransform::fromRotation6D(rotation, centroid);
  }
};

/// Per-frame contact state for N body-region groups with k samples each.
struct ContactSet {
  std::vector<std::vector<int>> groups;  // N lists of rest-cloud indices
  Eigen::MatrixX3d subsets;              // (N*k) x 3 positions; zero rows when masked
  std::vector<std::uint8_t> mask;        // N

  int numGroups() const { return static_cast<int>(mask.size()); }
};

struct GroupAssignment {
  std::vector<std::vector<int>> groups;
  std::vector<std::uint8_t> mask;
};

/// Assigns every contact point to its nearest joint (ties go to the lower
/// joint index). numGroups must equal the joint count.
GroupAssignment groupContacts(const Eigen::MatrixX3d& contactPoints, const Eigen::MatrixX3d& joints,
                              int numGroups);

/// Chooses k members per nonempty group, without replacement when the group
/// has at least k members and with replacement otherwise. Empty groups get a
/// row of -1. Deterministic under seed.
std::vector<std::vector<int>> sampleContactSubsets(const std::vector<std::vector<int>>& groups, int k,
                                                   std::uint64_t seed);

/// Alternative grouping for skeleton-only data: joint i is a contact when it
/// lies within `threshold` of any object point; its own position fills the
/// k subset slots.
ContactSet contactsFromSkeleton(const Eigen::MatrixX3d& joints, const Eigen::MatrixX3d& objectPoints,
                                int k, double threshold);

struct HoiSequence {
  int pastLen = 0;
  int futureLen = 0;
  double frameRate = 30.0;
  std::vector<HumanPose> human;
  std::vector<ObjectPose> object;
  std::vector<ContactSet> contacts;
  PointCloud restCloud;
  std::vector<int> restContactIndices;
  std::vector<std::vector<int>> subsetIndices;  // N x k, -1 for empty groups

  int numFrames() const { return pastLen + futureLen; }
  int numJoints() const { return human.empty() ? 0 : human.front().numJoints(); }
  int numGroups() const { return static_cast<int>(subsetIndices.size()); }
  int samplesPerGroup() const { return subsetIndices.empty() ? 0 : static_cast<int>(subsetIndices.front().size()); }

  /// Rest-pose positions of the union of contact points.
  PointCloud restContacts() const;
  /// (N*k) x 3 rest positions of every subset slot, zero for empty groups.
  Eigen::MatrixX3d restContactSlots() const;

  /// Throws ShapeMismatch when array lengths or indices are inconsistent.
  void validate() const;
};

// Flattened per-frame views used by the networks.
Eigen::MatrixXd humanMatrix(const HoiSequence& s);    // T x (J*9)
Eigen::MatrixXd contactMatrix(const HoiSequence& s);  // T x (N*k*3)
Eigen::MatrixXd contactMask(const HoiSequence& s);    // T x N, 0/1
/// Mask broadcast to every contact channel, T x (N*k*3).
Eigen::MatrixXd contactChannelMask(const HoiSequence& s);
Eigen::MatrixXd objectMatrix(const HoiSequence& s);   // T x 9
Eigen::MatrixXd jointPositions(const HoiSequence& s, int firstFrame, int count);  // count x (J*3)

/// Inverse of humanMatrix for one frame row.
HumanPose humanPoseFromRow(const Eigen::RowVectorXd& row);
ObjectPose objectPoseFromRow(const Eigen::RowVectorXd& row);

struct SyntheticConfig {
  int joints = 21;
  int pastLen = 10;
  int futureLen = 10;
  int surfacePoints = 64;
  int contactSamples = 4;
  double frameRate = 30.0;
  double graspRadius = 0.06;
  int contactWindowMin = 8;   // frames; 0 with contactWindowMax 0 disables contact
  int contactWindowMax = 20;
  int keyframeSpacing = 6;

  void validate() const;
};

/// Procedural skeleton + rigid object sequence. Human joints follow smooth
/// splines over random keyframes with fixed bone lengths; during the contact
/// window the object rides rigidly on one wrist and is static otherwise, so
/// contacts satisfy C = R p + L exactly.
HoiSequence generateSynthetic(const SyntheticConfig& config, std::uint64_t seed);

/// Parent index per joint of the built-in 21-joint skeleton (-1 for the root).
const std::vector<int>& skeletonParents();

std::string serializeSequence(const HoiSequence& s);
/// Throws ParseError naming the offending field.
HoiSequence deserializeSequence(const std::string& record);

void writeDataset(const std::string& path, const std::vector<HoiSequence>& sequences);
/// Throws ParseError with the 1-based line number prefixed.
std::vector<HoiSequence> readDataset(const std::string& path);

}  // namespace hoi::data
