// SPDX-License-Identifier: Apache-2.0
#include "hoi/data.hpp"

#include "hoi/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <random>

namespace hoi::data {

namespace {

using geometry::Mat3;

struct JointSpec {
  int parent;
  Vec3 offset;
  double amplitude;  // radians, per rotation-vector component
};

// Y-up, T-pose, 21 joints.
const std::vector<JointSpec>& skeleton() {
  static const std::vector<JointSpec> joints = {
      {-1, {0.00, 0.00, 0.00}, 0.10},   // 0 pelvis
      {0, {0.00, 0.12, 0.00}, 0.15},    // 1 spine1
      {1, {0.00, 0.14, 0.00}, 0.15},    // 2 spine2
      {2, {0.00, 0.22, 0.00}, 0.20},    // 3 neck
      {3, {0.00, 0.12, 0.00}, 0.20},    // 4 head
      {0, {0.09, -0.05, 0.00}, 0.40},   // 5 left hip
      {5, {0.00, -0.40, 0.00}, 0.50},   // 6 left knee
      {6, {0.00, -0.40, 0.00}, 0.20},   // 7 left ankle
      {7, {0.00, -0.05, 0.12}, 0.10},   // 8 left foot
      {0, {-0.09, -0.05, 0.00}, 0.40},  // 9 right hip
      {9, {0.00, -0.40, 0.00}, 0.50},   // 10 right knee
      {10, {0.00, -0.40, 0.00}, 0.20},  // 11 right ankle
      {11, {0.00, -0.05, 0.12}, 0.10},  // 12 right foot
      {2, {0.07, 0.16, 0.00}, 0.15},    // 13 left collar
      {13, {0.12, 0.00, 0.00}, 0.70},   // 14 left shoulder
      {14, {0.27, 0.00, 0.00}, 0.80},   // 15 left elbow
      {15, {0.25, 0.00, 0.00}, 0.25},   // 16 left wrist
      {2, {-0.07, 0.16, 0.00}, 0.15},   // 17 right collar
      {17, {-0.12, 0.00, 0.00}, 0.70},  // 18 right shoulder
      {18, {-0.27, 0.00, 0.00}, 0.80},  // 19 right elbow
      {19, {-0.25, 0.00, 0.00}, 0.25},  // 20 right wrist
  };
  return joints;
}

constexpr int kLeftWrist = 16;
constexpr int kRightWrist = 20;

Mat3 expMap(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-12) {
    return Mat3::Identity();
  }
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

Mat3 randomRotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

// Catmull-Rom spline through keyframes placed every `spacing` frames.
class KeyframeSpline {
 public:
  KeyframeSpline(std::vector<Vec3> keys, int spacing) : keys_(std::move(keys)), spacing_(spacing) {}

  Vec3 at(int frame) const {
    const double u = static_cast<double>(frame) / spacing_;
    const int i = static_cast<int>(std::floor(u));
    const double s = u - i;
    // keys_[0] sits one segment before frame 0.
    const Vec3& p0 = keys_[static_cast<size_t>(i)];
    const Vec3& p1 = keys_[static_cast<size_t>(i + 1)];
    const Vec3& p2 = keys_[static_cast<size_t>(i + 2)];
    const Vec3& p3 = keys_[static_cast<size_t>(i + 3)];
    const double s2 = s * s, s3 = s2 * s;
    return 0.5 * ((2.0 * p1) + (-p0 + p2) * s + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s2 +
                  (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * s3);
  }

 private:
  std::vector<Vec3> keys_;
  int spacing_;
};

int keyCount(int frames, int spacing) {
  return frames / spacing + 4;
}

Eigen::MatrixX3d sampleSurface(std::mt19937_64& rng, int count) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixX3d pts(count, 3);
  if (u(rng) < 0.5) {
    // Box with random half-extents; faces chosen by area.
    const Vec3 h(0.05 + 0.15 * u(rng), 0.05 + 0.15 * u(rng), 0.05 + 0.15 * u(rng));
    const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
    const double total = areas[0] + areas[1] + areas[2];
    for (int i = 0; i < count; ++i) {
      double pick = u(rng) * total;
      int axis = 0;
      while (axis < 2 && pick > areas[axis]) {
        pick -= areas[axis];
        ++axis;
      }
      Vec3 p;
      for (int c = 0; c < 3; ++c) p[c] = (2.0 * u(rng) - 1.0) * h[c];
      p[axis] = (u(rng) < 0.5 ? -1.0 : 1.0) * h[axis];
      pts.row(i) = p.transpose();
    }
  } else {
    // Rod along x: side surface of a cylinder.
    const double radius = 0.02 + 0.02 * u(rng);
    const double halfLength = 0.15 + 0.15 * u(rng);
    for (int i = 0; i < count; ++i) {
      const double phi = 2.0 * M_PI * u(rng);
      pts.row(i) << (2.0 * u(rng) - 1.0) * halfLength, radius * std::cos(phi), radius * std::sin(phi);
    }
  }
  const Eigen::RowVector3d mean = pts.colwise().mean();
  pts.rowwise() -= mean;
  return pts;
}

struct PoseFrame {
  Eigen::MatrixX3d positions;
  std::vector<Mat3> rotations;
};

PoseFrame forwardKinematics(const Vec3& rootPos, const std::vector<Mat3>& local) {
  const auto& skel = skeleton();
  PoseFrame f;
  f.positions.resize(static_cast<Eigen::Index>(skel.size()), 3);
  f.rotations.resize(skel.size());
  for (size_t j = 0; j < skel.size(); ++j) {
    const JointSpec& spec = skel[j];
    if (spec.parent < 0) {
      f.rotations[j] = local[j];
      f.positions.row(static_cast<Eigen::Index>(j)) = rootPos.transpose();
    } else {
      const auto p = static_cast<size_t>(spec.parent);
      f.rotations[j] = f.rotations[p] * local[j];
      const Vec3 pos = f.positions.row(spec.parent).transpose() + f.rotations[p] * spec.offset;
      f.positions.row(static_cast<Eigen::Index>(j)) = pos.transpose();
    }
  }
  return f;
}

}  // namespace

const std::vector<int>& skeletonParents() {
  static const std::vector<int> parents = [] {
    std::vector<int> p;
    for (const auto& j : skeleton()) p.push_back(j.parent);
    return p;
  }();
  return parents;
}

void SyntheticConfig::validate() const {
  if (joints != static_cast<int>(skeleton().size())) {
    throw ConfigError("synthetic generator supports the built-in " + std::to_string(skeleton().size()) +
                      "-joint skeleton only");
  }
  if (pastLen <= 0 || futureLen <= 0) {
    throw ConfigError("past and future lengths must be positive");
  }
  if (surfacePoints <= 0 || contactSamples <= 0 || keyframeSpacing <= 0) {
    throw ConfigError("surface points, contact samples and keyframe spacing must be positive");
  }
  if (frameRate <= 0.0 || graspRadius <= 0.0) {
    throw ConfigError("frame rate and grasp radius must be positive");
  }
  if (contactWindowMin < 0 || contactWindowMax < contactWindowMin) {
    throw ConfigError("contact window bounds must satisfy 0 <= min <= max");
  }
}

HoiSequence generateSynthetic(const SyntheticConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);

  const int frames = config.pastLen + config.futureLen;
  const int spacing = config.keyframeSpacing;
  const int keys = keyCount(frames, spacing);
  const auto& skel = skeleton();

  // Root translation: planar random walk at roughly standing height.
  std::vector<Vec3> rootKeys;
  Vec3 walk(0.4 * n(rng), 0.95, 0.4 * n(rng));
  for (int i = 0; i < keys; ++i) {
    rootKeys.push_back(walk + Vec3(0.0, 0.02 * n(rng), 0.0));
    walk += Vec3(0.12 * n(rng), 0.0, 0.12 * n(rng));
  }
  const KeyframeSpline rootSpline(rootKeys, spacing);

  // Per-joint rotation vectors around a random base posture.
  std::vector<KeyframeSpline> jointSplines;
  for (const auto& spec : skel) {
    const Vec3 base = spec.parent < 0 ? Vec3(0.0, 2.0 * M_PI * u(rng), 0.0)
                                      : Vec3(spec.amplitude * (2.0 * u(rng) - 1.0),
                                             spec.amplitude * (2.0 * u(rng) - 1.0),
                                             spec.amplitude * (2.0 * u(rng) - 1.0));
    std::vector<Vec3> k;
    for (int i = 0; i < keys; ++i) {
      k.push_back(base + spec.amplitude * Vec3(2.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0));
    }
    jointSplines.emplace_back(std::move(k), spacing);
  }

  std::vector<PoseFrame> poses;
  for (int f = 0; f < frames; ++f) {
    std::vector<Mat3> local;
    for (const auto& s : jointSplines) local.push_back(expMap(s.at(f)));
    poses.push_back(forwardKinematics(rootSpline.at(f), local));
  }

  HoiSequence seq;
  seq.pastLen = config.pastLen;
  seq.futureLen = config.futureLen;
  seq.frameRate = config.frameRate;
  seq.restCloud = PointCloud(sampleSurface(rng, config.surfacePoints));
  for (const auto& p : poses) {
    HumanPose h;
    h.jointPositions = p.positions;
    for (const auto& r : p.rotations) h.jointRotations.push_back(geometry::Rotation6D{r.col(0), r.col(1)});
    seq.human.push_back(std::move(h));
  }

  // Contact window [start, end).
  int start = 0, end = 0;
  if (config.contactWindowMax > 0) {
    std::uniform_int_distribution<int> len(std::max(config.contactWindowMin, 1), config.contactWindowMax);
    std::uniform_int_distribution<int> first(0, config.pastLen - 1);
    start = first(rng);
    end = std::min(frames, start + len(rng));
  }
  const bool hasContact = end > start;
  const int hand = u(rng) < 0.5 ? kLeftWrist : kRightWrist;
  const Eigen::MatrixX3d& rest = seq.restCloud.points();
  std::uniform_int_distribution<Eigen::Index> pointPick(0, rest.rows() - 1);
  const Eigen::Index graspPoint = pointPick(rng);
  const Mat3 relRotation = randomRotation(rng);

  auto attachedPose = [&](int f) {
    const Mat3 r = poses[static_cast<size_t>(f)].rotations[hand] * relRotation;
    const Vec3 handPos = poses[static_cast<size_t>(f)].positions.row(hand).transpose();
    const Vec3 l = handPos - r * rest.row(graspPoint).transpose();
    return std::pair<Mat3, Vec3>(r, l);
  };

  std::pair<Mat3, Vec3> restingPose;
  if (!hasContact) {
    const double yaw = 2.0 * M_PI * u(rng);
    const double heading = 2.0 * M_PI * u(rng);
    const Vec3 root = poses.front().positions.row(0).transpose();
    restingPose = {geometry::axisAngle(Vec3::UnitY(), yaw),
                   Vec3(root.x() + 0.5 * std::cos(heading), 0.2, root.z() + 0.5 * std::sin(heading))};
  }
  for (int f = 0; f < frames; ++f) {
    std::pair<Mat3, Vec3> pose;
    if (!hasContact) {
      pose = restingPose;
    } else {
      pose = attachedPose(std::clamp(f, start, end - 1));
    }
    ObjectPose o;
    o.centroid = pose.second;
    o.rotation = geometry::Rotation6D{pose.first.col(0), pose.first.col(1)};
    seq.object.push_back(o);
  }

  // Contact groups are fixed by the first contact frame and reused for the window.
  const int numGroups = config.joints;
  const int k = config.contactSamples;
  std::vector<std::vector<int>> groups(static_cast<size_t>(numGroups));
  if (hasContact) {
    std::vector<int> members;
    for (Eigen::Index i = 0; i < rest.rows(); ++i) {
      if ((rest.row(i) - rest.row(graspPoint)).norm() <= config.graspRadius) {
        members.push_back(static_cast<int>(i));
      }
    }
    const geometry::RigidTransform first = seq.object[static_cast<size_t>(start)].transform();
    Eigen::MatrixX3d world(static_cast<Eigen::Index>(members.size()), 3);
    for (size_t i = 0; i < members.size(); ++i) {
      world.row(static_cast<Eigen::Index>(i)) = (first * Vec3(rest.row(members[i]).transpose())).transpose();
    }
    const GroupAssignment assign = groupContacts(world, poses[static_cast<size_t>(start)].positions, numGroups);
    for (int g = 0; g < numGroups; ++g) {
      for (int local : assign.groups[static_cast<size_t>(g)]) {
        groups[static_cast<size_t>(g)].push_back(members[static_cast<size_t>(local)]);
      }
    }
    seq.restContactIndices = members;
  }
  seq.subsetIndices = sampleContactSubsets(groups, k, rng());
  const Eigen::MatrixX3d slots = seq.restContactSlots();

  for (int f = 0; f < frames; ++f) {
    ContactSet cs;
    cs.groups.resize(static_cast<size_t>(numGroups));
    cs.mask.assign(static_cast<size_t>(numGroups), 0);
    cs.subsets = Eigen::MatrixX3d::Zero(slots.rows(), 3);
    if (hasContact && f >= start && f < end) {
      const geometry::RigidTransform t = seq.object[static_cast<size_t>(f)].transform();
      for (int g = 0; g < numGroups; ++g) {
        if (groups[static_cast<size_t>(g)].empty()) continue;
        cs.groups[static_cast<size_t>(g)] = groups[static_cast<size_t>(g)];
        cs.mask[static_cast<size_t>(g)] = 1;
        const auto block = slots.middleRows(g * k, k);
        cs.subsets.middleRows(g * k, k) =
            geometry::contactFromObject(t, PointCloud(Eigen::MatrixX3d(block))).points();
      }
    }
    seq.contacts.push_back(std::move(cs));
  }
  seq.validate();
  return seq;
}

}  // namespace hoi::data
