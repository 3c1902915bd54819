// SPDX-License-Identifier: Apache-2.0
#include "hoi/data.hpp"

#include "hoi/errors.hpp"

#include "json.hpp"

#include <fstream>
#include <string>

namespace hoi::data {

namespace {

using nlohmann::json;

const json& field(const json& obj, const std::string& name, const std::string& path) {
  if (!obj.is_object() || !obj.contains(name)) {
    throw ParseError("missing field \"" + path + name + "\"");
  }
  return obj.at(name);
}

template <typename T>
T scalar(const json& obj, const std::string& name, const std::string& path = "") {
  const json& v = field(obj, name, path);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ParseError("field \"" + path + name + "\" has the wrong type");
  }
}

std::vector<double> numbers(const json& v, const std::string& what, size_t expected) {
  if (!v.is_array() || v.size() != expected) {
    throw ParseError("field \"" + what + "\" must be an array of " + std::to_string(expected) + " numbers");
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& x : v) {
    if (!x.is_number()) {
      throw ParseError("field \"" + what + "\" contains a non-number");
    }
    out.push_back(x.get<double>());
  }
  return out;
}

const json& frameArray(const json& obj, const std::string& name, const std::string& path, size_t frames) {
  const json& v = field(obj, name, path);
  if (!v.is_array() || v.size() != frames) {
    throw ParseError("field \"" + path + name + "\" must have one entry per frame (" + std::to_string(frames) + ")");
  }
  return v;
}

std::vector<int> ints(const json& v, const std::string& what) {
  if (!v.is_array()) {
    throw ParseError("field \"" + what + "\" must be an array of integers");
  }
  std::vector<int> out;
  for (const auto& x : v) {
    if (!x.is_number_integer()) {
      throw ParseError("field \"" + what + "\" contains a non-integer");
    }
    out.push_back(x.get<int>());
  }
  return out;
}

}  // namespace

std::string serializeSequence(const HoiSequence& s) {
  s.validate();
  const int t = s.numFrames(), j = s.numJoints(), n = s.numGroups(), k = s.samplesPerGroup();
  json positions = json::array(), rotations = json::array();
  json centroid = json::array(), rotation6d = json::array();
  json groupSizes = json::array(), groups = json::array(), subsetPositions = json::array(), mask = json::array();
  for (int f = 0; f < t; ++f) {
    const auto fi = static_cast<size_t>(f);
    json pos = json::array(), rot = json::array();
    for (int i = 0; i < j; ++i) {
      for (int c = 0; c < 3; ++c) pos.push_back(s.human[fi].jointPositions(i, c));
      double r6[6];
      s.human[fi].jointRotations[static_cast<size_t>(i)].toArray(r6);
      for (double v : r6) rot.push_back(v);
    }
    positions.push_back(std::move(pos));
    rotations.push_back(std::move(rot));

    json cen = json::array(), r = json::array();
    for (int c = 0; c < 3; ++c) cen.push_back(s.object[fi].centroid[c]);
    double r6[6];
    s.object[fi].rotation.toArray(r6);
    for (double v : r6) r.push_back(v);
    centroid.push_back(std::move(cen));
    rotation6d.push_back(std::move(r));

    const ContactSet& cs = s.contacts[fi];
    json sizes = json::array(), members = json::array(), sub = json::array(), m = json::array();
    for (int g = 0; g < n; ++g) {
      sizes.push_back(cs.groups[static_cast<size_t>(g)].size());
      members.push_back(cs.groups[static_cast<size_t>(g)]);
      m.push_back(static_cast<int>(cs.mask[static_cast<size_t>(g)]));
    }
    for (Eigen::Index r2 = 0; r2 < cs.subsets.rows(); ++r2) {
      for (int c = 0; c < 3; ++c) sub.push_back(cs.subsets(r2, c));
    }
    groupSizes.push_back(std::move(sizes));
    groups.push_back(std::move(members));
    subsetPositions.push_back(std::move(sub));
    mask.push_back(std::move(m));
  }
  json rest = json::array();
  for (Eigen::Index i = 0; i < s.restCloud.size(); ++i) {
    rest.push_back({s.restCloud.points()(i, 0), s.restCloud.points()(i, 1), s.restCloud.points()(i, 2)});
  }
  json record = {
      {"past_len", s.pastLen},
      {"future_len", s.futureLen},
      {"frame_rate", s.frameRate},
      {"num_joints", j},
      {"human", {{"positions", positions}, {"rotations6d", rotations}}},
      {"object", {{"centroid", centroid}, {"rotation6d", rotation6d}}},
      {"rest_cloud", rest},
      {"rest_contact_indices", s.restContactIndices},
      {"contact",
       {{"num_groups", n},
        {"samples_per_group", k},
        {"group_sizes", groupSizes},
        {"groups", groups},
        {"subset_indices", s.subsetIndices},
        {"subset_positions", subsetPositions},
        {"mask", mask}}},
  };
  return record.dump();
}

HoiSequence deserializeSequence(const std::string& record) {
  json doc;
  try {
    doc = json::parse(record);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw ParseError("record must be a JSON object");
  }
  HoiSequence s;
  s.pastLen = scalar<int>(doc, "past_len");
  s.futureLen = scalar<int>(doc, "future_len");
  s.frameRate = scalar<double>(doc, "frame_rate");
  const int j = scalar<int>(doc, "num_joints");
  if (s.pastLen < 1 || s.futureLen < 0 || j < 1) {
    throw ParseError("past_len and num_joints must be positive and future_len nonnegative");
  }
  const auto t = static_cast<size_t>(s.numFrames());

  const json& human = field(doc, "human", "");
  const json& pos = frameArray(human, "positions", "human.", t);
  const json& rot = frameArray(human, "rotations6d", "human.", t);
  for (size_t f = 0; f < t; ++f) {
    const std::string at = "[" + std::to_string(f) + "]";
    const auto p = numbers(pos[f], "human.positions" + at, static_cast<size_t>(j) * 3);
    const auto r = numbers(rot[f], "human.rotations6d" + at, static_cast<size_t>(j) * 6);
    HumanPose h;
    h.jointPositions.resize(j, 3);
    for (int i = 0; i < j; ++i) {
      for (int c = 0; c < 3; ++c) h.jointPositions(i, c) = p[static_cast<size_t>(i * 3 + c)];
      h.jointRotations.push_back(Rotation6D::fromArray(&r[static_cast<size_t>(i * 6)]));
    }
    s.human.push_back(std::move(h));
  }

  const json& object = field(doc, "object", "");
  const json& cen = frameArray(object, "centroid", "object.", t);
  const json& r6 = frameArray(object, "rotation6d", "object.", t);
  for (size_t f = 0; f < t; ++f) {
    const std::string at = "[" + std::to_string(f) + "]";
    const auto c = numbers(cen[f], "object.centroid" + at, 3);
    const auto r = numbers(r6[f], "object.rotation6d" + at, 6);
    ObjectPose o;
    o.centroid = Vec3(c[0], c[1], c[2]);
    o.rotation = Rotation6D::fromArray(r.data());
    s.object.push_back(o);
  }

  const json& rest = field(doc, "rest_cloud", "");
  if (!rest.is_array() || rest.empty()) {
    throw ParseError("field \"rest_cloud\" must be a nonempty array of points");
  }
  Eigen::MatrixX3d cloud(static_cast<Eigen::Index>(rest.size()), 3);
  for (size_t i = 0; i < rest.size(); ++i) {
    const auto p = numbers(rest[i], "rest_cloud[" + std::to_string(i) + "]", 3);
    cloud.row(static_cast<Eigen::Index>(i)) << p[0], p[1], p[2];
  }
  try {
    s.restCloud = PointCloud(std::move(cloud));
  } catch (const ShapeMismatch& e) {
    throw ParseError(std::string("field \"rest_cloud\": ") + e.what());
  }
  s.restContactIndices = ints(field(doc, "rest_contact_indices", ""), "rest_contact_indices");

  const json& contact = field(doc, "contact", "");
  const int n = scalar<int>(contact, "num_groups", "contact.");
  const int k = scalar<int>(contact, "samples_per_group", "contact.");
  if (n < 0 || k < 1) {
    throw ParseError("contact.num_groups must be >= 0 and contact.samples_per_group >= 1");
  }
  const json& subsetIdx = field(contact, "subset_indices", "contact.");
  if (!subsetIdx.is_array() || subsetIdx.size() != static_cast<size_t>(n)) {
    throw ParseError("field \"contact.subset_indices\" must have num_groups rows");
  }
  for (size_t g = 0; g < subsetIdx.size(); ++g) {
    auto row = ints(subsetIdx[g], "contact.subset_indices[" + std::to_string(g) + "]");
    if (row.size() != static_cast<size_t>(k)) {
      throw ParseError("field \"contact.subset_indices[" + std::to_string(g) + "]\" must have samples_per_group entries");
    }
    s.subsetIndices.push_back(std::move(row));
  }
  const json& sizes = frameArray(contact, "group_sizes", "contact.", t);
  const json& groups = frameArray(contact, "groups", "contact.", t);
  const json& sub = frameArray(contact, "subset_positions", "contact.", t);
  const json& mask = frameArray(contact, "mask", "contact.", t);
  for (size_t f = 0; f < t; ++f) {
    const std::string at = "[" + std::to_string(f) + "]";
    ContactSet cs;
    const auto m = ints(mask[f], "contact.mask" + at);
    const auto sz = ints(sizes[f], "contact.group_sizes" + at);
    if (m.size() != static_cast<size_t>(n) || sz.size() != static_cast<size_t>(n) || !groups[f].is_array() ||
        groups[f].size() != static_cast<size_t>(n)) {
      throw ParseError("contact arrays at frame " + std::to_string(f) + " must have num_groups entries");
    }
    for (int g = 0; g < n; ++g) {
      auto members = ints(groups[f][static_cast<size_t>(g)], "contact.groups" + at);
      if (members.size() != static_cast<size_t>(sz[static_cast<size_t>(g)])) {
        throw ParseError("field \"contact.group_sizes" + at + "\" disagrees with contact.groups");
      }
      cs.groups.push_back(std::move(members));
      cs.mask.push_back(static_cast<std::uint8_t>(m[static_cast<size_t>(g)] != 0));
    }
    const auto p = numbers(sub[f], "contact.subset_positions" + at, static_cast<size_t>(n) * k * 3);
    cs.subsets.resize(static_cast<Eigen::Index>(n) * k, 3);
    for (Eigen::Index r = 0; r < cs.subsets.rows(); ++r) {
      for (int c = 0; c < 3; ++c) cs.subsets(r, c) = p[static_cast<size_t>(r * 3 + c)];
    }
    s.contacts.push_back(std::move(cs));
  }
  try {
    s.validate();
  } catch (const ShapeMismatch& e) {
    throw ParseError(std::string("inconsistent record: ") + e.what());
  }
  return s;
}

void writeDataset(const std::string& path, const std::vector<HoiSequence>& sequences) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot open " + path + " for writing");
  }
  for (const auto& s : sequences) {
    out << serializeSequence(s) << '\n';
  }
  if (!out) {
    throw Error("failed writing " + path);
  }
}

std::vector<HoiSequence> readDataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open dataset " + path);
  }
  std::vector<HoiSequence> out;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    try {
      out.push_back(deserializeSequence(line));
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(lineNo) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace hoi::data
