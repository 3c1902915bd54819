// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hoi/errors.hpp"
#include "hoi/nn.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace hoi::checkpoint {

/// In-memory form of a checkpoint archive: a JSON metadata object plus named
/// tensors.
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, Eigen::MatrixXd> tensors;
};

/// Archive layout: 8-byte magic "HOICKPT1", little-endian uint64 manifest
/// length, UTF-8 JSON manifest {format, version, metadata, parameters:[{name,
/// shape, dtype:"float32", offset, bytes}]}, then the raw little-endian
/// float32 buffers (row-major) at the listed offsets.
void save(const std::string& path, const Checkpoint& ckpt);
Checkpoint load(const std::string& path);

std::string encode(const Checkpoint& ckpt);
Checkpoint decode(const std::string& bytes);

/// Copies every visited parameter into a checkpoint.
template <typename Model>
Checkpoint capture(Model& model, nlohmann::json metadata = nlohmann::json::object()) {
  Checkpoint c;
  c.metadata = std::move(metadata);
  model.visitParameters([&](const std::string& name, nn::Parameter& p) { c.tensors[name] = p.value; });
  return c;
}

/// Loads tensors into the visited parameters; every parameter must be present
/// with a matching shape or CheckpointError is thrown.
template <typename Model>
void restore(Model& model, const Checkpoint& c) {
  model.visitParameters([&](const std::string& name, nn::Parameter& p) {
    const auto it = c.tensors.find(name);
    if (it == c.tensors.end()) {
      throw CheckpointError("checkpoint is missing parameter \"" + name + "\"");
    }
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols()) {
      throw CheckpointError("shape mismatch for parameter \"" + name + "\"");
    }
    p.value = it->second;
  });
}

/// FNV-1a over parameter names and float32 bytes, in visiting order.
template <typename Model>
std::uint64_t checksum(Model& model) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  model.visitParameters([&](const std::string& name, nn::Parameter& p) {
    mix(name.data(), name.size());
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        const float f = static_cast<float>(p.value(r, c));
        mix(&f, sizeof(f));
      }
    }
  });
  return h;
}

}  // namespace hoi::checkpoint
