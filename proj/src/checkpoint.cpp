// SPDX-License-Identifier: Apache-2.0
#include "hoi/checkpoint.hpp"

#include "hoi/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hoi::checkpoint {

namespace {

constexpr char kMagic[8] = {'H', 'O', 'I', 'C', 'K', 'P', 'T', '1'};

void putU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void putU64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t getU32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t getU64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::string encode(const Checkpoint& ckpt) {
  nlohmann::json params = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, m] : ckpt.tensors) {
    const size_t offset = payload.size();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        putU32(payload, std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
      }
    }
    params.push_back({{"name", name},
                      {"shape", {m.rows(), m.cols()}},
                      {"dtype", "float32"},
                      {"offset", offset},
                      {"bytes", payload.size() - offset}});
  }
  const nlohmann::json manifest = {
      {"format", "hoi-checkpoint"}, {"version", 1}, {"metadata", ckpt.metadata}, {"parameters", params}};
  const std::string text = manifest.dump();
  std::string out(kMagic, sizeof(kMagic));
  putU64(out, text.size());
  out += text;
  out += payload;
  return out;
}

Checkpoint decode(const std::string& bytes) {
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint archive (bad magic)");
  }
  const std::uint64_t manifestSize = getU64(data + 8);
  if (manifestSize > bytes.size() - 16) {
    throw CheckpointError("truncated checkpoint manifest");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(16, manifestSize));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  const size_t base = 16 + manifestSize;
  Checkpoint c;
  try {
    if (manifest.at("format") != "hoi-checkpoint") {
      throw CheckpointError("unexpected archive format");
    }
    c.metadata = manifest.at("metadata");
    for (const auto& p : manifest.at("parameters")) {
      const std::string name = p.at("name");
      if (p.at("dtype") != "float32") {
        throw CheckpointError("unsupported dtype for \"" + name + "\"");
      }
      const auto rows = p.at("shape").at(0).get<Eigen::Index>();
      const auto cols = p.at("shape").at(1).get<Eigen::Index>();
      const auto offset = p.at("offset").get<size_t>();
      const size_t need = static_cast<size_t>(rows * cols) * 4;
      if (p.at("bytes").get<size_t>() != need || base + offset + need > bytes.size()) {
        throw CheckpointError("buffer for \"" + name + "\" is truncated");
      }
      Eigen::MatrixXd m(rows, cols);
      const unsigned char* at = data + base + offset;
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index col = 0; col < cols; ++col, at += 4) {
          m(r, col) = static_cast<double>(std::bit_cast<float>(getU32(at)));
        }
      }
      c.tensors.emplace(name, std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  return c;
}

void save(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw CheckpointError("cannot write checkpoint " + path);
  }
  const std::string bytes = encode(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw CheckpointError("failed writing checkpoint " + path);
  }
}

Checkpoint load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError("cannot open checkpoint " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode(ss.str());
}

}  // namespace hoi::checkpoint
