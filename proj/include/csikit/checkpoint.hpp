#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "csikit/tensor.hpp"

// Checkpoint format: a text manifest listing parameter names, shapes, dtype
// and byte offsets, plus a flat little-endian IEEE-754 payload file. Reading
// and writing are bit-exact.
//
//   <stem>.manifest:
//     #csikit-checkpoint v1
//     dtype=f64
//     config_digest=<hex>
//     step=<n>
//     param <name> <rank> <dims...> <byte offset>
//   <stem>.bin: raw little-endian scalars, in manifest order.

namespace csikit::nn {

namespace detail {

inline void put_le64(std::ofstream& os, double x) {
  std::uint64_t u;
  std::memcpy(&u, &x, 8);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline double get_le64(std::ifstream& is) {
  char b[8];
  is.read(b, 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i)
    u |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  double x;
  std::memcpy(&x, &u, 8);
  return x;
}

inline void put_le32(std::ofstream& os, float x) {
  std::uint32_t u;
  std::memcpy(&u, &x, 4);
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline float get_le32(std::ifstream& is) {
  char b[4];
  is.read(b, 4);
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i)
    u |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  float x;
  std::memcpy(&x, &u, 4);
  return x;
}

template <typename S>
const char* dtype_tag() {
  return sizeof(S) == 8 ? "f64" : "f32";
}

}  // namespace detail

struct CheckpointMeta {
  std::string config_digest;
  std::uint64_t step = 0;
};

// Extra flat arrays stored next to the model parameters (optimizer moments,
// counters); keyed by name like parameters are.
using ExtraArrays = std::map<std::string, std::vector<double>>;

template <typename S>
void save_checkpoint(const std::string& stem,
                     const std::vector<ParameterT<S>>& params,
                     const CheckpointMeta& meta,
                     const ExtraArrays& extras = {}) {
  const std::string manifest_path = stem + ".manifest";
  const std::string payload_path = stem + ".bin";
  std::ofstream mf(manifest_path);
  require(mf.good(), "cannot write " + manifest_path);
  std::ofstream pf(payload_path, std::ios::binary);
  require(pf.good(), "cannot write " + payload_path);

  mf << "#csikit-checkpoint v1\n";
  mf << "dtype=" << detail::dtype_tag<S>() << "\n";
  mf << "config_digest=" << meta.config_digest << "\n";
  mf << "step=" << meta.step << "\n";

  std::uint64_t offset = 0;
  const std::uint64_t elem = sizeof(S);
  auto emit = [&](const std::string& name, const Shape& shape,
                  std::size_t count) {
    mf << "param " << name << " " << shape.size();
    for (auto d : shape) mf << " " << d;
    mf << " " << offset << "\n";
    offset += elem * count;
  };
  for (const auto& p : params) {
    emit(p.name, p.tensor.shape(), p.tensor.size());
    for (S x : p.tensor.value()) {
      if constexpr (sizeof(S) == 8)
        detail::put_le64(pf, static_cast<double>(x));
      else
        detail::put_le32(pf, static_cast<float>(x));
    }
  }
  for (const auto& [name, data] : extras) {
    emit(name, {data.size()}, data.size());
    for (double x : data) {
      if constexpr (sizeof(S) == 8)
        detail::put_le64(pf, x);
      else
        detail::put_le32(pf, static_cast<float>(x));
    }
  }
  require(mf.good() && pf.good(), "checkpoint write failed for " + stem);
}

// Fills the given parameters by name. Every model parameter must be present
// in the manifest with a matching shape. Entries not matching any parameter
// are returned as extras.
template <typename S>
CheckpointMeta load_checkpoint(const std::string& stem,
                               std::vector<ParameterT<S>>& params,
                               ExtraArrays* extras = nullptr) {
  const std::string manifest_path = stem + ".manifest";
  const std::string payload_path = stem + ".bin";
  std::ifstream mf(manifest_path);
  require(mf.good(), "cannot open checkpoint manifest " + manifest_path);
  std::ifstream pf(payload_path, std::ios::binary);
  require(pf.good(), "cannot open checkpoint payload " + payload_path);

  std::string line;
  require(std::getline(mf, line) && line == "#csikit-checkpoint v1",
          "bad checkpoint manifest header in " + manifest_path);

  CheckpointMeta meta;
  std::string dtype;
  struct Entry {
    Shape shape;
    std::uint64_t offset = 0;
    std::size_t count = 0;
  };
  std::map<std::string, Entry> entries;
  std::vector<std::string> order;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    if (line.rfind("dtype=", 0) == 0) {
      dtype = line.substr(6);
    } else if (line.rfind("config_digest=", 0) == 0) {
      meta.config_digest = line.substr(14);
    } else if (line.rfind("step=", 0) == 0) {
      meta.step = std::stoull(line.substr(5));
    } else if (line.rfind("param ", 0) == 0) {
      std::istringstream ss(line.substr(6));
      std::string name;
      std::size_t rank = 0;
      ss >> name >> rank;
      Entry e;
      e.count = 1;
      for (std::size_t i = 0; i < rank; ++i) {
        std::size_t d = 0;
        ss >> d;
        e.shape.push_back(d);
        e.count *= d;
      }
      ss >> e.offset;
      require(!ss.fail(), "malformed manifest line: " + line);
      entries[name] = e;
      order.push_back(name);
    } else {
      fail("unrecognized manifest line: " + line);
    }
  }
  require(dtype == detail::dtype_tag<S>(),
          "checkpoint dtype " + dtype + " does not match this build");

  auto read_array = [&](const Entry& e, std::vector<double>& out) {
    pf.clear();
    pf.seekg(static_cast<std::streamoff>(e.offset));
    out.resize(e.count);
    for (std::size_t i = 0; i < e.count; ++i) {
      if constexpr (sizeof(S) == 8)
        out[i] = detail::get_le64(pf);
      else
        out[i] = static_cast<double>(detail::get_le32(pf));
    }
    require(pf.good(), "checkpoint payload truncated: " + payload_path);
  };

  std::map<std::string, bool> used;
  for (auto& p : params) {
    auto it = entries.find(p.name);
    require(it != entries.end(),
            "checkpoint is missing parameter '" + p.name + "'");
    require(it->second.shape == p.tensor.shape(),
            "checkpoint shape mismatch for parameter '" + p.name + "'");
    std::vector<double> buf;
    read_array(it->second, buf);
    auto& dst = p.tensor.mutable_value();
    for (std::size_t i = 0; i < buf.size(); ++i) dst[i] = static_cast<S>(buf[i]);
    used[p.name] = true;
  }
  if (extras) {
    for (const auto& name : order) {
      if (used.count(name)) continue;
      std::vector<double> buf;
      read_array(entries[name], buf);
      (*extras)[name] = std::move(buf);
    }
  }
  return meta;
}

}  // namespace csikit::nn
