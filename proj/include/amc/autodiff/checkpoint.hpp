#pragma once

// AMCW parameter checkpoints:
//   "AMCW" | version u16 | count u32 |
//   count x ( name_len u16 | name utf-8 | rank u8 | extents u32 x rank | f64 payload )
// All integers and floats little-endian.

#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "amc/autodiff/tensor.hpp"
#include "amc/binary_io.hpp"

namespace amc::ad {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using NamedTensors = std::vector<NamedTensor>;

inline void write_checkpoint(std::ostream& out, const NamedTensors& tensors) {
  io::write_magic(out, "AMCW");
  io::write_le<std::uint16_t>(out, kCheckpointVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw ConfigError("checkpoint: tensor name too long");
    io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    io::write_bytes(out, name);
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape) io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    for (double v : t.data) io::write_le<double>(out, v);
  }
  if (!out) throw DataError("checkpoint: write failed");
}

inline NamedTensors read_checkpoint(std::istream& in) {
  io::expect_magic(in, "AMCW", "checkpoint");
  const auto version = io::read_le<std::uint16_t>(in);
  if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = io::read_le<std::uint32_t>(in);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = io::read_bytes(in, io::read_le<std::uint16_t>(in));
    const auto rank = io::read_le<std::uint8_t>(in);
    if (rank > 4) throw DataError("checkpoint: rank above 4 for " + nt.name);
    Shape s(rank);
    for (auto& e : s) e = io::read_le<std::uint32_t>(in);
    nt.tensor = Tensor(s);
    for (auto& v : nt.tensor.data) v = io::read_le<double>(in);
    out.push_back(std::move(nt));
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_checkpoint(out, tensors);
}

inline NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read_checkpoint(in);
}

inline std::string checkpoint_bytes(const NamedTensors& tensors) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, tensors);
  return out.str();
}

/// Copies values into the matching named tensors; shapes must agree and
/// every destination must be present in the source.
inline void assign_named(const NamedTensors& src, const std::vector<std::pair<std::string, Tensor*>>& dst) {
  for (const auto& [name, t] : dst) {
    const NamedTensor* found = nullptr;
    for (const auto& s : src)
      if (s.name == name) found = &s;
    if (!found) throw DataError("checkpoint: missing tensor " + name);
    if (found->tensor.shape != t->shape)
      throw DataError("checkpoint: shape mismatch for " + name + ": " + shape_str(found->tensor.shape) + " vs " +
                      shape_str(t->shape));
    t->data = found->tensor.data;
  }
}

}  // namespace amc::ad
