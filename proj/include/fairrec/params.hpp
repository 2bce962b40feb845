#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fairrec/common.hpp"
#include "fairrec/tensor.hpp"

namespace fairrec {

// Named parameter tensors with deterministic (sorted) iteration order.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    if (params_.count(name))
      throw ContractError("ParameterStore: duplicate parameter '" + name + "'");
    t.requires_grad = true;
    return params_.emplace(name, std::move(t)).first->second;
  }

  Tensor& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end())
      throw ContractError("ParameterStore: unknown parameter '" + name + "'");
    return it->second;
  }

  const Tensor& at(const std::string& name) const {
    return const_cast<ParameterStore*>(this)->at(name);
  }

  bool has(const std::string& name) const { return params_.count(name) > 0; }
  std::size_t size() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  bool operator==(const ParameterStore& o) const {
    if (params_.size() != o.params_.size()) return false;
    for (const auto& [name, t] : params_) {
      auto it = o.params_.find(name);
      if (it == o.params_.end()) return false;
      if (t.shape != it->second.shape || t.values != it->second.values) return false;
    }
    return true;
  }

 private:
  std::map<std::string, Tensor> params_;
};

// ============================================================================
// Checkpoint format
// ============================================================================
//
// Binary layout, all integers 64-bit little-endian unsigned, all floats
// 64-bit little-endian IEEE-754:
//   magic "FAIRREC1" (8 bytes)
//   count
//   per parameter: name length, UTF-8 name bytes, rank, dims, values

namespace detail {

inline void write_u64_le(std::ostream& os, std::uint64_t x) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64_le(std::istream& is, const std::string& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw IoError("checkpoint: truncated file: " + path);
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return x;
}

inline void write_f64_le(std::ostream& os, double v) {
  write_u64_le(os, std::bit_cast<std::uint64_t>(v));
}

inline double read_f64_le(std::istream& is, const std::string& path) {
  return std::bit_cast<double>(read_u64_le(is, path));
}

}  // namespace detail

inline constexpr char kCheckpointMagic[9] = "FAIRREC1";

inline void save_checkpoint(const ParameterStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open for writing: " + path);
  os.write(kCheckpointMagic, 8);
  detail::write_u64_le(os, store.size());
  for (const auto& [name, t] : store) {
    detail::write_u64_le(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u64_le(os, t.rank());
    for (std::size_t d : t.shape) detail::write_u64_le(os, d);
    for (double v : t.values) detail::write_f64_le(os, v);
  }
  if (!os) throw IoError("checkpoint: write failed: " + path);
}

inline ParameterStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::string(magic, 8) != std::string(kCheckpointMagic, 8))
    throw IoError("checkpoint: bad magic in " + path);
  std::uint64_t count = detail::read_u64_le(is, path);
  ParameterStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t name_len = detail::read_u64_le(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len)))
      throw IoError("checkpoint: truncated file: " + path);
    std::uint64_t rank = detail::read_u64_le(is, path);
    Shape shape(rank);
    for (std::uint64_t d = 0; d < rank; ++d)
      shape[d] = static_cast<std::size_t>(detail::read_u64_le(is, path));
    Tensor t{shape};
    for (double& v : t.values) v = detail::read_f64_le(is, path);
    store.add(name, std::move(t));
  }
  return store;
}

}  // namespace fairrec
