#pragma once

// Flat container of named fp64 arrays.
//
// Layout (all integers little-endian):
//   "COPP"                 4-byte magic
//   u32 version            currently 1
//   u32 count
//   count x {
//     u32 name_length, name bytes (UTF-8, no terminator)
//     u32 rank, rank x u64 dims
//     product(dims) x fp64 payload
//   }

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "copp/autodiff/tensor.hpp"

namespace copp::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;

  bool operator==(const NamedArray&) const = default;
};

class Checkpoint {
 public:
  void put(std::string name, Shape shape, std::vector<double> data);
  void put(std::string name, double value) { put(std::move(name), {1}, {value}); }
  void put(std::string name, const Tensor& t) { put(std::move(name), t.shape(), std::vector<double>(t.data().begin(), t.data().end())); }

  bool contains(const std::string& name) const;
  const NamedArray& get(const std::string& name) const;
  double scalar(const std::string& name) const;
  /// Copies a stored array into an existing tensor of identical shape.
  void load_into(const std::string& name, Tensor& t) const;

  const std::vector<NamedArray>& arrays() const { return arrays_; }

  std::vector<std::uint8_t> to_bytes() const;
  static Checkpoint from_bytes(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  bool operator==(const Checkpoint&) const = default;

 private:
  std::vector<NamedArray> arrays_;
};

}  // namespace copp::ad
