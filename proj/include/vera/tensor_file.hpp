#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vera/matcore.hpp"

namespace vera {

struct NamedTensor {
  std::string name;
  Matrix<float> value;
};

/// Base-weight container:
///   "VKWT" | version u32 | count u32 |
///   per tensor { name: u16 len + UTF-8 | rows u32 | cols u32 | rows*cols f32 }
/// All fields little-endian.
struct TensorFile {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  NamedTensor* find(const std::string& name);

  std::vector<std::uint8_t> encode() const;
  static TensorFile decode(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static TensorFile load(const std::filesystem::path& path);
};

}  // namespace vera
