#include "vera/tensor_file.hpp"

#include <limits>

#include "vera/binary_io.hpp"

namespace vera {

namespace {
constexpr std::string_view kMagic = "VKWT";
}

const NamedTensor* TensorFile::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

NamedTensor* TensorFile::find(const std::string& name) {
  for (auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> TensorFile::encode() const {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.name(t.name);
    w.u32(static_cast<std::uint32_t>(t.value.rows()));
    w.u32(static_cast<std::uint32_t>(t.value.cols()));
    for (const float v : t.value.span()) w.f32(v);
  }
  return w.bytes();
}

TensorFile TensorFile::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < kMagic.size() || r.raw(kMagic.size()) != kMagic) throw FormatError("not a VKWT file (bad magic)");
  if (const auto version = r.u32(); version != kVersion) {
    throw FormatError("unsupported VKWT version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  TensorFile file;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.name();
    const std::size_t rows = r.u32();
    const std::size_t cols = r.u32();
    if (rows != 0 && cols > r.remaining() / 4 / rows) throw CorruptionError("tensor '" + t.name + "' truncated");
    std::vector<float> data(rows * cols);
    for (auto& v : data) v = r.f32();
    t.value = Matrix<float>::from_values(rows, cols, std::move(data));
    file.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw CorruptionError("trailing bytes after last tensor");
  return file;
}

void TensorFile::save(const std::filesystem::path& path) const { write_file(path, encode()); }

TensorFile TensorFile::load(const std::filesystem::path& path) { return decode(read_file(path)); }

}  // namespace vera
