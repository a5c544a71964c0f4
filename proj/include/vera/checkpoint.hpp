#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vera/adapters.hpp"
#include "vera/tensor_file.hpp"

namespace vera {

/// Trained state of one adapted layer. Which fields are populated depends on
/// the method: d/b for the VeRA family, A/B for LoRA.
struct LayerRecord {
  std::string name;
  std::size_t m = 0;
  std::size_t n = 0;
  Vector<double> d;
  Vector<double> b;
  Matrix<double> A;
  Matrix<double> B;

  std::size_t payload_values() const noexcept { return d.size() + b.size() + A.size() + B.size(); }
};

/// Seed-based adapter checkpoint. The frozen shared matrices are not stored;
/// they are regenerated from (master_seed, init_scheme, r_max).
///
/// Layout (little-endian):
///   "VERA" | version u32 | method u8 | master_seed u64 | r u32 | r_max u32 |
///   init_scheme u8 [+ low f32, high f32 for uniform] | d_init f32 |
///   layer_count u32 | per layer { name u16+UTF-8 | m u32 | n u32 | payload }
/// Payload: VeRA d[r], b[m]; only-d d[r]; only-b b[m]; LoRA A[r*n], B[m*r]
/// (row-major); head-only nothing.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  AdapterConfig config;
  std::vector<LayerRecord> layers;

  struct Layout {
    std::size_t header_bytes = 0;  // fixed header through layer_count
    std::size_t layer_framing_bytes = 0;  // per-layer name + m + n
    std::size_t payload_bytes = 0;  // trained values
    std::size_t total_bytes() const noexcept { return header_bytes + layer_framing_bytes + payload_bytes; }
  };

  Layout layout() const;
  std::vector<std::uint8_t> encode() const;
  /// Throws FormatError (magic, version, enums), CorruptionError (truncated,
  /// trailing or non-finite data), InvalidConfig (r outside [1, r_max]).
  static Checkpoint decode(std::span<const std::uint8_t> bytes);
};

/// Captures the trainable state of adapted layers. Every layer must agree
/// with `config` (method, rank, seed, scheme, r_max); frozen slots are
/// rejected unless the method is head-only. Throws InvalidConfig.
Checkpoint capture(std::span<const AdaptedLinear> layers, const AdapterConfig& config);

/// Returns the number of bytes written.
std::size_t save(const Checkpoint& ckpt, const std::filesystem::path& path);
std::size_t save(std::span<const AdaptedLinear> layers, const AdapterConfig& config,
                 const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

/// Supplies the frozen base weight for a stored layer.
using BaseWeightLookup = std::function<Matrix<double>(const LayerRecord&)>;

/// Rebuilds adapter layers: shared matrices regenerated from the seed, trained
/// vectors/matrices reattached, W0 from `base`.
std::vector<AdaptedLinear> instantiate(const Checkpoint& ckpt, const BaseWeightLookup& base);
/// Same, taking W0 from tensors named like the layers. Throws
/// InvalidArgument for a missing tensor and DimensionError on shape mismatch.
std::vector<AdaptedLinear> instantiate(const Checkpoint& ckpt, const TensorFile& base);

/// Writes `base` with every adapted tensor replaced by its merged weight,
/// other tensors copied verbatim. Returns the tensor count written.
std::size_t export_merged(const Checkpoint& ckpt, const std::filesystem::path& base_file,
                          const std::filesystem::path& out_file);

/// Human/test facing description: config, per-layer shapes and norms, sizes.
nlohmann::json inspect(const Checkpoint& ckpt);

}  // namespace vera
