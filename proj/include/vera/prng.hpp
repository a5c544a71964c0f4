#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "vera/matcore.hpp"

namespace vera {

/// One step of the SplitMix64 sequence: mixes `seed + golden_gamma`.
std::uint64_t splitmix64(std::uint64_t seed) noexcept;

/// xoshiro256** stream seeded from (master_seed, stream_key).
///
/// The 256-bit state is the first four SplitMix64 outputs of the sequence
/// starting at `master_seed ^ splitmix64(stream_key)`. Everything is defined
/// on 64-bit unsigned arithmetic, so output is identical on every platform.
/// A stream is single-owner; copying it forks an identical replay.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_key) noexcept;

  std::uint64_t next_u64() noexcept;

  /// low + (high - low) * u, u built from the top 53 bits of one draw.
  double uniform(double low, double high);
  /// Box-Muller. Consumes two draws per pair; the sine half is cached.
  double normal(double mean, double std);
  /// Drops a cached normal so the next call to normal() starts a new pair.
  void discard_cached_normal() noexcept { cached_normal_.reset(); }

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t stream_key() const noexcept { return stream_key_; }
  std::uint64_t draws() const noexcept { return draws_; }

 private:
  double unit_uniform() noexcept;

  std::array<std::uint64_t, 4> state_{};
  std::uint64_t master_seed_;
  std::uint64_t stream_key_;
  std::uint64_t draws_ = 0;
  std::optional<double> cached_normal_;
};

/// Standard normal pair (cos, sin) from two uniforms in [0, 1). u1 = 0 is
/// remapped to 2^-53, the smallest positive 53-bit uniform.
std::pair<double, double> box_muller(double u1, double u2) noexcept;

inline RngStream make_stream(std::uint64_t master_seed, std::uint64_t stream_key) noexcept {
  return RngStream(master_seed, stream_key);
}

enum class InitKind : std::uint8_t { KaimingUniform = 0, KaimingNormal = 1, UniformRange = 2 };

/// Distribution used to fill frozen matrices. Kaiming variants use gain sqrt(2).
/// Range bounds are held at float32 precision so a scheme written to a
/// checkpoint reloads to the exact same value.
class InitScheme {
 public:
  static InitScheme kaiming_uniform() { return InitScheme(InitKind::KaimingUniform, 0, 0); }
  static InitScheme kaiming_normal() { return InitScheme(InitKind::KaimingNormal, 0, 0); }
  static InitScheme uniform_range(double low, double high);

  InitKind kind() const noexcept { return kind_; }
  double range_low() const noexcept { return low_; }
  double range_high() const noexcept { return high_; }

  friend bool operator==(const InitScheme&, const InitScheme&) = default;

 private:
  InitScheme(InitKind kind, double low, double high) : kind_(kind), low_(low), high_(high) {}

  InitKind kind_;
  double low_;
  double high_;
};

const char* to_string(InitKind kind) noexcept;
/// Accepts "kaiming-uniform", "kaiming-normal", "uniform" (range [0, 0.1])
/// or "uniform:LOW:HIGH".
InitScheme parse_init_scheme(const std::string& text);
std::string to_string(const InitScheme& scheme);

enum class FillOrder { RowMajor, ColMajor };

double kaiming_uniform_bound(std::size_t fan_in);
double kaiming_normal_std(std::size_t fan_in);

/// Fills a rows x cols matrix, one entry per draw in `order`. Normal schemes
/// consume exactly 2 * ceil(rows * cols / 2) draws: the pair cache is cleared
/// on entry and any unused half is discarded on exit.
Matrix<double> init_matrix(RngStream& stream, std::size_t rows, std::size_t cols,
                           const InitScheme& scheme, std::size_t fan_in, FillOrder order);

}  // namespace vera
