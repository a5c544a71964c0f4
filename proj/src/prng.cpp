#include "vera/prng.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace vera {

namespace {

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

// Smallest positive value a 53-bit mantissa uniform can take.
constexpr double kSmallestUniform = 0x1.0p-53;

}  // namespace

std::uint64_t splitmix64(std::uint64_t seed) noexcept {
  std::uint64_t z = seed + kGoldenGamma;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_key) noexcept
    : master_seed_(master_seed), stream_key_(stream_key) {
  std::uint64_t x = master_seed ^ splitmix64(stream_key);
  for (auto& word : state_) {
    word = splitmix64(x);
    x += kGoldenGamma;
  }
}

std::uint64_t RngStream::next_u64() noexcept {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  ++draws_;
  return result;
}

double RngStream::unit_uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform(double low, double high) {
  if (!(low < high)) throw InvalidArgument("uniform: invalid range, need low < high");
  return low + (high - low) * unit_uniform();
}

double RngStream::normal(double mean, double std) {
  if (!(std > 0.0)) throw InvalidArgument("normal: std must be positive");
  if (cached_normal_) {
    const double z = *cached_normal_;
    cached_normal_.reset();
    return mean + std * z;
  }
  const double u1 = unit_uniform();
  const double u2 = unit_uniform();
  const auto [z0, z1] = box_muller(u1, u2);
  cached_normal_ = z1;
  return mean + std * z0;
}

std::pair<double, double> box_muller(double u1, double u2) noexcept {
  if (u1 == 0.0) u1 = kSmallestUniform;
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

InitScheme InitScheme::uniform_range(double low, double high) {
  const float lo = static_cast<float>(low);
  const float hi = static_cast<float>(high);
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw InvalidArgument("uniform init: need finite range_low < range_high");
  }
  return InitScheme(InitKind::UniformRange, static_cast<double>(lo), static_cast<double>(hi));
}

const char* to_string(InitKind kind) noexcept {
  switch (kind) {
    case InitKind::KaimingUniform: return "kaiming-uniform";
    case InitKind::KaimingNormal: return "kaiming-normal";
    case InitKind::UniformRange: return "uniform";
  }
  return "unknown";
}

std::string to_string(const InitScheme& scheme) {
  if (scheme.kind() != InitKind::UniformRange) return to_string(scheme.kind());
  return "uniform:" + std::to_string(scheme.range_low()) + ":" + std::to_string(scheme.range_high());
}

InitScheme parse_init_scheme(const std::string& text) {
  if (text == "kaiming-uniform") return InitScheme::kaiming_uniform();
  if (text == "kaiming-normal") return InitScheme::kaiming_normal();
  if (text == "uniform") return InitScheme::uniform_range(0.0, 0.1);
  if (text.rfind("uniform:", 0) == 0) {
    const auto rest = text.substr(8);
    const auto colon = rest.find(':');
    if (colon != std::string::npos) {
      try {
        return InitScheme::uniform_range(std::stod(rest.substr(0, colon)), std::stod(rest.substr(colon + 1)));
      } catch (const std::logic_error&) {
      }
    }
  }
  throw InvalidArgument("unknown init scheme '" + text + "'");
}

double kaiming_uniform_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

double kaiming_normal_std(std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

Matrix<double> init_matrix(RngStream& stream, std::size_t rows, std::size_t cols, const InitScheme& scheme,
                           std::size_t fan_in, FillOrder order) {
  if (rows < 1 || cols < 1 || fan_in < 1) throw InvalidArgument("init_matrix: rows, cols, fan_in must be >= 1");

  Matrix<double> out(rows, cols);
  const std::size_t count = rows * cols;
  auto entry = [&](std::size_t k) -> double& {
    return order == FillOrder::RowMajor ? out(k / cols, k % cols) : out(k % rows, k / rows);
  };

  switch (scheme.kind()) {
    case InitKind::KaimingUniform: {
      const double bound = kaiming_uniform_bound(fan_in);
      for (std::size_t k = 0; k < count; ++k) entry(k) = stream.uniform(-bound, bound);
      break;
    }
    case InitKind::UniformRange:
      for (std::size_t k = 0; k < count; ++k) entry(k) = stream.uniform(scheme.range_low(), scheme.range_high());
      break;
    case InitKind::KaimingNormal: {
      const double std = kaiming_normal_std(fan_in);
      stream.discard_cached_normal();
      for (std::size_t k = 0; k < count; ++k) entry(k) = stream.normal(0.0, std);
      stream.discard_cached_normal();
      break;
    }
  }
  return out;
}

}  // namespace vera
