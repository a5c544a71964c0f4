#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vera/adapters.hpp"

namespace vera::harness {

/// |a - f| / max(|a|, |f|, kGradFloor), maximised over entries. Below the
/// floor the comparison is effectively absolute.
inline constexpr double kGradFloor = 1e-3;
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// Central differences of `loss` w.r.t. every entry of `values`, restoring
/// each entry afterwards.
std::vector<double> numeric_gradient(std::span<double> values, const std::function<double()>& loss,
                                     double step = 1e-6);

struct GradcheckEntry {
  std::string scope;  // "layer" or "model"
  Method method = Method::Vera;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t rank = 0;
  std::string group;  // d, b, A, B, x, or a model parameter name
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  double tolerance = 0.0;
  std::vector<GradcheckEntry> entries;

  bool passed() const;
  double worst() const;
};

struct GradcheckOptions {
  std::vector<std::size_t> dims{3, 8, 32};
  std::vector<std::size_t> ranks{1, 2, 8};
  std::vector<Method> methods{Method::Vera, Method::Lora, Method::OnlyD, Method::OnlyB};
  std::uint64_t seed = 7;
  double tolerance = 1e-4;
  double step = 1e-6;
  /// End-to-end check of the toy model at this width (0 disables).
  std::size_t model_d_model = 8;
  std::size_t model_blocks = 2;
};

/// Layer grid (every m, n in dims, r in ranks, method) with scalar loss g·h,
/// plus an end-to-end cross-entropy check of the toy model for each method
/// and head-only. Runs in float64. Failures are report entries, not errors.
GradcheckReport gradcheck(const GradcheckOptions& options);

/// Layer-level check only, for one configuration.
std::vector<GradcheckEntry> gradcheck_layer(Method method, std::size_t m, std::size_t n, std::size_t rank,
                                            std::uint64_t seed, double step, double tolerance);
/// Model-level check only.
std::vector<GradcheckEntry> gradcheck_model(Method method, std::size_t d_model, std::size_t blocks, std::size_t rank,
                                            std::uint64_t seed, double step, double tolerance);

void write_gradcheck_csv(std::ostream& out, const GradcheckReport& report);

}  // namespace vera::harness
