#pragma once

#include <span>
#include <vector>

#include "vera/harness/toy_model.hpp"

namespace vera::harness {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Linear warmup over ceil(warmup_ratio * total) steps, then linear decay to
/// zero at `total`. `step` is 0-based; the first step already gets a non-zero
/// rate.
double lr_multiplier(std::size_t step, std::size_t total, double warmup_ratio);

/// Decoupled-weight-decay Adam with separate learning rates for the adapter
/// and head groups. Decay applies only to views flagged `decay`.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(std::span<ParamView> params, const GradientSet& grads, double lr_adapter, double lr_head);
  std::size_t steps_taken() const noexcept { return t_; }

 private:
  AdamWConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

}  // namespace vera::harness
