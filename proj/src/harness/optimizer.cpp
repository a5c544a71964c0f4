#include "vera/harness/optimizer.hpp"

#include <cmath>

namespace vera::harness {

double lr_multiplier(std::size_t step, std::size_t total, double warmup_ratio) {
  if (total == 0) return 0.0;
  const auto warmup = static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total)));
  if (step < warmup) return static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (step >= total) return 0.0;
  return static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

void AdamW::step(std::span<ParamView> params, const GradientSet& grads, double lr_adapter, double lr_head) {
  if (grads.size() != params.size()) throw DimensionError("AdamW: gradient set does not match parameters");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.values.size(), 0.0);
      v_.emplace_back(p.values.size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (grads[i].size() != p.values.size() || m_[i].size() != p.values.size()) {
      throw DimensionError("AdamW: size mismatch for '" + p.name + "'");
    }
    const double lr = p.group == ParamGroup::Head ? lr_head : lr_adapter;
    const double decay = p.decay ? config_.weight_decay : 0.0;
    for (std::size_t j = 0; j < p.values.size(); ++j) {
      const double g = grads[i][j];
      m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g;
      v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g * g;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p.values[j] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + decay * p.values[j]);
    }
  }
}

}  // namespace vera::harness
