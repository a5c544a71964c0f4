#include "vera/harness/toy_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace vera::harness {

namespace {

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

void fnv_mix(std::uint64_t& h, std::span<const double> values) {
  for (const double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= kFnvPrime;
    }
  }
}

Matrix<double> gaussian(std::uint64_t seed, const std::string& name, std::size_t rows, std::size_t cols,
                        double std) {
  RngStream stream(seed, fnv1a(name));
  Matrix<double> m(rows, cols);
  for (auto& v : m.span()) v = stream.normal(0.0, std);
  round_to_f32(m.span());
  return m;
}

std::string slot_name(std::size_t block, const char* role) { return "block" + std::to_string(block) + "." + role; }

const Matrix<double>& base_weight_of(const AdaptedLinear& slot) {
  return std::visit(
      [](const auto& layer) -> const Matrix<double>& {
        if constexpr (std::is_same_v<std::decay_t<decltype(layer)>, FrozenLinear>) {
          return layer.weight();
        } else {
          return layer.base_weight();
        }
      },
      slot);
}

std::size_t slot_param_count(const AdaptedLinear& slot) {
  if (const auto* vera = std::get_if<VeraLayer>(&slot)) return std::size_t{vera->has_d()} + vera->has_b();
  if (std::holds_alternative<LoraLayer>(slot)) return 2;
  return 0;
}

void slot_params(AdaptedLinear& slot, std::vector<ParamView>& out) {
  if (auto* vera = std::get_if<VeraLayer>(&slot)) {
    if (vera->has_d()) out.push_back({vera->name() + ".d", ParamGroup::Adapter, false, vera->d_values()});
    if (vera->has_b()) out.push_back({vera->name() + ".b", ParamGroup::Adapter, false, vera->b_values()});
  } else if (auto* lora = std::get_if<LoraLayer>(&slot)) {
    out.push_back({lora->name() + ".A", ParamGroup::Adapter, true, lora->A_values()});
    out.push_back({lora->name() + ".B", ParamGroup::Adapter, true, lora->B_values()});
  }
}

Vector<double> slot_forward(const AdaptedLinear& slot, const Vector<double>& x, SlotCache& cache) {
  if (const auto* vera = std::get_if<VeraLayer>(&slot)) {
    auto out = vera->forward(x);
    cache = std::move(out.cache);
    return std::move(out.h);
  }
  if (const auto* lora = std::get_if<LoraLayer>(&slot)) {
    auto out = lora->forward(x);
    cache = std::move(out.cache);
    return std::move(out.h);
  }
  cache = std::monostate{};
  return std::get<FrozenLinear>(slot).forward(x);
}

void add_into(std::vector<double>& acc, std::span<const double> values) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += values[i];
}

// Accumulates parameter gradients at grads[offset...] and returns dL/dx.
Vector<double> slot_backward(const AdaptedLinear& slot, const Vector<double>& x, const Vector<double>& g,
                             const SlotCache& cache, GradientSet& grads, std::size_t offset) {
  if (const auto* vera = std::get_if<VeraLayer>(&slot)) {
    const auto step = vera->backward(x, g, std::get<VeraCache>(cache));
    if (vera->has_d()) add_into(grads[offset++], step.d.span());
    if (vera->has_b()) add_into(grads[offset], step.b.span());
    return step.x;
  }
  if (const auto* lora = std::get_if<LoraLayer>(&slot)) {
    const auto step = lora->backward(x, g, std::get<LoraCache>(cache));
    add_into(grads[offset], step.A.span());
    add_into(grads[offset + 1], step.B.span());
    return step.x;
  }
  return std::get<FrozenLinear>(slot).backward_input(g);
}

void add_position(Vector<double>& x, std::size_t pos) {
  const double d = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i / 2 * 2) / d);
    const double angle = static_cast<double>(pos) * freq;
    x[i] += static_cast<double>(static_cast<float>(i % 2 == 0 ? std::sin(angle) : std::cos(angle)));
  }
}

}  // namespace

std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = kFnvOffset;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

void ToyModelConfig::validate() const {
  if (vocab < 1 || classes < 2 || d_model < 1 || heads < 1 || blocks < 1) {
    throw InvalidConfig("toy model: vocab, d_model, heads, blocks must be >= 1 and classes >= 2");
  }
  if (d_model % heads != 0) throw InvalidConfig("toy model: d_model must be divisible by heads");
}

ToyModel::ToyModel(ToyModelConfig config) : config_(std::move(config)) {
  config_.validate();
  config_.adapter = config_.adapter.resolved();
  const auto& ad = config_.adapter;
  const std::size_t d = config_.d_model;
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));

  embed_ = gaussian(config_.base_seed, "embed", config_.vocab, d, 1.0);
  head_ = gaussian(config_.base_seed, "head", config_.classes, d, proj_std);

  SharedPool pool(ad.r_max, ad.init_scheme, ad.master_seed);
  auto adapted = [&](const std::string& name) -> AdaptedLinear {
    Matrix<double> w0 = gaussian(config_.base_seed, name, d, d, proj_std);
    switch (ad.method) {
      case Method::Vera:
        return VeraLayer(name, std::move(w0), pool.get(d, d), ad.rank, VeraVariant::Full, ad.d_init);
      case Method::OnlyD:
        return VeraLayer(name, std::move(w0), pool.get(d, d), ad.rank, VeraVariant::OnlyD, ad.d_init);
      case Method::OnlyB:
        return VeraLayer(name, std::move(w0), pool.get(d, d), ad.rank, VeraVariant::OnlyB, ad.d_init);
      case Method::Lora: {
        RngStream stream(ad.master_seed, fnv1a("lora." + name));
        return LoraLayer(name, std::move(w0), ad.rank, ad.lora_alpha, stream, ad.init_scheme);
      }
      case Method::HeadOnly: break;
    }
    return FrozenLinear(name, std::move(w0));
  };

  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const auto k_name = slot_name(b, "k");
    const auto o_name = slot_name(b, "o");
    blocks_.push_back(Block{adapted(slot_name(b, "q")),
                            FrozenLinear(k_name, gaussian(config_.base_seed, k_name, d, d, proj_std)),
                            adapted(slot_name(b, "v")),
                            FrozenLinear(o_name, gaussian(config_.base_seed, o_name, d, d, proj_std))});
  }
}

ForwardCache ToyModel::forward(std::span<const std::size_t> tokens) const {
  if (tokens.empty()) throw InvalidArgument("forward: empty token sequence");
  const std::size_t d = config_.d_model;
  const std::size_t heads = config_.heads;
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t len = tokens.size();

  ForwardCache cache;
  cache.tokens.assign(tokens.begin(), tokens.end());
  std::vector<Vector<double>> x(len);
  for (std::size_t t = 0; t < len; ++t) {
    if (tokens[t] >= config_.vocab) {
      throw InvalidArgument("token id " + std::to_string(tokens[t]) + " outside vocabulary of " +
                            std::to_string(config_.vocab));
    }
    const auto row = embed_.row(tokens[t]);
    x[t] = Vector<double>(std::vector<double>(row.begin(), row.end()));
    if (config_.positional) add_position(x[t], t);
  }

  for (const auto& block : blocks_) {
    BlockCache bc;
    bc.x = x;
    bc.q.resize(len);
    bc.k.resize(len);
    bc.v.resize(len);
    bc.q_cache.resize(len);
    bc.v_cache.resize(len);
    for (std::size_t t = 0; t < len; ++t) {
      bc.q[t] = slot_forward(block.q, x[t], bc.q_cache[t]);
      bc.k[t] = block.k.forward(x[t]);
      bc.v[t] = slot_forward(block.v, x[t], bc.v_cache[t]);
    }
    bc.probs.assign(heads, std::vector<std::vector<double>>(len, std::vector<double>(len)));
    bc.o.assign(len, Vector<double>(d));
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t lo = h * dh;
      for (std::size_t t = 0; t < len; ++t) {
        auto& p = bc.probs[h][t];
        for (std::size_t j = 0; j < len; ++j) {
          double s = 0.0;
          for (std::size_t c = lo; c < lo + dh; ++c) s += bc.q[t][c] * bc.k[j][c];
          p[j] = s * inv_sqrt;
        }
        const double mx = *std::ranges::max_element(p);
        double z = 0.0;
        for (auto& pj : p) z += (pj = std::exp(pj - mx));
        for (auto& pj : p) pj /= z;
        for (std::size_t j = 0; j < len; ++j) {
          for (std::size_t c = lo; c < lo + dh; ++c) bc.o[t][c] += p[j] * bc.v[j][c];
        }
      }
    }
    for (std::size_t t = 0; t < len; ++t) x[t] = axpy(x[t], block.o.forward(bc.o[t]));
    cache.blocks.push_back(std::move(bc));
  }

  cache.pooled = Vector<double>(d);
  for (const auto& xt : x) cache.pooled = axpy(cache.pooled, xt);
  for (auto& v : cache.pooled) v /= static_cast<double>(len);
  cache.logits = matvec(head_, cache.pooled);
  return cache;
}

double ToyModel::cross_entropy(const Vector<double>& logits, std::size_t label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (const double l : logits) z += std::exp(l - mx);
  return std::log(z) + mx - logits[label];
}

GradientSet ToyModel::backward(const ForwardCache& cache, std::size_t label) const {
  if (label >= config_.classes) throw InvalidArgument("label outside class range");
  const auto& z = cache.logits;
  const double mx = *std::max_element(z.begin(), z.end());
  Vector<double> dlogits(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += (dlogits[i] = std::exp(z[i] - mx));
  for (auto& g : dlogits) g /= sum;
  dlogits[label] -= 1.0;
  return backward_from_logits(cache, dlogits);
}

GradientSet ToyModel::backward_from_logits(const ForwardCache& cache, const Vector<double>& dlogits) const {
  if (cache.blocks.size() != blocks_.size() || cache.logits.size() != config_.classes ||
      dlogits.size() != config_.classes) {
    throw DimensionError("backward: cache does not belong to this model");
  }
  const std::size_t d = config_.d_model;
  const std::size_t heads = config_.heads;
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t len = cache.tokens.size();

  GradientSet grads = zero_grads();
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& block : blocks_) {
    offsets.push_back(offset);
    offset += slot_param_count(block.q);
    offsets.push_back(offset);
    offset += slot_param_count(block.v);
  }
  const std::size_t head_index = offset;

  {
    Matrix<double> dhead(head_.rows(), head_.cols());
    outer_accumulate(dhead, dlogits, cache.pooled, 1.0);
    add_into(grads[head_index], dhead.span());
  }
  Vector<double> dpooled = matvec_t(head_, dlogits);
  for (auto& v : dpooled) v /= static_cast<double>(len);
  std::vector<Vector<double>> dy(len, dpooled);

  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    const auto& block = blocks_[bi];
    const auto& bc = cache.blocks[bi];
    std::vector<Vector<double>> dx = dy;
    std::vector<Vector<double>> dq(len, Vector<double>(d));
    std::vector<Vector<double>> dk(len, Vector<double>(d));
    std::vector<Vector<double>> dv(len, Vector<double>(d));
    std::vector<Vector<double>> dout(len);
    for (std::size_t t = 0; t < len; ++t) dout[t] = block.o.backward_input(dy[t]);

    std::vector<double> dp(len);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t lo = h * dh;
      for (std::size_t t = 0; t < len; ++t) {
        const auto& p = bc.probs[h][t];
        double weighted = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          double s = 0.0;
          for (std::size_t c = lo; c < lo + dh; ++c) {
            s += dout[t][c] * bc.v[j][c];
            dv[j][c] += p[j] * dout[t][c];
          }
          dp[j] = s;
          weighted += p[j] * s;
        }
        for (std::size_t j = 0; j < len; ++j) {
          const double ds = p[j] * (dp[j] - weighted) * inv_sqrt;
          for (std::size_t c = lo; c < lo + dh; ++c) {
            dq[t][c] += ds * bc.k[j][c];
            dk[j][c] += ds * bc.q[t][c];
          }
        }
      }
    }

    for (std::size_t t = 0; t < len; ++t) {
      dx[t] = axpy(dx[t], slot_backward(block.q, bc.x[t], dq[t], bc.q_cache[t], grads, offsets[2 * bi]));
      dx[t] = axpy(dx[t], slot_backward(block.v, bc.x[t], dv[t], bc.v_cache[t], grads, offsets[2 * bi + 1]));
      dx[t] = axpy(dx[t], block.k.backward_input(dk[t]));
    }
    dy = std::move(dx);
  }
  return grads;
}

double ToyModel::loss(std::span<const std::size_t> tokens, std::size_t label) const {
  return cross_entropy(forward(tokens).logits, label);
}

LossAndGrad ToyModel::loss_and_grad(const Batch& batch) const {
  if (batch.inputs.empty() || batch.inputs.size() != batch.labels.size()) {
    throw InvalidArgument("loss_and_grad: empty or inconsistent batch");
  }
  LossAndGrad out{0.0, zero_grads()};
  for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
    const auto cache = forward(batch.inputs[i]);
    out.loss += cross_entropy(cache.logits, batch.labels[i]);
    const auto g = backward(cache, batch.labels[i]);
    for (std::size_t p = 0; p < g.size(); ++p) add_into(out.grads[p], g[p]);
  }
  const double inv = 1.0 / static_cast<double>(batch.inputs.size());
  out.loss *= inv;
  for (auto& g : out.grads) {
    for (auto& v : g) v *= inv;
  }
  return out;
}

std::size_t ToyModel::predict(std::span<const std::size_t> tokens) const {
  const auto z = logits(tokens);
  return static_cast<std::size_t>(std::distance(z.begin(), std::max_element(z.begin(), z.end())));
}

double ToyModel::accuracy(const Batch& batch) const {
  if (batch.inputs.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.inputs.size(); ++i) correct += predict(batch.inputs[i]) == batch.labels[i];
  return static_cast<double>(correct) / static_cast<double>(batch.inputs.size());
}

std::vector<ParamView> ToyModel::params() {
  std::vector<ParamView> out;
  for (auto& block : blocks_) {
    slot_params(block.q, out);
    slot_params(block.v, out);
  }
  out.push_back({"head", ParamGroup::Head, true, head_.span()});
  return out;
}

GradientSet ToyModel::zero_grads() const {
  GradientSet grads;
  auto add_slot = [&](const AdaptedLinear& slot) {
    if (const auto* vera = std::get_if<VeraLayer>(&slot)) {
      if (vera->has_d()) grads.emplace_back(vera->d().size(), 0.0);
      if (vera->has_b()) grads.emplace_back(vera->b().size(), 0.0);
    } else if (const auto* lora = std::get_if<LoraLayer>(&slot)) {
      grads.emplace_back(lora->A().size(), 0.0);
      grads.emplace_back(lora->B().size(), 0.0);
    }
  };
  for (const auto& block : blocks_) {
    add_slot(block.q);
    add_slot(block.v);
  }
  grads.emplace_back(head_.size(), 0.0);
  return grads;
}

std::size_t ToyModel::adapter_params() const {
  std::size_t total = 0;
  for (const auto& block : blocks_) {
    for (const auto* slot : {&block.q, &block.v}) {
      total += std::visit([](const auto& layer) { return layer.trainable_params(); }, *slot);
    }
  }
  return total;
}

void ToyModel::apply_precision() {
  if (config_.precision != Precision::Float32) return;
  for (auto& p : params()) round_to_f32(p.values);
}

void ToyModel::randomize_trainable(RngStream& stream, double scale) {
  for (auto& p : params()) {
    for (auto& v : p.values) v = stream.normal(0.0, scale);
  }
  apply_precision();
}

std::vector<AdaptedLinear> ToyModel::adapted_layers() const {
  std::vector<AdaptedLinear> out;
  for (const auto& block : blocks_) {
    out.push_back(block.q);
    out.push_back(block.v);
  }
  return out;
}

std::uint64_t ToyModel::frozen_fingerprint() const {
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, embed_.span());
  for (const auto& block : blocks_) {
    fnv_mix(h, base_weight_of(block.q).span());
    fnv_mix(h, block.k.weight().span());
    fnv_mix(h, base_weight_of(block.v).span());
    fnv_mix(h, block.o.weight().span());
  }
  return h;
}

TensorFile ToyModel::export_base() const {
  TensorFile file;
  file.tensors.push_back({"embed", embed_.cast<float>()});
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& block = blocks_[b];
    file.tensors.push_back({slot_name(b, "q"), base_weight_of(block.q).cast<float>()});
    file.tensors.push_back({slot_name(b, "k"), block.k.weight().cast<float>()});
    file.tensors.push_back({slot_name(b, "v"), base_weight_of(block.v).cast<float>()});
    file.tensors.push_back({slot_name(b, "o"), block.o.weight().cast<float>()});
  }
  file.tensors.push_back({"head", head_.cast<float>()});
  return file;
}

}  // namespace vera::harness
