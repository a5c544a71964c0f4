#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vera/adapters.hpp"
#include "vera/harness/tasks.hpp"
#include "vera/tensor_file.hpp"

namespace vera::harness {

/// Float32 rounds every stored value (frozen and trainable) to single
/// precision; arithmetic is always accumulated in double.
enum class Precision { Float32, Float64 };

struct ToyModelConfig {
  std::size_t vocab = 2;
  std::size_t classes = 2;
  std::size_t d_model = 32;
  std::size_t heads = 2;
  std::size_t blocks = 1;
  /// Seed of the frozen "pretrained" weights and the initial head.
  std::uint64_t base_seed = 1;
  AdapterConfig adapter;
  Precision precision = Precision::Float32;
  /// Adds frozen sinusoidal position vectors to the token embeddings. Off by
  /// default, which keeps the model invariant to token order.
  bool positional = false;

  void validate() const;
};

enum class ParamGroup { Adapter, Head };

/// Mutable view of one trainable tensor.
struct ParamView {
  std::string name;
  ParamGroup group = ParamGroup::Adapter;
  bool decay = true;
  std::span<double> values;
};

/// Gradients aligned with ToyModel::params().
using GradientSet = std::vector<std::vector<double>>;

using SlotCache = std::variant<std::monostate, VeraCache, LoraCache>;

struct BlockCache {
  std::vector<Vector<double>> x;
  std::vector<Vector<double>> q;
  std::vector<Vector<double>> k;
  std::vector<Vector<double>> v;
  std::vector<SlotCache> q_cache;
  std::vector<SlotCache> v_cache;
  std::vector<std::vector<std::vector<double>>> probs;  // [head][query][key]
  std::vector<Vector<double>> o;
};

struct ForwardCache {
  Tokens tokens;
  std::vector<BlockCache> blocks;
  Vector<double> pooled;
  Vector<double> logits;
};

struct LossAndGrad {
  double loss = 0.0;
  GradientSet grads;
};

/// embed -> [multi-head self-attention with adapted q/v projections ->
/// residual] x blocks -> mean-pool -> linear head.
class ToyModel {
 public:
  explicit ToyModel(ToyModelConfig config);

  ToyModel(const ToyModel&) = delete;
  ToyModel& operator=(const ToyModel&) = delete;
  ToyModel(ToyModel&&) = default;
  ToyModel& operator=(ToyModel&&) = default;

  ForwardCache forward(std::span<const std::size_t> tokens) const;
  Vector<double> logits(std::span<const std::size_t> tokens) const { return forward(tokens).logits; }

  /// Cross-entropy gradient for one example.
  GradientSet backward(const ForwardCache& cache, std::size_t label) const;
  /// Gradient for an arbitrary upstream gradient on the logits.
  GradientSet backward_from_logits(const ForwardCache& cache, const Vector<double>& dlogits) const;

  static double cross_entropy(const Vector<double>& logits, std::size_t label);
  double loss(std::span<const std::size_t> tokens, std::size_t label) const;
  /// Mean loss and mean gradient over the batch, examples summed in order.
  LossAndGrad loss_and_grad(const Batch& batch) const;
  std::size_t predict(std::span<const std::size_t> tokens) const;
  double accuracy(const Batch& batch) const;

  std::vector<ParamView> params();
  GradientSet zero_grads() const;
  /// Adapter-only trainable count (the head is excluded, as in accounting).
  std::size_t adapter_params() const;
  /// Applies the storage precision to all trainable values.
  void apply_precision();
  /// Overwrites every trainable value with N(0, scale^2) draws.
  void randomize_trainable(RngStream& stream, double scale);

  /// Adapted slots in block order: block0.q, block0.v, block1.q, ...
  std::vector<AdaptedLinear> adapted_layers() const;
  /// FNV-1a over every frozen tensor's bytes.
  std::uint64_t frozen_fingerprint() const;
  /// Frozen weights plus the current head as a VKWT container. Adapted
  /// projections are stored as their base weights W0.
  TensorFile export_base() const;

  const ToyModelConfig& config() const noexcept { return config_; }
  const Matrix<double>& head() const noexcept { return head_; }

 private:
  struct Block {
    AdaptedLinear q;
    FrozenLinear k;
    AdaptedLinear v;
    FrozenLinear o;
  };

  ToyModelConfig config_;
  Matrix<double> embed_;
  std::vector<Block> blocks_;
  Matrix<double> head_;
};

std::uint64_t fnv1a(std::string_view text) noexcept;

}  // namespace vera::harness
