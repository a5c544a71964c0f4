#pragma once

#include <cstdint>
#include <memory>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>

#include "vera/matcore.hpp"
#include "vera/prng.hpp"

namespace vera {

/// Adaptation method. Values are the on-disk checkpoint encoding.
enum class Method : std::uint8_t { Vera = 0, Lora = 1, OnlyD = 2, OnlyB = 3, HeadOnly = 4 };

const char* to_string(Method method) noexcept;
/// "vera", "lora", "only-d", "only-b", "head-only".
Method parse_method(const std::string& text);
bool is_vera_family(Method method) noexcept;

struct AdapterConfig {
  Method method = Method::Vera;
  std::size_t rank = 1;
  /// Rows of the generated shared A (and columns of B). 0 means "same as rank".
  std::size_t r_max = 0;
  InitScheme init_scheme = InitScheme::kaiming_uniform();
  double d_init = 0.1;
  /// LoRA only; 0 means "same as rank" (scale factor 1).
  double lora_alpha = 0.0;
  std::uint64_t master_seed = 0;

  /// Fills defaults, rounds d_init to float32 (its on-disk precision) and
  /// validates. Throws InvalidConfig.
  AdapterConfig resolved() const;
};

/// The frozen random pair for one (m, n) layer shape.
///   A: r_max x n, filled row-major, fan_in n
///   B: m x r_max, filled column-major, fan_in r_max
/// Both come from one stream keyed by the shape and are rounded to float32
/// so they are identical whether held in memory or regenerated from a seed.
struct SharedMatrices {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t r_max = 0;
  InitScheme scheme = InitScheme::kaiming_uniform();
  std::uint64_t master_seed = 0;
  std::uint64_t stream_key = 0;
  Matrix<double> A;
  Matrix<double> B;
};

/// splitmix64(m * 2^32 + n).
std::uint64_t shape_stream_key(std::size_t m, std::size_t n) noexcept;

std::shared_ptr<const SharedMatrices> build_shared(std::size_t m, std::size_t n, std::size_t r_max,
                                                   const InitScheme& scheme, std::uint64_t master_seed);

/// One SharedMatrices per distinct (m, n), built lazily.
class SharedPool {
 public:
  SharedPool(std::size_t r_max, InitScheme scheme, std::uint64_t master_seed)
      : r_max_(r_max), scheme_(scheme), master_seed_(master_seed) {}

  std::shared_ptr<const SharedMatrices> get(std::size_t m, std::size_t n);
  std::size_t size() const noexcept { return pool_.size(); }
  void clear() noexcept { pool_.clear(); }

 private:
  std::size_t r_max_;
  InitScheme scheme_;
  std::uint64_t master_seed_;
  std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const SharedMatrices>> pool_;
};

/// Frozen linear map, used for unadapted projections.
class FrozenLinear {
 public:
  FrozenLinear(std::string name, Matrix<double> weight) : name_(std::move(name)), weight_(std::move(weight)) {}

  Vector<double> forward(const Vector<double>& x) const { return matvec(weight_, x); }
  Vector<double> backward_input(const Vector<double>& g) const { return matvec_t(weight_, g); }

  const std::string& name() const noexcept { return name_; }
  const Matrix<double>& weight() const noexcept { return weight_; }
  std::size_t out_features() const noexcept { return weight_.rows(); }
  std::size_t in_features() const noexcept { return weight_.cols(); }
  Matrix<double> merge() const { return weight_; }
  std::size_t trainable_params() const noexcept { return 0; }

 private:
  std::string name_;
  Matrix<double> weight_;
};

enum class VeraVariant { Full, OnlyD, OnlyB };

struct VeraCache {
  Vector<double> u;  // A_r x
  Vector<double> w;  // B_r (d ⊙ u)
};

struct VeraForward {
  Vector<double> h;
  VeraCache cache;
};

/// Gradients of one VeRA-family layer. `d` is empty for OnlyB, `b` for OnlyD.
struct VeraGrads {
  Vector<double> d;
  Vector<double> b;
  Vector<double> x;

  VeraGrads& operator+=(const VeraGrads& other);
};

/// h = W0 x + Λ_b B_r Λ_d A_r x, where A_r / B_r are the leading r rows /
/// columns of the shared pair. The ablation variants drop one of the vectors
/// (treated as all-ones).
class VeraLayer {
 public:
  /// Fresh layer: b = 0, d = d_init (Full); d = 0 (OnlyD); b = 0 (OnlyB).
  VeraLayer(std::string name, Matrix<double> w0, std::shared_ptr<const SharedMatrices> shared, std::size_t rank,
            VeraVariant variant = VeraVariant::Full, double d_init = 0.1);

  VeraForward forward(const Vector<double>& x) const;
  VeraGrads backward(const Vector<double>& x, const Vector<double>& g, const VeraCache& cache) const;
  /// Sums per-example gradients in index order.
  VeraGrads backward_batch(std::span<const Vector<double>> xs, std::span<const Vector<double>> gs,
                           std::span<const VeraCache> caches) const;

  /// W0 + diag(b) B_r diag(d) A_r. Does not mutate the layer.
  Matrix<double> merge() const;
  std::size_t trainable_params() const noexcept;

  const std::string& name() const noexcept { return name_; }
  VeraVariant variant() const noexcept { return variant_; }
  std::size_t rank() const noexcept { return rank_; }
  std::size_t out_features() const noexcept { return w0_.rows(); }
  std::size_t in_features() const noexcept { return w0_.cols(); }
  bool has_d() const noexcept { return variant_ != VeraVariant::OnlyB; }
  bool has_b() const noexcept { return variant_ != VeraVariant::OnlyD; }
  const Matrix<double>& base_weight() const noexcept { return w0_; }
  const SharedMatrices& shared() const noexcept { return *shared_; }

  const Vector<double>& d() const noexcept { return d_; }
  const Vector<double>& b() const noexcept { return b_; }
  std::span<double> d_values() noexcept { return d_.span(); }
  std::span<double> b_values() noexcept { return b_.span(); }
  void set_d(Vector<double> d);
  void set_b(Vector<double> b);

 private:
  std::string name_;
  Matrix<double> w0_;
  std::shared_ptr<const SharedMatrices> shared_;
  std::size_t rank_;
  VeraVariant variant_;
  Vector<double> d_;
  Vector<double> b_;
};

VeraForward ablation_forward(const VeraLayer& layer, const Vector<double>& x, VeraVariant variant);

struct LoraCache {
  Vector<double> ax;
};

struct LoraForward {
  Vector<double> h;
  LoraCache cache;
};

struct LoraGrads {
  Matrix<double> A;
  Matrix<double> B;
  Vector<double> x;

  LoraGrads& operator+=(const LoraGrads& other);
};

/// h = W0 x + (alpha / r) B A x with trainable A (r x n) and B (m x r).
class LoraLayer {
 public:
  /// Fresh layer: A drawn from `stream` with fan_in n (row-major), B = 0.
  LoraLayer(std::string name, Matrix<double> w0, std::size_t rank, double alpha, RngStream& stream,
            const InitScheme& scheme = InitScheme::kaiming_uniform());
  LoraLayer(std::string name, Matrix<double> w0, Matrix<double> a, Matrix<double> b, double alpha);

  LoraForward forward(const Vector<double>& x) const;
  LoraGrads backward(const Vector<double>& x, const Vector<double>& g, const LoraCache& cache) const;
  LoraGrads backward_batch(std::span<const Vector<double>> xs, std::span<const Vector<double>> gs,
                           std::span<const LoraCache> caches) const;

  Matrix<double> merge() const;
  std::size_t trainable_params() const noexcept { return A_.size() + B_.size(); }

  const std::string& name() const noexcept { return name_; }
  std::size_t rank() const noexcept { return A_.rows(); }
  double alpha() const noexcept { return alpha_; }
  double scale() const noexcept { return alpha_ / static_cast<double>(rank()); }
  std::size_t out_features() const noexcept { return w0_.rows(); }
  std::size_t in_features() const noexcept { return w0_.cols(); }
  const Matrix<double>& base_weight() const noexcept { return w0_; }
  const Matrix<double>& A() const noexcept { return A_; }
  const Matrix<double>& B() const noexcept { return B_; }
  std::span<double> A_values() noexcept { return A_.span(); }
  std::span<double> B_values() noexcept { return B_.span(); }

 private:
  std::string name_;
  Matrix<double> w0_;
  Matrix<double> A_;
  Matrix<double> B_;
  double alpha_;
};

inline Matrix<double> merge(const VeraLayer& layer) { return layer.merge(); }
inline Matrix<double> merge(const LoraLayer& layer) { return layer.merge(); }
inline std::size_t trainable_params(const VeraLayer& layer) noexcept { return layer.trainable_params(); }
inline std::size_t trainable_params(const LoraLayer& layer) noexcept { return layer.trainable_params(); }

/// A projection slot that is either frozen or wrapped by an adapter.
using AdaptedLinear = std::variant<FrozenLinear, VeraLayer, LoraLayer>;

/// Rounds every entry to the nearest float32 value.
void round_to_f32(std::span<double> values) noexcept;

}  // namespace vera
