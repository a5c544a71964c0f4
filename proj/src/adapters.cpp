#include "vera/adapters.hpp"

#include <cmath>

namespace vera {

namespace {

void check_len(std::size_t got, std::size_t want, const char* what) {
  if (got != want) throw DimensionError(std::string(what) + ": length " + std::to_string(got) + ", expected " +
                                        std::to_string(want));
}

// First `rows` rows of M times x.
Vector<double> prefix_rows_matvec(const Matrix<double>& m, std::size_t rows, const Vector<double>& x) {
  Vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto row = m.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
  return out;
}

// (first `rows` rows of M)ᵀ y.
Vector<double> prefix_rows_matvec_t(const Matrix<double>& m, std::size_t rows, const Vector<double>& y) {
  Vector<double> out(m.cols());
  for (std::size_t i = 0; i < rows; ++i) {
    const auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j] * y[i];
  }
  return out;
}

// First `cols` columns of M times v.
Vector<double> prefix_cols_matvec(const Matrix<double>& m, std::size_t cols, const Vector<double>& v) {
  Vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < cols; ++k) acc += m(i, k) * v[k];
    out[i] = acc;
  }
  return out;
}

// (first `cols` columns of M)ᵀ y.
Vector<double> prefix_cols_matvec_t(const Matrix<double>& m, std::size_t cols, const Vector<double>& y) {
  Vector<double> out(cols);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t k = 0; k < cols; ++k) out[k] += m(i, k) * y[i];
  }
  return out;
}

Vector<double> add(const Vector<double>& a, const Vector<double>& b) { return axpy(a, b, 1.0); }

}  // namespace

const char* to_string(Method method) noexcept {
  switch (method) {
    case Method::Vera: return "vera";
    case Method::Lora: return "lora";
    case Method::OnlyD: return "only-d";
    case Method::OnlyB: return "only-b";
    case Method::HeadOnly: return "head-only";
  }
  return "unknown";
}

Method parse_method(const std::string& text) {
  for (const auto m : {Method::Vera, Method::Lora, Method::OnlyD, Method::OnlyB, Method::HeadOnly}) {
    if (text == to_string(m)) return m;
  }
  throw InvalidArgument("unknown method '" + text + "'");
}

bool is_vera_family(Method method) noexcept {
  return method == Method::Vera || method == Method::OnlyD || method == Method::OnlyB;
}

AdapterConfig AdapterConfig::resolved() const {
  AdapterConfig out = *this;
  if (out.rank < 1) throw InvalidConfig("rank must be >= 1");
  if (out.r_max == 0) out.r_max = out.rank;
  if (out.rank > out.r_max) {
    throw InvalidConfig("rank " + std::to_string(out.rank) + " exceeds r_max " + std::to_string(out.r_max));
  }
  out.d_init = static_cast<float>(out.d_init);
  if (!std::isfinite(out.d_init)) throw InvalidConfig("d_init must be finite");
  if (out.lora_alpha == 0.0) out.lora_alpha = static_cast<double>(out.rank);
  if (!std::isfinite(out.lora_alpha) || out.lora_alpha <= 0.0) throw InvalidConfig("lora_alpha must be positive");
  return out;
}

void round_to_f32(std::span<double> values) noexcept {
  for (auto& v : values) v = static_cast<float>(v);
}

std::uint64_t shape_stream_key(std::size_t m, std::size_t n) noexcept {
  return splitmix64((static_cast<std::uint64_t>(m) << 32) + static_cast<std::uint64_t>(n));
}

std::shared_ptr<const SharedMatrices> build_shared(std::size_t m, std::size_t n, std::size_t r_max,
                                                   const InitScheme& scheme, std::uint64_t master_seed) {
  if (m < 1 || n < 1 || r_max < 1) throw InvalidArgument("build_shared: m, n, r_max must be >= 1");
  auto shared = std::make_shared<SharedMatrices>();
  shared->m = m;
  shared->n = n;
  shared->r_max = r_max;
  shared->scheme = scheme;
  shared->master_seed = master_seed;
  shared->stream_key = shape_stream_key(m, n);

  RngStream stream(master_seed, shared->stream_key);
  shared->A = init_matrix(stream, r_max, n, scheme, n, FillOrder::RowMajor);
  shared->B = init_matrix(stream, m, r_max, scheme, r_max, FillOrder::ColMajor);
  round_to_f32(shared->A.span());
  round_to_f32(shared->B.span());
  return shared;
}

std::shared_ptr<const SharedMatrices> SharedPool::get(std::size_t m, std::size_t n) {
  auto& slot = pool_[{m, n}];
  if (!slot) slot = build_shared(m, n, r_max_, scheme_, master_seed_);
  return slot;
}

// ---------------------------------------------------------------------------
// VeRA

VeraGrads& VeraGrads::operator+=(const VeraGrads& other) {
  if (d.size() == 0) d = Vector<double>(other.d.size());
  if (b.size() == 0) b = Vector<double>(other.b.size());
  if (x.size() == 0) x = Vector<double>(other.x.size());
  d = add(d, other.d);
  b = add(b, other.b);
  x = add(x, other.x);
  return *this;
}

VeraLayer::VeraLayer(std::string name, Matrix<double> w0, std::shared_ptr<const SharedMatrices> shared,
                     std::size_t rank, VeraVariant variant, double d_init)
    : name_(std::move(name)), w0_(std::move(w0)), shared_(std::move(shared)), rank_(rank), variant_(variant) {
  if (!shared_) throw InvalidArgument("VeraLayer '" + name_ + "': missing shared matrices");
  if (shared_->m != w0_.rows() || shared_->n != w0_.cols()) {
    throw DimensionError("VeraLayer '" + name_ + "': shared matrices shape does not match W0");
  }
  if (rank_ < 1 || rank_ > shared_->r_max) {
    throw InvalidConfig("VeraLayer '" + name_ + "': rank " + std::to_string(rank_) + " outside [1, r_max=" +
                        std::to_string(shared_->r_max) + "]");
  }
  if (has_d()) d_ = Vector<double>(rank_, variant_ == VeraVariant::OnlyD ? 0.0 : d_init);
  if (has_b()) b_ = Vector<double>(w0_.rows(), 0.0);
}

void VeraLayer::set_d(Vector<double> d) {
  if (!has_d()) throw InvalidArgument("layer '" + name_ + "' has no d vector");
  check_len(d.size(), rank_, "set_d");
  detail::require_finite<double>(d.span(), "d");
  d_ = std::move(d);
}

void VeraLayer::set_b(Vector<double> b) {
  if (!has_b()) throw InvalidArgument("layer '" + name_ + "' has no b vector");
  check_len(b.size(), w0_.rows(), "set_b");
  detail::require_finite<double>(b.span(), "b");
  b_ = std::move(b);
}

VeraForward VeraLayer::forward(const Vector<double>& x) const {
  check_len(x.size(), in_features(), "vera forward input");
  VeraForward out;
  out.cache.u = prefix_rows_matvec(shared_->A, rank_, x);
  const Vector<double> v = has_d() ? hadamard(d_, out.cache.u) : out.cache.u;
  out.cache.w = prefix_cols_matvec(shared_->B, rank_, v);
  const Vector<double> update = has_b() ? hadamard(b_, out.cache.w) : out.cache.w;
  out.h = add(matvec(w0_, x), update);
  return out;
}

VeraGrads VeraLayer::backward(const Vector<double>& x, const Vector<double>& g, const VeraCache& cache) const {
  check_len(x.size(), in_features(), "vera backward input");
  check_len(g.size(), out_features(), "vera backward upstream gradient");
  check_len(cache.u.size(), rank_, "vera cache u");
  check_len(cache.w.size(), out_features(), "vera cache w");

  VeraGrads grads;
  if (has_b()) grads.b = hadamard(g, cache.w);
  const Vector<double> gw = has_b() ? hadamard(g, b_) : g;
  const Vector<double> gv = prefix_cols_matvec_t(shared_->B, rank_, gw);
  if (has_d()) grads.d = hadamard(gv, cache.u);
  const Vector<double> gu = has_d() ? hadamard(d_, gv) : gv;
  grads.x = add(matvec_t(w0_, g), prefix_rows_matvec_t(shared_->A, rank_, gu));
  return grads;
}

VeraGrads VeraLayer::backward_batch(std::span<const Vector<double>> xs, std::span<const Vector<double>> gs,
                                    std::span<const VeraCache> caches) const {
  if (xs.size() != gs.size() || xs.size() != caches.size()) {
    throw DimensionError("vera backward_batch: batch sizes differ");
  }
  VeraGrads total;
  if (has_d()) total.d = Vector<double>(rank_);
  if (has_b()) total.b = Vector<double>(out_features());
  total.x = Vector<double>(in_features());
  for (std::size_t i = 0; i < xs.size(); ++i) total += backward(xs[i], gs[i], caches[i]);
  return total;
}

Matrix<double> VeraLayer::merge() const {
  const auto& A = shared_->A;
  const auto& B = shared_->B;
  Matrix<double> merged = w0_;
  const std::size_t m = out_features();
  const std::size_t n = in_features();
  for (std::size_t i = 0; i < m; ++i) {
    const double bi = has_b() ? b_[i] : 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < rank_; ++k) acc += B(i, k) * (has_d() ? d_[k] : 1.0) * A(k, j);
      if (const double delta = bi * acc; delta != 0.0) merged(i, j) += delta;
    }
  }
  return merged;
}

std::size_t VeraLayer::trainable_params() const noexcept { return d_.size() + b_.size(); }

VeraForward ablation_forward(const VeraLayer& layer, const Vector<double>& x, VeraVariant variant) {
  if (layer.variant() != variant) throw InvalidArgument("ablation_forward: layer variant does not match request");
  return layer.forward(x);
}

// ---------------------------------------------------------------------------
// LoRA

LoraGrads& LoraGrads::operator+=(const LoraGrads& other) {
  if (A.size() == 0) A = Matrix<double>(other.A.rows(), other.A.cols());
  if (B.size() == 0) B = Matrix<double>(other.B.rows(), other.B.cols());
  if (x.size() == 0) x = Vector<double>(other.x.size());
  detail::require(A.size() == other.A.size(), "LoraGrads A", A.size(), other.A.size());
  detail::require(B.size() == other.B.size(), "LoraGrads B", B.size(), other.B.size());
  for (std::size_t i = 0; i < A.size(); ++i) A.span()[i] += other.A.span()[i];
  for (std::size_t i = 0; i < B.size(); ++i) B.span()[i] += other.B.span()[i];
  x = add(x, other.x);
  return *this;
}

LoraLayer::LoraLayer(std::string name, Matrix<double> w0, std::size_t rank, double alpha, RngStream& stream,
                     const InitScheme& scheme)
    : name_(std::move(name)), w0_(std::move(w0)), alpha_(alpha) {
  if (rank < 1) throw InvalidConfig("LoraLayer '" + name_ + "': rank must be >= 1");
  if (!(alpha > 0.0)) throw InvalidConfig("LoraLayer '" + name_ + "': alpha must be positive");
  A_ = init_matrix(stream, rank, w0_.cols(), scheme, w0_.cols(), FillOrder::RowMajor);
  round_to_f32(A_.span());
  B_ = Matrix<double>(w0_.rows(), rank);
}

LoraLayer::LoraLayer(std::string name, Matrix<double> w0, Matrix<double> a, Matrix<double> b, double alpha)
    : name_(std::move(name)), w0_(std::move(w0)), A_(std::move(a)), B_(std::move(b)), alpha_(alpha) {
  if (A_.rows() < 1) throw InvalidConfig("LoraLayer '" + name_ + "': rank must be >= 1");
  if (A_.cols() != w0_.cols() || B_.rows() != w0_.rows() || B_.cols() != A_.rows()) {
    throw DimensionError("LoraLayer '" + name_ + "': A/B shapes inconsistent with W0");
  }
  if (!(alpha > 0.0)) throw InvalidConfig("LoraLayer '" + name_ + "': alpha must be positive");
}

LoraForward LoraLayer::forward(const Vector<double>& x) const {
  check_len(x.size(), in_features(), "lora forward input");
  LoraForward out;
  out.cache.ax = matvec(A_, x);
  const Vector<double> update = matvec(B_, out.cache.ax);
  out.h = axpy(matvec(w0_, x), update, scale());
  return out;
}

LoraGrads LoraLayer::backward(const Vector<double>& x, const Vector<double>& g, const LoraCache& cache) const {
  check_len(x.size(), in_features(), "lora backward input");
  check_len(g.size(), out_features(), "lora backward upstream gradient");
  check_len(cache.ax.size(), rank(), "lora cache");

  const double s = scale();
  LoraGrads grads;
  grads.B = Matrix<double>(B_.rows(), B_.cols());
  outer_accumulate(grads.B, g, cache.ax, s);
  const Vector<double> btg = matvec_t(B_, g);
  grads.A = Matrix<double>(A_.rows(), A_.cols());
  outer_accumulate(grads.A, btg, x, s);
  grads.x = axpy(matvec_t(w0_, g), matvec_t(A_, btg), s);
  return grads;
}

LoraGrads LoraLayer::backward_batch(std::span<const Vector<double>> xs, std::span<const Vector<double>> gs,
                                    std::span<const LoraCache> caches) const {
  if (xs.size() != gs.size() || xs.size() != caches.size()) {
    throw DimensionError("lora backward_batch: batch sizes differ");
  }
  LoraGrads total{Matrix<double>(A_.rows(), A_.cols()), Matrix<double>(B_.rows(), B_.cols()),
                  Vector<double>(in_features())};
  for (std::size_t i = 0; i < xs.size(); ++i) total += backward(xs[i], gs[i], caches[i]);
  return total;
}

Matrix<double> LoraLayer::merge() const {
  Matrix<double> merged = w0_;
  const double s = scale();
  for (std::size_t i = 0; i < merged.rows(); ++i) {
    for (std::size_t j = 0; j < merged.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < rank(); ++k) acc += B_(i, k) * A_(k, j);
      if (const double delta = s * acc; delta != 0.0) merged(i, j) += delta;
    }
  }
  return merged;
}

}  // namespace vera
