#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <vector>

#include "doctest.h"
#include "vera/adapters.hpp"

using namespace vera;

namespace {

Vector<double> random_vector(RngStream& s, std::size_t len, double scale = 1.0) {
  Vector<double> v(len);
  for (std::size_t i = 0; i < len; ++i) v[i] = s.normal(0.0, scale);
  return v;
}

Matrix<double> random_matrix(RngStream& s, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix<double> m(rows, cols);
  for (auto& x : m.span()) x = s.normal(0.0, scale);
  return m;
}

// Shared pair with hand-chosen A and B.
std::shared_ptr<const SharedMatrices> fixed_shared(Matrix<double> a, Matrix<double> b) {
  auto s = std::make_shared<SharedMatrices>();
  s->m = b.rows();
  s->n = a.cols();
  s->r_max = a.rows();
  s->A = std::move(a);
  s->B = std::move(b);
  return s;
}

bool bit_equal(const Vector<double>& a, const Vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.span().data(), b.span().data(), a.size() * sizeof(double)) == 0;
}

// Dense ΔW = diag(b) B_r diag(d) A_r, built entry by entry.
Matrix<double> dense_delta(const Matrix<double>& A, const Matrix<double>& B, const Vector<double>& d,
                           const Vector<double>& b, std::size_t r) {
  Matrix<double> out(B.rows(), A.cols());
  for (std::size_t i = 0; i < B.rows(); ++i) {
    for (std::size_t j = 0; j < A.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < r; ++k) acc += b[i] * B(i, k) * d[k] * A(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

double central_difference(std::span<double> values, std::size_t i, const std::function<double()>& loss) {
  const double saved = values[i];
  values[i] = saved + 1e-6;
  const double up = loss();
  values[i] = saved - 1e-6;
  const double down = loss();
  values[i] = saved;
  return (up - down) / 2e-6;
}

double rel_diff(const Vector<double>& a, const Vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace

TEST_CASE("worked VeRA example") {
  VeraLayer layer("probe", Matrix<double>::identity(2), fixed_shared(Matrix<double>{{1, 1}}, Matrix<double>{{1}, {1}}),
                  1);
  layer.set_d(Vector<double>{2});
  layer.set_b(Vector<double>{1, 1});
  const Vector<double> x{1, 2};
  const auto fwd = layer.forward(x);
  CHECK(fwd.cache.u == Vector<double>{3});
  CHECK(fwd.cache.w == Vector<double>{6, 6});
  CHECK(fwd.h == Vector<double>{7, 8});

  // Brute-force dense ΔW agrees.
  const auto delta = dense_delta(layer.shared().A, layer.shared().B, layer.d(), layer.b(), 1);
  const auto dense_h = axpy(x, matvec(delta, x));
  CHECK(dense_h == fwd.h);

  const auto merged = layer.merge();
  CHECK(merged == Matrix<double>{{3, 2}, {2, 3}});
  CHECK(matvec(merged, x) == fwd.h);

  const Vector<double> g{1, 0};
  const auto grads = layer.backward(x, g, fwd.cache);
  CHECK(grads.b == Vector<double>{6, 0});
  CHECK(grads.d == Vector<double>{3});
  CHECK(grads.x == Vector<double>{3, 2});

  // Finite-difference oracle on L = h·g.
  auto loss = [&] { return dot(layer.forward(x).h, g); };
  CHECK(central_difference(layer.b_values(), 0, loss) == doctest::Approx(6.0).epsilon(1e-8));
  CHECK(central_difference(layer.b_values(), 1, loss) == doctest::Approx(0.0));
  CHECK(central_difference(layer.d_values(), 0, loss) == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("VeRA gradient edge cases") {
  RngStream s(1, 1);
  VeraLayer layer("probe", random_matrix(s, 5, 4), build_shared(5, 4, 3, InitScheme::kaiming_uniform(), 9), 3);
  const auto x = random_vector(s, 4);
  SUBCASE("b = 0 gives zero grad_d") {
    const auto fwd = layer.forward(x);
    const auto grads = layer.backward(x, random_vector(s, 5), fwd.cache);
    CHECK(grads.d == Vector<double>(3, 0.0));
  }
  SUBCASE("g = 0 gives zero gradients") {
    layer.set_b(random_vector(s, 5));
    const auto grads = layer.backward(x, Vector<double>(5), layer.forward(x).cache);
    CHECK(grads.d == Vector<double>(3, 0.0));
    CHECK(grads.b == Vector<double>(5, 0.0));
    CHECK(grads.x == Vector<double>(4, 0.0));
  }
  SUBCASE("d = 0 gives h = W0 x") {
    layer.set_b(random_vector(s, 5));
    layer.set_d(Vector<double>(3, 0.0));
    CHECK(bit_equal(layer.forward(x).h, matvec(layer.base_weight(), x)));
  }
  SUBCASE("batched backward sums per-example gradients") {
    layer.set_b(random_vector(s, 5));
    std::vector<Vector<double>> xs, gs;
    std::vector<VeraCache> caches;
    VeraGrads total{Vector<double>(3), Vector<double>(5), Vector<double>()};
    for (int i = 0; i < 4; ++i) {
      xs.push_back(random_vector(s, 4));
      gs.push_back(random_vector(s, 5));
      caches.push_back(layer.forward(xs.back()).cache);
      const auto one = layer.backward(xs.back(), gs.back(), caches.back());
      for (std::size_t k = 0; k < 3; ++k) total.d[k] += one.d[k];
      for (std::size_t k = 0; k < 5; ++k) total.b[k] += one.b[k];
    }
    const auto batch = layer.backward_batch(xs, gs, caches);
    for (std::size_t k = 0; k < 3; ++k) CHECK(batch.d[k] == doctest::Approx(total.d[k]).epsilon(1e-14));
    for (std::size_t k = 0; k < 5; ++k) CHECK(batch.b[k] == doctest::Approx(total.b[k]).epsilon(1e-14));
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(layer.forward(Vector<double>(3)), DimensionError);
    CHECK_THROWS_AS(layer.backward(x, Vector<double>(4), layer.forward(x).cache), DimensionError);
    CHECK_THROWS_AS(layer.set_b(Vector<double>(4)), DimensionError);
  }
}

TEST_CASE("worked LoRA example") {
  LoraLayer layer("probe", Matrix<double>::identity(2), Matrix<double>{{1, 1}}, Matrix<double>{{1}, {1}}, 1.0);
  const Vector<double> x{1, 2};
  CHECK(layer.forward(x).h == Vector<double>{4, 5});
  CHECK(layer.merge() == Matrix<double>{{2, 1}, {1, 2}});

  LoraLayer doubled("probe", Matrix<double>::identity(2), Matrix<double>{{1, 1}}, Matrix<double>{{1}, {1}}, 2.0);
  CHECK(doubled.forward(x).h == Vector<double>{7, 8});

  const auto grads = layer.backward(x, Vector<double>{1, 0}, layer.forward(x).cache);
  CHECK(grads.B == Matrix<double>{{3}, {0}});
  CHECK(grads.A == Matrix<double>{{1, 2}});
  CHECK(grads.x == Vector<double>{2, 1});
}

TEST_CASE("LoRA gradients") {
  RngStream s(2, 2);
  SUBCASE("B = 0 gives zero grad_A and finite differences agree") {
    RngStream init(3, 3);
    LoraLayer layer("probe", random_matrix(s, 3, 4), 2, 2.0, init);
    const auto x = random_vector(s, 4);
    const auto g = random_vector(s, 3);
    const auto grads = layer.backward(x, g, layer.forward(x).cache);
    CHECK(grads.A == Matrix<double>(2, 4));
    auto loss = [&] { return dot(layer.forward(x).h, g); };
    for (std::size_t i = 0; i < grads.A.size(); ++i) {
      CHECK(std::abs(central_difference(layer.A_values(), i, loss)) < 1e-9);
    }
  }
  SUBCASE("g = 0 gives zeros") {
    LoraLayer layer("probe", random_matrix(s, 3, 4), random_matrix(s, 2, 4), random_matrix(s, 3, 2), 2.0);
    const auto x = random_vector(s, 4);
    const auto grads = layer.backward(x, Vector<double>(3), layer.forward(x).cache);
    CHECK(grads.A == Matrix<double>(2, 4));
    CHECK(grads.B == Matrix<double>(3, 2));
    CHECK(grads.x == Vector<double>(4));
  }
  SUBCASE("tiny case vs finite differences") {
    LoraLayer layer("probe", random_matrix(s, 3, 4), random_matrix(s, 2, 4), random_matrix(s, 3, 2), 3.0);
    const auto x = random_vector(s, 4);
    const auto g = random_vector(s, 3);
    const auto grads = layer.backward(x, g, layer.forward(x).cache);
    auto loss = [&] { return dot(layer.forward(x).h, g); };
    for (std::size_t i = 0; i < grads.A.size(); ++i) {
      const double fd = central_difference(layer.A_values(), i, loss);
      CHECK(std::abs(grads.A.span()[i] - fd) <= 1e-5 * std::max({std::abs(fd), std::abs(grads.A.span()[i]), 1e-3}));
    }
    for (std::size_t i = 0; i < grads.B.size(); ++i) {
      const double fd = central_difference(layer.B_values(), i, loss);
      CHECK(std::abs(grads.B.span()[i] - fd) <= 1e-5 * std::max({std::abs(fd), std::abs(grads.B.span()[i]), 1e-3}));
    }
  }
}

TEST_CASE("fresh layers are the identity on W0 x, bit for bit") {
  RngStream s(4, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + static_cast<std::size_t>(s.uniform(0, 12));
    const std::size_t n = 1 + static_cast<std::size_t>(s.uniform(0, 12));
    const std::size_t r = 1 + static_cast<std::size_t>(s.uniform(0, 6));
    const auto w0 = random_matrix(s, m, n);
    const auto x = random_vector(s, n);
    const auto want = matvec(w0, x);
    auto shared = build_shared(m, n, r, InitScheme::kaiming_uniform(), 77);
    for (const auto variant : {VeraVariant::Full, VeraVariant::OnlyD, VeraVariant::OnlyB}) {
      VeraLayer layer("probe", w0, shared, r, variant);
      CHECK(bit_equal(layer.forward(x).h, want));
      CHECK(layer.merge() == w0);
    }
    RngStream init(5, static_cast<std::uint64_t>(trial));
    LoraLayer lora("probe", w0, r, static_cast<double>(r), init);
    CHECK(bit_equal(lora.forward(x).h, want));
    CHECK(lora.merge() == w0);
  }
}

TEST_CASE("ablation variants") {
  RngStream s(6, 6);
  const std::size_t m = 6, n = 5, r = 3;
  auto shared = build_shared(m, n, r, InitScheme::kaiming_uniform(), 1);
  const auto w0 = random_matrix(s, m, n);
  const auto x = random_vector(s, n);

  VeraLayer only_d("probe", w0, shared, r, VeraVariant::OnlyD);
  VeraLayer only_b("probe", w0, shared, r, VeraVariant::OnlyB);
  CHECK(only_d.d() == Vector<double>(r, 0.0));
  CHECK(only_d.b().size() == 0);
  CHECK(only_b.b() == Vector<double>(m, 0.0));
  CHECK(only_b.d().size() == 0);
  CHECK(only_d.trainable_params() == r);
  CHECK(only_b.trainable_params() == m);

  only_b.set_b(Vector<double>(m, 1.0));
  VeraLayer full("probe", w0, shared, r, VeraVariant::Full, 1.0);
  full.set_b(Vector<double>(m, 1.0));
  const auto hb = ablation_forward(only_b, x, VeraVariant::OnlyB).h;
  const auto hf = full.forward(x).h;
  for (std::size_t i = 0; i < m; ++i) CHECK(hb[i] == doctest::Approx(hf[i]).epsilon(1e-14));

  const auto gb = only_b.backward(x, random_vector(s, m), only_b.forward(x).cache);
  CHECK(gb.d.size() == 0);
  CHECK(gb.b.size() == m);
  CHECK_THROWS_AS(ablation_forward(only_b, x, VeraVariant::OnlyD), InvalidArgument);
}

TEST_CASE("merge equivalence on random trained layers") {
  RngStream s(7, 7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + static_cast<std::size_t>(s.uniform(0, 16));
    const std::size_t n = 1 + static_cast<std::size_t>(s.uniform(0, 16));
    const std::size_t r = 1 + static_cast<std::size_t>(s.uniform(0, 8));
    const auto w0 = random_matrix(s, m, n);
    const auto x = random_vector(s, n);

    VeraLayer vera("probe", w0, build_shared(m, n, r, InitScheme::kaiming_normal(), 3), r);
    vera.set_d(random_vector(s, r));
    vera.set_b(random_vector(s, m));
    CHECK(rel_diff(matvec(vera.merge(), x), vera.forward(x).h) <= 1e-12);

    LoraLayer lora("probe", w0, random_matrix(s, r, n), random_matrix(s, m, r), 2.0 * static_cast<double>(r));
    CHECK(rel_diff(matvec(lora.merge(), x), lora.forward(x).h) <= 1e-12);
  }
}

TEST_CASE("shared matrices") {
  SUBCASE("deterministic and float32-representable") {
    const auto a = build_shared(8, 6, 4, InitScheme::kaiming_uniform(), 42);
    const auto b = build_shared(8, 6, 4, InitScheme::kaiming_uniform(), 42);
    CHECK(a->A == b->A);
    CHECK(a->B == b->B);
    CHECK(a->A.rows() == 4);
    CHECK(a->A.cols() == 6);
    CHECK(a->B.rows() == 8);
    CHECK(a->B.cols() == 4);
    CHECK(a->stream_key == splitmix64((std::uint64_t{8} << 32) + 6));
    for (const double v : a->A.span()) CHECK(v == static_cast<double>(static_cast<float>(v)));
    for (const double v : a->A.span()) CHECK(std::abs(v) < std::sqrt(6.0 / 6.0));
    for (const double v : a->B.span()) CHECK(std::abs(v) < std::sqrt(6.0 / 4.0));
  }
  SUBCASE("A at a smaller r_max is a row prefix") {
    const auto big = build_shared(5, 7, 8, InitScheme::kaiming_uniform(), 1);
    const auto small = build_shared(5, 7, 3, InitScheme::kaiming_uniform(), 1);
    CHECK(slice_rows(big->A, 3) == small->A);
    CHECK(slice_rows(big->A, 8) == big->A);
  }
  SUBCASE("rank nesting over one pair") {
    RngStream s(8, 8);
    const auto shared = build_shared(5, 7, 8, InitScheme::kaiming_uniform(), 1);
    const auto w0 = random_matrix(s, 5, 7);
    const auto x = random_vector(s, 7);
    const auto u2 = VeraLayer("a", w0, shared, 2).forward(x).cache.u;
    const auto u6 = VeraLayer("b", w0, shared, 6).forward(x).cache.u;
    for (std::size_t k = 0; k < 2; ++k) CHECK(u2[k] == u6[k]);
  }
  SUBCASE("regeneration gives bit-identical merges") {
    RngStream s(9, 9);
    const auto w0 = random_matrix(s, 6, 6);
    VeraLayer layer("probe", w0, build_shared(6, 6, 4, InitScheme::kaiming_normal(), 5), 4);
    layer.set_d(random_vector(s, 4));
    layer.set_b(random_vector(s, 6));
    const auto merged = layer.merge();

    VeraLayer rebuilt("probe", w0, build_shared(6, 6, 4, InitScheme::kaiming_normal(), 5), 4);
    rebuilt.set_d(layer.d());
    rebuilt.set_b(layer.b());
    CHECK(rebuilt.merge() == merged);
  }
  SUBCASE("pool shares one pair per shape") {
    SharedPool pool(4, InitScheme::kaiming_uniform(), 3);
    const auto a = pool.get(8, 8);
    CHECK(pool.get(8, 8) == a);
    CHECK(pool.get(8, 4) != a);
    CHECK(pool.size() == 2);
  }
  SUBCASE("rank above r_max is rejected") {
    CHECK_THROWS_AS(VeraLayer("probe", Matrix<double>(4, 4), build_shared(4, 4, 2, InitScheme::kaiming_uniform(), 0),
                              3),
                    InvalidConfig);
    AdapterConfig config;
    config.rank = 5;
    config.r_max = 4;
    CHECK_THROWS_AS(config.resolved(), InvalidConfig);
  }
}

TEST_CASE("trainable parameter counts") {
  const auto shared = build_shared(768, 768, 16, InitScheme::kaiming_uniform(), 0);
  const Matrix<double> w0(768, 768);
  VeraLayer vera("probe", w0, shared, 16);
  CHECK(vera.trainable_params() == 784);
  CHECK(vera.trainable_params() == vera.d().size() + vera.b().size());

  RngStream init(0, 0);
  LoraLayer lora("probe", w0, 1, 1.0, init);
  CHECK(lora.trainable_params() == 1536);
  CHECK(lora.trainable_params() == lora.A().size() + lora.B().size());

  VeraLayer only_d("probe", Matrix<double>(8, 8), build_shared(8, 8, 4, InitScheme::kaiming_uniform(), 0), 4,
                   VeraVariant::OnlyD);
  CHECK(only_d.trainable_params() == 4);
}

TEST_CASE("method names") {
  for (const auto m : {Method::Vera, Method::Lora, Method::OnlyD, Method::OnlyB, Method::HeadOnly}) {
    CHECK(parse_method(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_method("adapter"), InvalidArgument);
  CHECK(is_vera_family(Method::OnlyB));
  CHECK_FALSE(is_vera_family(Method::Lora));
}
