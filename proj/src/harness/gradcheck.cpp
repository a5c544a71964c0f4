#include "vera/harness/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vera/harness/toy_model.hpp"

namespace vera::harness {

namespace {

Vector<double> random_vector(RngStream& stream, std::size_t len) {
  Vector<double> v(len);
  for (auto& x : v) x = stream.normal(0.0, 1.0);
  return v;
}

Matrix<double> random_matrix(RngStream& stream, std::size_t rows, std::size_t cols, double std = 1.0) {
  Matrix<double> m(rows, cols);
  for (auto& x : m.span()) x = stream.normal(0.0, std);
  return m;
}

GradcheckEntry entry(const char* scope, Method method, std::size_t m, std::size_t n, std::size_t rank,
                     std::string group, std::span<const double> analytic, std::span<const double> numeric,
                     double tolerance) {
  GradcheckEntry e{scope, method, m, n, rank, std::move(group), max_relative_error(analytic, numeric), false};
  e.passed = e.max_rel_error < tolerance;
  return e;
}

VeraVariant variant_of(Method method) {
  if (method == Method::OnlyD) return VeraVariant::OnlyD;
  if (method == Method::OnlyB) return VeraVariant::OnlyB;
  return VeraVariant::Full;
}

}  // namespace

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double f = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(f), kGradFloor});
    worst = std::max(worst, std::abs(a - f) / denom);
  }
  return worst;
}

std::vector<double> numeric_gradient(std::span<double> values, const std::function<double()>& loss, double step) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = loss();
    values[i] = saved - step;
    const double down = loss();
    values[i] = saved;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

bool GradcheckReport::passed() const {
  return std::ranges::all_of(entries, [](const auto& e) { return e.passed; });
}

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

std::vector<GradcheckEntry> gradcheck_layer(Method method, std::size_t m, std::size_t n, std::size_t rank,
                                            std::uint64_t seed, double step, double tolerance) {
  RngStream stream(seed, (static_cast<std::uint64_t>(m) << 40) ^ (static_cast<std::uint64_t>(n) << 20) ^ rank ^
                             (static_cast<std::uint64_t>(method) << 60));
  Matrix<double> w0 = random_matrix(stream, m, n, 1.0 / std::sqrt(static_cast<double>(n)));
  Vector<double> x = random_vector(stream, n);
  const Vector<double> g = random_vector(stream, m);
  std::vector<GradcheckEntry> out;

  if (is_vera_family(method)) {
    VeraLayer layer("probe", std::move(w0), build_shared(m, n, rank, InitScheme::kaiming_uniform(), seed), rank,
                    variant_of(method));
    if (layer.has_d()) layer.set_d(random_vector(stream, rank));
    if (layer.has_b()) layer.set_b(random_vector(stream, m));
    auto loss = [&] { return dot(g, layer.forward(x).h); };
    const auto grads = layer.backward(x, g, layer.forward(x).cache);
    if (layer.has_d()) {
      out.push_back(entry("layer", method, m, n, rank, "d", grads.d.span(),
                          numeric_gradient(layer.d_values(), loss, step), tolerance));
    }
    if (layer.has_b()) {
      out.push_back(entry("layer", method, m, n, rank, "b", grads.b.span(),
                          numeric_gradient(layer.b_values(), loss, step), tolerance));
    }
    out.push_back(
        entry("layer", method, m, n, rank, "x", grads.x.span(), numeric_gradient(x.span(), loss, step), tolerance));
  } else if (method == Method::Lora) {
    LoraLayer layer("probe", std::move(w0), random_matrix(stream, rank, n), random_matrix(stream, m, rank),
                    static_cast<double>(rank));
    auto loss = [&] { return dot(g, layer.forward(x).h); };
    const auto grads = layer.backward(x, g, layer.forward(x).cache);
    out.push_back(entry("layer", method, m, n, rank, "A", grads.A.span(),
                        numeric_gradient(layer.A_values(), loss, step), tolerance));
    out.push_back(entry("layer", method, m, n, rank, "B", grads.B.span(),
                        numeric_gradient(layer.B_values(), loss, step), tolerance));
    out.push_back(
        entry("layer", method, m, n, rank, "x", grads.x.span(), numeric_gradient(x.span(), loss, step), tolerance));
  } else {
    throw InvalidArgument(std::string("gradcheck_layer: no adapter layer for method ") + to_string(method));
  }
  return out;
}

std::vector<GradcheckEntry> gradcheck_model(Method method, std::size_t d_model, std::size_t blocks, std::size_t rank,
                                            std::uint64_t seed, double step, double tolerance) {
  ToyModelConfig config;
  config.vocab = 3;
  config.d_model = d_model;
  config.heads = 2;
  config.blocks = blocks;
  config.base_seed = seed;
  config.precision = Precision::Float64;
  config.adapter.method = method;
  config.adapter.rank = rank;
  config.adapter.master_seed = seed;
  ToyModel model(config);

  RngStream stream(seed, 0x6D6F64656CULL);
  model.randomize_trainable(stream, 0.5);
  const Tokens tokens{0, 2, 1, 1, 0};
  const std::size_t label = 1;

  const auto analytic = model.backward(model.forward(tokens), label);
  auto params = model.params();
  auto loss = [&] { return model.loss(tokens, label); };
  std::vector<GradcheckEntry> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(entry("model", method, d_model, d_model, rank, params[i].name, analytic[i],
                        numeric_gradient(params[i].values, loss, step), tolerance));
  }
  return out;
}

GradcheckReport gradcheck(const GradcheckOptions& options) {
  GradcheckReport report;
  report.tolerance = options.tolerance;
  for (const Method method : options.methods) {
    for (const std::size_t m : options.dims) {
      for (const std::size_t n : options.dims) {
        for (const std::size_t r : options.ranks) {
          auto entries = gradcheck_layer(method, m, n, r, options.seed, options.step, options.tolerance);
          report.entries.insert(report.entries.end(), entries.begin(), entries.end());
        }
      }
    }
  }
  if (options.model_d_model > 0) {
    std::vector<Method> model_methods = options.methods;
    model_methods.push_back(Method::HeadOnly);
    for (const Method method : model_methods) {
      auto entries = gradcheck_model(method, options.model_d_model, options.model_blocks, 2, options.seed,
                                     options.step, options.tolerance);
      report.entries.insert(report.entries.end(), entries.begin(), entries.end());
    }
  }
  return report;
}

void write_gradcheck_csv(std::ostream& out, const GradcheckReport& report) {
  out << "scope,method,m,n,rank,group,max_rel_error,passed\n";
  for (const auto& e : report.entries) {
    out << e.scope << ',' << to_string(e.method) << ',' << e.m << ',' << e.n << ',' << e.rank << ',' << e.group
        << ',' << e.max_rel_error << ',' << (e.passed ? "true" : "false") << '\n';
  }
}

}  // namespace vera::harness
