#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "vera/accounting.hpp"
#include "vera/harness/experiments.hpp"
#include "vera/harness/gradcheck.hpp"
#include "vera/harness/optimizer.hpp"
#include "vera/harness/train.hpp"

using namespace vera;
using namespace vera::harness;

namespace {

ToyModelConfig toy(Method method, std::size_t rank = 4, std::size_t d_model = 16) {
  ToyModelConfig config;
  config.d_model = d_model;
  config.adapter.method = method;
  config.adapter.rank = rank;
  config.adapter.master_seed = 5;
  return config;
}

std::vector<double> snapshot(ToyModel& model) {
  std::vector<double> out;
  for (const auto& p : model.params()) out.insert(out.end(), p.values.begin(), p.values.end());
  return out;
}

bool bit_equal(const Vector<double>& a, const Vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.span().data(), b.span().data(), a.size() * sizeof(double)) == 0;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("task labels") {
  const auto majority = TaskSpec::majority(5);
  CHECK(label_of(majority, std::vector<std::size_t>{1, 1, 0, 1, 0}) == 1);
  CHECK(label_of(majority, std::vector<std::size_t>{0, 0, 0, 0, 0}) == 0);
  CHECK_THROWS_AS(TaskSpec::majority(10).validate(), InvalidConfig);

  const auto pattern = TaskSpec::pattern_detect();
  std::vector<std::size_t> seq(19, 2);
  CHECK(label_of(pattern, seq) == 0);
  seq[7] = 0;
  seq[8] = 1;
  seq[9] = 2;
  CHECK(label_of(pattern, seq) == 1);
  seq[8] = 0;
  CHECK(label_of(pattern, seq) == 0);
  CHECK(parse_task("pattern") == TaskKind::PatternDetect);
  CHECK_THROWS_AS(parse_task("parity"), InvalidArgument);
}

TEST_CASE("generated batches") {
  for (const auto& task : {TaskSpec::majority(), TaskSpec::pattern_detect()}) {
    RngStream a(1, 1), b(1, 1);
    const auto x = gen_batch(task, 64, a);
    const auto y = gen_batch(task, 64, b);
    CHECK(x.inputs == y.inputs);
    CHECK(a.draws() == 64 * task.seq_len);
    for (std::size_t i = 0; i < x.inputs.size(); ++i) {
      CHECK(x.inputs[i].size() == task.seq_len);
      CHECK(std::ranges::all_of(x.inputs[i], [&](std::size_t t) { return t < task.vocab; }));
      CHECK(x.labels[i] == label_of(task, x.inputs[i]));
    }
  }
}

TEST_CASE("label balance over 10^4 samples") {
  RngStream s(10, 10);
  const auto maj = gen_batch(TaskSpec::majority(), 10000, s);
  const double maj_rate = std::ranges::count(maj.labels, std::size_t{1}) / 10000.0;
  CHECK(std::abs(maj_rate - 0.5) < 0.03);

  // Exact occurrence probability of a 3-gram in 19 uniform ternary tokens,
  // from tests/oracles/pattern_probability.py.
  constexpr double kPatternRate = 0.49951482302733863;
  const auto pat = gen_batch(TaskSpec::pattern_detect(), 10000, s);
  const double pat_rate = std::ranges::count(pat.labels, std::size_t{1}) / 10000.0;
  CHECK(std::abs(pat_rate - kPatternRate) < 0.03);
  CHECK(std::abs(pat_rate - 0.5) < 0.03);
}

TEST_CASE("forward pass structure") {
  const ToyModel model(toy(Method::Vera));
  const std::vector<std::size_t> tokens{0, 1, 1, 0, 1};
  const auto cache = model.forward(tokens);
  CHECK(cache.logits.size() == 2);
  for (const auto& head : cache.blocks[0].probs) {
    for (const auto& row : head) {
      double sum = 0.0;
      for (const double p : row) sum += p;
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
  CHECK_THROWS_AS(model.forward(std::vector<std::size_t>{0, 2}), InvalidArgument);
}

TEST_CASE("fresh adapters leave the logits of the base model unchanged") {
  const ToyModel base(toy(Method::HeadOnly));
  RngStream s(3, 3);
  const auto batch = gen_batch(TaskSpec::majority(), 20, s);
  for (const auto method : {Method::Vera, Method::Lora, Method::OnlyD, Method::OnlyB}) {
    for (const std::size_t blocks : {1u, 2u}) {
      auto config = toy(method);
      config.blocks = blocks;
      auto base_config = toy(Method::HeadOnly);
      base_config.blocks = blocks;
      const ToyModel adapted(config);
      const ToyModel plain(base_config);
      for (const auto& tokens : batch.inputs) CHECK(bit_equal(adapted.logits(tokens), plain.logits(tokens)));
    }
  }
}

TEST_CASE("token order") {
  ToyModel model(toy(Method::Vera));
  RngStream s(4, 4);
  model.randomize_trainable(s, 0.5);
  const std::vector<std::size_t> a{1, 0, 0, 1, 1, 0, 1};
  std::vector<std::size_t> b(a.rbegin(), a.rend());
  std::rotate(b.begin(), b.begin() + 2, b.end());
  const auto la = model.logits(a);
  const auto lb = model.logits(b);
  for (std::size_t c = 0; c < 2; ++c) CHECK(la[c] == doctest::Approx(lb[c]).epsilon(1e-12));

  auto config = toy(Method::Vera);
  config.positional = true;
  ToyModel positional(config);
  RngStream s2(4, 4);
  positional.randomize_trainable(s2, 0.5);
  CHECK(std::abs(positional.logits(a)[0] - positional.logits(b)[0]) > 1e-9);
}

TEST_CASE("batch means equal per-example results") {
  ToyModel model(toy(Method::Lora));
  RngStream s(5, 5);
  model.randomize_trainable(s, 0.3);
  const auto batch = gen_batch(TaskSpec::majority(), 8, s);
  const auto all = model.loss_and_grad(batch);
  double loss = 0.0;
  GradientSet sum = model.zero_grads();
  for (std::size_t i = 0; i < 8; ++i) {
    Batch one{{batch.inputs[i]}, {batch.labels[i]}};
    const auto single = model.loss_and_grad(one);
    CHECK(single.loss == doctest::Approx(model.loss(batch.inputs[i], batch.labels[i])).epsilon(1e-15));
    loss += single.loss;
    for (std::size_t p = 0; p < sum.size(); ++p) {
      for (std::size_t j = 0; j < sum[p].size(); ++j) sum[p][j] += single.grads[p][j];
    }
  }
  CHECK(all.loss == doctest::Approx(loss / 8).epsilon(1e-13));
  for (std::size_t p = 0; p < sum.size(); ++p) {
    for (std::size_t j = 0; j < sum[p].size(); ++j) {
      CHECK(all.grads[p][j] == doctest::Approx(sum[p][j] / 8).epsilon(1e-10));
    }
  }
}

TEST_CASE("model gradients match finite differences") {
  for (const auto method : {Method::Vera, Method::Lora, Method::OnlyD, Method::OnlyB, Method::HeadOnly}) {
    for (const std::size_t blocks : {1u, 2u}) {
      CAPTURE(to_string(method));
      CAPTURE(blocks);
      const auto entries = gradcheck_model(method, 8, blocks, 2, 11, 1e-6, 1e-4);
      CHECK_FALSE(entries.empty());
      for (const auto& e : entries) {
        CAPTURE(e.group);
        CHECK(e.max_rel_error < 1e-4);
      }
    }
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  ToyModel model(toy(Method::Vera));
  RngStream s(6, 6);
  model.randomize_trainable(s, 0.5);
  const auto grads = model.backward_from_logits(model.forward(std::vector<std::size_t>{0, 1, 1}), Vector<double>(2));
  for (const auto& g : grads) CHECK(std::ranges::all_of(g, [](double v) { return v == 0.0; }));
}

TEST_CASE("layer gradcheck grid") {
  GradcheckOptions options;
  options.model_d_model = 0;
  const auto report = gradcheck(options);
  CHECK(report.passed());
  CHECK(report.worst() < 1e-5);
  bool saw_only_b = false;
  for (const auto& e : report.entries) {
    if (e.method == Method::OnlyB) {
      saw_only_b = true;
      CHECK(e.group != "d");
    }
  }
  CHECK(saw_only_b);

  // LoRA A with B = 0: analytic zero equals the finite difference.
  RngStream s(1, 1);
  RngStream init(2, 2);
  LoraLayer layer("probe", Matrix<double>(3, 3), 2, 2.0, init);
  Vector<double> x{1, -2, 0.5}, g{0.3, 0.1, -1};
  const auto grads = layer.backward(x, g, layer.forward(x).cache);
  const auto fd = numeric_gradient(layer.A_values(), [&] { return dot(layer.forward(x).h, g); }, 1e-6);
  CHECK(max_relative_error(grads.A.span(), fd) == 0.0);
}

TEST_CASE("learning-rate schedule") {
  CHECK(lr_multiplier(0, 500, 0.06) == doctest::Approx(1.0 / 30));
  CHECK(lr_multiplier(29, 500, 0.06) == 1.0);
  CHECK(lr_multiplier(30, 500, 0.06) == 1.0);
  CHECK(lr_multiplier(499, 500, 0.06) == doctest::Approx(1.0 / 470));
  CHECK(lr_multiplier(0, 10, 0.0) == 1.0);
}

TEST_CASE("AdamW step") {
  std::vector<double> a{1.0}, h{1.0};
  std::vector<ParamView> params{{"a.d", ParamGroup::Adapter, false, a}, {"head", ParamGroup::Head, true, h}};
  AdamW opt;
  opt.step(params, {{2.0}, {-0.5}}, 0.1, 0.01);
  // First step: bias-corrected m/sqrt(v) = g/|g| up to eps.
  CHECK(a[0] == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  CHECK(h[0] == doctest::Approx(1.0 - 0.01 * (-0.5 / (0.5 + 1e-8) + 0.01)).epsilon(1e-14));
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("weight decay groups") {
  for (const auto method : {Method::Vera, Method::Lora}) {
    ToyModel model(toy(method));
    for (const auto& p : model.params()) {
      CAPTURE(p.name);
      const bool vector = p.name.ends_with(".d") || p.name.ends_with(".b");
      CHECK(p.decay == !vector);
      CHECK((p.group == ParamGroup::Head) == (p.name == "head"));
    }
  }
}

TEST_CASE("training contracts") {
  const auto task = TaskSpec::majority();
  TrainConfig config;
  config.steps = 30;
  config.batch = 8;
  config.eval_every = 10;
  config.eval_size = 64;

  SUBCASE("lr = 0 leaves everything unchanged") {
    TrainConfig frozen = config;
    frozen.lr_adapter = 0.0;
    frozen.lr_head = 0.0;
    ToyModel model(toy(Method::Vera));
    const auto before = snapshot(model);
    const auto report = train(model, task, frozen);
    CHECK(snapshot(model) == before);
    CHECK(report.final_accuracy == report.initial_accuracy);
  }
  SUBCASE("same seeds give bit-identical curves") {
    ToyModel a(toy(Method::Vera)), b(toy(Method::Vera));
    const auto ra = train(a, task, config);
    const auto rb = train(b, task, config);
    REQUIRE(ra.curve.size() == rb.curve.size());
    for (std::size_t i = 1; i < ra.curve.size(); ++i) {
      CHECK(std::memcmp(&ra.curve[i].loss, &rb.curve[i].loss, sizeof(double)) == 0);
    }
    CHECK(snapshot(a) == snapshot(b));
    CHECK(ra.checkpoint.encode() == rb.checkpoint.encode());
  }
  SUBCASE("frozen tensors are untouched") {
    for (const auto method : {Method::Vera, Method::Lora, Method::HeadOnly}) {
      ToyModel model(toy(method));
      const auto fingerprint = model.frozen_fingerprint();
      const auto base = model.export_base();
      train(model, task, config);
      CHECK(model.frozen_fingerprint() == fingerprint);
      const auto after = model.export_base();
      for (const auto& t : base.tensors) {
        if (t.name != "head") CHECK(after.find(t.name)->value == t.value);
      }
    }
  }
  SUBCASE("float32 storage keeps trainables representable") {
    ToyModel model(toy(Method::Vera));
    train(model, task, config);
    for (const auto& p : model.params()) {
      for (const double v : p.values) CHECK(v == static_cast<double>(static_cast<float>(v)));
    }
  }
  SUBCASE("curve CSV") {
    ToyModel model(toy(Method::Vera));
    const auto report = train(model, task, config);
    std::ostringstream out;
    write_curve_csv(out, report);
    const auto rows = lines(out.str());
    CHECK(rows.front() == "step,loss,accuracy");
    CHECK(rows.size() == config.steps + 2);
    CHECK(rows[1].starts_with("0,,"));
  }
  SUBCASE("bad configs") {
    TrainConfig bad = config;
    bad.warmup_ratio = 1.0;
    ToyModel model(toy(Method::Vera));
    CHECK_THROWS_AS(train(model, task, bad), InvalidConfig);
    bad = config;
    bad.lr_head = -1.0;
    CHECK_THROWS_AS(train(model, task, bad), InvalidConfig);
    CHECK_THROWS_AS(train(model, TaskSpec::pattern_detect(), config), InvalidConfig);
  }
  SUBCASE("divergence is reported") {
    TrainConfig wild = config;
    wild.lr_head = 1e300;
    wild.lr_adapter = 1e300;
    ToyModel model(toy(Method::Vera));
    const auto report = train(model, task, wild);
    CHECK(report.diverged);
    CHECK_FALSE(report.error.empty());
  }
}

TEST_CASE("sweep plumbing") {
  SweepOptions options;
  options.methods = {Method::Vera, Method::Lora};
  options.ranks = {1, 2};
  options.seeds = 3;
  options.model.d_model = 8;
  options.train.steps = 5;
  options.train.batch = 4;
  options.train.eval_size = 32;
  const auto result = rank_sweep(options);
  CHECK(result.runs.size() == 2 * 2 * 3);
  CHECK(result.summary.size() == 2 * 2);
  for (const auto& row : result.summary) {
    const ModelShape shape{"toy", 1, 8, 2};
    CHECK(row.params == param_count(row.method, shape, row.rank));
    std::vector<double> accs;
    int flagged = 0;
    for (const auto& run : result.runs) {
      if (run.method == row.method && run.rank == row.rank) {
        accs.push_back(run.accuracy);
        flagged += run.median;
      }
    }
    CHECK(row.median_accuracy == median(accs));
    CHECK(flagged == 1);
  }

  std::ostringstream csv;
  write_sweep_csv(csv, result);
  const auto rows = lines(csv.str());
  CHECK(rows.front() == "method,rank,params,seed,accuracy,median");
  CHECK(rows.size() == 13);

  SweepOptions parallel = options;
  parallel.workers = 3;
  const auto again = rank_sweep(parallel);
  for (std::size_t i = 0; i < result.runs.size(); ++i) CHECK(again.runs[i].accuracy == result.runs[i].accuracy);
}

TEST_CASE("median") {
  CHECK(median({0.7, 0.7, 0.7, 0.7, 0.7}) == 0.7);
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK_THROWS_AS(median({}), InvalidArgument);
}

TEST_CASE("magnitude report") {
  ToyModel fresh(toy(Method::Vera, 4));
  const auto ckpt = capture(fresh.adapted_layers(), fresh.config().adapter);
  const auto rows = magnitude_report(ckpt);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].role == "q");
  CHECK(rows[1].role == "v");
  for (const auto& r : rows) {
    CHECK(r.d_change_norm == 0.0);
    CHECK(r.b_norm == 0.0);
  }

  TrainConfig config;
  config.steps = 20;
  config.batch = 8;
  config.eval_size = 32;
  const auto report = train(fresh, TaskSpec::majority(), config);
  for (const auto& r : magnitude_report(report.checkpoint)) {
    CHECK(std::isfinite(r.d_change_norm));
    CHECK(r.d_change_norm >= 0.0);
    CHECK(r.b_norm > 0.0);
  }

  ToyModel lora(toy(Method::Lora));
  CHECK_THROWS_AS(magnitude_report(capture(lora.adapted_layers(), lora.config().adapter)), UnsupportedMethod);
}
