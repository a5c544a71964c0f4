// Command-line front end: plan, table1, train, sweep, gradcheck, merge,
// inspect, magnitude.
//
// Exit codes: 0 ok, 1 usage, 2 validation, 3 failed check.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vera/accounting.hpp"
#include "vera/checkpoint.hpp"
#include "vera/errors.hpp"
#include "vera/harness/experiments.hpp"
#include "vera/harness/gradcheck.hpp"
#include "vera/harness/train.hpp"

namespace {

using nlohmann::json;
using namespace vera;
using namespace vera::harness;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitCheckFailed = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw UsageError("empty list '" + text + "'");
  return out;
}

std::vector<Method> methods_flag(const std::string& text) {
  std::vector<Method> out;
  for (const auto& item : split_list(text)) {
    try {
      out.push_back(parse_method(item));
    } catch (const Error&) {
      throw UsageError("unknown method '" + item + "'");
    }
  }
  return out;
}

std::vector<std::size_t> ranks_flag(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) {
    std::size_t pos = 0;
    unsigned long long value = 0;
    try {
      value = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || value == 0) throw UsageError("rank '" + item + "' is not a positive integer");
    out.push_back(static_cast<std::size_t>(value));
  }
  return out;
}

TaskSpec task_flag(const std::string& text, std::size_t seq_len) {
  TaskSpec task;
  try {
    task = parse_task(text) == TaskKind::MajorityToken ? TaskSpec::majority() : TaskSpec::pattern_detect();
  } catch (const Error&) {
    throw UsageError("unknown task '" + text + "'");
  }
  if (seq_len > 0) task.seq_len = seq_len;
  task.validate();
  return task;
}

InitScheme scheme_flag(const std::string& text) {
  try {
    return parse_init_scheme(text);
  } catch (const Error&) {
    throw UsageError("unknown init scheme '" + text + "'");
  }
}

void print_config(const json& config) { std::cerr << "# config " << config.dump() << '\n'; }

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

// Writes to `path`, or to stdout when the path is empty or "-".
void emit(const std::string& path, const std::function<void(std::ostream&)>& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  auto out = open_output(path);
  write(out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::string fixed(double value, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << value;
  return os.str();
}

// Left-aligned text table.
void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out << cells[c];
      if (c + 1 < cells.size()) out << std::string(width[c] - cells[c].size() + 2, ' ');
    }
    out << '\n';
  };
  line(header);
  for (const auto& row : rows) line(row);
}

void print_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out << (c ? "," : "") << cells[c];
    out << '\n';
  };
  line(header);
  for (const auto& row : rows) line(row);
}

json adapter_json(const AdapterConfig& config) {
  return {{"method", to_string(config.method)},
          {"rank", config.rank},
          {"r_max", config.r_max},
          {"init_scheme", to_string(config.init_scheme)},
          {"d_init", config.d_init},
          {"lora_alpha", config.lora_alpha},
          {"master_seed", config.master_seed}};
}

json model_json(const ToyModelConfig& config) {
  return {{"vocab", config.vocab},
          {"classes", config.classes},
          {"d_model", config.d_model},
          {"heads", config.heads},
          {"blocks", config.blocks},
          {"base_seed", config.base_seed},
          {"positional", config.positional},
          {"precision", config.precision == Precision::Float32 ? "float32" : "float64"}};
}

json train_json(const TrainConfig& config) {
  return {{"lr_adapter", config.lr_adapter},
          {"lr_head", config.lr_head},
          {"steps", config.steps},
          {"batch", config.batch},
          {"data_seed", config.data_seed},
          {"warmup_ratio", config.warmup_ratio},
          {"eval_every", config.eval_every},
          {"eval_size", config.eval_size},
          {"beta1", config.optimizer.beta1},
          {"beta2", config.optimizer.beta2},
          {"eps", config.optimizer.eps},
          {"weight_decay", config.optimizer.weight_decay}};
}

json task_json(const TaskSpec& task) {
  return {{"kind", to_string(task.kind)}, {"seq_len", task.seq_len}, {"vocab", task.vocab}, {"classes", task.classes}};
}

// ---------------------------------------------------------------- plan

struct PlanArgs {
  std::uint64_t blocks = 12;
  std::uint64_t d_model = 768;
  std::uint64_t adapted_per_block = 2;
  std::string ranks = "1,16,256";
  std::string methods = "vera,lora";
  bool include_shared = false;
  std::string format = "text";
};

int run_plan(const PlanArgs& args) {
  const ModelShape shape{"custom", args.blocks, args.d_model, args.adapted_per_block};
  shape.validate();
  const auto methods = methods_flag(args.methods);
  const auto ranks = ranks_flag(args.ranks);
  print_config({{"command", "plan"},
                {"blocks", args.blocks},
                {"d_model", args.d_model},
                {"adapted_per_block", args.adapted_per_block},
                {"l_tuned", shape.l_tuned()},
                {"ranks", ranks},
                {"methods", args.methods},
                {"include_shared", args.include_shared},
                {"format", args.format}});

  std::vector<BudgetRow> rows;
  for (const Method method : methods) {
    for (const std::size_t r : ranks) rows.push_back(budget_row(shape, method, r));
  }

  if (args.format == "json") {
    json out = json::array();
    for (const auto& row : rows) {
      json j = {{"method", to_string(row.method)},
                {"rank", row.rank},
                {"trainable_params", row.trainable_params},
                {"params_display", format_count(row.trainable_params)},
                {"stored_bytes", row.stored_bytes},
                {"bytes_display", format_bytes(row.stored_bytes)}};
      if (args.include_shared) {
        j["params_with_shared"] = row.params_with_shared();
        j["bytes_with_shared"] = row.stored_bytes_with_shared;
        j["bytes_with_shared_display"] = format_bytes(row.stored_bytes_with_shared);
      }
      out.push_back(j);
    }
    std::cout << out.dump(2) << '\n';
    return kExitOk;
  }

  std::vector<std::string> header{"method", "rank", "trainable_params", "params", "stored_bytes", "bytes"};
  if (args.include_shared) {
    header.insert(header.end(), {"params_with_shared", "bytes_with_shared", "bytes_with_shared_display"});
  }
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : rows) {
    std::vector<std::string> c{to_string(row.method),
                               std::to_string(row.rank),
                               std::to_string(row.trainable_params),
                               format_count(row.trainable_params),
                               std::to_string(row.stored_bytes),
                               format_bytes(row.stored_bytes)};
    if (args.include_shared) {
      c.insert(c.end(), {std::to_string(row.params_with_shared()), std::to_string(row.stored_bytes_with_shared),
                         format_bytes(row.stored_bytes_with_shared)});
    }
    cells.push_back(std::move(c));
  }
  if (args.format == "csv") {
    print_csv(std::cout, header, cells);
  } else {
    print_table(std::cout, header, cells);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- table1

std::string mode_string(const std::optional<CountingMode>& mode) { return mode ? to_string(*mode) : "none"; }

int run_table1(const std::string& format) {
  print_config({{"command", "table1"}, {"format", format}, {"ranks", {1, 16, 256}}});
  const auto rows = table1();
  if (format == "json") {
    json out = json::array();
    for (const auto& t : rows) {
      out.push_back({{"model", t.row.model},
                     {"method", to_string(t.row.method)},
                     {"rank", t.row.rank},
                     {"trainable_params", t.row.trainable_params},
                     {"params_with_shared", t.row.params_with_shared()},
                     {"stored_bytes", t.row.stored_bytes},
                     {"stored_bytes_with_shared", t.row.stored_bytes_with_shared},
                     {"published_params", t.published.params},
                     {"published_bytes", t.published.bytes},
                     {"params_trainable_only", to_string(t.params_trainable_only)},
                     {"params_with_shared_match", to_string(t.params_with_shared)},
                     {"bytes_trainable_only", to_string(t.bytes_trainable_only)},
                     {"bytes_with_shared_match", to_string(t.bytes_with_shared)},
                     {"params_mode", mode_string(t.params_mode)},
                     {"bytes_mode", mode_string(t.bytes_mode)},
                     {"note", t.note}});
    }
    std::cout << out.dump(2) << '\n';
    return kExitOk;
  }
  const std::vector<std::string> header{"model",      "method",          "rank",         "params",
                                        "published",  "params_match",    "bytes",        "published_bytes",
                                        "bytes_match", "shared_params", "shared_bytes", "shared_match",
                                        "note"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& t : rows) {
    const bool vera_row = is_vera_family(t.row.method);
    cells.push_back({t.row.model,
                     to_string(t.row.method),
                     std::to_string(t.row.rank),
                     std::to_string(t.row.trainable_params),
                     t.published.params,
                     to_string(t.params_trainable_only),
                     format_bytes(t.row.stored_bytes),
                     t.published.bytes,
                     to_string(t.bytes_trainable_only),
                     vera_row ? std::to_string(t.row.params_with_shared()) : "-",
                     vera_row ? format_bytes(t.row.stored_bytes_with_shared) : "-",
                     vera_row ? std::string(to_string(t.params_with_shared)) + "/" + to_string(t.bytes_with_shared)
                              : "-",
                     format == "csv" ? "\"" + t.note + "\"" : t.note});
  }
  if (format == "csv") {
    print_csv(std::cout, header, cells);
  } else {
    print_table(std::cout, header, cells);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct ModelArgs {
  std::size_t d_model = 32;
  std::size_t heads = 2;
  std::size_t blocks = 1;
  std::uint64_t base_seed = 1;
  bool positional = false;
  bool float64 = false;
  std::string task = "majority";
  std::size_t seq_len = 0;
};

void add_model_flags(CLI::App* cmd, ModelArgs& m) {
  cmd->add_option("--task", m.task, "majority or pattern")->capture_default_str();
  cmd->add_option("--seq-len", m.seq_len, "sequence length (0 = task default)")->capture_default_str();
  cmd->add_option("--dmodel", m.d_model, "toy model width")->capture_default_str();
  cmd->add_option("--heads", m.heads, "attention heads")->capture_default_str();
  cmd->add_option("--blocks", m.blocks, "attention blocks")->capture_default_str();
  cmd->add_option("--base-seed", m.base_seed, "seed of the frozen base weights")->capture_default_str();
  cmd->add_flag("--positional", m.positional, "add frozen sinusoidal position vectors");
  cmd->add_flag("--float64", m.float64, "store trainable values in float64");
}

struct TrainFlags {
  double lr_adapter = 1e-2;
  double lr_head = 1e-3;
  std::size_t steps = 500;
  std::size_t batch = 32;
  double warmup_ratio = 0.06;
  std::size_t eval_every = 50;
  std::size_t eval_size = 512;
};

void add_train_flags(CLI::App* cmd, TrainFlags& t) {
  cmd->add_option("--steps", t.steps, "optimizer steps")->capture_default_str();
  cmd->add_option("--batch", t.batch, "examples per step")->capture_default_str();
  cmd->add_option("--lr-adapter", t.lr_adapter, "adapter learning rate")->capture_default_str();
  cmd->add_option("--lr-head", t.lr_head, "head learning rate")->capture_default_str();
  cmd->add_option("--warmup-ratio", t.warmup_ratio, "fraction of steps used for warmup")->capture_default_str();
  cmd->add_option("--eval-every", t.eval_every, "held-out evaluation interval")->capture_default_str();
  cmd->add_option("--eval-size", t.eval_size, "held-out set size")->capture_default_str();
}

TrainConfig make_train_config(const TrainFlags& t, std::uint64_t data_seed) {
  TrainConfig config;
  config.lr_adapter = t.lr_adapter;
  config.lr_head = t.lr_head;
  config.steps = t.steps;
  config.batch = t.batch;
  config.warmup_ratio = t.warmup_ratio;
  config.eval_every = t.eval_every;
  config.eval_size = t.eval_size;
  config.data_seed = data_seed;
  config.validate();
  return config;
}

ToyModelConfig make_model_config(const ModelArgs& m, const TaskSpec& task) {
  ToyModelConfig config;
  config.vocab = task.vocab;
  config.classes = task.classes;
  config.d_model = m.d_model;
  config.heads = m.heads;
  config.blocks = m.blocks;
  config.base_seed = m.base_seed;
  config.positional = m.positional;
  config.precision = m.float64 ? Precision::Float64 : Precision::Float32;
  return config;
}

struct TrainArgs {
  ModelArgs model;
  TrainFlags train;
  std::string method = "vera";
  std::size_t rank = 8;
  std::size_t r_max = 0;
  double d_init = 0.1;
  std::string init_scheme = "kaiming-uniform";
  double lora_alpha = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 0;
  std::string out;
  std::string base_out;
  std::string curve;
  std::string format = "text";
};

int run_train(const TrainArgs& args) {
  const TaskSpec task = task_flag(args.model.task, args.model.seq_len);
  ToyModelConfig model_config = make_model_config(args.model, task);
  model_config.adapter.method = methods_flag(args.method).front();
  model_config.adapter.rank = args.rank;
  model_config.adapter.r_max = args.r_max;
  model_config.adapter.d_init = args.d_init;
  model_config.adapter.init_scheme = scheme_flag(args.init_scheme);
  model_config.adapter.lora_alpha = args.lora_alpha;
  model_config.adapter.master_seed = args.seed;
  model_config.adapter = model_config.adapter.resolved();
  const TrainConfig train_config = make_train_config(args.train, args.data_seed);

  print_config({{"command", "train"},
                {"task", task_json(task)},
                {"model", model_json(model_config)},
                {"adapter", adapter_json(model_config.adapter)},
                {"train", train_json(train_config)},
                {"out", args.out},
                {"base_out", args.base_out},
                {"curve", args.curve}});

  ToyModel model(model_config);
  const TrainReport report = train(model, task, train_config);

  std::size_t ckpt_bytes = 0;
  if (!args.out.empty()) ckpt_bytes = save(report.checkpoint, args.out);
  if (!args.base_out.empty()) model.export_base().save(args.base_out);
  if (!args.curve.empty()) emit(args.curve, [&](std::ostream& os) { write_curve_csv(os, report); });

  const double last_loss = report.curve.empty() ? 0.0 : report.curve.back().loss;
  if (args.format == "json") {
    json out = {{"method", to_string(model_config.adapter.method)},
                {"rank", model_config.adapter.rank},
                {"adapter_params", model.adapter_params()},
                {"steps_completed", report.curve.empty() ? 0 : report.curve.back().step},
                {"initial_accuracy", report.initial_accuracy},
                {"final_accuracy", report.final_accuracy},
                {"final_loss", std::isfinite(last_loss) ? json(last_loss) : json(nullptr)},
                {"diverged", report.diverged},
                {"checkpoint_bytes", ckpt_bytes}};
    if (report.diverged) out["error"] = report.error;
    std::cout << out.dump(2) << '\n';
  } else {
    std::cout << "method            " << to_string(model_config.adapter.method) << '\n'
              << "rank              " << model_config.adapter.rank << '\n'
              << "adapter params    " << model.adapter_params() << '\n'
              << "initial accuracy  " << fixed(report.initial_accuracy, 4) << '\n'
              << "final accuracy    " << fixed(report.final_accuracy, 4) << '\n'
              << "final loss        " << fixed(last_loss, 6) << '\n';
    if (!args.out.empty()) std::cout << "checkpoint        " << args.out << " (" << ckpt_bytes << " bytes)\n";
  }
  if (report.diverged) {
    std::cerr << "error: divergence: " << report.error << '\n';
    return kExitCheckFailed;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  ModelArgs model;
  TrainFlags train;
  std::string methods = "vera,lora";
  std::string ranks = "1,4,16,64";
  std::size_t seeds = 5;
  std::uint64_t first_seed = 0;
  unsigned workers = 1;
  std::string out;
  std::string summary_out;
};

int run_sweep(const SweepArgs& args) {
  SweepOptions options;
  options.task = task_flag(args.model.task, args.model.seq_len);
  options.methods = methods_flag(args.methods);
  options.ranks = ranks_flag(args.ranks);
  if (args.seeds == 0) throw UsageError("--seeds must be at least 1");
  options.seeds = args.seeds;
  options.first_seed = args.first_seed;
  options.model = make_model_config(args.model, options.task);
  options.train = make_train_config(args.train, 0);
  options.workers = args.workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : args.workers;

  json methods = json::array();
  for (const Method m : options.methods) methods.push_back(to_string(m));
  json train = train_json(options.train);
  train.erase("data_seed");
  print_config({{"command", "sweep"},
                {"task", task_json(options.task)},
                {"model", model_json(options.model)},
                {"methods", methods},
                {"ranks", options.ranks},
                {"seeds", options.seeds},
                {"first_seed", options.first_seed},
                {"workers", options.workers},
                {"train", train},
                {"init_scheme", to_string(options.model.adapter.init_scheme)},
                {"d_init", options.model.adapter.d_init},
                {"out", args.out},
                {"summary_out", args.summary_out}});

  const SweepResult result = rank_sweep(options);
  emit(args.out, [&](std::ostream& os) { write_sweep_csv(os, result); });
  if (!args.summary_out.empty()) {
    emit(args.summary_out, [&](std::ostream& os) { write_sweep_summary_csv(os, result); });
  }
  for (const auto& run : result.runs) {
    if (run.diverged) {
      std::cerr << "error: divergence: " << to_string(run.method) << " rank " << run.rank << " seed " << run.seed
                << '\n';
      return kExitCheckFailed;
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  double tolerance = 1e-4;
  bool float64 = false;
  std::uint64_t seed = 7;
  std::string out;
  std::string format = "text";
};

int run_gradcheck(const GradcheckArgs& args) {
  GradcheckOptions options;
  options.tolerance = args.tolerance;
  options.seed = args.seed;
  if (!(options.tolerance > 0.0)) throw InvalidConfig("--tolerance must be positive");
  json methods = json::array();
  for (const Method m : options.methods) methods.push_back(to_string(m));
  print_config({{"command", "gradcheck"},
                {"tolerance", options.tolerance},
                {"precision", "float64"},
                {"step", options.step},
                {"seed", options.seed},
                {"dims", options.dims},
                {"ranks", options.ranks},
                {"methods", methods},
                {"model_d_model", options.model_d_model},
                {"model_blocks", options.model_blocks}});

  const GradcheckReport report = gradcheck(options);
  if (!args.out.empty()) emit(args.out, [&](std::ostream& os) { write_gradcheck_csv(os, report); });

  // Worst error per (scope, method, group).
  std::vector<std::tuple<std::string, std::string, std::string, double, std::size_t>> groups;
  for (const auto& e : report.entries) {
    const std::string method = to_string(e.method);
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
      return std::get<0>(g) == e.scope && std::get<1>(g) == method && std::get<2>(g) == e.group;
    });
    if (it == groups.end()) {
      groups.emplace_back(e.scope, method, e.group, e.max_rel_error, 1);
    } else {
      std::get<3>(*it) = std::max(std::get<3>(*it), e.max_rel_error);
      ++std::get<4>(*it);
    }
  }

  if (args.format == "json") {
    json out = {{"tolerance", report.tolerance},
                {"passed", report.passed()},
                {"worst", report.worst()},
                {"entries", report.entries.size()}};
    json by_group = json::array();
    for (const auto& [scope, method, group, worst, count] : groups) {
      by_group.push_back({{"scope", scope},
                          {"method", method},
                          {"group", group},
                          {"max_rel_error", worst},
                          {"checks", count},
                          {"passed", worst < report.tolerance}});
    }
    out["groups"] = by_group;
    std::cout << out.dump(2) << '\n';
  } else {
    std::vector<std::vector<std::string>> cells;
    for (const auto& [scope, method, group, worst, count] : groups) {
      std::ostringstream err;
      err << std::scientific << std::setprecision(2) << worst;
      cells.push_back({scope, method, group, std::to_string(count), err.str(), worst < report.tolerance ? "ok" : "FAIL"});
    }
    print_table(std::cout, {"scope", "method", "group", "checks", "max_rel_error", "status"}, cells);
    std::cout << (report.passed() ? "passed" : "failed") << ": " << report.entries.size() << " checks, worst "
              << std::scientific << std::setprecision(2) << report.worst() << ", tolerance " << report.tolerance
              << '\n';
  }
  if (!report.passed()) {
    std::cerr << "error: gradcheck: worst relative error " << report.worst() << " exceeds tolerance "
              << report.tolerance << '\n';
    return kExitCheckFailed;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- merge / inspect / magnitude

int run_merge(const std::string& ckpt_path, const std::string& base_path, const std::string& out_path) {
  print_config({{"command", "merge"}, {"ckpt", ckpt_path}, {"base", base_path}, {"out", out_path}});
  const Checkpoint ckpt = load(ckpt_path);
  const std::size_t count = export_merged(ckpt, base_path, out_path);
  std::cout << "wrote " << out_path << ": " << count << " tensors, " << ckpt.layers.size() << " merged\n";
  return kExitOk;
}

std::string norm_cell(const json& layer, const char* key) {
  return layer.contains(key) ? fixed(layer[key].get<double>(), 6) : "-";
}

int run_inspect(const std::string& ckpt_path, bool as_json) {
  print_config({{"command", "inspect"}, {"ckpt", ckpt_path}, {"json", as_json}});
  const Checkpoint ckpt = load(ckpt_path);
  const json info = inspect(ckpt);
  if (as_json) {
    std::cout << info.dump(2) << '\n';
    return kExitOk;
  }
  std::cout << "format version  " << info["format_version"].get<std::uint32_t>() << '\n'
            << "method          " << info["method"].get<std::string>() << '\n'
            << "master seed     " << info["master_seed"].get<std::uint64_t>() << '\n'
            << "rank            " << info["rank"].get<std::size_t>() << '\n'
            << "r_max           " << info["r_max"].get<std::size_t>() << '\n'
            << "init scheme     " << to_string(ckpt.config.init_scheme) << '\n'
            << "d_init          " << info["d_init"].get<double>() << '\n'
            << "layers          " << info["layer_count"].get<std::size_t>() << '\n';
  const auto& bytes = info["bytes"];
  std::cout << "bytes           " << bytes["total"].get<std::size_t>() << " (header "
            << bytes["header"].get<std::size_t>() << ", framing " << bytes["layer_framing"].get<std::size_t>()
            << ", payload " << bytes["payload"].get<std::size_t>() << ")\n";
  std::vector<std::vector<std::string>> cells;
  for (const auto& layer : info["layers"]) {
    cells.push_back({layer["name"].get<std::string>(), std::to_string(layer["m"].get<std::size_t>()),
                     std::to_string(layer["n"].get<std::size_t>()),
                     std::to_string(layer["trainable_params"].get<std::size_t>()),
                     norm_cell(layer, "d_norm"), norm_cell(layer, "b_norm"), norm_cell(layer, "A_norm"),
                     norm_cell(layer, "B_norm")});
  }
  if (!cells.empty()) {
    std::cout << '\n';
    print_table(std::cout, {"layer", "m", "n", "params", "|d|", "|b|", "|A|", "|B|"}, cells);
  }
  return kExitOk;
}

int run_magnitude(const std::string& ckpt_path, const std::string& out) {
  print_config({{"command", "magnitude"}, {"ckpt", ckpt_path}, {"out", out}});
  const auto rows = magnitude_report(load(ckpt_path));
  emit(out, [&](std::ostream& os) { write_magnitude_csv(os, rows); });
  return kExitOk;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"VeRA and LoRA adapter toolkit"};
  app.require_subcommand(1);
  std::function<int()> action;

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "trainable-parameter and storage budget for a model shape");
  plan_cmd->add_option("--blocks", plan.blocks, "transformer blocks")->capture_default_str();
  plan_cmd->add_option("--dmodel", plan.d_model, "hidden size")->capture_default_str();
  plan_cmd->add_option("--adapted-per-block", plan.adapted_per_block, "adapted matrices per block")
      ->capture_default_str();
  plan_cmd->add_option("--ranks", plan.ranks, "comma-separated ranks")->capture_default_str();
  plan_cmd->add_option("--method", plan.methods, "comma-separated methods")->capture_default_str();
  plan_cmd->add_flag("--include-shared", plan.include_shared, "also count the shared pair");
  plan_cmd->add_option("--format", plan.format)->check(CLI::IsMember({"text", "json", "csv"}))->capture_default_str();
  plan_cmd->callback([&] { action = [&] { return run_plan(plan); }; });

  std::string table1_format = "text";
  auto* table1_cmd = app.add_subcommand("table1", "budget table for the reference models with published cells");
  table1_cmd->add_option("--format", table1_format)
      ->check(CLI::IsMember({"text", "json", "csv"}))
      ->capture_default_str();
  table1_cmd->callback([&] { action = [&] { return run_table1(table1_format); }; });

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train the toy model and write a checkpoint");
  train_cmd->add_option("--method", tr.method, "vera, lora, only-d, only-b or head-only")->capture_default_str();
  train_cmd->add_option("--rank", tr.rank, "adapter rank")->capture_default_str();
  train_cmd->add_option("--r-max", tr.r_max, "rows of the shared matrices (0 = rank)")->capture_default_str();
  train_cmd->add_option("--d-init", tr.d_init, "initial value of d")->capture_default_str();
  train_cmd->add_option("--init-scheme", tr.init_scheme, "kaiming-uniform, kaiming-normal, uniform[:LO:HI]")
      ->capture_default_str();
  train_cmd->add_option("--lora-alpha", tr.lora_alpha, "LoRA alpha (0 = rank)")->capture_default_str();
  train_cmd->add_option("--seed", tr.seed, "adapter master seed")->capture_default_str();
  train_cmd->add_option("--data-seed", tr.data_seed, "data stream seed")->capture_default_str();
  train_cmd->add_option("--out", tr.out, "checkpoint path");
  train_cmd->add_option("--base-out", tr.base_out, "write frozen weights and trained head as a tensor file");
  train_cmd->add_option("--curve", tr.curve, "loss/accuracy curve CSV path");
  train_cmd->add_option("--format", tr.format)->check(CLI::IsMember({"text", "json"}))->capture_default_str();
  add_model_flags(train_cmd, tr.model);
  add_train_flags(train_cmd, tr.train);
  train_cmd->callback([&] { action = [&] { return run_train(tr); }; });

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "train every (method, rank, seed) and report accuracies");
  sweep_cmd->add_option("--methods", sw.methods, "comma-separated methods")->capture_default_str();
  sweep_cmd->add_option("--ranks", sw.ranks, "comma-separated ranks")->capture_default_str();
  sweep_cmd->add_option("--seeds", sw.seeds, "seeds per configuration")->capture_default_str();
  sweep_cmd->add_option("--first-seed", sw.first_seed, "seed of the first run")->capture_default_str();
  sweep_cmd->add_option("--workers", sw.workers, "parallel runs (0 = hardware threads)")->capture_default_str();
  sweep_cmd->add_option("--out", sw.out, "per-run CSV path (default stdout)");
  sweep_cmd->add_option("--summary-out", sw.summary_out, "per-configuration median CSV path");
  add_model_flags(sweep_cmd, sw.model);
  add_train_flags(sweep_cmd, sw.train);
  sweep_cmd->callback([&] { action = [&] { return run_sweep(sw); }; });

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "compare analytic gradients with central differences");
  gc_cmd->add_option("--tolerance", gc.tolerance, "maximum relative error")->capture_default_str();
  gc_cmd->add_flag("--float64", gc.float64, "accepted for clarity; checks always run in float64");
  gc_cmd->add_option("--seed", gc.seed, "seed of the probe values")->capture_default_str();
  gc_cmd->add_option("--out", gc.out, "per-check CSV path");
  gc_cmd->add_option("--format", gc.format)->check(CLI::IsMember({"text", "json"}))->capture_default_str();
  gc_cmd->callback([&] { action = [&] { return run_gradcheck(gc); }; });

  std::string merge_ckpt, merge_base, merge_out;
  auto* merge_cmd = app.add_subcommand("merge", "fold a checkpoint into base weights");
  merge_cmd->add_option("--ckpt", merge_ckpt, "adapter checkpoint")->required();
  merge_cmd->add_option("--base", merge_base, "base tensor file")->required();
  merge_cmd->add_option("--out", merge_out, "merged tensor file")->required();
  merge_cmd->callback([&] { action = [&] { return run_merge(merge_ckpt, merge_base, merge_out); }; });

  std::string inspect_ckpt;
  bool inspect_json = false;
  auto* inspect_cmd = app.add_subcommand("inspect", "describe a checkpoint");
  inspect_cmd->add_option("--ckpt", inspect_ckpt, "adapter checkpoint")->required();
  inspect_cmd->add_flag("--json", inspect_json, "machine-readable output");
  inspect_cmd->callback([&] { action = [&] { return run_inspect(inspect_ckpt, inspect_json); }; });

  std::string mag_ckpt, mag_out;
  auto* mag_cmd = app.add_subcommand("magnitude", "per-layer adaptation magnitudes of a VeRA checkpoint");
  mag_cmd->add_option("--ckpt", mag_ckpt, "VeRA checkpoint")->required();
  mag_cmd->add_option("--out", mag_out, "CSV path (default stdout)");
  mag_cmd->callback([&] { action = [&] { return run_magnitude(mag_ckpt, mag_out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return e.kind() == "divergence" ? kExitCheckFailed : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace

int main(int argc, char** argv) { return dispatch(argc, argv); }
