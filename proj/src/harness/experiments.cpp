#include "vera/harness/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <thread>

namespace vera::harness {

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty set");
  std::ranges::sort(values);
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

SweepResult rank_sweep(const SweepOptions& options) {
  if (options.seeds < 1) throw InvalidConfig("sweep: need at least one seed");
  struct Job {
    Method method;
    std::size_t rank;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const Method method : options.methods) {
    for (const std::size_t rank : options.ranks) {
      for (std::size_t s = 0; s < options.seeds; ++s) jobs.push_back({method, rank, options.first_seed + s});
    }
  }

  std::vector<SweepRun> runs(jobs.size());
  auto run_job = [&](std::size_t i) {
    const Job& job = jobs[i];
    ToyModelConfig model_config = options.model;
    model_config.vocab = options.task.vocab;
    model_config.classes = options.task.classes;
    model_config.adapter.method = job.method;
    model_config.adapter.rank = job.rank;
    model_config.adapter.r_max = job.rank;
    model_config.adapter.master_seed = job.seed;
    TrainConfig train_config = options.train;
    train_config.data_seed = job.seed;

    ToyModel model(model_config);
    const auto report = train(model, options.task, train_config);
    runs[i] = {job.method, job.rank, model.adapter_params(), job.seed, report.final_accuracy, false, report.diverged};
  };

  const unsigned workers = std::max(1U, std::min<unsigned>(options.workers, static_cast<unsigned>(jobs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < jobs.size(); i = next++) run_job(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  SweepResult result;
  result.runs = runs;
  for (std::size_t start = 0; start < runs.size(); start += options.seeds) {
    std::vector<std::size_t> order(options.seeds);
    for (std::size_t s = 0; s < options.seeds; ++s) order[s] = start + s;
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return runs[a].accuracy < runs[b].accuracy; });
    const std::size_t mid = options.seeds / 2;
    result.runs[order[mid]].median = true;
    if (options.seeds % 2 == 0) result.runs[order[mid - 1]].median = true;

    std::vector<double> accs;
    for (std::size_t s = 0; s < options.seeds; ++s) accs.push_back(runs[start + s].accuracy);
    result.summary.push_back({runs[start].method, runs[start].rank, runs[start].params, median(accs)});
  }
  return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "method,rank,params,seed,accuracy,median\n";
  for (const auto& r : result.runs) {
    out << to_string(r.method) << ',' << r.rank << ',' << r.params << ',' << r.seed << ',' << r.accuracy << ','
        << (r.median ? 1 : 0) << '\n';
  }
}

void write_sweep_summary_csv(std::ostream& out, const SweepResult& result) {
  out << "method,rank,params,median_accuracy\n";
  for (const auto& s : result.summary) {
    out << to_string(s.method) << ',' << s.rank << ',' << s.params << ',' << s.median_accuracy << '\n';
  }
}

std::vector<MagnitudeRow> magnitude_report(const Checkpoint& ckpt) {
  if (ckpt.config.method != Method::Vera) {
    throw UnsupportedMethod(std::string("magnitude report needs a vera checkpoint, got ") +
                            to_string(ckpt.config.method));
  }
  std::vector<MagnitudeRow> rows;
  for (const auto& layer : ckpt.layers) {
    MagnitudeRow row;
    row.layer = layer.name;
    const auto dot = layer.name.rfind('.');
    const std::string suffix = dot == std::string::npos ? "" : layer.name.substr(dot + 1);
    row.role = suffix == "q" || suffix == "v" ? suffix : "other";
    double acc = 0.0;
    for (const double v : layer.d) acc += (v - ckpt.config.d_init) * (v - ckpt.config.d_init);
    row.d_change_norm = std::sqrt(acc);
    row.b_norm = norm2(layer.b);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_magnitude_csv(std::ostream& out, const std::vector<MagnitudeRow>& rows) {
  out << "layer,role,d_change_norm,b_norm\n";
  for (const auto& r : rows) out << r.layer << ',' << r.role << ',' << r.d_change_norm << ',' << r.b_norm << '\n';
}

}  // namespace vera::harness
