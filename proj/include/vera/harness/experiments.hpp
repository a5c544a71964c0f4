#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "vera/checkpoint.hpp"
#include "vera/harness/train.hpp"

namespace vera::harness {

struct SweepOptions {
  TaskSpec task = TaskSpec::majority();
  std::vector<Method> methods{Method::Vera};
  std::vector<std::size_t> ranks{1, 4, 16, 64};
  std::size_t seeds = 5;
  /// Run i uses adapter seed and data seed `first_seed + i`.
  std::uint64_t first_seed = 0;
  /// Template for every run; method, rank and seeds are overwritten.
  ToyModelConfig model;
  TrainConfig train;
  unsigned workers = 1;
};

struct SweepRun {
  Method method = Method::Vera;
  std::size_t rank = 0;
  std::size_t params = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  bool median = false;
  bool diverged = false;
};

struct SweepSummary {
  Method method = Method::Vera;
  std::size_t rank = 0;
  std::size_t params = 0;
  double median_accuracy = 0.0;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<SweepSummary> summary;  // one row per (method, rank)
};

double median(std::vector<double> values);

/// Trains every (method, rank, seed) combination; independent runs may use
/// a worker pool. Results are keyed by job index, so output order does not
/// depend on scheduling.
SweepResult rank_sweep(const SweepOptions& options);

/// method,rank,params,seed,accuracy,median
void write_sweep_csv(std::ostream& out, const SweepResult& result);
/// method,rank,params,median_accuracy
void write_sweep_summary_csv(std::ostream& out, const SweepResult& result);

struct MagnitudeRow {
  std::string layer;
  std::string role;  // "q", "v" or "other"
  double d_change_norm = 0.0;  // ||d - d_init·1||
  double b_norm = 0.0;
};

/// Per-layer adaptation magnitudes of a VeRA checkpoint. Throws
/// UnsupportedMethod for any other method.
std::vector<MagnitudeRow> magnitude_report(const Checkpoint& ckpt);

/// layer,role,d_change_norm,b_norm
void write_magnitude_csv(std::ostream& out, const std::vector<MagnitudeRow>& rows);

}  // namespace vera::harness
