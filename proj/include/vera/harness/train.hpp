#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vera/checkpoint.hpp"
#include "vera/harness/optimizer.hpp"
#include "vera/harness/tasks.hpp"
#include "vera/harness/toy_model.hpp"

namespace vera::harness {

struct TrainConfig {
  double lr_adapter = 1e-2;
  double lr_head = 1e-3;
  std::size_t steps = 500;
  std::size_t batch = 32;
  /// Seed of the training and held-out data streams.
  std::uint64_t data_seed = 0;
  AdamWConfig optimizer;
  double warmup_ratio = 0.06;
  /// Held-out accuracy is recorded every `eval_every` steps and at the end.
  std::size_t eval_every = 50;
  std::size_t eval_size = 512;

  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;  // number of optimizer steps completed
  double loss = 0.0;     // training batch loss before the update
  std::optional<double> accuracy;
};

struct TrainReport {
  std::vector<StepRecord> curve;
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;
  bool diverged = false;
  std::string error;
  Checkpoint checkpoint;
};

/// Held-out set: a fixed batch from stream (data_seed, 2). Training batches
/// come from stream (data_seed, 1).
Batch held_out_set(const TaskSpec& task, const TrainConfig& config);

/// AdamW with per-group learning rates and linear warmup/decay. Fully
/// deterministic given the model and config seeds. A non-finite loss stops
/// the run with `diverged` set.
TrainReport train(ToyModel& model, const TaskSpec& task, const TrainConfig& config);

/// step,loss,accuracy (accuracy empty when not evaluated at that step).
void write_curve_csv(std::ostream& out, const TrainReport& report);

}  // namespace vera::harness
