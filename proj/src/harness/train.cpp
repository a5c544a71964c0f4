#include "vera/harness/train.hpp"

#include <cmath>

namespace vera::harness {

void TrainConfig::validate() const {
  if (!(lr_adapter >= 0.0) || !(lr_head >= 0.0)) throw InvalidConfig("learning rates must be non-negative");
  if (batch < 1) throw InvalidConfig("batch must be >= 1");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw InvalidConfig("warmup_ratio must be in [0, 1)");
  if (eval_size < 1 || eval_every < 1) throw InvalidConfig("eval_size and eval_every must be >= 1");
}

Batch held_out_set(const TaskSpec& task, const TrainConfig& config) {
  RngStream stream(config.data_seed, 2);
  return gen_batch(task, config.eval_size, stream);
}

TrainReport train(ToyModel& model, const TaskSpec& task, const TrainConfig& config) {
  config.validate();
  task.validate();
  if (task.vocab != model.config().vocab || task.classes != model.config().classes) {
    throw InvalidConfig("task vocabulary/classes do not match the model");
  }

  TrainReport report;
  const Batch eval = held_out_set(task, config);
  RngStream data(config.data_seed, 1);
  AdamW optimizer(config.optimizer);
  auto params = model.params();

  report.initial_accuracy = model.accuracy(eval);
  report.final_accuracy = report.initial_accuracy;
  report.curve.push_back({0, std::nan(""), report.initial_accuracy});

  for (std::size_t step = 0; step < config.steps; ++step) {
    const Batch batch = gen_batch(task, config.batch, data);
    const auto lg = model.loss_and_grad(batch);
    if (!std::isfinite(lg.loss)) {
      report.diverged = true;
      report.error = "non-finite loss at step " + std::to_string(step);
      break;
    }
    const double scale = lr_multiplier(step, config.steps, config.warmup_ratio);
    optimizer.step(params, lg.grads, config.lr_adapter * scale, config.lr_head * scale);
    model.apply_precision();

    StepRecord record{step + 1, lg.loss, std::nullopt};
    if ((step + 1) % config.eval_every == 0 || step + 1 == config.steps) {
      record.accuracy = model.accuracy(eval);
      report.final_accuracy = *record.accuracy;
    }
    report.curve.push_back(record);
  }

  report.checkpoint = capture(model.adapted_layers(), model.config().adapter);
  return report;
}

void write_curve_csv(std::ostream& out, const TrainReport& report) {
  out << "step,loss,accuracy\n";
  for (const auto& r : report.curve) {
    out << r.step << ',';
    if (std::isfinite(r.loss)) out << r.loss;
    out << ',';
    if (r.accuracy) out << *r.accuracy;
    out << '\n';
  }
}

}  // namespace vera::harness
