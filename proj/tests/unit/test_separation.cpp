#include <algorithm>
#include <thread>

#include "doctest.h"
#include "vera/harness/experiments.hpp"

using namespace vera;
using namespace vera::harness;

// PatternDetect depends on token order, so the model needs positions to do
// better than the head alone.
TEST_CASE("VeRA beats the head-only baseline on PatternDetect") {
  auto median_for = [](Method method) {
    SweepOptions o;
    o.task = TaskSpec::pattern_detect();
    o.methods = {method};
    o.ranks = {8};
    o.seeds = 5;
    o.model.positional = true;
    o.train.steps = 800;
    o.train.lr_adapter = 5e-2;
    o.train.lr_head = 1e-2;
    o.workers = std::max(1u, std::thread::hardware_concurrency());
    return rank_sweep(o).summary.front().median_accuracy;
  };
  const double vera = median_for(Method::Vera);
  const double head = median_for(Method::HeadOnly);
  MESSAGE("vera median " << vera << ", head-only median " << head);
  CHECK(head <= vera);
}
