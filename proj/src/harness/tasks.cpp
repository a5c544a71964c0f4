#include "vera/harness/tasks.hpp"

#include <algorithm>

namespace vera::harness {

const char* to_string(TaskKind kind) noexcept {
  return kind == TaskKind::MajorityToken ? "majority" : "pattern";
}

TaskKind parse_task(const std::string& text) {
  if (text == "majority") return TaskKind::MajorityToken;
  if (text == "pattern") return TaskKind::PatternDetect;
  throw InvalidArgument("unknown task '" + text + "' (expected majority or pattern)");
}

void TaskSpec::validate() const {
  if (seq_len < 1) throw InvalidConfig("task: seq_len must be >= 1");
  if (classes != 2) throw InvalidConfig("task: only binary tasks are defined");
  switch (kind) {
    case TaskKind::MajorityToken:
      if (vocab != 2) throw InvalidConfig("majority task: vocab must be 2");
      if (seq_len % 2 == 0) throw InvalidConfig("majority task: seq_len must be odd");
      break;
    case TaskKind::PatternDetect:
      if (seq_len < 3) throw InvalidConfig("pattern task: seq_len must be >= 3");
      if (std::ranges::any_of(pattern, [&](std::size_t t) { return t >= vocab; })) {
        throw InvalidConfig("pattern task: pattern token outside vocabulary");
      }
      break;
  }
}

std::size_t label_of(const TaskSpec& task, std::span<const std::size_t> tokens) {
  if (task.kind == TaskKind::MajorityToken) {
    const auto ones = static_cast<std::size_t>(std::ranges::count(tokens, std::size_t{1}));
    return 2 * ones > tokens.size() ? 1 : 0;
  }
  for (std::size_t i = 0; i + 3 <= tokens.size(); ++i) {
    if (tokens[i] == task.pattern[0] && tokens[i + 1] == task.pattern[1] && tokens[i + 2] == task.pattern[2]) {
      return 1;
    }
  }
  return 0;
}

Batch gen_batch(const TaskSpec& task, std::size_t batch, RngStream& stream) {
  task.validate();
  Batch out;
  out.inputs.reserve(batch);
  out.labels.reserve(batch);
  const auto vocab = static_cast<double>(task.vocab);
  for (std::size_t i = 0; i < batch; ++i) {
    Tokens tokens(task.seq_len);
    for (auto& t : tokens) t = std::min(task.vocab - 1, static_cast<std::size_t>(stream.uniform(0.0, vocab)));
    out.labels.push_back(label_of(task, tokens));
    out.inputs.push_back(std::move(tokens));
  }
  return out;
}

}  // namespace vera::harness
