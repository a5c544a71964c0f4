#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vera/prng.hpp"

namespace vera::harness {

enum class TaskKind { MajorityToken, PatternDetect };

const char* to_string(TaskKind kind) noexcept;
/// "majority" or "pattern".
TaskKind parse_task(const std::string& text);

/// Synthetic binary classification over token sequences.
///   MajorityToken: tokens in {0, 1}, odd length, label = majority symbol.
///   PatternDetect: label = 1 iff `pattern` occurs as a contiguous 3-gram.
struct TaskSpec {
  TaskKind kind = TaskKind::MajorityToken;
  std::size_t seq_len = 11;
  std::size_t vocab = 2;
  std::size_t classes = 2;
  std::array<std::size_t, 3> pattern{0, 1, 2};

  static TaskSpec majority(std::size_t seq_len = 11) { return {TaskKind::MajorityToken, seq_len, 2, 2, {0, 1, 2}}; }
  static TaskSpec pattern_detect(std::size_t seq_len = 19, std::size_t vocab = 3) {
    return {TaskKind::PatternDetect, seq_len, vocab, 2, {0, 1, 2}};
  }

  /// Throws InvalidConfig (e.g. even seq_len for MajorityToken).
  void validate() const;
};

using Tokens = std::vector<std::size_t>;

struct Batch {
  std::vector<Tokens> inputs;
  std::vector<std::size_t> labels;
};

std::size_t label_of(const TaskSpec& task, std::span<const std::size_t> tokens);

/// Tokens drawn uniformly over the vocabulary, one uniform draw per token.
Batch gen_batch(const TaskSpec& task, std::size_t batch, RngStream& stream);

}  // namespace vera::harness
