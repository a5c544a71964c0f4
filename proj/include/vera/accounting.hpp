#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vera/adapters.hpp"

namespace vera {

/// Architecture summary for parameter accounting: `blocks * adapted_per_block`
/// adapted square (d_model x d_model) matrices. Classification heads are not
/// counted.
struct ModelShape {
  std::string name;
  std::uint64_t blocks = 1;
  std::uint64_t d_model = 1;
  std::uint64_t adapted_per_block = 2;

  std::uint64_t l_tuned() const noexcept { return blocks * adapted_per_block; }
  void validate() const;

  static ModelShape roberta_base() { return {"roberta-base", 12, 768, 2}; }
  static ModelShape roberta_large() { return {"roberta-large", 24, 1024, 2}; }
  static ModelShape gpt3() { return {"gpt3", 96, 12288, 2}; }
};

/// L_tuned * (d_model + r)
std::uint64_t vera_param_count(const ModelShape& shape, std::uint64_t rank);
/// 2 * L_tuned * d_model * r
std::uint64_t lora_param_count(const ModelShape& shape, std::uint64_t rank);
/// Any method, including the single-vector ablations (HeadOnly counts 0).
std::uint64_t param_count(Method method, const ModelShape& shape, std::uint64_t rank);

/// Added trainable parameters per unit of rank: L_tuned for VeRA.
std::uint64_t rank_increment(const ModelShape& shape);
/// 2 * L_tuned * d_model
std::uint64_t lora_rank_increment(const ModelShape& shape);

/// Values stored for the shared pair when it is counted as part of storage.
std::uint64_t shared_pair_values(const ModelShape& shape, std::uint64_t rank);

/// Binary-unit byte string ("144KB", "9.1MB", "4.5GB"). With `decimals`
/// unset, one decimal is shown below 10 units and none above; trailing ".0"
/// is dropped.
std::string format_bytes(std::uint64_t bytes, std::optional<int> decimals = std::nullopt);
/// Decimal-unit count string ("18.4K", "2.4M") rounded to `decimals`.
std::string format_count(std::uint64_t count, int decimals = 1);

struct BudgetRow {
  std::string model;
  Method method = Method::Vera;
  std::uint64_t rank = 1;
  std::uint64_t trainable_params = 0;
  std::uint64_t stored_bytes = 0;
  /// stored_bytes plus the float32 shared pair (VeRA family only).
  std::uint64_t stored_bytes_with_shared = 0;

  std::uint64_t params_with_shared() const noexcept { return stored_bytes_with_shared / 4; }
};

BudgetRow budget_row(const ModelShape& shape, Method method, std::uint64_t rank);

/// How a computed value relates to a published display string.
enum class CellMatch {
  Rounded,    // equals round-to-nearest at the published precision
  Truncated,  // equals truncation at the published precision
  Near,       // within one displayed unit
  Mismatch,
};

const char* to_string(CellMatch match) noexcept;

/// Compares `value` against a published cell like "36.8K", "2.8M", "144KB",
/// "4.6GB". Counts use decimal units (K, M), bytes use binary units.
CellMatch match_count_cell(std::uint64_t value, const std::string& published);
CellMatch match_bytes_cell(std::uint64_t bytes, const std::string& published);

enum class CountingMode { TrainableOnly, WithShared };

const char* to_string(CountingMode mode) noexcept;

struct PublishedCell {
  std::string params;
  std::string bytes;
};

struct Table1Row {
  BudgetRow row;
  PublishedCell published;
  CellMatch params_trainable_only = CellMatch::Mismatch;
  CellMatch params_with_shared = CellMatch::Mismatch;
  CellMatch bytes_trainable_only = CellMatch::Mismatch;
  CellMatch bytes_with_shared = CellMatch::Mismatch;
  /// Counting mode whose value agrees best with the published cells, if any.
  std::optional<CountingMode> params_mode;
  std::optional<CountingMode> bytes_mode;
  std::string note;
};

/// The three presets x ranks {1, 16, 256} x {LoRA, VeRA}: 18 rows with both
/// counting modes evaluated and compared against the published cells.
std::vector<Table1Row> table1();

}  // namespace vera
