#include "vera/accounting.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace vera {

namespace {

struct ParsedCell {
  double value = 0.0;  // in units of `scale`
  double scale = 1.0;
  int decimals = 0;
};

ParsedCell parse_cell(const std::string& text, bool binary) {
  std::size_t pos = 0;
  while (pos < text.size() && (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.')) ++pos;
  if (pos == 0) throw InvalidArgument("unparsable table cell '" + text + "'");
  ParsedCell cell;
  const std::string number = text.substr(0, pos);
  cell.value = std::stod(number);
  const auto dot = number.find('.');
  cell.decimals = dot == std::string::npos ? 0 : static_cast<int>(number.size() - dot - 1);

  const std::string suffix = text.substr(pos);
  const double base = binary ? 1024.0 : 1000.0;
  if (suffix.empty() || suffix == "B") {
    cell.scale = 1.0;
  } else if (suffix == "K" || suffix == "KB") {
    cell.scale = base;
  } else if (suffix == "M" || suffix == "MB") {
    cell.scale = base * base;
  } else if (suffix == "G" || suffix == "GB") {
    cell.scale = base * base * base;
  } else {
    throw InvalidArgument("unknown unit in table cell '" + text + "'");
  }
  return cell;
}

CellMatch match_cell(std::uint64_t raw, const ParsedCell& cell) {
  const double p = std::pow(10.0, cell.decimals);
  const double exact = static_cast<double>(raw) / cell.scale * p;
  const double published = std::round(cell.value * p);
  if (std::floor(exact + 0.5) == published) return CellMatch::Rounded;
  if (std::floor(exact) == published) return CellMatch::Truncated;
  if (std::abs(exact - published) <= 1.0) return CellMatch::Near;
  return CellMatch::Mismatch;
}

std::string fixed(double value, int decimals) {
  std::array<char, 64> buf{};
  // Round half away from zero, independent of the C library's tie rule.
  const double p = std::pow(10.0, decimals);
  const double rounded = std::floor(value * p + 0.5) / p;
  std::snprintf(buf.data(), buf.size(), "%.*f", decimals, rounded);
  return buf.data();
}

std::string strip_zero_fraction(std::string s) {
  if (const auto dot = s.find('.'); dot != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s;
}

bool better(CellMatch a, CellMatch b) { return static_cast<int>(a) < static_cast<int>(b); }

}  // namespace

void ModelShape::validate() const {
  if (blocks < 1 || d_model < 1 || adapted_per_block < 1) {
    throw InvalidConfig("model shape '" + name + "': all counts must be >= 1");
  }
}

std::uint64_t vera_param_count(const ModelShape& shape, std::uint64_t rank) {
  shape.validate();
  if (rank < 1) throw InvalidConfig("rank must be >= 1");
  return shape.l_tuned() * (shape.d_model + rank);
}

std::uint64_t lora_param_count(const ModelShape& shape, std::uint64_t rank) {
  shape.validate();
  if (rank < 1) throw InvalidConfig("rank must be >= 1");
  return 2 * shape.l_tuned() * shape.d_model * rank;
}

std::uint64_t param_count(Method method, const ModelShape& shape, std::uint64_t rank) {
  shape.validate();
  if (rank < 1) throw InvalidConfig("rank must be >= 1");
  switch (method) {
    case Method::Vera: return vera_param_count(shape, rank);
    case Method::Lora: return lora_param_count(shape, rank);
    case Method::OnlyD: return shape.l_tuned() * rank;
    case Method::OnlyB: return shape.l_tuned() * shape.d_model;
    case Method::HeadOnly: return 0;
  }
  return 0;
}

std::uint64_t rank_increment(const ModelShape& shape) {
  return vera_param_count(shape, 2) - vera_param_count(shape, 1);
}

std::uint64_t lora_rank_increment(const ModelShape& shape) {
  return lora_param_count(shape, 2) - lora_param_count(shape, 1);
}

std::uint64_t shared_pair_values(const ModelShape& shape, std::uint64_t rank) { return 2 * shape.d_model * rank; }

std::string format_bytes(std::uint64_t bytes, std::optional<int> decimals) {
  static constexpr std::array<const char*, 5> kUnits{"B", "KB", "MB", "GB", "TB"};
  double value = static_cast<double>(bytes);
  std::size_t unit = 0;
  while (value >= 1024.0 && unit + 1 < kUnits.size()) {
    value /= 1024.0;
    ++unit;
  }
  if (decimals) return fixed(value, *decimals) + kUnits[unit];
  return strip_zero_fraction(fixed(value, value < 10.0 ? 1 : 0)) + kUnits[unit];
}

std::string format_count(std::uint64_t count, int decimals) {
  if (count < 1000) return std::to_string(count);
  const bool millions = count >= 1000000;
  const double value = static_cast<double>(count) / (millions ? 1e6 : 1e3);
  return fixed(value, decimals) + (millions ? "M" : "K");
}

BudgetRow budget_row(const ModelShape& shape, Method method, std::uint64_t rank) {
  BudgetRow row;
  row.model = shape.name;
  row.method = method;
  row.rank = rank;
  row.trainable_params = param_count(method, shape, rank);
  row.stored_bytes = 4 * row.trainable_params;
  row.stored_bytes_with_shared = row.stored_bytes;
  if (is_vera_family(method)) row.stored_bytes_with_shared += 4 * shared_pair_values(shape, rank);
  return row;
}

const char* to_string(CellMatch match) noexcept {
  switch (match) {
    case CellMatch::Rounded: return "match";
    case CellMatch::Truncated: return "match-truncated";
    case CellMatch::Near: return "within-1-unit";
    case CellMatch::Mismatch: return "mismatch";
  }
  return "unknown";
}

const char* to_string(CountingMode mode) noexcept {
  return mode == CountingMode::TrainableOnly ? "trainable-only" : "with-shared";
}

CellMatch match_count_cell(std::uint64_t value, const std::string& published) {
  return match_cell(value, parse_cell(published, false));
}

CellMatch match_bytes_cell(std::uint64_t bytes, const std::string& published) {
  return match_cell(bytes, parse_cell(published, true));
}

std::vector<Table1Row> table1() {
  struct Published {
    ModelShape shape;
    std::uint64_t rank;
    PublishedCell lora;
    PublishedCell vera;
  };
  const std::array<Published, 9> cells{{
      {ModelShape::roberta_base(), 1, {"36.8K", "144KB"}, {"18.4K", "72KB"}},
      {ModelShape::roberta_base(), 16, {"589.8K", "2MB"}, {"18.8K", "74KB"}},
      {ModelShape::roberta_base(), 256, {"9437.1K", "36MB"}, {"24.5K", "96KB"}},
      {ModelShape::roberta_large(), 1, {"98.3K", "384KB"}, {"49.2K", "192KB"}},
      {ModelShape::roberta_large(), 16, {"1572.8K", "6MB"}, {"49.5K", "195KB"}},
      {ModelShape::roberta_large(), 256, {"25165.8K", "96MB"}, {"61.4K", "240KB"}},
      {ModelShape::gpt3(), 1, {"4.7M", "18MB"}, {"2.4M", "9.1MB"}},
      {ModelShape::gpt3(), 16, {"75.5M", "288MB"}, {"2.8M", "10.5MB"}},
      {ModelShape::gpt3(), 256, {"1207.9M", "4.6GB"}, {"8.7M", "33MB"}},
  }};

  std::vector<Table1Row> rows;
  for (const auto& cell : cells) {
    for (const Method method : {Method::Lora, Method::Vera}) {
      Table1Row out;
      out.row = budget_row(cell.shape, method, cell.rank);
      out.published = method == Method::Lora ? cell.lora : cell.vera;
      out.params_trainable_only = match_count_cell(out.row.trainable_params, out.published.params);
      out.params_with_shared = match_count_cell(out.row.params_with_shared(), out.published.params);
      out.bytes_trainable_only = match_bytes_cell(out.row.stored_bytes, out.published.bytes);
      out.bytes_with_shared = match_bytes_cell(out.row.stored_bytes_with_shared, out.published.bytes);

      auto pick = [](CellMatch trainable, CellMatch shared) -> std::optional<CountingMode> {
        if (trainable != CellMatch::Mismatch && !better(shared, trainable)) return CountingMode::TrainableOnly;
        if (shared != CellMatch::Mismatch) return CountingMode::WithShared;
        return std::nullopt;
      };
      out.params_mode = pick(out.params_trainable_only, out.params_with_shared);
      out.bytes_mode = pick(out.bytes_trainable_only, out.bytes_with_shared);

      if (!out.params_mode) {
        out.note = "published count disagrees with L_tuned*(d_model+r) = " + std::to_string(out.row.trainable_params);
        if (out.bytes_mode == CountingMode::TrainableOnly) out.note += "; published bytes agree with that count";
      } else if (out.params_mode == CountingMode::WithShared || out.bytes_mode == CountingMode::WithShared) {
        out.note = "published value includes the shared pair (2*d_model*r values)";
      } else if (out.bytes_trainable_only == CellMatch::Near) {
        out.note = "published bytes one displayed unit above the binary-unit value";
      }
      rows.push_back(std::move(out));
    }
  }
  return rows;
}

}  // namespace vera
