#pragma once

// Grids, example pairs and ARC task files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "arcnoise/error.hpp"

namespace arcnoise {

using CellValue = std::uint8_t;

inline constexpr std::size_t kMaxGridSide = 30;

enum class GridErrc {
  RaggedRows,
  NonDigitToken,
  Empty,
  DimensionOverflow,
  MalformedJson,
  SchemaViolation,
  InvalidGrid,
};

constexpr std::string_view to_string(GridErrc c) noexcept {
  switch (c) {
    case GridErrc::RaggedRows: return "RaggedRows";
    case GridErrc::NonDigitToken: return "NonDigitToken";
    case GridErrc::Empty: return "Empty";
    case GridErrc::DimensionOverflow: return "DimensionOverflow";
    case GridErrc::MalformedJson: return "MalformedJson";
    case GridErrc::SchemaViolation: return "SchemaViolation";
    case GridErrc::InvalidGrid: return "InvalidGrid";
  }
  return "GridError";
}

using GridError = Error<GridErrc>;

/// Task grids are capped at 30x30; grids recovered from model responses are
/// not (an oversized answer is scored, not rejected).
enum class GridLimits { Task, Relaxed };

/// Rectangular, row-major matrix of digits 0-9. Immutable once built.
class Grid {
 public:
  Grid(std::size_t rows, std::size_t cols, std::vector<CellValue> cells,
       GridLimits limits = GridLimits::Task)
      : rows_(rows), cols_(cols), cells_(std::move(cells)) {
    if (rows_ == 0 || cols_ == 0) {
      throw GridError(GridErrc::Empty, "grid must have at least one row and one column");
    }
    if (limits == GridLimits::Task && (rows_ > kMaxGridSide || cols_ > kMaxGridSide)) {
      throw GridError(GridErrc::DimensionOverflow,
                      std::to_string(rows_) + "x" + std::to_string(cols_) + " exceeds 30x30");
    }
    if (cells_.size() != rows_ * cols_) {
      throw GridError(GridErrc::RaggedRows, "cell count does not equal rows*cols");
    }
    for (CellValue v : cells_) {
      if (v > 9) {
        throw GridError(GridErrc::NonDigitToken, "cell value " + std::to_string(v) + " outside 0-9");
      }
    }
  }

  static Grid from_rows(const std::vector<std::vector<int>>& rows,
                        GridLimits limits = GridLimits::Task) {
    if (rows.empty() || rows.front().empty()) {
      throw GridError(GridErrc::Empty, "grid has no rows");
    }
    std::vector<CellValue> cells;
    cells.reserve(rows.size() * rows.front().size());
    for (const auto& row : rows) {
      if (row.size() != rows.front().size()) {
        throw GridError(GridErrc::RaggedRows, "rows of unequal length");
      }
      for (int v : row) {
        if (v < 0 || v > 9) {
          throw GridError(GridErrc::NonDigitToken, "cell value " + std::to_string(v) + " outside 0-9");
        }
        cells.push_back(static_cast<CellValue>(v));
      }
    }
    return Grid(rows.size(), rows.front().size(), std::move(cells), limits);
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] CellValue at(std::size_t row, std::size_t col) const { return cells_.at(row * cols_ + col); }
  [[nodiscard]] std::span<const CellValue> cells() const noexcept { return cells_; }

  /// Copy with the given cells replaced; shape and limits are preserved.
  [[nodiscard]] Grid with_cells(std::vector<CellValue> cells) const {
    return Grid(rows_, cols_, std::move(cells), GridLimits::Relaxed);
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<CellValue> cells_;
};

struct ExamplePair {
  Grid input;
  Grid output;

  friend bool operator==(const ExamplePair&, const ExamplePair&) = default;
};

struct ArcTask {
  std::string task_id;
  std::vector<ExamplePair> train;
  std::vector<ExamplePair> test;
};

/// Number of cells, rows x cols.
[[nodiscard]] inline std::size_t total_cells(const Grid& grid) noexcept {
  return grid.rows() * grid.cols();
}

namespace detail {

inline bool is_separator(char c) noexcept { return c == ' ' || c == '\t'; }

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

inline std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_separator(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_separator(line[j])) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

inline bool is_blank(std::string_view line) noexcept {
  for (char c : line) {
    if (!is_separator(c)) return false;
  }
  return true;
}

}  // namespace detail

/// Parses whitespace-separated single digits, one grid row per line.
/// Leading and trailing blank lines are ignored; anything else that is not a
/// digit token is an error.
[[nodiscard]] inline Grid parse_grid(std::string_view text, GridLimits limits = GridLimits::Task) {
  auto lines = detail::split_lines(text);
  std::size_t first = 0;
  std::size_t last = lines.size();
  while (first < last && detail::is_blank(lines[first])) ++first;
  while (last > first && detail::is_blank(lines[last - 1])) --last;
  if (first == last) throw GridError(GridErrc::Empty, "no grid lines");

  std::size_t cols = 0;
  std::vector<CellValue> cells;
  for (std::size_t i = first; i < last; ++i) {
    auto tokens = detail::split_tokens(lines[i]);
    if (i == first) {
      cols = tokens.size();
    } else if (tokens.size() != cols) {
      throw GridError(GridErrc::RaggedRows, "line " + std::to_string(i - first + 1) + " has " +
                                                std::to_string(tokens.size()) + " cells, expected " +
                                                std::to_string(cols));
    }
    for (auto token : tokens) {
      if (token.size() != 1 || token[0] < '0' || token[0] > '9') {
        throw GridError(GridErrc::NonDigitToken, "token '" + std::string(token) + "'");
      }
      cells.push_back(static_cast<CellValue>(token[0] - '0'));
    }
  }
  return Grid(last - first, cols, std::move(cells), limits);
}

/// Rows joined by '\n', cells by a single space, no trailing newline.
[[nodiscard]] inline std::string render_grid(const Grid& grid) {
  std::string out;
  out.reserve(grid.rows() * grid.cols() * 2);
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    if (r > 0) out.push_back('\n');
    for (std::size_t c = 0; c < grid.cols(); ++c) {
      if (c > 0) out.push_back(' ');
      out.push_back(static_cast<char>('0' + grid.at(r, c)));
    }
  }
  return out;
}

[[nodiscard]] inline nlohmann::json grid_to_json(const Grid& grid) {
  auto rows = nlohmann::json::array();
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (std::size_t c = 0; c < grid.cols(); ++c) row.push_back(static_cast<int>(grid.at(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

[[nodiscard]] inline Grid grid_from_json(const nlohmann::json& j, GridLimits limits = GridLimits::Task) {
  if (!j.is_array() || j.empty()) {
    throw GridError(GridErrc::SchemaViolation, "grid must be a non-empty array of rows");
  }
  std::vector<std::vector<int>> rows;
  rows.reserve(j.size());
  for (const auto& row : j) {
    if (!row.is_array()) throw GridError(GridErrc::SchemaViolation, "grid row must be an array");
    std::vector<int> values;
    values.reserve(row.size());
    for (const auto& v : row) {
      if (!v.is_number_integer()) throw GridError(GridErrc::SchemaViolation, "cell must be an integer");
      values.push_back(v.get<int>());
    }
    rows.push_back(std::move(values));
  }
  try {
    return Grid::from_rows(rows, limits);
  } catch (const GridError& e) {
    throw GridError(GridErrc::InvalidGrid, e.what());
  }
}

[[nodiscard]] inline nlohmann::json task_to_json(const ArcTask& task) {
  auto pairs = [](const std::vector<ExamplePair>& list) {
    auto arr = nlohmann::json::array();
    for (const auto& p : list) {
      arr.push_back({{"input", grid_to_json(p.input)}, {"output", grid_to_json(p.output)}});
    }
    return arr;
  };
  return {{"train", pairs(task.train)}, {"test", pairs(task.test)}};
}

/// Builds a task from an already-parsed ARC document.
[[nodiscard]] inline ArcTask task_from_json(const nlohmann::json& doc, std::string task_id) {
  if (!doc.is_object()) throw GridError(GridErrc::SchemaViolation, "task document must be an object");
  auto read_pairs = [&](const char* key) {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_array()) {
      throw GridError(GridErrc::SchemaViolation, std::string("missing array '") + key + "'");
    }
    if (it->empty()) throw GridError(GridErrc::SchemaViolation, std::string("'") + key + "' is empty");
    std::vector<ExamplePair> pairs;
    for (const auto& p : *it) {
      if (!p.is_object() || !p.contains("input") || !p.contains("output")) {
        throw GridError(GridErrc::SchemaViolation,
                        std::string("'") + key + "' entries need 'input' and 'output'");
      }
      pairs.push_back({grid_from_json(p["input"]), grid_from_json(p["output"])});
    }
    return pairs;
  };
  ArcTask task;
  task.task_id = std::move(task_id);
  task.train = read_pairs("train");
  task.test = read_pairs("test");
  return task;
}

/// Loads a standard ARC task file; the task id is the file stem.
[[nodiscard]] inline ArcTask load_task(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GridError(GridErrc::MalformedJson, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw GridError(GridErrc::MalformedJson, path.string() + ": " + e.what());
  }
  return task_from_json(doc, path.stem().string());
}

}  // namespace arcnoise
