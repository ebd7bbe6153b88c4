#pragma once

// Structured noise injection over demonstration pairs.
//
// For one example pair: collect the distinct values of its input and output
// grids, pick floor(level * rows * cols) distinct cells of the target side
// uniformly without replacement, and replace each with a different value drawn
// uniformly from the pool. The other side is returned untouched.

#include <bitset>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "arcnoise/error.hpp"
#include "arcnoise/grid.hpp"
#include "arcnoise/rng.hpp"

namespace arcnoise {

enum class NoiseErrc { InvalidLevel, CountExceedsCells, NoAlternativeValue, InvalidTarget };

constexpr std::string_view to_string(NoiseErrc c) noexcept {
  switch (c) {
    case NoiseErrc::InvalidLevel: return "InvalidLevel";
    case NoiseErrc::CountExceedsCells: return "CountExceedsCells";
    case NoiseErrc::NoAlternativeValue: return "NoAlternativeValue";
    case NoiseErrc::InvalidTarget: return "InvalidTarget";
  }
  return "NoiseError";
}

using NoiseError = Error<NoiseErrc>;

/// Fraction of a grid's cells to alter, in [0, 1].
class NoiseLevel {
 public:
  constexpr NoiseLevel() = default;
  explicit NoiseLevel(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw NoiseError(NoiseErrc::InvalidLevel, "noise level " + std::to_string(value) + " not in [0, 1]");
    }
  }
  [[nodiscard]] constexpr double value() const noexcept { return value_; }

  friend constexpr auto operator<=>(const NoiseLevel&, const NoiseLevel&) = default;

 private:
  double value_ = 0.0;
};

enum class NoiseTarget { InputGrids, OutputGrids };

constexpr std::string_view to_string(NoiseTarget t) noexcept {
  return t == NoiseTarget::InputGrids ? "input" : "output";
}

inline NoiseTarget parse_noise_target(std::string_view s) {
  if (s == "input") return NoiseTarget::InputGrids;
  if (s == "output") return NoiseTarget::OutputGrids;
  throw NoiseError(NoiseErrc::InvalidTarget, "expected 'input' or 'output', got '" + std::string(s) + "'");
}

struct NoiseSpec {
  NoiseTarget target = NoiseTarget::InputGrids;
  NoiseLevel level;
  std::uint64_t seed = 0;
};

struct CellPosition {
  std::size_t row = 0;
  std::size_t col = 0;

  friend constexpr bool operator==(const CellPosition&, const CellPosition&) = default;
};

/// Set of cell values, 0-9.
class ValuePool {
 public:
  ValuePool() = default;
  ValuePool(std::initializer_list<CellValue> values) {
    for (auto v : values) insert(v);
  }

  void insert(CellValue v) { bits_.set(v); }
  [[nodiscard]] bool contains(CellValue v) const { return v < 10 && bits_.test(v); }
  [[nodiscard]] std::size_t size() const noexcept { return bits_.count(); }
  [[nodiscard]] bool empty() const noexcept { return bits_.none(); }

  /// Members in increasing order.
  [[nodiscard]] std::vector<CellValue> values() const {
    std::vector<CellValue> out;
    for (CellValue v = 0; v < 10; ++v) {
      if (bits_.test(v)) out.push_back(v);
    }
    return out;
  }

  friend bool operator==(const ValuePool&, const ValuePool&) = default;

 private:
  std::bitset<10> bits_;
};

[[nodiscard]] inline ValuePool unique_values(const Grid& grid) {
  ValuePool pool;
  for (CellValue v : grid.cells()) pool.insert(v);
  return pool;
}

/// Union of the distinct values in a pair's input and output grids.
[[nodiscard]] inline ValuePool unique_values(const ExamplePair& pair) {
  ValuePool pool;
  for (CellValue v : pair.input.cells()) pool.insert(v);
  for (CellValue v : pair.output.cells()) pool.insert(v);
  return pool;
}

/// floor(level * total_cells(grid)).
[[nodiscard]] inline std::size_t modified_count(NoiseLevel level, const Grid& grid) {
  return static_cast<std::size_t>(std::floor(level.value() * static_cast<double>(total_cells(grid))));
}

/// `count` distinct cells chosen uniformly without replacement: the first
/// `count` entries of a Fisher-Yates shuffle of the row-major indices.
[[nodiscard]] inline std::vector<CellPosition> select_positions(const Grid& grid, std::size_t count, Rng& rng) {
  const std::size_t total = total_cells(grid);
  if (count > total) {
    throw NoiseError(NoiseErrc::CountExceedsCells,
                     std::to_string(count) + " positions requested from " + std::to_string(total) + " cells");
  }
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<CellPosition> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
    std::swap(order[i], order[j]);
    out.push_back({order[i] / grid.cols(), order[i] % grid.cols()});
  }
  return out;
}

/// A value drawn uniformly from pool \ {original}.
[[nodiscard]] inline CellValue replace_value(CellValue original, const ValuePool& pool, Rng& rng) {
  std::vector<CellValue> alternatives;
  for (CellValue v : pool.values()) {
    if (v != original) alternatives.push_back(v);
  }
  if (alternatives.empty()) {
    throw NoiseError(NoiseErrc::NoAlternativeValue,
                     "pool offers no value other than " + std::to_string(original));
  }
  return alternatives[static_cast<std::size_t>(rng.below(alternatives.size()))];
}

/// Grid with `modified_count(level, grid)` cells replaced from `pool`.
[[nodiscard]] inline Grid perturb_grid(const Grid& grid, const ValuePool& pool, NoiseLevel level, Rng& rng) {
  const std::size_t count = modified_count(level, grid);
  if (count == 0) return grid;
  std::vector<CellValue> cells(grid.cells().begin(), grid.cells().end());
  for (const auto& pos : select_positions(grid, count, rng)) {
    auto& cell = cells[pos.row * grid.cols() + pos.col];
    cell = replace_value(cell, pool, rng);
  }
  return grid.with_cells(std::move(cells));
}

/// Perturbs the side named by `spec.target` using the pair's own value pool.
/// `spec.seed` is not consumed here; the caller owns the stream.
[[nodiscard]] inline ExamplePair perturb_pair(const ExamplePair& pair, const NoiseSpec& spec, Rng& rng) {
  const ValuePool pool = unique_values(pair);
  if (spec.target == NoiseTarget::InputGrids) {
    return {perturb_grid(pair.input, pool, spec.level, rng), pair.output};
  }
  return {pair.input, perturb_grid(pair.output, pool, spec.level, rng)};
}

}  // namespace arcnoise
