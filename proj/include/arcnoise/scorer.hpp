#pragma once

// Grid extraction from free-form responses and match statistics.

#include <algorithm>
#include <cmath>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arcnoise/error.hpp"
#include "arcnoise/grid.hpp"

namespace arcnoise {

enum class ScoreErrc { EmptyInput };

constexpr std::string_view to_string(ScoreErrc) noexcept { return "EmptyInput"; }

using ScoreError = Error<ScoreErrc>;

struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const TextSpan&, const TextSpan&) = default;
};

/// A parsed grid and the character range it came from, or nothing.
struct Extraction {
  std::optional<Grid> grid;
  std::optional<TextSpan> span;

  [[nodiscard]] bool parsed() const noexcept { return grid.has_value(); }

  static Extraction invalid() { return {}; }
};

struct MatchResult {
  double percentage = 0.0;
  bool correct = false;
  std::size_t matching_cells = 0;
  std::size_t total_cells = 0;
};

struct TrialStats {
  std::size_t n = 0;
  std::size_t correct_count = 0;
  double mean = 0.0;
  double std = 0.0;
};

/// Finds the last block of consecutive grid lines (single digits separated by
/// spaces/tabs) that share one token count. Returns an invalid extraction if
/// the text contains no such line.
[[nodiscard]] inline Extraction extract_grid(std::string_view text) {
  static const std::regex grid_line(R"(^[ \t]*[0-9](?:[ \t]+[0-9])*[ \t]*$)");

  struct Line {
    std::size_t begin;
    std::size_t end;  // excludes the newline and any '\r'
  };

  std::optional<Line> block_first;
  std::optional<Line> block_last;
  std::size_t block_width = 0;
  std::optional<TextSpan> best;

  auto close_block = [&] {
    if (block_first) best = TextSpan{block_first->begin, block_last->end};
    block_first.reset();
    block_last.reset();
  };

  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::size_t end = nl;
    if (end > start && text[end - 1] == '\r') --end;
    const std::string_view line = text.substr(start, end - start);

    if (std::regex_match(line.begin(), line.end(), grid_line)) {
      const std::size_t width = detail::split_tokens(line).size();
      if (block_first && width != block_width) close_block();
      if (!block_first) {
        block_first = Line{start, end};
        block_width = width;
      }
      block_last = Line{start, end};
    } else {
      close_block();
    }
    if (nl == text.size()) break;
    start = nl + 1;
  }
  close_block();

  if (!best) return Extraction::invalid();
  return {parse_grid(text.substr(best->begin, best->end - best->begin), GridLimits::Relaxed), best};
}

/// Cell-wise agreement over the dimension intersection, against the target's
/// cell count. Correct only for an exact shape and value match.
[[nodiscard]] inline MatchResult match_percentage(const Grid& predicted, const Grid& target) {
  const std::size_t rows = std::min(predicted.rows(), target.rows());
  const std::size_t cols = std::min(predicted.cols(), target.cols());
  std::size_t matching = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (predicted.at(r, c) == target.at(r, c)) ++matching;
    }
  }
  const std::size_t total = total_cells(target);
  MatchResult result;
  result.matching_cells = matching;
  result.total_cells = total;
  result.percentage = static_cast<double>(matching) / static_cast<double>(total) * 100.0;
  result.correct = predicted.rows() == target.rows() && predicted.cols() == target.cols() && matching == total;
  return result;
}

[[nodiscard]] inline MatchResult score_trial(const Extraction& extraction, const Grid& target) {
  if (!extraction.parsed()) {
    return MatchResult{0.0, false, 0, total_cells(target)};
  }
  return match_percentage(*extraction.grid, target);
}

/// Correct count plus mean and population standard deviation of the
/// percentages (divisor N). Uses Welford's single-pass update.
[[nodiscard]] inline TrialStats summarize(std::span<const MatchResult> results) {
  if (results.empty()) throw ScoreError(ScoreErrc::EmptyInput, "no trial results to summarize");
  TrialStats stats;
  double mean = 0.0;
  double m2 = 0.0;
  for (const auto& r : results) {
    ++stats.n;
    if (r.correct) ++stats.correct_count;
    const double delta = r.percentage - mean;
    mean += delta / static_cast<double>(stats.n);
    m2 += delta * (r.percentage - mean);
  }
  stats.mean = mean;
  stats.std = std::sqrt(std::max(0.0, m2 / static_cast<double>(stats.n)));
  return stats;
}

}  // namespace arcnoise
