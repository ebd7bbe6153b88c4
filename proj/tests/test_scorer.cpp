#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "arcnoise/scorer.hpp"
#include "test_support.hpp"

using namespace arcnoise;

namespace {

Grid filled(std::size_t rows, std::size_t cols, CellValue v) {
  return Grid(rows, cols, std::vector<CellValue>(rows * cols, v), GridLimits::Relaxed);
}

TrialStats two_pass(const std::vector<double>& xs) {
  double sum = 0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double sq = 0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return {xs.size(), 0, mean, std::sqrt(sq / static_cast<double>(xs.size()))};
}

}  // namespace

TEST(ExtractGrid, PlainGrid) {
  const auto e = extract_grid("1 2\n3 4");
  ASSERT_TRUE(e.parsed());
  EXPECT_EQ(*e.grid, Grid::from_rows({{1, 2}, {3, 4}}));
  EXPECT_EQ(*e.span, (TextSpan{0, 7}));
}

TEST(ExtractGrid, SurroundingProse) {
  const std::string text = "Here is the answer:\nOutput:\n0 0 1\n1 1 0\nHope this helps.";
  const auto e = extract_grid(text);
  ASSERT_TRUE(e.parsed());
  EXPECT_EQ(*e.grid, Grid::from_rows({{0, 0, 1}, {1, 1, 0}}));
  EXPECT_EQ(text.substr(e.span->begin, e.span->end - e.span->begin), "0 0 1\n1 1 0");
}

TEST(ExtractGrid, LastBlockWins) {
  std::string text = "Scratch work:\n1 1 1\n2 2 2\n3 3 3\n\nFinal answer:\n";
  const Grid answer = filled(12, 14, 5);
  text += render_grid(answer) + "\n";
  const auto e = extract_grid(text);
  ASSERT_TRUE(e.parsed());
  EXPECT_EQ(*e.grid, answer);
}

TEST(ExtractGrid, WidthChangeSplitsBlocks) {
  const auto e = extract_grid("1 2 3\n4 5 6\n7 8\n9 0");
  ASSERT_TRUE(e.parsed());
  EXPECT_EQ(*e.grid, Grid::from_rows({{7, 8}, {9, 0}}));
}

TEST(ExtractGrid, TabsAndCarriageReturns) {
  const auto e = extract_grid("answer\r\n1\t2\r\n3\t4\r\n");
  ASSERT_TRUE(e.parsed());
  EXPECT_EQ(*e.grid, Grid::from_rows({{1, 2}, {3, 4}}));
}

TEST(ExtractGrid, Invalid) {
  EXPECT_FALSE(extract_grid("").parsed());
  EXPECT_FALSE(extract_grid("I cannot solve this.").parsed());
  EXPECT_FALSE(extract_grid("[[1, 2], [3, 4]]").parsed());
  EXPECT_FALSE(extract_grid("10 11\n12 13").parsed());
}

TEST(MatchPercentage, SingleFlip) {
  const Grid target = filled(12, 14, 3);
  std::vector<CellValue> cells(target.cells().begin(), target.cells().end());
  cells[37] = 4;
  const auto r = match_percentage(target.with_cells(cells), target);
  EXPECT_EQ(r.matching_cells, 167u);
  EXPECT_EQ(r.total_cells, 168u);
  EXPECT_NEAR(r.percentage, 167.0 / 168.0 * 100.0, 1e-9);
  EXPECT_FALSE(r.correct);
}

TEST(MatchPercentage, Exact) {
  const Grid g = Grid::from_rows({{1, 2}, {3, 4}});
  const auto r = match_percentage(g, g);
  EXPECT_EQ(r.percentage, 100.0);
  EXPECT_TRUE(r.correct);
}

TEST(MatchPercentage, MismatchedShapes) {
  const Grid small = filled(2, 2, 1);
  const Grid big = filled(3, 3, 1);
  const auto r = match_percentage(small, big);
  EXPECT_EQ(r.matching_cells, 4u);
  EXPECT_EQ(r.total_cells, 9u);
  EXPECT_DOUBLE_EQ(r.percentage, 4.0 / 9.0 * 100.0);
  EXPECT_FALSE(r.correct);

  const auto over = match_percentage(big, small);
  EXPECT_EQ(over.percentage, 100.0);
  EXPECT_FALSE(over.correct);
}

TEST(MatchPercentage, HalfMatch) {
  const auto r = match_percentage(Grid::from_rows({{1, 0}}), Grid::from_rows({{1, 1}}));
  EXPECT_EQ(r.percentage, 50.0);
}

TEST(ScoreTrial, InvalidExtractionScoresZero) {
  const Grid target = filled(3, 3, 0);
  const auto r = score_trial(Extraction::invalid(), target);
  EXPECT_EQ(r.percentage, 0.0);
  EXPECT_FALSE(r.correct);
  EXPECT_EQ(r.total_cells, 9u);
  EXPECT_EQ(score_trial(extract_grid("0 0 0\n0 0 0\n0 0 0"), target).percentage, 100.0);
}

TEST(Summarize, SmallCases) {
  const std::vector<MatchResult> perfect(3, MatchResult{100.0, true, 1, 1});
  const auto s = summarize(perfect);
  EXPECT_EQ(s.n, 3u);
  EXPECT_EQ(s.correct_count, 3u);
  EXPECT_EQ(s.mean, 100.0);
  EXPECT_EQ(s.std, 0.0);

  const std::vector<MatchResult> mixed{{100.0, true, 2, 2}, {50.0, false, 1, 2}};
  const auto m = summarize(mixed);
  EXPECT_EQ(m.correct_count, 1u);
  EXPECT_DOUBLE_EQ(m.mean, 75.0);
  EXPECT_DOUBLE_EQ(m.std, 25.0);

  try {
    (void)summarize({});
    FAIL();
  } catch (const ScoreError& e) {
    EXPECT_EQ(e.code(), ScoreErrc::EmptyInput);
  }
}

TEST(Summarize, AgreesWithTwoPass) {
  Rng rng(21);
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<double> xs;
    std::vector<MatchResult> results;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t total = 1 + rng.below(900);
      const std::size_t match = rng.below(total + 1);
      const double pct = static_cast<double>(match) / static_cast<double>(total) * 100.0;
      xs.push_back(pct);
      results.push_back({pct, match == total, match, total});
    }
    const auto got = summarize(results);
    const auto want = two_pass(xs);
    EXPECT_NEAR(got.mean, want.mean, 1e-9 * std::max(1.0, std::abs(want.mean)));
    EXPECT_NEAR(got.std, want.std, 1e-9 * std::max(1.0, want.std));
  }
}
