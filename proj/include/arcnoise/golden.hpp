#pragma once

// Checked-in prompt renderings: every (variant, target, r in {1,3,9})
// combination for one task at level 0.125, seed 42.

#include <filesystem>
#include <string>
#include <vector>

#include "arcnoise/grid.hpp"
#include "arcnoise/noise.hpp"
#include "arcnoise/prompt.hpp"

namespace arcnoise {

inline constexpr double kGoldenLevel = 0.125;
inline constexpr std::uint64_t kGoldenSeed = 42;

struct GoldenCase {
  PromptVariant variant;
  NoiseTarget target;
  std::size_t replication;

  [[nodiscard]] std::string file_name(const std::string& task_id) const {
    return task_id + "__" + std::string(to_string(variant)) + "__" + std::string(to_string(target)) + "__r" +
           std::to_string(replication) + ".txt";
  }
};

[[nodiscard]] inline std::vector<GoldenCase> golden_cases() {
  std::vector<GoldenCase> cases;
  for (auto variant : {PromptVariant::Original, PromptVariant::NoiseDisclosing})
    for (auto target : {NoiseTarget::InputGrids, NoiseTarget::OutputGrids})
      for (std::size_t r : {1, 3, 9}) cases.push_back({variant, target, r});
  return cases;
}

[[nodiscard]] inline std::string render_golden(const ArcTask& task, const GoldenCase& c) {
  const NoiseSpec spec{c.target, NoiseLevel(kGoldenLevel), kGoldenSeed};
  return build_bundle(task, 0, ReplicationFactor(c.replication), spec, c.variant).text;
}

}  // namespace arcnoise
