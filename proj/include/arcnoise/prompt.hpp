#pragma once

// (r x k)-shot expansion of a task's demonstrations and prompt rendering.
//
// Canonical layout (one template per variant):
//
//   <header paragraph>
//   <blank line>
//   Example N:
//   Input:
//   <grid>
//   Output:
//   <grid>
//   <blank line>            (repeated for every expanded example)
//   Below is a test input grid. Predict the corresponding output.
//   Input:
//   <grid>
//
// The noise-disclosing header appends a sentence naming the noisy side and
// one sentence per group of replicas describing which clean grid it maps to.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "arcnoise/grid.hpp"
#include "arcnoise/hash.hpp"
#include "arcnoise/noise.hpp"
#include "arcnoise/rng.hpp"

namespace arcnoise {

enum class PromptErrc { InvalidReplication, InvalidVariant, NoExamples, TestIndexOutOfRange };

constexpr std::string_view to_string(PromptErrc c) noexcept {
  switch (c) {
    case PromptErrc::InvalidReplication: return "InvalidReplication";
    case PromptErrc::InvalidVariant: return "InvalidVariant";
    case PromptErrc::NoExamples: return "NoExamples";
    case PromptErrc::TestIndexOutOfRange: return "TestIndexOutOfRange";
  }
  return "PromptError";
}

using PromptError = Error<PromptErrc>;

/// Number of independently perturbed copies of each demonstration.
class ReplicationFactor {
 public:
  explicit ReplicationFactor(std::size_t r = 1) : r_(r) {
    if (r_ == 0) throw PromptError(PromptErrc::InvalidReplication, "replication factor must be >= 1");
  }
  [[nodiscard]] constexpr std::size_t value() const noexcept { return r_; }
  friend constexpr auto operator<=>(const ReplicationFactor&, const ReplicationFactor&) = default;

 private:
  std::size_t r_;
};

enum class PromptVariant { Original, NoiseDisclosing };

constexpr std::string_view to_string(PromptVariant v) noexcept {
  return v == PromptVariant::Original ? "original" : "noise_disclosing";
}

inline PromptVariant parse_prompt_variant(std::string_view s) {
  if (s == "original") return PromptVariant::Original;
  if (s == "noise_disclosing") return PromptVariant::NoiseDisclosing;
  throw PromptError(PromptErrc::InvalidVariant,
                    "expected 'original' or 'noise_disclosing', got '" + std::string(s) + "'");
}

struct BundleProvenance {
  std::string task_id;
  std::size_t test_index = 0;
  NoiseSpec noise;
  std::size_t replication = 1;
  PromptVariant variant = PromptVariant::Original;
  std::uint64_t trial = 0;
};

struct PromptBundle {
  std::string text;
  Grid target;  // clean expected test output
  BundleProvenance provenance;
};

/// Seed of the stream that perturbs one replica of one demonstration.
[[nodiscard]] inline std::uint64_t replica_seed(std::uint64_t master, std::string_view task_id,
                                                std::size_t example, std::size_t replica,
                                                std::uint64_t trial, NoiseTarget side) {
  return SeedPath(master)
      .add(task_id)
      .add(example)
      .add(replica)
      .add(trial)
      .add(static_cast<std::uint64_t>(side))
      .value();
}

/// r perturbed replicas of every train pair, grouped by source example.
/// Each replica draws from its own stream keyed by
/// (spec.seed, task id, example, replica, trial, side).
[[nodiscard]] inline std::vector<ExamplePair> expand_examples(const ArcTask& task, ReplicationFactor r,
                                                              const NoiseSpec& spec, std::uint64_t trial = 0) {
  std::vector<ExamplePair> out;
  out.reserve(task.train.size() * r.value());
  for (std::size_t example = 0; example < task.train.size(); ++example) {
    for (std::size_t replica = 0; replica < r.value(); ++replica) {
      Rng rng(replica_seed(spec.seed, task.task_id, example, replica, trial, spec.target));
      out.push_back(perturb_pair(task.train[example], spec, rng));
    }
  }
  return out;
}

inline constexpr std::string_view kPromptInstruction =
    "Find the common rule that maps an input grid to an output grid, given the examples below.";
inline constexpr std::string_view kPromptTestBlock =
    "Below is a test input grid. Predict the corresponding output.";

/// Header paragraph for the given variant. `demonstrations` is k, the number
/// of source examples before expansion.
[[nodiscard]] inline std::string prompt_header(PromptVariant variant, ReplicationFactor r, NoiseTarget target,
                                               std::size_t demonstrations) {
  std::string header(kPromptInstruction);
  if (variant == PromptVariant::Original) return header;

  const std::string noisy(to_string(target));
  const std::string clean(target == NoiseTarget::InputGrids ? "output" : "input");
  header += " Note that random noise has been added to the " + noisy + " grids, such that different " + noisy +
            " grids may map to the same " + clean + ".";

  const std::size_t rv = r.value();
  if (rv == 1) {
    header += " In Example 1, noisy " + noisy + " grids 1 map to the same " + clean + " grid.";
    for (std::size_t i = 2; i <= demonstrations; ++i) {
      header += " Similarly, noisy " + noisy + " grids " + std::to_string(i) + " map to their respective " +
                clean + " grid.";
    }
    return header;
  }
  for (std::size_t group = 0; group < demonstrations; ++group) {
    const std::size_t first = group * rv + 1;
    const std::size_t last = first + rv - 1;
    header += " In Examples " + std::to_string(first) + " to " + std::to_string(last) +
              ", each example contains a noisy " + noisy + " grid that maps to " +
              (group == 0 ? "the same " : "its respective ") + clean + " grid.";
  }
  return header;
}

[[nodiscard]] inline std::string render_prompt(const std::vector<ExamplePair>& examples, const Grid& test_input,
                                               PromptVariant variant, ReplicationFactor r, NoiseTarget target) {
  if (examples.empty()) throw PromptError(PromptErrc::NoExamples, "prompt needs at least one example");
  const std::size_t demonstrations = (examples.size() + r.value() - 1) / r.value();

  std::string out = prompt_header(variant, r, target, demonstrations);
  out += "\n\n";
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out += "Example " + std::to_string(i + 1) + ":\nInput:\n";
    out += render_grid(examples[i].input);
    out += "\nOutput:\n";
    out += render_grid(examples[i].output);
    out += "\n\n";
  }
  out += kPromptTestBlock;
  out += "\nInput:\n";
  out += render_grid(test_input);
  out += "\n";
  return out;
}

[[nodiscard]] inline PromptBundle build_bundle(const ArcTask& task, std::size_t test_index, ReplicationFactor r,
                                               const NoiseSpec& spec, PromptVariant variant,
                                               std::uint64_t trial = 0) {
  if (test_index >= task.test.size()) {
    throw PromptError(PromptErrc::TestIndexOutOfRange,
                      "test index " + std::to_string(test_index) + " but task " + task.task_id + " has " +
                          std::to_string(task.test.size()) + " test pairs");
  }
  const auto& test = task.test[test_index];
  return PromptBundle{
      render_prompt(expand_examples(task, r, spec, trial), test.input, variant, r, spec.target),
      test.output,
      {task.task_id, test_index, spec, r.value(), variant, trial},
  };
}

}  // namespace arcnoise
