// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exit status is
// non-zero if any criterion fails.

#include <signal.h>
#include <sys/wait.h>
#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "arcnoise/arcnoise.hpp"
#include "test_support.hpp"

using namespace arcnoise;
using arcnoise::testing::TempDir;
using SteadyClock = std::chrono::steady_clock;

namespace {

constexpr std::size_t kNoiseCases = 10'000;
constexpr double kNoiseBudgetSeconds = 30.0;
constexpr std::size_t kScorerPairs = 10'000;
constexpr std::size_t kStatVectors = 1'000;
constexpr double kStatRelTol = 1e-9;
constexpr double kPercentTol = 1e-9;
constexpr double kEchoBudgetSeconds = 300.0;
constexpr double kDegradeLevel = 0.05;

struct Outcome {
  enum Kind { Pass, Fail, Skip } kind = Pass;
  std::string detail;
};

Outcome fail(std::string why) { return {Outcome::Fail, std::move(why)}; }

double seconds_since(SteadyClock::time_point t0) { return std::chrono::duration<double>(SteadyClock::now() - t0).count(); }

double unit_double(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Grid random_task_grid(Rng& rng) {
  const std::size_t palette = 2 + rng.below(9);
  return arcnoise::testing::random_grid(rng, 30, palette);
}

Outcome noise_properties() {
  const auto t0 = SteadyClock::now();
  Rng gen(0xC0FFEE);
  std::size_t cases = 0;
  std::size_t identity_cases = 0;
  while (cases < kNoiseCases) {
    ExamplePair pair{random_task_grid(gen), random_task_grid(gen)};
    const ValuePool pool = unique_values(pair);
    if (pool.size() < 2) continue;  // no legal replacement value exists
    const auto pick = gen.below(20);
    const double level = pick == 0 ? 0.0 : pick == 1 ? 1.0 : unit_double(gen);
    const auto target = gen.below(2) == 0 ? NoiseTarget::InputGrids : NoiseTarget::OutputGrids;
    const std::uint64_t seed = gen();
    const NoiseSpec spec{target, NoiseLevel(level), seed};

    Rng rng(seed);
    const auto noisy = perturb_pair(pair, spec, rng);
    const bool input_side = target == NoiseTarget::InputGrids;
    const Grid& before = input_side ? pair.input : pair.output;
    const Grid& after = input_side ? noisy.input : noisy.output;
    const Grid& other_before = input_side ? pair.output : pair.input;
    const Grid& other_after = input_side ? noisy.output : noisy.input;

    const auto total = before.rows() * before.cols();
    const auto expected = static_cast<std::size_t>(std::floor(level * static_cast<double>(total)));
    if (after.rows() != before.rows() || after.cols() != before.cols()) return fail("shape changed");
    std::size_t changed = 0;
    for (std::size_t i = 0; i < total; ++i) {
      const auto a = before.cells()[i];
      const auto b = after.cells()[i];
      if (a == b) continue;
      ++changed;
      if (!pool.contains(b)) return fail("replacement outside the value pool");
    }
    if (changed != expected) {
      return fail("case " + std::to_string(cases) + ": changed " + std::to_string(changed) + ", expected " +
                  std::to_string(expected));
    }
    if (other_after != other_before) return fail("untouched side modified");
    if (level == 0.0) {
      ++identity_cases;
      if (noisy != pair) return fail("level 0 is not identity");
    }
    ++cases;
  }
  const double elapsed = seconds_since(t0);
  if (elapsed >= kNoiseBudgetSeconds) return fail("took " + std::to_string(elapsed) + " s");
  std::ostringstream os;
  os << cases << " cases (" << identity_cases << " at level 0), " << elapsed << " s";
  return {Outcome::Pass, os.str()};
}

Outcome scorer_oracle() {
  Rng gen(0x5C0BE);
  for (std::size_t i = 0; i < kScorerPairs; ++i) {
    const Grid target = random_task_grid(gen);
    Grid predicted = target;
    switch (gen.below(3)) {
      case 0: predicted = random_task_grid(gen); break;
      case 1: {
        std::vector<CellValue> cells(target.cells().begin(), target.cells().end());
        for (auto& c : cells) {
          if (gen.below(4) == 0) c = static_cast<CellValue>(gen.below(10));
        }
        predicted = target.with_cells(std::move(cells));
        break;
      }
      default: break;
    }
    std::size_t matching = 0;
    for (std::size_t r = 0; r < target.rows(); ++r) {
      for (std::size_t c = 0; c < target.cols(); ++c) {
        if (r < predicted.rows() && c < predicted.cols() && predicted.at(r, c) == target.at(r, c)) ++matching;
      }
    }
    const std::size_t total = target.rows() * target.cols();
    const bool correct = predicted.rows() == target.rows() && predicted.cols() == target.cols() && matching == total;

    const auto got = match_percentage(predicted, target);
    // m1/t1 == m2/t2 as rationals, then the same double.
    if (got.matching_cells * total != matching * got.total_cells || got.total_cells != total) {
      return fail("pair " + std::to_string(i) + ": ratio differs");
    }
    if (got.percentage != static_cast<double>(matching) / static_cast<double>(total) * 100.0) {
      return fail("pair " + std::to_string(i) + ": percentage differs");
    }
    if (got.correct != correct) return fail("pair " + std::to_string(i) + ": correct flag differs");
  }

  for (std::size_t v = 0; v < kStatVectors; ++v) {
    const std::size_t n = 1 + gen.below(100);
    std::vector<MatchResult> results;
    std::size_t correct = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t t = 1 + gen.below(900);
      const std::size_t m = gen.below(4) == 0 ? t : gen.below(t + 1);
      correct += m == t ? 1 : 0;
      results.push_back({static_cast<double>(m) / static_cast<double>(t) * 100.0, m == t, m, t});
    }
    double sum = 0.0;
    for (const auto& r : results) sum += r.percentage;
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (const auto& r : results) sq += (r.percentage - mean) * (r.percentage - mean);
    const double stddev = std::sqrt(sq / static_cast<double>(n));

    const auto stats = summarize(results);
    auto close = [](double a, double b) { return std::abs(a - b) <= kStatRelTol * std::max(std::abs(b), 1.0); };
    if (stats.n != n || stats.correct_count != correct || !close(stats.mean, mean) || !close(stats.std, stddev)) {
      return fail("trial vector " + std::to_string(v) + " disagrees with two-pass reference");
    }
  }
  return {Outcome::Pass, std::to_string(kScorerPairs) + " grid pairs, " + std::to_string(kStatVectors) +
                             " trial vectors"};
}

Outcome single_flip() {
  const auto task = load_task(arcnoise::testing::task_file("272f95fa"));
  const Grid& target = task.train.at(1).output;
  if (target.rows() != 12 || target.cols() != 14) return fail("fixture is not 12x14");
  CompletionRequest request;
  request.prompt = "single flip";
  request.oracle_target = target;
  const auto reply = MockCorruptedOracle(MockCorruptedOracle::FlipCount{1}, 0).complete(request);
  const auto result = score_trial(extract_grid(reply.text), target);
  const double expected = 167.0 / 168.0 * 100.0;
  if (std::abs(result.percentage - expected) > kPercentTol) return fail(std::to_string(result.percentage));
  if (result.correct) return fail("one flipped cell scored as correct");
  std::ostringstream os;
  os.precision(12);
  os << "match " << result.percentage << "%, correct=false";
  return {Outcome::Pass, os.str()};
}

Outcome golden_prompts() {
  const auto task = load_task(arcnoise::testing::task_file("272f95fa"));
  const auto dir = arcnoise::testing::source_dir() / "golden";
  std::size_t checked = 0;
  for (const auto& c : golden_cases()) {
    const auto path = dir / c.file_name(task.task_id);
    if (!fs::exists(path)) return fail("missing " + path.filename().string());
    const auto stored = arcnoise::testing::slurp(path);
    if (render_golden(task, c) != stored) return fail("differs: " + path.filename().string());
    const auto header = stored.substr(0, stored.find('\n'));
    if (header.find("Find the common rule that maps") == std::string::npos) return fail("anchor missing");
    if (c.variant == PromptVariant::NoiseDisclosing &&
        header.find("Note that random noise has been added") == std::string::npos) {
      return fail("noise anchor missing in " + path.filename().string());
    }
    ++checked;
  }
  return {Outcome::Pass, std::to_string(checked) + " files byte-identical"};
}

ExperimentConfig default_grid(const fs::path& out) {
  ExperimentConfig c;
  c.task_dir = arcnoise::testing::task_dir();
  c.output_dir = out;
  return c;
}

Outcome echo_run() {
  TempDir dir("accept_echo");
  const auto config = default_grid(dir.path() / "run");
  const auto t0 = SteadyClock::now();
  const auto manifest = Runner(config).run();
  const double elapsed = seconds_since(t0);
  if (!manifest.complete()) return fail("run incomplete");
  const auto table = aggregate(config.output_dir);
  std::size_t points = 0;
  for (const auto& row : table.rows) {
    for (const auto& p : row.points) {
      ++points;
      if (p.correct_count != 30 || p.trials != 30 || p.mean_pct != 100.0) {
        return fail(row.key.task_id + " at level " + format_number(p.noise_level) + " is not 30/30");
      }
    }
  }
  if (points != manifest.cells.size()) return fail("point count " + std::to_string(points));
  if (elapsed >= kEchoBudgetSeconds) return fail("took " + std::to_string(elapsed) + " s");
  std::ostringstream os;
  os << points << " cells x 30 trials, all 30/30 and 100%, " << elapsed << " s";
  return {Outcome::Pass, os.str()};
}

Outcome degraded_run() {
  TempDir dir("accept_degraded");
  auto config = default_grid(dir.path() / "run");
  config.provider.kind = ProviderKind::MockCorruptedOracle;
  config.provider.mock.flip_level = kDegradeLevel;
  const auto manifest = Runner(config).run();
  const auto tasks = load_tasks(config);
  std::map<std::string, double> worst;
  for (const auto& cell : manifest.cells) {
    const auto summary =
        nlohmann::json::parse(arcnoise::testing::slurp(summary_path(config.output_dir, cell.key)));
    const Grid& target = tasks.at(cell.key.task_id).test.at(cell.key.test_index).output;
    const auto t = static_cast<double>(total_cells(target));
    const double flips = std::floor(kDegradeLevel * t);
    const double expected = (t - flips) / t * 100.0;
    const double err = std::abs(summary.at("mean").get<double>() - expected);
    if (summary.at("correct_count") != 0) return fail(cell.key.stem() + " has correct trials");
    if (err > kPercentTol) return fail(cell.key.stem() + " mean off by " + std::to_string(err));
    worst[cell.key.task_id] = std::max(worst[cell.key.task_id], err);
  }
  std::ostringstream os;
  os << manifest.cells.size() << " cells, correct_count 0; per-task mean:";
  for (const auto& [id, task] : tasks) {
    const auto t = total_cells(task.test.front().output);
    os << " " << id << "=" << (t - static_cast<std::size_t>(std::floor(kDegradeLevel * t))) << "/" << t;
  }
  return {Outcome::Pass, os.str()};
}

pid_t spawn_bench(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  std::string bench = ARCNOISE_BENCH_PATH;
  argv.push_back(bench.data());
  std::vector<std::string> copy = args;
  for (auto& a : copy) argv.push_back(a.data());
  argv.push_back(nullptr);
  const pid_t pid = fork();
  if (pid == 0) {
    const int devnull = ::open("/dev/null", O_WRONLY);
    if (devnull >= 0) ::dup2(devnull, 1);
    ::execv(bench.c_str(), argv.data());
    ::_exit(127);
  }
  return pid;
}

int wait_exit(pid_t pid) {
  int status = 0;
  ::waitpid(pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t record_lines(const fs::path& cells) {
  std::size_t n = 0;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(cells, ec)) {
    if (entry.path().extension() != ".jsonl") continue;
    const auto text = arcnoise::testing::slurp(entry.path());
    n += static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  }
  return n;
}

Outcome resume_determinism() {
  TempDir dir("accept_resume");
  ExperimentConfig config;
  config.task_dir = arcnoise::testing::task_dir();
  config.task_ids = {"272f95fa", "539a4f51", "cbded52d"};
  config.noise_levels = {0.0, 0.125};
  config.replications = {1, 3};
  config.variants = {PromptVariant::NoiseDisclosing};
  config.temperatures = {0.0};
  config.trials_per_cell = 10;
  config.clock = ClockMode::Frozen;
  config.provider.kind = ProviderKind::MockCorruptedOracle;
  config.provider.mock.flip_level = 0.05;
  config.provider.mock.delay = std::chrono::milliseconds(3);
  const auto config_file = dir.path() / "config.json";
  std::ofstream(config_file) << to_json(config).dump(2);
  const std::size_t total_trials = plan(config).size() * config.trials_per_cell;

  const auto whole = dir.path() / "whole";
  const auto cut = dir.path() / "cut";
  if (wait_exit(spawn_bench({"run", "--config", config_file.string(), "--out", whole.string()})) != 0) {
    return fail("uninterrupted run failed");
  }

  // Kill half a cell past a third of the trials, retrying until the kill
  // lands inside a cell rather than on a cell boundary.
  const std::size_t threshold = total_trials / 3 + config.trials_per_cell / 2;
  std::size_t seen = 0;
  bool mid_cell = false;
  for (int attempt = 0; attempt < 10 && !mid_cell; ++attempt) {
    fs::remove_all(cut);
    const pid_t pid = spawn_bench({"run", "--config", config_file.string(), "--out", cut.string()});
    const auto deadline = SteadyClock::now() + std::chrono::seconds(60);
    while (SteadyClock::now() < deadline) {
      if (fs::exists(manifest_path(cut)) && record_lines(cut / "cells") >= threshold) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    ::kill(pid, SIGKILL);
    wait_exit(pid);
    seen = record_lines(cut / "cells");
    mid_cell = fs::exists(manifest_path(cut)) && seen > 0 && seen < total_trials && seen % config.trials_per_cell != 0;
  }
  if (!mid_cell) return fail("could not interrupt the run inside a cell (" + std::to_string(seen) + ")");

  if (wait_exit(spawn_bench({"resume", "--out", cut.string(), "--config", config_file.string()})) != 0) {
    return fail("resume failed");
  }
  const auto a = arcnoise::testing::snapshot_tree(whole);
  const auto b = arcnoise::testing::snapshot_tree(cut);
  if (a.size() != b.size()) return fail("file count " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end()) return fail("missing " + name);
    if (it->second != bytes) return fail("differs: " + name);
  }
  return {Outcome::Pass, "killed mid-cell after " + std::to_string(seen) + "/" +
                             std::to_string(total_trials) + " trials; " + std::to_string(a.size()) + " files byte-identical after resume"};
}

Outcome live_smoke() {
  const char* endpoint = std::getenv("ARCNOISE_LIVE_ENDPOINT");
  const char* model = std::getenv("ARCNOISE_LIVE_MODEL");
  const char* key_env = std::getenv("ARCNOISE_LIVE_KEY_ENV");
  if (!endpoint || !model || !key_env || !std::getenv(key_env)) {
    return {Outcome::Skip, "set ARCNOISE_LIVE_ENDPOINT, ARCNOISE_LIVE_MODEL and ARCNOISE_LIVE_KEY_ENV to run"};
  }
  const std::string secret = std::getenv(key_env);
  TempDir dir("accept_live");
  ExperimentConfig config;
  config.task_dir = arcnoise::testing::task_dir();
  config.task_ids = {"272f95fa"};
  config.noise_levels = {0.0, 0.125};
  config.targets = {NoiseTarget::InputGrids};
  config.replications = {1};
  config.variants = {PromptVariant::Original};
  config.temperatures = {0.0};
  config.trials_per_cell = 3;
  config.provider.kind = ProviderKind::HttpChatCompletion;
  config.provider.endpoint = endpoint;
  config.provider.model = model;
  config.provider.credential_env = key_env;
  config.output_dir = dir.path() / "run";
  const auto manifest = Runner(config).run();
  if (!manifest.complete()) return fail("run incomplete");
  std::size_t ok = 0;
  for (const auto& cell : manifest.cells) {
    const auto records = read_records(records_path(config.output_dir, cell.key));
    if (records.size() != 3) return fail("expected 3 records in " + cell.key.stem());
    for (const auto& r : records) {
      for (const char* field : {"status", "response", "match_pct", "correct", "prompt_hash", "provider_meta"}) {
        if (!r.contains(field)) return fail(std::string("record lacks ") + field);
      }
      ok += r.at("status") == "ok" ? 1 : 0;
    }
  }
  for (const auto& [name, bytes] : arcnoise::testing::snapshot_tree(config.output_dir)) {
    if (bytes.find(secret) != std::string::npos) return fail("credential found in " + name);
  }
  return {Outcome::Pass, std::to_string(ok) + "/6 trials answered"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 noise-injector properties", noise_properties},
      {"2 scorer oracle equivalence", scorer_oracle},
      {"3 single-flip arithmetic", single_flip},
      {"4 prompt golden files", golden_prompts},
      {"5 end-to-end echo-oracle run", echo_run},
      {"6 degraded-oracle run", degraded_run},
      {"7 resume determinism", resume_determinism},
      {"8 live-mode smoke", live_smoke},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = fail(std::string("exception: ") + e.what());
    }
    const char* tag = outcome.kind == Outcome::Pass ? "PASS" : outcome.kind == Outcome::Fail ? "FAIL" : "SKIP";
    std::cout << "[" << tag << "] " << name << ": " << outcome.detail << std::endl;
    failures += outcome.kind == Outcome::Fail ? 1 : 0;
  }
  return failures == 0 ? 0 : 1;
}
