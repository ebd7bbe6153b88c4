#pragma once

// Experiment orchestration.
//
// Output directory layout:
//   manifest.json              config snapshot (minus output_dir), config hash,
//                              per-cell status
//   cells/<cell>.jsonl         one TrialRecord per line, append-only
//   cells/<cell>.summary.json  CellSummary, written once the cell completes
//
// Every trial's noise stream is derived from (master_seed, task, example,
// replica, trial, side), so an interrupted run resumed with a deterministic
// provider reproduces the uninterrupted output tree byte for byte.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "arcnoise/error.hpp"
#include "arcnoise/grid.hpp"
#include "arcnoise/hash.hpp"
#include "arcnoise/http_client.hpp"
#include "arcnoise/llm_client.hpp"
#include "arcnoise/noise.hpp"
#include "arcnoise/prompt.hpp"
#include "arcnoise/scorer.hpp"

namespace arcnoise {

namespace fs = std::filesystem;

enum class RunErrc { ConfigInvalid, CorruptState, Io };

constexpr std::string_view to_string(RunErrc c) noexcept {
  switch (c) {
    case RunErrc::ConfigInvalid: return "ConfigInvalid";
    case RunErrc::CorruptState: return "CorruptState";
    case RunErrc::Io: return "IoError";
  }
  return "RunError";
}

using RunError = Error<RunErrc>;

/// Shortest decimal text that round-trips to the same double.
[[nodiscard]] inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct CellKey {
  std::string task_id;
  std::size_t test_index = 0;
  double noise_level = 0.0;
  NoiseTarget target = NoiseTarget::InputGrids;
  std::size_t replication = 1;
  PromptVariant variant = PromptVariant::Original;
  double temperature = 0.0;

  [[nodiscard]] auto tie() const {
    return std::tie(task_id, test_index, noise_level, target, replication, variant, temperature);
  }
  friend bool operator==(const CellKey& a, const CellKey& b) { return a.tie() == b.tie(); }
  friend bool operator<(const CellKey& a, const CellKey& b) { return a.tie() < b.tie(); }

  /// File-system safe identifier, unique per key.
  [[nodiscard]] std::string stem() const {
    std::string s = task_id;
    if (test_index != 0) s += "__test" + std::to_string(test_index);
    s += "__n" + format_number(noise_level) + "__" + std::string(to_string(target)) + "__r" +
         std::to_string(replication) + "__" + std::string(to_string(variant)) + "__t" + format_number(temperature);
    return s;
  }
};

inline nlohmann::json to_json(const CellKey& k) {
  return {{"task_id", k.task_id},         {"test_index", k.test_index}, {"noise_level", k.noise_level},
          {"target", to_string(k.target)}, {"r", k.replication},        {"variant", to_string(k.variant)},
          {"temperature", k.temperature}};
}

inline CellKey cell_key_from_json(const nlohmann::json& j) {
  CellKey k;
  k.task_id = j.at("task_id").get<std::string>();
  k.test_index = j.at("test_index").get<std::size_t>();
  k.noise_level = j.at("noise_level").get<double>();
  k.target = parse_noise_target(j.at("target").get<std::string>());
  k.replication = j.at("r").get<std::size_t>();
  k.variant = parse_prompt_variant(j.at("variant").get<std::string>());
  k.temperature = j.at("temperature").get<double>();
  return k;
}

enum class ClockMode { System, Frozen };

struct ExperimentConfig {
  fs::path task_dir = "data/tasks";
  std::vector<std::string> task_ids{"272f95fa", "539a4f51", "aabf363d", "bda2d7a6-a", "bda2d7a6", "bdad9b1f", "cbded52d"};
  std::vector<double> noise_levels{0.0, 0.05, 0.10, 0.125, 0.15, 0.20, 0.25, 0.30};
  std::vector<NoiseTarget> targets{NoiseTarget::InputGrids, NoiseTarget::OutputGrids};
  std::vector<std::size_t> replications{1, 3, 9};
  std::vector<PromptVariant> variants{PromptVariant::Original, PromptVariant::NoiseDisclosing};
  std::vector<double> temperatures{0.0, 1.0};
  std::size_t trials_per_cell = 30;
  std::uint64_t master_seed = 42;
  bool resample_per_trial = true;
  bool all_test_pairs = false;
  ClockMode clock = ClockMode::System;
  ProviderConfig provider;
  fs::path output_dir = "runs/default";
};

/// Canonical JSON form; also the manifest's config snapshot.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json targets = nlohmann::json::array();
  for (auto t : c.targets) targets.push_back(to_string(t));
  nlohmann::json variants = nlohmann::json::array();
  for (auto v : c.variants) variants.push_back(to_string(v));
  return {
      {"task_dir", c.task_dir.generic_string()},
      {"task_ids", c.task_ids},
      {"noise_levels", c.noise_levels},
      {"targets", targets},
      {"replications", c.replications},
      {"variants", variants},
      {"temperatures", c.temperatures},
      {"trials_per_cell", c.trials_per_cell},
      {"master_seed", c.master_seed},
      {"resample_per_trial", c.resample_per_trial},
      {"test_pairs", c.all_test_pairs ? "all" : "first"},
      {"clock", c.clock == ClockMode::System ? "system" : "frozen"},
      {"provider", to_json(c.provider)},
      {"output_dir", c.output_dir.generic_string()},
  };
}

/// Missing keys take the defaults above, so a config only needs to name what
/// it changes.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw RunError(RunErrc::ConfigInvalid, "config must be a JSON object");
    if (j.contains("task_dir")) c.task_dir = j["task_dir"].get<std::string>();
    if (j.contains("task_ids")) c.task_ids = j["task_ids"].get<std::vector<std::string>>();
    if (j.contains("noise_levels")) c.noise_levels = j["noise_levels"].get<std::vector<double>>();
    if (j.contains("targets")) {
      c.targets.clear();
      for (const auto& t : j["targets"]) c.targets.push_back(parse_noise_target(t.get<std::string>()));
    }
    if (j.contains("replications")) c.replications = j["replications"].get<std::vector<std::size_t>>();
    if (j.contains("variants")) {
      c.variants.clear();
      for (const auto& v : j["variants"]) c.variants.push_back(parse_prompt_variant(v.get<std::string>()));
    }
    if (j.contains("temperatures")) c.temperatures = j["temperatures"].get<std::vector<double>>();
    c.trials_per_cell = j.value("trials_per_cell", c.trials_per_cell);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.resample_per_trial = j.value("resample_per_trial", c.resample_per_trial);
    const auto pairs = j.value("test_pairs", std::string("first"));
    if (pairs != "first" && pairs != "all") throw RunError(RunErrc::ConfigInvalid, "test_pairs must be first|all");
    c.all_test_pairs = pairs == "all";
    const auto clock = j.value("clock", std::string("system"));
    if (clock != "system" && clock != "frozen") throw RunError(RunErrc::ConfigInvalid, "clock must be system|frozen");
    c.clock = clock == "system" ? ClockMode::System : ClockMode::Frozen;
    if (j.contains("provider")) c.provider = provider_config_from_json(j["provider"]);
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw RunError(RunErrc::ConfigInvalid, e.what());
  } catch (const NoiseError& e) {
    throw RunError(RunErrc::ConfigInvalid, e.what());
  } catch (const PromptError& e) {
    throw RunError(RunErrc::ConfigInvalid, e.what());
  } catch (const ProviderError& e) {
    throw RunError(RunErrc::ConfigInvalid, e.what());
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RunError(RunErrc::Io, "cannot open config " + path.string());
  try {
    return experiment_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw RunError(RunErrc::ConfigInvalid, e.what());
  }
}

/// Hash of the config snapshot, excluding where the output goes.
[[nodiscard]] inline std::string config_hash(const nlohmann::json& snapshot) {
  auto copy = snapshot;
  copy.erase("output_dir");
  return hex64(fnv1a64(copy.dump()));
}

[[nodiscard]] inline std::string config_hash(const ExperimentConfig& c) { return config_hash(to_json(c)); }

namespace detail {

template <typename T>
void require_unique_nonempty(const std::vector<T>& values, const char* name) {
  if (values.empty()) throw RunError(RunErrc::ConfigInvalid, std::string(name) + " must not be empty");
  std::set<T> seen(values.begin(), values.end());
  if (seen.size() != values.size()) throw RunError(RunErrc::ConfigInvalid, std::string(name) + " has duplicates");
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  detail::require_unique_nonempty(c.task_ids, "task_ids");
  detail::require_unique_nonempty(c.noise_levels, "noise_levels");
  detail::require_unique_nonempty(c.targets, "targets");
  detail::require_unique_nonempty(c.replications, "replications");
  detail::require_unique_nonempty(c.variants, "variants");
  detail::require_unique_nonempty(c.temperatures, "temperatures");
  if (c.trials_per_cell == 0) throw RunError(RunErrc::ConfigInvalid, "trials_per_cell must be >= 1");
  for (double n : c.noise_levels) {
    if (!(n >= 0.0 && n <= 1.0)) throw RunError(RunErrc::ConfigInvalid, "noise level outside [0, 1]");
  }
  for (auto r : c.replications) {
    if (r == 0) throw RunError(RunErrc::ConfigInvalid, "replication factor must be >= 1");
  }
  for (double t : c.temperatures) {
    if (!(t >= 0.0)) throw RunError(RunErrc::ConfigInvalid, "temperature must be >= 0");
  }
  try {
    c.provider.validate();
  } catch (const ProviderError& e) {
    throw RunError(RunErrc::ConfigInvalid, e.what());
  }
}

[[nodiscard]] inline fs::path task_path(const ExperimentConfig& c, const std::string& task_id) {
  return c.task_dir / (task_id + ".json");
}

[[nodiscard]] inline std::map<std::string, ArcTask> load_tasks(const ExperimentConfig& c) {
  std::map<std::string, ArcTask> tasks;
  for (const auto& id : c.task_ids) {
    const auto path = task_path(c, id);
    if (!fs::exists(path)) throw RunError(RunErrc::ConfigInvalid, "task " + id + " not found in " + c.task_dir.string());
    try {
      tasks.emplace(id, load_task(path));
    } catch (const GridError& e) {
      throw RunError(RunErrc::ConfigInvalid, e.what());
    }
  }
  return tasks;
}

/// Every cell of the experiment, sorted by key.
[[nodiscard]] inline std::vector<CellKey> plan(const ExperimentConfig& c,
                                               const std::map<std::string, ArcTask>& tasks) {
  validate(c);
  std::vector<CellKey> cells;
  for (const auto& id : c.task_ids) {
    const auto it = tasks.find(id);
    if (it == tasks.end()) throw RunError(RunErrc::ConfigInvalid, "task " + id + " not loaded");
    const std::size_t tests = c.all_test_pairs ? it->second.test.size() : 1;
    for (std::size_t test = 0; test < tests; ++test)
      for (double level : c.noise_levels)
        for (auto target : c.targets)
          for (auto r : c.replications)
            for (auto variant : c.variants)
              for (double temp : c.temperatures) cells.push_back({id, test, level, target, r, variant, temp});
  }
  std::sort(cells.begin(), cells.end());
  return cells;
}

[[nodiscard]] inline std::vector<CellKey> plan(const ExperimentConfig& c) { return plan(c, load_tasks(c)); }

enum class CellState { Pending, Partial, Complete };

constexpr std::string_view to_string(CellState s) noexcept {
  switch (s) {
    case CellState::Pending: return "pending";
    case CellState::Partial: return "partial";
    case CellState::Complete: return "complete";
  }
  return "pending";
}

struct CellStatus {
  CellKey key;
  CellState state = CellState::Pending;
  std::size_t trials_done = 0;
};

struct RunManifest {
  nlohmann::json config;
  std::string config_hash;
  std::vector<CellStatus> cells;

  [[nodiscard]] bool complete() const {
    return std::all_of(cells.begin(), cells.end(), [](const auto& c) { return c.state == CellState::Complete; });
  }
  [[nodiscard]] std::size_t trials_done() const {
    std::size_t n = 0;
    for (const auto& c : cells) n += c.trials_done;
    return n;
  }
};

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : m.cells) {
    cells.push_back({{"key", to_json(c.key)},
                     {"file", "cells/" + c.key.stem() + ".jsonl"},
                     {"status", to_string(c.state)},
                     {"trials_done", c.trials_done}});
  }
  return {{"format", 1}, {"config", m.config}, {"config_hash", m.config_hash}, {"cells", cells}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.config = j.at("config");
  m.config_hash = j.at("config_hash").get<std::string>();
  for (const auto& c : j.at("cells")) {
    CellStatus s;
    s.key = cell_key_from_json(c.at("key"));
    const auto state = c.at("status").get<std::string>();
    s.state = state == "complete" ? CellState::Complete : state == "partial" ? CellState::Partial : CellState::Pending;
    s.trials_done = c.at("trials_done").get<std::size_t>();
    m.cells.push_back(std::move(s));
  }
  return m;
}

inline fs::path manifest_path(const fs::path& out) { return out / "manifest.json"; }
inline fs::path records_path(const fs::path& out, const CellKey& k) { return out / "cells" / (k.stem() + ".jsonl"); }
inline fs::path summary_path(const fs::path& out, const CellKey& k) {
  return out / "cells" / (k.stem() + ".summary.json");
}

/// Replaces `path` with `content` via a temporary file and rename.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RunError(RunErrc::Io, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw RunError(RunErrc::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw RunError(RunErrc::Io, "rename to " + path.string() + ": " + ec.message());
}

inline RunManifest read_manifest(const fs::path& out) {
  std::ifstream in(manifest_path(out));
  if (!in) throw RunError(RunErrc::CorruptState, "no manifest in " + out.string());
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const std::exception& e) {
    throw RunError(RunErrc::CorruptState, std::string("unreadable manifest: ") + e.what());
  }
}

/// Parsed records of one cell. A final line without its newline is a torn
/// append from an interrupted run; with `repair` it is cut off the file,
/// otherwise it is ignored. Any other malformed line is CorruptState.
inline std::vector<nlohmann::json> read_records(const fs::path& path, bool repair = false) {
  std::vector<nlohmann::json> records;
  if (!fs::exists(path)) return records;
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();

  std::size_t start = 0;
  while (start < content.size()) {
    const auto nl = content.find('\n', start);
    if (nl == std::string::npos) {
      if (repair) fs::resize_file(path, start);
      break;
    }
    try {
      records.push_back(nlohmann::json::parse(content.substr(start, nl - start)));
    } catch (const nlohmann::json::parse_error&) {
      throw RunError(RunErrc::CorruptState, path.string() + ": malformed record at byte " + std::to_string(start));
    }
    start = nl + 1;
  }
  return records;
}

using Clock = std::function<std::int64_t()>;

inline Clock make_clock(ClockMode mode) {
  if (mode == ClockMode::Frozen) return [] { return std::int64_t{0}; };
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

struct RunOptions {
  // Provider override (tests); built from the config when empty.
  std::shared_ptr<const Provider> provider;
  // Stop after this many new trials, leaving the run resumable.
  std::optional<std::size_t> trial_budget;
};

/// Scores a response against the clean target and fills the scoring fields of
/// a record.
inline void score_into(nlohmann::json& record, const std::optional<std::string>& response, const Grid& target) {
  Extraction extraction;
  if (response) extraction = extract_grid(*response);
  const auto result = score_trial(extraction, target);
  record["extraction"] = extraction.parsed() ? "parsed" : "invalid";
  record["span"] = extraction.span ? nlohmann::json::array({extraction.span->begin, extraction.span->end})
                                   : nlohmann::json(nullptr);
  record["matching_cells"] = result.matching_cells;
  record["total_cells"] = result.total_cells;
  record["match_pct"] = result.percentage;
  record["correct"] = result.correct;
}

inline MatchResult match_from_record(const nlohmann::json& record) {
  return {record.at("match_pct").get<double>(), record.at("correct").get<bool>(),
          record.at("matching_cells").get<std::size_t>(), record.at("total_cells").get<std::size_t>()};
}

class Runner {
 public:
  Runner(ExperimentConfig config, RunOptions options = {})
      : config_(std::move(config)), options_(std::move(options)), clock_(make_clock(config_.clock)) {}

  /// Starts a fresh run in config.output_dir.
  RunManifest run() {
    validate(config_);
    tasks_ = load_tasks(config_);
    const auto cells = plan(config_, tasks_);
    const auto& out = config_.output_dir;
    if (fs::exists(manifest_path(out))) {
      throw RunError(RunErrc::ConfigInvalid, out.string() + " already holds a run; use resume");
    }
    std::error_code ec;
    fs::create_directories(out / "cells", ec);
    if (ec) throw RunError(RunErrc::Io, "cannot create " + out.string() + ": " + ec.message());

    manifest_.config = to_json(config_);
    manifest_.config.erase("output_dir");
    manifest_.config_hash = config_hash(manifest_.config);
    manifest_.cells.clear();
    for (const auto& k : cells) manifest_.cells.push_back({k, CellState::Pending, 0});
    write_manifest();
    execute();
    return manifest_;
  }

  /// Continues the run stored in `out`. If `expected` is given its hash must
  /// match the stored one.
  static RunManifest resume(const fs::path& out, const std::optional<ExperimentConfig>& expected = std::nullopt,
                            RunOptions options = {}) {
    const auto stored = read_manifest(out);
    if (config_hash(stored.config) != stored.config_hash) {
      throw RunError(RunErrc::CorruptState, "manifest config does not match its recorded hash");
    }
    if (expected && config_hash(*expected) != stored.config_hash) {
      throw RunError(RunErrc::CorruptState, "config hash differs from the run in " + out.string());
    }
    auto config = experiment_config_from_json(stored.config);
    config.output_dir = out;
    Runner runner(std::move(config), std::move(options));
    runner.tasks_ = load_tasks(runner.config_);
    const auto cells = plan(runner.config_, runner.tasks_);
    if (cells.size() != stored.cells.size() ||
        !std::equal(cells.begin(), cells.end(), stored.cells.begin(),
                    [](const CellKey& a, const CellStatus& b) { return a == b.key; })) {
      throw RunError(RunErrc::CorruptState, "manifest cells do not match the config plan");
    }
    remove_stale_temporaries(out);
    runner.manifest_ = stored;
    runner.execute();
    return runner.manifest_;
  }

  /// Re-derives scores and summaries from persisted raw responses without
  /// contacting any provider. Returns the number of records rescored.
  static std::size_t rescore(const fs::path& out) {
    const auto manifest = read_manifest(out);
    auto config = experiment_config_from_json(manifest.config);
    const auto tasks = load_tasks(config);
    std::size_t count = 0;
    for (const auto& cell : manifest.cells) {
      auto records = read_records(records_path(out, cell.key));
      if (records.empty()) continue;
      const Grid& target = tasks.at(cell.key.task_id).test.at(cell.key.test_index).output;
      std::string content;
      std::vector<MatchResult> results;
      for (auto& record : records) {
        std::optional<std::string> response;
        if (record.at("response").is_string()) response = record["response"].get<std::string>();
        score_into(record, response, target);
        results.push_back(match_from_record(record));
        content += record.dump() + "\n";
        ++count;
      }
      write_file_atomic(records_path(out, cell.key), content);
      if (cell.state == CellState::Complete) write_summary(out, cell.key, results, config.trials_per_cell);
    }
    return count;
  }

  [[nodiscard]] const RunManifest& manifest() const noexcept { return manifest_; }

 private:
  static void write_summary(const fs::path& out, const CellKey& key, const std::vector<MatchResult>& results,
                            std::size_t trials_per_cell) {
    const auto stats = summarize(results);
    const nlohmann::json summary = {{"key", to_json(key)},     {"n", stats.n},
                                    {"correct_count", stats.correct_count}, {"mean", stats.mean},
                                    {"std", stats.std},        {"trials_per_cell", trials_per_cell}};
    write_file_atomic(summary_path(out, key), summary.dump(2) + "\n");
  }

  /// Leftovers of write_file_atomic calls cut short by a kill.
  static void remove_stale_temporaries(const fs::path& out) {
    for (const auto& dir : {out, out / "cells"}) {
      std::error_code ec;
      for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (entry.path().extension() == ".tmp") fs::remove(entry.path(), ec);
      }
    }
  }

  void write_manifest() {
    write_file_atomic(manifest_path(config_.output_dir), to_json(manifest_).dump(2) + "\n");
  }

  /// The manifest file itself is rewritten when a cell stops early and once
  /// at the end of execute(); resume trusts the record files, not these states.
  void update_cell(std::size_t index, CellState state, std::size_t done, bool persist = false) {
    std::lock_guard lock(manifest_mutex_);
    manifest_.cells[index].state = state;
    manifest_.cells[index].trials_done = done;
    if (persist) write_manifest();
  }

  bool take_budget() {
    if (stop_) return false;
    if (!options_.trial_budget) return true;
    std::size_t left = budget_left_.load();
    while (left > 0) {
      if (budget_left_.compare_exchange_weak(left, left - 1)) return true;
    }
    return false;
  }

  void execute() {
    if (!options_.provider) options_.provider = make_provider(config_.provider);
    if (options_.trial_budget) budget_left_ = *options_.trial_budget;

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr failure;
    auto worker = [&] {
      for (std::size_t i = next++; i < manifest_.cells.size(); i = next++) {
        try {
          run_cell(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!failure) failure = std::current_exception();
          stop_ = true;
        }
      }
    };
    {
      std::vector<std::jthread> workers;
      const std::size_t n = std::min(config_.provider.parallelism, std::max<std::size_t>(manifest_.cells.size(), 1));
      for (std::size_t t = 1; t < n; ++t) workers.emplace_back(worker);
      worker();
    }
    write_manifest();
    if (failure) std::rethrow_exception(failure);
  }

  void run_cell(std::size_t index) {
    const CellKey key = manifest_.cells[index].key;
    const auto& out = config_.output_dir;
    const auto path = records_path(out, key);
    const auto records = read_records(path, /*repair=*/true);

    std::vector<MatchResult> results;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      if (r.value("trial_index", std::size_t{~0ULL}) != i || cell_key_from_json(r) != key) {
        throw RunError(RunErrc::CorruptState, path.string() + ": record " + std::to_string(i) + " does not belong here");
      }
      results.push_back(match_from_record(r));
    }
    if (results.size() > config_.trials_per_cell) {
      throw RunError(RunErrc::CorruptState, path.string() + " has more records than trials_per_cell");
    }

    if (results.size() == config_.trials_per_cell && fs::exists(summary_path(out, key))) {
      update_cell(index, CellState::Complete, results.size());
      return;
    }

    const ArcTask& task = tasks_.at(key.task_id);
    std::ofstream log(path, std::ios::binary | std::ios::app);
    if (!log) throw RunError(RunErrc::Io, "cannot append to " + path.string());
    for (std::size_t trial = results.size(); trial < config_.trials_per_cell; ++trial) {
      if (!take_budget()) {
        update_cell(index, results.empty() ? CellState::Pending : CellState::Partial, results.size(), true);
        return;
      }
      auto record = run_trial(task, key, trial);
      results.push_back(match_from_record(record));
      log << record.dump() << '\n';
      log.flush();
      if (!log) throw RunError(RunErrc::Io, "append failed for " + path.string());
    }
    write_summary(out, key, results, config_.trials_per_cell);
    update_cell(index, CellState::Complete, results.size());
  }

  nlohmann::json run_trial(const ArcTask& task, const CellKey& key, std::size_t trial) const {
    nlohmann::json record = to_json(key);
    record["trial_index"] = trial;
    const std::uint64_t seed_index = config_.resample_per_trial ? trial : 0;
    record["seed_index"] = seed_index;

    const Grid& target = task.test.at(key.test_index).output;
    std::optional<std::string> response;
    const auto started = clock_();
    try {
      const NoiseSpec spec{key.target, NoiseLevel(key.noise_level), config_.master_seed};
      const auto bundle =
          build_bundle(task, key.test_index, ReplicationFactor(key.replication), spec, key.variant, seed_index);
      record["prompt_hash"] = hex64(fnv1a64(bundle.text));

      CompletionRequest request;
      request.id = key.stem() + "#" + std::to_string(trial);
      request.model = config_.provider.model;
      request.prompt = bundle.text;
      request.temperature = key.temperature;
      request.max_tokens = config_.provider.max_tokens;
      request.timeout = config_.provider.timeout;
      request.oracle_target = bundle.target;

      auto reply = options_.provider->complete(request);
      response = std::move(reply.text);
      record["status"] = "ok";
      record["error"] = nullptr;
      record["provider_meta"] = std::move(reply.provider_meta);
    } catch (const ProviderError& e) {
      record["status"] = "error";
      record["error"] = {{"kind", to_string(e.code())}, {"message", e.what()}};
      record["provider_meta"] = nlohmann::json::object();
    } catch (const NoiseError& e) {
      record["status"] = "error";
      record["error"] = {{"kind", to_string(e.code())}, {"message", e.what()}};
      record["provider_meta"] = nlohmann::json::object();
    }
    const auto finished = clock_();
    if (!record.contains("prompt_hash")) record["prompt_hash"] = nullptr;
    record["response"] = response ? nlohmann::json(*response) : nlohmann::json(nullptr);
    record["started_at_ms"] = started;
    record["finished_at_ms"] = finished;
    record["latency_ms"] = finished - started;
    score_into(record, response, target);
    return record;
  }

  ExperimentConfig config_;
  RunOptions options_;
  Clock clock_;
  std::map<std::string, ArcTask> tasks_;
  RunManifest manifest_;
  std::mutex manifest_mutex_;
  std::atomic<std::size_t> budget_left_{0};
  std::atomic<bool> stop_{false};
};

}  // namespace arcnoise
