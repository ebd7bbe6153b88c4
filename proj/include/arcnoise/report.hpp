#pragma once

// Aggregation of persisted trial records into per-series tables, and the
// CSV / JSON / plot-data emitters.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "arcnoise/error.hpp"
#include "arcnoise/runner.hpp"
#include "arcnoise/scorer.hpp"

namespace arcnoise {

enum class ReportErrc { NoRecords, EmptyTable, MalformedCsv, Io };

constexpr std::string_view to_string(ReportErrc c) noexcept {
  switch (c) {
    case ReportErrc::NoRecords: return "NoRecords";
    case ReportErrc::EmptyTable: return "EmptyTable";
    case ReportErrc::MalformedCsv: return "MalformedCsv";
    case ReportErrc::Io: return "IoError";
  }
  return "ReportError";
}

using ReportError = Error<ReportErrc>;

struct SeriesPoint {
  double noise_level = 0.0;
  std::size_t correct_count = 0;
  std::size_t trials = 0;
  double mean_pct = 0.0;
  double std_pct = 0.0;
  bool partial = false;  // fewer records than trials_per_cell; not carried by the CSV

  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

/// One curve: a task (test pair) at one temperature, prompt variant, noisy
/// side and replication factor.
struct SeriesKey {
  std::string task_id;  // "<id>" or "<id>__test<k>" for test pairs after the first
  double temperature = 0.0;
  PromptVariant variant = PromptVariant::Original;
  NoiseTarget target = NoiseTarget::InputGrids;
  std::size_t replication = 1;

  [[nodiscard]] auto tie() const { return std::tie(task_id, temperature, variant, target, replication); }
  friend bool operator==(const SeriesKey& a, const SeriesKey& b) { return a.tie() == b.tie(); }
  friend bool operator<(const SeriesKey& a, const SeriesKey& b) { return a.tie() < b.tie(); }
};

struct ReportRow {
  SeriesKey key;
  std::vector<SeriesPoint> points;  // strictly increasing noise level

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct ReportTable {
  std::vector<ReportRow> rows;

  [[nodiscard]] std::size_t point_count() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.points.size();
    return n;
  }
  friend bool operator==(const ReportTable&, const ReportTable&) = default;
};

inline constexpr std::string_view kCsvHeader =
    "task_id,temperature,variant,target,r,noise_level,correct_count,trials,mean_pct,std_pct";

/// Folds every cell's records into one point. Cells without records are skipped.
[[nodiscard]] inline ReportTable aggregate(const fs::path& out) {
  if (!fs::exists(manifest_path(out))) throw ReportError(ReportErrc::NoRecords, "no run in " + out.string());
  const auto manifest = read_manifest(out);
  const auto trials_per_cell = manifest.config.at("trials_per_cell").get<std::size_t>();

  std::map<SeriesKey, std::map<double, SeriesPoint>> grouped;
  for (const auto& cell : manifest.cells) {
    const auto records = read_records(records_path(out, cell.key));
    if (records.empty()) continue;
    std::vector<MatchResult> results;
    results.reserve(records.size());
    for (const auto& r : records) results.push_back(match_from_record(r));
    const auto stats = summarize(results);

    const auto& k = cell.key;
    SeriesKey key{k.test_index == 0 ? k.task_id : k.task_id + "__test" + std::to_string(k.test_index),
                  k.temperature, k.variant, k.target, k.replication};
    grouped[key][k.noise_level] =
        SeriesPoint{k.noise_level, stats.correct_count, stats.n, stats.mean, stats.std, stats.n < trials_per_cell};
  }
  if (grouped.empty()) throw ReportError(ReportErrc::NoRecords, "no trial records in " + out.string());

  ReportTable table;
  for (auto& [key, points] : grouped) {
    ReportRow row{key, {}};
    for (auto& [level, point] : points) row.points.push_back(point);
    table.rows.push_back(std::move(row));
  }
  return table;
}

[[nodiscard]] inline std::string to_csv(const ReportTable& table) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& row : table.rows) {
    for (const auto& p : row.points) {
      out += row.key.task_id + ',' + format_number(row.key.temperature) + ',' + std::string(to_string(row.key.variant)) +
             ',' + std::string(to_string(row.key.target)) + ',' + std::to_string(row.key.replication) + ',' +
             format_number(p.noise_level) + ',' + std::to_string(p.correct_count) + ',' + std::to_string(p.trials) +
             ',' + format_number(p.mean_pct) + ',' + format_number(p.std_pct) + '\n';
    }
  }
  return out;
}

/// Inverse of to_csv. The partial flag is not part of the CSV and reads back false.
[[nodiscard]] inline ReportTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ReportError(ReportErrc::MalformedCsv, "unexpected header");
  }
  std::map<SeriesKey, std::map<double, SeriesPoint>> grouped;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, ',');) f.push_back(field);
    if (f.size() != 10) throw ReportError(ReportErrc::MalformedCsv, "line " + std::to_string(line_no) + ": expected 10 fields");
    try {
      SeriesKey key{f[0], std::stod(f[1]), parse_prompt_variant(f[2]), parse_noise_target(f[3]),
                    static_cast<std::size_t>(std::stoull(f[4]))};
      SeriesPoint p{std::stod(f[5]), static_cast<std::size_t>(std::stoull(f[6])),
                    static_cast<std::size_t>(std::stoull(f[7])), std::stod(f[8]), std::stod(f[9]), false};
      grouped[key][p.noise_level] = p;
    } catch (const std::exception& e) {
      throw ReportError(ReportErrc::MalformedCsv, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  ReportTable table;
  for (auto& [key, points] : grouped) {
    ReportRow row{key, {}};
    for (auto& [level, point] : points) row.points.push_back(point);
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline nlohmann::json to_json(const SeriesKey& k) {
  return {{"task_id", k.task_id},
          {"temperature", k.temperature},
          {"variant", to_string(k.variant)},
          {"target", to_string(k.target)},
          {"r", k.replication}};
}

inline nlohmann::json to_json(const ReportTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table.rows) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : row.points) {
      points.push_back({{"noise_level", p.noise_level}, {"correct_count", p.correct_count}, {"trials", p.trials},
                        {"mean_pct", p.mean_pct}, {"std_pct", p.std_pct}, {"partial", p.partial}});
    }
    auto j = to_json(row.key);
    j["points"] = std::move(points);
    rows.push_back(std::move(j));
  }
  return {{"rows", rows}};
}

/// One document per (task, temperature) holding every (variant, target, r)
/// series as parallel arrays over noise level.
[[nodiscard]] inline std::map<std::string, nlohmann::json> plot_data(const ReportTable& table) {
  std::map<std::string, nlohmann::json> files;
  for (const auto& row : table.rows) {
    const std::string name = row.key.task_id + "__t" + format_number(row.key.temperature) + ".json";
    auto& doc = files[name];
    if (doc.is_null()) {
      doc = {{"task_id", row.key.task_id}, {"temperature", row.key.temperature}, {"x", "noise_level"},
             {"series", nlohmann::json::array()}};
    }
    nlohmann::json series = {{"variant", to_string(row.key.variant)},
                             {"target", to_string(row.key.target)},
                             {"r", row.key.replication},
                             {"label", std::string(to_string(row.key.variant)) + " / " +
                                           std::string(to_string(row.key.target)) + " noise / (" +
                                           std::to_string(row.key.replication) + "xk)-shot"}};
    for (const char* field : {"noise_level", "correct_count", "mean_pct", "std_pct"}) series[field] = nlohmann::json::array();
    for (const auto& p : row.points) {
      series["noise_level"].push_back(p.noise_level);
      series["correct_count"].push_back(p.correct_count);
      series["mean_pct"].push_back(p.mean_pct);
      series["std_pct"].push_back(p.std_pct);
    }
    doc["series"].push_back(std::move(series));
  }
  return files;
}

enum class ReportFormat { Csv, Json, PlotData };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  if (s == "plot-data") return ReportFormat::PlotData;
  throw ReportError(ReportErrc::Io, "unknown report format '" + std::string(s) + "'");
}

/// Writes the requested formats under `dir`; returns the files written.
inline std::vector<fs::path> emit(const ReportTable& table, const std::set<ReportFormat>& formats, const fs::path& dir) {
  if (table.rows.empty()) throw ReportError(ReportErrc::EmptyTable, "nothing to emit");
  std::vector<fs::path> written;
  auto write = [&](const fs::path& path, const std::string& content) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ReportError(ReportErrc::Io, "cannot write " + path.string());
    out << content;
    if (!out) throw ReportError(ReportErrc::Io, "write failed for " + path.string());
    written.push_back(path);
  };
  if (formats.contains(ReportFormat::Csv)) write(dir / "results.csv", to_csv(table));
  if (formats.contains(ReportFormat::Json)) write(dir / "results.json", to_json(table).dump(2) + "\n");
  if (formats.contains(ReportFormat::PlotData)) {
    for (const auto& [name, doc] : plot_data(table)) write(dir / "plot" / name, doc.dump(2) + "\n");
  }
  return written;
}

}  // namespace arcnoise
