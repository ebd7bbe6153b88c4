// bench: run, resume, rescore and report noise-robustness experiments.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "arcnoise/arcnoise.hpp"

namespace {

using namespace arcnoise;

void print_manifest(const RunManifest& m, const fs::path& out) {
  std::size_t complete = 0;
  for (const auto& c : m.cells) complete += c.state == CellState::Complete ? 1 : 0;
  std::cout << out.string() << ": " << complete << "/" << m.cells.size() << " cells complete, " << m.trials_done()
            << " trials recorded\n";
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int golden(const fs::path& dir, const fs::path& task_file, bool regen) {
  const auto task = load_task(task_file);
  int mismatches = 0;
  if (regen) fs::create_directories(dir);
  for (const auto& c : golden_cases()) {
    const auto path = dir / c.file_name(task.task_id);
    const auto text = render_golden(task, c);
    if (regen) {
      std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
      std::cout << "wrote " << path.string() << "\n";
    } else if (!fs::exists(path) || read_file(path) != text) {
      std::cout << "MISMATCH " << path.string() << "\n";
      ++mismatches;
    }
  }
  if (!regen) std::cout << (mismatches == 0 ? "all golden prompts match\n" : "golden prompts differ\n");
  return mismatches == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-robustness benchmark harness for ARC grid solvers"};
  app.require_subcommand(1);

  std::string config_file;
  std::string out_dir;

  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("--config", config_file, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Override the config's output_dir");

  auto* plan_cmd = app.add_subcommand("plan", "Print the number of cells and trials a config expands to");
  plan_cmd->add_option("--config", config_file, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  auto* resume = app.add_subcommand("resume", "Continue an interrupted run");
  resume->add_option("--out", out_dir, "Run directory")->required();
  resume->add_option("--config", config_file, "Require this config to match the run")->check(CLI::ExistingFile);

  auto* rescore = app.add_subcommand("rescore", "Re-score stored responses without calling the provider");
  rescore->add_option("--out", out_dir, "Run directory")->required();

  std::string formats = "csv,json,plot-data";
  std::string dest;
  auto* report = app.add_subcommand("report", "Aggregate a run into CSV, JSON and plot data");
  report->add_option("--out", out_dir, "Run directory")->required();
  report->add_option("--format", formats, "Comma-separated subset of csv,json,plot-data")->capture_default_str();
  report->add_option("--dest", dest, "Report directory (default: <out>/report)");

  std::string task_file;
  double level = 0.0;
  std::string target = "input";
  std::uint64_t seed = 0;
  std::size_t replication = 1;
  std::string variant = "original";
  std::uint64_t trial = 0;
  auto* perturb = app.add_subcommand("perturb", "Print a noisy prompt for one task");
  perturb->add_option("--task", task_file, "ARC task file")->required()->check(CLI::ExistingFile);
  perturb->add_option("--level", level, "Noise level in [0, 1]")->required()->check(CLI::Range(0.0, 1.0));
  perturb->add_option("--target", target, "Noisy side")->check(CLI::IsMember({"input", "output"}))->capture_default_str();
  perturb->add_option("--seed", seed, "Seed")->capture_default_str();
  perturb->add_option("--r", replication, "Replicas per demonstration")->check(CLI::PositiveNumber)->capture_default_str();
  perturb->add_option("--variant", variant, "Prompt variant")
      ->check(CLI::IsMember({"original", "noise_disclosing"}))
      ->capture_default_str();
  perturb->add_option("--trial", trial, "Trial index")->capture_default_str();

  bool regen = false;
  std::string golden_dir = "golden";
  std::string golden_task = "data/tasks/272f95fa.json";
  auto* golden_cmd = app.add_subcommand("golden", "Check (or with --regen, rewrite) the golden prompt files");
  golden_cmd->add_flag("--regen", regen, "Rewrite the golden files");
  golden_cmd->add_option("--dir", golden_dir, "Golden directory")->capture_default_str();
  golden_cmd->add_option("--task", golden_task, "Task the goldens are rendered from")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto config = load_experiment_config(config_file);
      if (!out_dir.empty()) config.output_dir = out_dir;
      Runner runner(config);
      print_manifest(runner.run(), config.output_dir);
    } else if (*plan_cmd) {
      const auto config = load_experiment_config(config_file);
      const auto cells = plan(config);
      std::cout << cells.size() << " cells, " << cells.size() * config.trials_per_cell << " trials\n";
    } else if (*resume) {
      std::optional<ExperimentConfig> expected;
      if (!config_file.empty()) expected = load_experiment_config(config_file);
      print_manifest(Runner::resume(out_dir, expected), out_dir);
    } else if (*rescore) {
      std::cout << "rescored " << Runner::rescore(out_dir) << " records\n";
    } else if (*report) {
      std::set<ReportFormat> wanted;
      std::stringstream ss(formats);
      for (std::string f; std::getline(ss, f, ',');) wanted.insert(parse_report_format(f));
      const fs::path report_dir = dest.empty() ? fs::path(out_dir) / "report" : fs::path(dest);
      for (const auto& path : emit(aggregate(out_dir), wanted, report_dir)) std::cout << path.string() << "\n";
    } else if (*perturb) {
      const auto task = load_task(task_file);
      const NoiseSpec spec{parse_noise_target(target), NoiseLevel(level), seed};
      std::cout << build_bundle(task, 0, ReplicationFactor(replication), spec, parse_prompt_variant(variant), trial).text;
    } else if (*golden_cmd) {
      return golden(golden_dir, golden_task, regen);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
