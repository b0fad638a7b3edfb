// Command-line front end for the simulator.
//
//   affinity_sim run --config exp.json [--seed N] [--out DIR]
//   affinity_sim compare --configs a.json b.json ... --out DIR
//   affinity_sim validate-regex --table data/pool_table.csv
//   affinity_sim trace --config exp.json --out trace.csv

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "affinity/affinity.hpp"

namespace h = affinity::harness;

namespace {

void print_summary(const h::ExperimentConfig& c, const h::Summary& s) {
  std::cout << c.name << " [" << affinity::rcp::to_string(c.strategy) << " " << c.layout_label()
            << (c.cache_enabled ? "" : " nocache") << "] median " << h::fixed(s.median_us / 1000.0, 2) << " ms, p99 "
            << h::fixed(s.p99_us / 1000.0, 2) << " ms, " << h::fixed(s.fps, 2) << " fps"
            << (s.saturated ? " (saturated)" : "") << '\n';
}

int run_cmd(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::string> out) {
  auto config = h::load_config(config_path);
  if (seed) config.rng_seed = *seed;
  if (out) config.output_dir = *out;
  auto report = h::run_experiment(config);
  h::write_outputs(report, config.output_dir);
  std::size_t failed = 0;
  for (const auto& r : report.repetitions) failed += r.failed_tasks;
  print_summary(config, report.summary);
  if (failed > 0) std::cerr << "warning: " << failed << " task(s) failed; see run_log files\n";
  std::cout << "wrote " << config.output_dir << '\n';
  return 0;
}

int compare_cmd(const std::vector<std::string>& paths, const std::string& out) {
  std::vector<h::ExperimentConfig> configs;
  for (const auto& p : paths) configs.push_back(h::load_config(p));
  auto result = h::compare(configs, std::filesystem::path(out));
  for (const auto& r : result.reports) print_summary(r.config, r.summary);
  std::cout << "wrote " << out << "/comparison.csv and comparison.svg\n";
  return 0;
}

int validate_cmd(const std::string& table) {
  auto report = h::validate_regex_file(table);
  h::write_regex_report(std::cout, report);
  return report.count(h::RegexStatus::Mismatch) == 0 ? 0 : 1;
}

int trace_cmd(const std::string& config_path, const std::string& out) {
  auto config = h::load_config(config_path);
  auto trace = h::trace_for(config, config.rng_seed);
  std::filesystem::path path(out);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ostringstream os;
  affinity::rcp::write_trace(os, *trace);
  h::write_file(path, os.str());
  std::cout << "wrote " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Affinity-grouping placement simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, table, trace_out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> configs;

  auto* run = app.add_subcommand("run", "Run one experiment config");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Base RNG seed (overrides rng_seed)");
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");

  auto* cmp = app.add_subcommand("compare", "Run several configs over the same trace and compare");
  cmp->add_option("--configs", configs, "Experiment configs")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", out_dir, "Output directory")->required();

  auto* val = app.add_subcommand("validate-regex", "Check pool regexes against a pool table");
  val->add_option("--table", table, "Pool table CSV")->required()->check(CLI::ExistingFile);

  auto* tr = app.add_subcommand("trace", "Export the actor trace of a config");
  tr->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", trace_out, "Trace CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_cmd(config_path, seed, out_dir.empty() ? std::nullopt : std::optional(out_dir));
    if (*cmp) return compare_cmd(configs, out_dir);
    if (*val) return validate_cmd(table);
    if (*tr) return trace_cmd(config_path, trace_out);
  } catch (const affinity::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
