// flymaster: run, sweep, fit-latency and plot-data front end.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "flymaster/experiment.hpp"
#include "flymaster/gev_fit.hpp"
#include "flymaster/orchestrator.hpp"

namespace fm = flymaster;

namespace {

constexpr int kExitRuntime = 2;

int cmd_run(const std::string& config_path, const std::string& out_path, std::optional<std::uint64_t> seed) {
  auto kv = fm::KeyValues::load(config_path);
  if (seed) kv.set("master_seed", std::to_string(*seed));
  const auto cfg = fm::config_from_entries(kv);
  const auto result = fm::run_fl(cfg);
  fm::atomic_write(out_path, fm::ledger_csv(cfg, result.records));
  if (!result.records.empty()) {
    std::cerr << cfg.rounds << " rounds, cumulative " << result.records.back().cumulative_ms << " ms -> " << out_path
              << '\n';
  }
  return 0;
}

int cmd_sweep(const std::string& grid_path, const std::string& out_dir, unsigned jobs,
              std::optional<std::uint64_t> seed) {
  auto grid = fm::load_grid(grid_path);
  if (seed) grid.seeds = {*seed};
  const auto report = fm::run_sweep(grid, out_dir, jobs);
  std::cerr << report.cells_ok << "/" << report.cells_total << " cells ok\n";
  for (const auto& [cell, msg] : report.failures) std::cerr << "failed " << fm::ledger_filename(cell) << ": " << msg << '\n';
  return report.failures.empty() ? 0 : kExitRuntime;
}

int cmd_fit(const std::string& trace_path, const std::string& out_path) {
  const auto samples = fm::load_latency_trace(trace_path);
  const auto rows = fm::compare_fits(samples);
  fm::atomic_write(out_path, fm::fit_report_csv(rows));
  std::cerr << "best fit: " << rows.front().model << '\n';
  return 0;
}

int cmd_plot(const std::string& summary_path, const std::string& out_dir) {
  const auto files = fm::plot_data(summary_path, out_dir);
  std::cerr << files.size() << " plot files written to " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flying-master federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path, grid_path, trace_path, summary_path, out;
  std::optional<std::uint64_t> seed;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());

  auto* run = app.add_subcommand("run", "Run one experiment and write its round ledger");
  run->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Ledger CSV path")->required();
  run->add_option("--seed", seed, "Override master_seed");

  auto* sweep = app.add_subcommand("sweep", "Run a parameter grid");
  sweep->add_option("--grid", grid_path, "Grid file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "Output directory")->required();
  sweep->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--seed", seed, "Run only this seed");

  auto* fit = app.add_subcommand("fit-latency", "Fit GEV and Gaussian models to an RTT trace");
  fit->add_option("trace", trace_path, "Trace CSV with an rtt_ms column")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", out, "Fit report CSV path")->required();

  auto* plot = app.add_subcommand("plot-data", "Split a sweep summary into per-subplot CSVs");
  plot->add_option("summary", summary_path, "summary.csv from a sweep")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, out, seed);
    if (sweep->parsed()) return cmd_sweep(grid_path, out, jobs, seed);
    if (fit->parsed()) return cmd_fit(trace_path, out);
    if (plot->parsed()) return cmd_plot(summary_path, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 1;
}
