#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "flymaster/config.hpp"
#include "flymaster/csv.hpp"
#include "flymaster/error.hpp"
#include "flymaster/gev_fit.hpp"
#include "flymaster/orchestrator.hpp"
#include "flymaster/selection_algorithm.hpp"

namespace flymaster {

/// A grid file is an ordinary config (minus the per-cell keys) plus `sweep.*`
/// list keys. Each cell is that config with the cell's values filled in.
struct SweepGrid {
  std::vector<std::size_t> n_values{100, 1000};
  std::vector<std::size_t> k_values{1, 5, 10, 50};
  std::vector<std::size_t> type_counts{2, 4};
  std::vector<SelectionAlgorithm> algorithms{kAllAlgorithms.begin(), kAllAlgorithms.end()};
  std::vector<std::uint64_t> seeds{1};
  std::size_t rounds = 10;
  KeyValues base;

  void validate() const {
    if (n_values.empty() || k_values.empty() || type_counts.empty() || algorithms.empty() || seeds.empty()) {
      throw Error(ErrorKind::EmptyList, "sweep lists must be non-empty");
    }
    for (auto n : n_values) {
      for (auto k : k_values) {
        if (k > n) {
          throw Error(ErrorKind::InvalidRange,
                      "grid cell K=" + std::to_string(k) + " exceeds N=" + std::to_string(n));
        }
      }
    }
  }
};

struct SweepCell {
  std::size_t n;
  std::size_t k;
  std::size_t types;
  SelectionAlgorithm algo;
  std::uint64_t seed;
};

inline constexpr const char* kCellKeys[] = {"n_devices", "participants_per_round", "device_type_count",
                                            "selection_algorithm", "master_seed"};

namespace detail {
template <class T>
std::vector<T> parse_counts(const std::string& text, std::string_view key) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<T>(item, key));
  return out;
}
}  // namespace detail

inline SweepGrid grid_from_entries(KeyValues kv) {
  SweepGrid g;
  if (auto v = kv.raw("sweep.n_values")) g.n_values = detail::parse_counts<std::size_t>(*v, "sweep.n_values");
  if (auto v = kv.raw("sweep.k_values")) g.k_values = detail::parse_counts<std::size_t>(*v, "sweep.k_values");
  if (auto v = kv.raw("sweep.type_counts")) g.type_counts = detail::parse_counts<std::size_t>(*v, "sweep.type_counts");
  if (auto v = kv.raw("sweep.seeds")) g.seeds = detail::parse_counts<std::uint64_t>(*v, "sweep.seeds");
  if (auto v = kv.raw("sweep.algorithms"); v && *v != "all") {
    g.algorithms.clear();
    for (const auto& name : split_list(*v)) {
      auto algo = parse_algorithm(name);
      if (!algo) throw Error(ErrorKind::ParseError, "unknown algorithm '" + name + "' in sweep.algorithms");
      g.algorithms.push_back(*algo);
    }
  }
  for (const char* key : {"sweep.n_values", "sweep.k_values", "sweep.type_counts", "sweep.seeds", "sweep.algorithms"}) {
    kv.erase(key);
  }
  for (const auto& [key, value] : kv.entries()) {
    if (key.starts_with("sweep.")) throw Error(ErrorKind::ParseError, "unknown grid key '" + key + "'");
    for (const char* cell_key : kCellKeys) {
      if (key == cell_key) throw Error(ErrorKind::ParseError, "'" + key + "' is set per cell; use the sweep.* lists");
    }
  }
  g.rounds = parse_number<std::size_t>(kv.require("rounds"), "rounds");
  g.base = std::move(kv);
  g.validate();
  return g;
}

inline SweepGrid load_grid(const std::filesystem::path& path) { return grid_from_entries(KeyValues::load(path)); }

inline std::vector<SweepCell> enumerate_cells(const SweepGrid& g) {
  std::vector<SweepCell> cells;
  for (auto n : g.n_values)
    for (auto k : g.k_values)
      for (auto t : g.type_counts)
        for (auto a : g.algorithms)
          for (auto s : g.seeds) cells.push_back({n, k, t, a, s});
  return cells;
}

inline ExperimentConfig cell_config(const SweepGrid& g, const SweepCell& c) {
  KeyValues kv = g.base;
  kv.set("n_devices", std::to_string(c.n));
  kv.set("participants_per_round", std::to_string(c.k));
  kv.set("device_type_count", std::to_string(c.types));
  kv.set("selection_algorithm", std::string(to_string(c.algo)));
  kv.set("master_seed", std::to_string(c.seed));
  return config_from_entries(kv);
}

inline std::string ledger_filename(const SweepCell& c) {
  return "ledger_N" + std::to_string(c.n) + "_K" + std::to_string(c.k) + "_types" + std::to_string(c.types) + "_" +
         std::string(to_string(c.algo)) + "_seed" + std::to_string(c.seed) + ".csv";
}

struct SweepReport {
  std::size_t cells_total = 0;
  std::size_t cells_ok = 0;
  std::vector<std::pair<SweepCell, std::string>> failures;
};

inline constexpr std::string_view kSummaryHeader = "algo,N,K,types,round,mean_cumulative_ms,mean_total_ms,seeds";

/// Runs every cell on `jobs` worker threads, writes one ledger per cell, then
/// reduces across seeds into summary.csv. Failed cells are listed in
/// failures.csv and left out of the summary.
inline SweepReport run_sweep(const SweepGrid& grid, const std::filesystem::path& out_dir, unsigned jobs = 1) {
  grid.validate();
  std::filesystem::create_directories(out_dir);
  const auto cells = enumerate_cells(grid);
  std::vector<std::optional<std::vector<RoundRecord>>> results(cells.size());
  std::vector<std::string> errors(cells.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        auto cfg = cell_config(grid, cells[i]);
        auto run = run_fl(cfg);
        atomic_write(out_dir / ledger_filename(cells[i]), ledger_csv(cfg, run.records));
        results[i] = std::move(run.records);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  jobs = std::max(1u, jobs);
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  SweepReport report;
  report.cells_total = cells.size();
  // (N, K, types, algo index) -> per-round sums over seeds. Key order fixes the
  // summary row order.
  struct Acc {
    std::vector<double> cumulative;
    std::vector<double> total;
    std::size_t seeds = 0;
  };
  std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>, Acc> acc;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    if (!results[i]) {
      report.failures.emplace_back(c, errors[i]);
      continue;
    }
    ++report.cells_ok;
    const auto algo_index = static_cast<std::size_t>(
        std::find(grid.algorithms.begin(), grid.algorithms.end(), c.algo) - grid.algorithms.begin());
    auto& a = acc[{c.n, c.k, c.types, algo_index}];
    a.cumulative.resize(grid.rounds, 0.0);
    a.total.resize(grid.rounds, 0.0);
    for (const auto& r : *results[i]) {
      a.cumulative[r.round] += r.cumulative_ms;
      a.total[r.round] += r.times.total_ms;
    }
    ++a.seeds;
  }

  std::ostringstream summary;
  summary << kSummaryHeader << '\n';
  for (const auto& [key, a] : acc) {
    const auto& [n, k, types, algo_index] = key;
    const double s = static_cast<double>(a.seeds);
    for (std::size_t t = 0; t < grid.rounds; ++t) {
      summary << to_string(grid.algorithms[algo_index]) << ',' << n << ',' << k << ',' << types << ',' << t << ','
              << format_double(a.cumulative[t] / s) << ',' << format_double(a.total[t] / s) << ',' << a.seeds
              << '\n';
    }
  }
  atomic_write(out_dir / "summary.csv", summary.str());

  std::ostringstream failures;
  failures << "algo,N,K,types,seed,error\n";
  for (const auto& [c, msg] : report.failures) {
    auto clean = msg;
    std::replace(clean.begin(), clean.end(), ',', ';');
    std::replace(clean.begin(), clean.end(), '\n', ' ');
    failures << to_string(c.algo) << ',' << c.n << ',' << c.k << ',' << c.types << ',' << c.seed << ',' << clean
             << '\n';
  }
  atomic_write(out_dir / "failures.csv", failures.str());
  return report;
}

inline std::string plot_filename(const std::string& n, const std::string& types, const std::string& k) {
  return "plot_N" + n + "_types" + types + "_K" + k + ".csv";
}

/// Splits a summary into one long-format file per (N, types, K) subplot.
/// Returns the written file names in creation order.
inline std::vector<std::string> plot_data(const std::filesystem::path& summary_csv,
                                          const std::filesystem::path& out_dir) {
  const auto table = read_csv(summary_csv);
  const auto c_algo = table.column("algo");
  const auto c_n = table.column("N");
  const auto c_k = table.column("K");
  const auto c_types = table.column("types");
  const auto c_round = table.column("round");
  const auto c_mean = table.column("mean_cumulative_ms");

  std::vector<std::string> order;
  std::map<std::string, std::string> bodies;
  for (const auto& row : table.rows) {
    const auto name = plot_filename(row[c_n], row[c_types], row[c_k]);
    auto [it, fresh] = bodies.try_emplace(name, "round,algo,mean_cumulative_ms\n");
    if (fresh) order.push_back(name);
    it->second += row[c_round] + ',' + row[c_algo] + ',' + row[c_mean] + '\n';
  }
  std::filesystem::create_directories(out_dir);
  for (const auto& name : order) atomic_write(out_dir / name, bodies[name]);
  return order;
}

/// `model,loglik,aic,param1,param2,param3`; unused parameter cells are empty.
inline std::string fit_report_csv(std::span<const FitReportRow> rows) {
  std::string out = "model,loglik,aic,param1,param2,param3\n";
  for (const auto& r : rows) {
    out += r.model + ',' + format_double(r.loglik) + ',' + format_double(r.aic);
    for (std::size_t i = 0; i < 3; ++i) out += ',' + (i < r.params.size() ? format_double(r.params[i]) : "");
    out += '\n';
  }
  return out;
}

}  // namespace flymaster
