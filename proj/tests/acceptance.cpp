// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flymaster/experiment.hpp"

namespace fm = flymaster;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kC1MaxSeconds = 10.0;
constexpr double kC3MinFixedRatio = 1.5;
constexpr double kC3MaxSeconds = 300.0;
constexpr double kC4MaxExcess = 0.25;
constexpr double kC5InversionSlack = 0.02;
constexpr std::size_t kC5MaxInversions = 1;
constexpr double kC8InverseTol = 1e-10;
constexpr double kC8ShapeTol = 0.05;
constexpr double kC8ScaleRelTol = 0.05;
constexpr double kC9GradRelTol = 1e-4;
constexpr double kC9MinAccuracy = 0.9;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(double v) { return fm::format_double(v); }

fm::ExperimentConfig c1_config(fm::SelectionAlgorithm algo) {
  fm::ExperimentConfig cfg;
  cfg.n_devices = 20;
  cfg.participants_per_round = 5;
  cfg.rounds = 10;
  cfg.master_seed = 7;
  cfg.selection_algorithm = algo;
  return cfg;
}

Verdict criterion_1() {
  const auto t0 = Clock::now();
  const auto data = fm::load_dataset(c1_config(fm::SelectionAlgorithm::Fixed));
  std::optional<fm::ModelParams> first;
  std::size_t mismatches = 0;
  for (auto algo : fm::kAllAlgorithms) {
    const auto r = fm::run_fl(c1_config(algo), &data);
    if (!first) first = r.final_params;
    else if (!(r.final_params == *first)) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < kC1MaxSeconds,
          "mismatching algorithms=" + std::to_string(mismatches) + " runtime_s=" + fmt(secs) + " (< " +
              fmt(kC1MaxSeconds) + ")"};
}

Verdict criterion_2() {
  const auto data = fm::load_dataset(c1_config(fm::SelectionAlgorithm::Fixed));
  std::size_t checked = 0, violations = 0;
  for (auto algo : fm::kAllAlgorithms) {
    const bool k_candidate = fm::selects_among_participants(algo);
    if (!k_candidate && algo != fm::SelectionAlgorithm::OptimalN) continue;
    fm::RunHooks hooks;
    hooks.on_round = [&](const fm::RoundContext& ctx, const fm::RoundRecord& rec) {
      const auto oracle = fm::time_oracle(ctx);
      double best_n = INFINITY, best_k = INFINITY;
      for (fm::DeviceId m = 0; m < ctx.world->n_devices; ++m) best_n = std::min(best_n, oracle(m));
      for (auto k : ctx.participants) best_k = std::min(best_k, oracle(k));
      bool ok = best_n <= best_k;
      if (k_candidate) ok = ok && best_k <= rec.times.total_ms;
      if (algo == fm::SelectionAlgorithm::OptimalK) ok = ok && rec.times.total_ms == best_k;
      if (algo == fm::SelectionAlgorithm::OptimalN) ok = ok && rec.times.total_ms == best_n;
      ++checked;
      if (!ok) ++violations;
    };
    fm::run_fl(c1_config(algo), &data, hooks);
  }
  return {violations == 0 && checked > 0,
          "rounds checked=" + std::to_string(checked) + " violations=" + std::to_string(violations) +
              " (tolerance 0)"};
}

/// Mean cumulative time at the last round for every algorithm, N=100, 2 types,
/// T=50, seeds 1..20, timing only.
std::map<fm::SelectionAlgorithm, double> sweep_means(std::size_t k) {
  std::map<fm::SelectionAlgorithm, double> mean;
  for (auto algo : fm::kAllAlgorithms) {
    double sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      fm::ExperimentConfig cfg;
      cfg.n_devices = 100;
      cfg.participants_per_round = k;
      cfg.rounds = 50;
      cfg.device_type_count = 2;
      cfg.master_seed = seed;
      cfg.selection_algorithm = algo;
      cfg.train = false;
      sum += fm::run_fl(cfg).records.back().cumulative_ms;
    }
    mean[algo] = sum / 20.0;
  }
  return mean;
}

Verdict criterion_3() {
  const auto t0 = Clock::now();
  const auto m = sweep_means(1);
  const double secs = seconds_since(t0);
  const double ratio = m.at(fm::SelectionAlgorithm::Fixed) / m.at(fm::SelectionAlgorithm::OptimalN);
  return {ratio >= kC3MinFixedRatio && secs < kC3MaxSeconds,
          "fixed/optimal_n=" + fmt(ratio) + " (>= " + fmt(kC3MinFixedRatio) + ") runtime_s=" + fmt(secs)};
}

Verdict criterion_4() {
  using A = fm::SelectionAlgorithm;
  const auto m = sweep_means(1);
  const double opt = m.at(A::OptimalN);
  bool pass = true;
  std::string detail;
  for (auto algo : {A::LeastStressN, A::PowN}) {
    const double v = m.at(algo);
    const bool ok = v <= (1.0 + kC4MaxExcess) * opt && v < m.at(A::Fixed) && v < m.at(A::RandomN);
    pass = pass && ok;
    detail += std::string(fm::to_string(algo)) + "/optimal_n=" + fmt(v / opt) +
              " below_fixed=" + (v < m.at(A::Fixed) ? "yes" : "no") +
              " below_random_n=" + (v < m.at(A::RandomN) ? "yes" : "no") + "; ";
  }
  return {pass, detail + "(ratio <= " + fmt(1.0 + kC4MaxExcess) + ")"};
}

Verdict criterion_5() {
  std::vector<double> ratios;
  std::string detail = "max/min ratio by K:";
  for (std::size_t k : {1, 5, 10, 50}) {
    const auto m = sweep_means(k);
    double lo = INFINITY, hi = 0.0;
    for (const auto& [algo, v] : m) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    ratios.push_back(hi / lo);
    detail += " K" + std::to_string(k) + "=" + fmt(hi / lo);
  }
  std::size_t inversions = 0;
  bool small = true;
  for (std::size_t i = 1; i < ratios.size(); ++i) {
    if (ratios[i] > ratios[i - 1]) {
      ++inversions;
      small = small && ratios[i] <= ratios[i - 1] * (1.0 + kC5InversionSlack);
    }
  }
  return {inversions <= kC5MaxInversions && small, detail + " inversions=" + std::to_string(inversions)};
}

Verdict criterion_6() {
  auto rng = fm::derive_stream(6, "acceptance");
  const auto catalog = fm::build_catalog(5);
  std::size_t wrong = 0, disagree = 0, bad_count = 0;
  for (std::uint64_t trial = 0; trial < 500; ++trial) {
    const std::size_t n = 100;
    std::vector<double> stress(n);
    for (auto& s : stress) s = fm::stress_metric(catalog[rng.below(5)], fm::draw_occupancy(rng));
    const std::size_t size = 1 + rng.below(50);
    const auto cands = fm::sample_participants(n, size, rng);
    const auto lat_stream = fm::derive_stream(trial, "latency");
    const fm::LatencyFn lat = [&](fm::DeviceId a, fm::DeviceId b) {
      return fm::gev_quantile({0.7367, 2.0676, 5.0}, lat_stream.keyed_uniform(trial, a, b));
    };
    const auto r = fm::run_gossip_min(cands, stress, lat, 10.0);

    fm::DeviceId best = cands.front();
    for (auto c : cands) {
      if (stress[c] < stress[best] || (stress[c] == stress[best] && c < best)) best = c;
    }
    if (r.outcome.master != best) ++wrong;
    for (const auto& s : r.final_states) {
      if (s.best_id != best) {
        ++disagree;
        break;
      }
    }
    if (r.outcome.messages != size * (size - 1)) ++bad_count;
  }
  return {wrong == 0 && disagree == 0 && bad_count == 0,
          "wrong=" + std::to_string(wrong) + " disagree=" + std::to_string(disagree) +
              " bad_message_counts=" + std::to_string(bad_count) + " of 500"};
}

Verdict criterion_7() {
  auto rng = fm::derive_stream(7, "acceptance");
  const auto catalog = fm::build_catalog(5);
  const std::vector<std::size_t> type_of{0, 1, 2, 3, 4};
  const std::vector<fm::DeviceId> cands{0, 1, 2, 3, 4};
  std::vector<double> occupancy(5);
  const fm::Placement placement = fm::place_devices(5, rng);
  const fm::LinkLatencyModel links({}, placement, fm::derive_stream(7, "latency"));

  std::size_t unverified = 0;
  for (std::uint64_t e = 0; e < 200; ++e) {
    for (auto& o : occupancy) o = fm::draw_occupancy(rng);
    fm::ModelParams params(4, 3, 2);
    for (auto& v : params.values()) v = rng.normal();
    const auto puzzle = fm::make_puzzle(e, params, 8);
    fm::PowElectionSetup s;
    s.candidates = cands;
    s.participants = cands;
    s.catalog = catalog;
    s.type_of = type_of;
    s.occupancy = occupancy;
    s.latency = [&](fm::DeviceId a, fm::DeviceId b) { return links(e, a, b); };
    s.difficulty = 8;
    s.puzzle = &puzzle;
    const auto r = fm::run_pow_election(s, fm::derive_stream(e, "pow"));
    const bool ok = r.winning_solution && r.winning_solution->device_id == r.outcome.master &&
                    fm::verify_solution(puzzle, r.outcome.master, r.winning_solution->nonce) &&
                    r.winner_verified_at == cands.size();
    if (!ok) ++unverified;
  }

  std::vector<fm::DeviceType> rated;
  for (double mult : {1.0, 2.0, 4.0, 8.0}) rated.push_back({"x", 1.5, 2, 125, 10, 1e5 * mult});
  const std::vector<std::size_t> rated_type{0, 1, 2, 3};
  const std::vector<fm::DeviceId> four{0, 1, 2, 3};
  const std::vector<double> idle(4, 0.0);
  const fm::Placement p4 = fm::place_devices(4, rng);
  const fm::LinkLatencyModel l4({}, p4, fm::derive_stream(8, "latency"));
  std::vector<std::size_t> wins(4, 0);
  for (std::uint64_t e = 0; e < 2000; ++e) {
    fm::PowElectionSetup s;
    s.candidates = four;
    s.participants = four;
    s.catalog = rated;
    s.type_of = rated_type;
    s.occupancy = idle;
    s.latency = [&](fm::DeviceId a, fm::DeviceId b) { return l4(e, a, b); };
    s.difficulty = 16;
    ++wins[fm::run_pow_election(s, fm::derive_stream(9, "pow").fork(e)).outcome.master];
  }
  const bool increasing = wins[0] < wins[1] && wins[1] < wins[2] && wins[2] < wins[3];
  return {unverified == 0 && increasing,
          "unverified=" + std::to_string(unverified) + " of 200; wins by hash 1x,2x,4x,8x=" + std::to_string(wins[0]) +
              "," + std::to_string(wins[1]) + "," + std::to_string(wins[2]) + "," + std::to_string(wins[3])};
}

Verdict criterion_8() {
  auto rng = fm::derive_stream(8, "acceptance");
  const fm::GevParams truth{0.7367, 2.0676, 5.0};
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform_open();
    worst = std::max(worst, std::abs(fm::gev_cdf(truth, fm::gev_quantile(truth, u)) - u));
  }
  std::vector<double> xs(10000);
  for (auto& x : xs) x = fm::gev_sample(truth, rng);
  const auto fit = fm::fit_gev(xs);
  const bool shape_ok = std::abs(fit.shape - truth.shape) <= kC8ShapeTol;
  const bool scale_ok = std::abs(fit.scale - truth.scale) <= kC8ScaleRelTol * truth.scale;

  std::size_t gev_first = 0;
  for (int trace = 0; trace < 5; ++trace) {
    std::vector<double> ys(2000);
    for (auto& y : ys) y = fm::gev_sample(truth, rng);
    gev_first += fm::compare_fits(ys).front().model == "gev" ? 1 : 0;
  }
  return {worst <= kC8InverseTol && shape_ok && scale_ok && gev_first == 5,
          "max |F(Q(u))-u|=" + fmt(worst) + " fit shape=" + fmt(fit.shape) + " scale=" + fmt(fit.scale) +
              " gev ranked first in " + std::to_string(gev_first) + "/5 traces"};
}

double gradient_rel_error(fm::OutputActivation act) {
  fm::ModelConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden_dim = 4;
  cfg.classes = 3;
  auto rng = fm::derive_stream(9, "acceptance");
  auto params = fm::init_model(rng, cfg);
  const auto batch = fm::synth_dataset(rng, 12, cfg, 0.2);
  const auto analytic = fm::loss_and_grad(params, batch, act).grad;
  double diff = 0.0, norm = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params.values()[i];
    params.values()[i] = keep + h;
    const double up = fm::loss_and_grad(params, batch, act).loss;
    params.values()[i] = keep - h;
    const double down = fm::loss_and_grad(params, batch, act).loss;
    params.values()[i] = keep;
    const double numeric = (up - down) / (2 * h);
    diff += (numeric - analytic[i]) * (numeric - analytic[i]);
    norm += analytic[i] * analytic[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

Verdict criterion_9() {
  const double err_soft = gradient_rel_error(fm::OutputActivation::Softmax);
  const double err_sig = gradient_rel_error(fm::OutputActivation::Sigmoid);

  fm::ModelConfig mc;
  mc.hidden_dim = 32;
  mc.batch_size = 32;
  mc.local_steps = 200;
  auto ds = fm::derive_stream(9, "data");
  const auto d = fm::synth_dataset(ds, 500, mc, 0.05);
  auto is = fm::derive_stream(9, "init");
  auto ss = fm::derive_stream(9, "shuffle");
  const double acc = fm::accuracy(fm::local_sgd(fm::init_model(is, mc), d, mc, ss), d);

  // Reference loop: sample, train locally from the same global model, average.
  const auto cfg = c1_config(fm::SelectionAlgorithm::PowN);
  const auto data = fm::load_dataset(cfg);
  const auto run = fm::run_fl(cfg, &data);
  auto part = fm::derive_stream(cfg.master_seed, fm::labels::kData).fork(1);
  const auto shards = fm::partition(data, cfg.n_devices, part);
  auto init = fm::derive_stream(cfg.master_seed, fm::labels::kInit);
  auto global = fm::init_model(init, cfg.model_config);
  const auto sampling = fm::derive_stream(cfg.master_seed, fm::labels::kSampling);
  const auto shuffle = fm::derive_stream(cfg.master_seed, fm::labels::kShuffle);
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    auto s = sampling.fork(t);
    const auto parts = fm::sample_participants(cfg.n_devices, cfg.participants_per_round, s);
    std::vector<double> sum(global.size(), 0.0);
    for (auto k : parts) {
      auto sh = shuffle.fork(t, k);
      const auto local = fm::local_sgd(global, shards[k], cfg.model_config, sh);
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += local.values()[i];
    }
    for (auto& v : sum) v /= static_cast<double>(parts.size());
    global = fm::ModelParams(global.input_dim(), global.hidden_dim(), global.classes(), sum);
  }
  double max_diff = 0.0;
  for (std::size_t i = 0; i < global.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(global.values()[i] - run.final_params.values()[i]));
  }
  // The reference sums in the same order, so agreement is exact.
  return {err_soft < kC9GradRelTol && err_sig < kC9GradRelTol && acc > kC9MinAccuracy && max_diff == 0.0,
          "grad rel err softmax=" + fmt(err_soft) + " sigmoid=" + fmt(err_sig) + " (< " + fmt(kC9GradRelTol) +
              ") train acc=" + fmt(acc) + " reference max |diff|=" + fmt(max_diff)};
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> produce_csvs(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (auto algo : fm::kAllAlgorithms) {
    const auto cfg = c1_config(algo);
    fm::atomic_write(dir / (std::string(fm::to_string(algo)) + ".csv"), fm::ledger_csv(cfg, fm::run_fl(cfg).records));
  }
  const auto grid = fm::grid_from_entries(fm::KeyValues::parse(
      "rounds = 5\ntrain = false\nsweep.n_values = 30\nsweep.k_values = 1, 10\nsweep.type_counts = 2\n"
      "sweep.seeds = 1, 2\n"));
  fm::run_sweep(grid, dir / "sweep", 2);
  fm::plot_data(dir / "sweep" / "summary.csv", dir / "plots");

  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_all(e.path());
  }
  return files;
}

Verdict criterion_10() {
  const fs::path root = fs::path(FLYMASTER_TEST_TMP) / "acceptance_c10";
  const auto a = produce_csvs(root / "a");
  const auto b = produce_csvs(root / "b");
  std::size_t differing = 0;
  for (const auto& [name, body] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != body) ++differing;
  }
  const bool same_set = a.size() == b.size();
  return {same_set && differing == 0 && !a.empty(),
          "files=" + std::to_string(a.size()) + " differing=" + std::to_string(differing)};
}

const std::map<int, std::function<Verdict()>>& criteria() {
  static const std::map<int, std::function<Verdict()>> table{
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4}, {5, criterion_5},
      {6, criterion_6}, {7, criterion_7}, {8, criterion_8}, {9, criterion_9}, {10, criterion_10},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--criterion N]...\n";
      return 2;
    }
  }
  if (selected.empty()) {
    for (const auto& [id, fn] : criteria()) selected.push_back(id);
  }

  bool all = true;
  for (int id : selected) {
    const auto it = criteria().find(id);
    if (it == criteria().end()) {
      std::cerr << "unknown criterion " << id << '\n';
      return 2;
    }
    Verdict v{false, ""};
    try {
      v = it->second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << std::endl;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
