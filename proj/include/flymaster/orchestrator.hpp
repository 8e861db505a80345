#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "flymaster/config.hpp"
#include "flymaster/consensus.hpp"
#include "flymaster/csv.hpp"
#include "flymaster/device.hpp"
#include "flymaster/error.hpp"
#include "flymaster/fl_core.hpp"
#include "flymaster/idx.hpp"
#include "flymaster/latency.hpp"
#include "flymaster/rng.hpp"
#include "flymaster/selection.hpp"

namespace flymaster {

/// Uniform sample of k distinct ids from [0, n), returned sorted.
inline std::vector<DeviceId> sample_participants(std::size_t n, std::size_t k, RngStream& stream) {
  if (k > n) throw Error(ErrorKind::KExceedsN, "cannot sample " + std::to_string(k) + " of " + std::to_string(n));
  std::vector<DeviceId> ids(n);
  std::iota(ids.begin(), ids.end(), DeviceId{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(stream.below(n - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Everything about the simulated network that is fixed for a whole run.
struct World {
  std::size_t n_devices;
  std::vector<DeviceType> catalog;
  std::vector<std::size_t> type_of;
  Placement placement;
  DeviceId fixed_server;
  GevCalib calib;
  RngStream latency_stream;

  [[nodiscard]] LinkLatencyModel links() const { return {calib, placement, latency_stream}; }
  const DeviceType& type(DeviceId d) const { return catalog[type_of[d]]; }
};

inline World build_world(const ExperimentConfig& cfg) {
  auto placement_stream = derive_stream(cfg.master_seed, labels::kPlacement);
  World w{cfg.n_devices,
          build_catalog(cfg.device_type_count, cfg.device_overrides),
          {},
          {},
          0,
          cfg.latency_calibration,
          derive_stream(cfg.master_seed, labels::kLatency)};
  w.placement = place_devices(cfg.n_devices, placement_stream);
  w.type_of = assign_types(cfg.n_devices, w.catalog, placement_stream);
  w.fixed_server = static_cast<DeviceId>(placement_stream.below(cfg.n_devices));
  return w;
}

struct RoundTimes {
  double broadcast_ms = 0;
  double selection_ms = 0;
  double compute_ms = 0;
  double upload_ms = 0;
  double aggregate_ms = 0;
  double total_ms = 0;
};

struct RoundRecord {
  std::size_t round = 0;
  DeviceId master_prev = 0;
  DeviceId master_next = 0;
  std::vector<DeviceId> participants;
  RoundTimes times;
  double cumulative_ms = 0;
};

/// Inputs of one round's timing, frozen once occupancies and participants are
/// drawn.
struct RoundContext {
  const World* world = nullptr;
  std::size_t round = 0;
  DeviceId master_prev = 0;
  std::vector<DeviceId> participants;
  std::vector<double> occupancy;  // per device
  std::size_t local_steps = 1;
  double model_size = kReferenceModelSize;
  SelectionTiming timing = SelectionTiming::Overlap;

  [[nodiscard]] double payload_bytes() const { return 4.0 * model_size; }
};

/// Wall-clock breakdown of one round if `master_next` aggregates it.
/// Broadcast starts at time 0. In overlap mode the election runs alongside
/// local training and uploads wait for whichever finishes last; in
/// sequential mode training starts only after broadcast and election.
inline RoundTimes round_time(const RoundContext& ctx, DeviceId master_next, double selection_ms = 0.0) {
  const World& w = *ctx.world;
  const auto link = w.links();
  const double payload = ctx.payload_bytes();
  const DeviceId prev = ctx.master_prev;

  RoundTimes t;
  t.selection_ms = selection_ms;
  std::vector<double> down(ctx.participants.size());
  for (std::size_t i = 0; i < ctx.participants.size(); ++i) {
    const DeviceId k = ctx.participants[i];
    down[i] = k == prev ? 0.0 : link(ctx.round, prev, k) + transfer_time(w.type(prev), ctx.occupancy[prev], payload);
    t.broadcast_ms = std::max(t.broadcast_ms, down[i]);
  }
  const bool sequential = ctx.timing == SelectionTiming::Sequential;
  const double selection_done = sequential ? t.broadcast_ms + selection_ms : selection_ms;

  double last_arrival = 0.0;
  for (std::size_t i = 0; i < ctx.participants.size(); ++i) {
    const DeviceId k = ctx.participants[i];
    const double compute = compute_time(w.type(k), ctx.occupancy[k], ctx.local_steps, ctx.model_size);
    const double ready = (sequential ? selection_done : down[i]) + compute;
    const double up = k == master_next ? 0.0
                                       : transfer_time(w.type(k), ctx.occupancy[k], payload) +
                                             link(ctx.round, k, master_next);
    t.compute_ms = std::max(t.compute_ms, compute);
    t.upload_ms = std::max(t.upload_ms, up);
    last_arrival = std::max(last_arrival, std::max(ready, selection_done) + up);
  }
  t.aggregate_ms = aggregation_time(w.type(master_next), ctx.occupancy[master_next], ctx.participants.size(),
                                    ctx.model_size);
  t.total_ms = last_arrival + t.aggregate_ms;
  return t;
}

/// Round time of each candidate master with zero election overhead.
inline std::function<double(DeviceId)> time_oracle(const RoundContext& ctx) {
  return [ctx](DeviceId m) { return round_time(ctx, m, 0.0).total_ms; };
}

struct RunResult {
  ModelParams final_params;
  std::vector<RoundRecord> records;
};

struct RunHooks {
  /// Called after each round with the frozen context and the resulting record.
  std::function<void(const RoundContext&, const RoundRecord&)> on_round;
  /// Called after each round's aggregation with the new global model.
  std::function<void(std::size_t, const ModelParams&)> on_model;
};

/// Dataset named by the config: synthetic clusters or an IDX pair.
inline Dataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.data.source == DataSource::Idx) {
    auto data = load_idx(cfg.data.images_path, cfg.data.labels_path);
    data.validate(cfg.model_config.classes);
    if (data.dim() != cfg.model_config.input_dim) {
      throw Error(ErrorKind::DimensionMismatch, "IDX feature dim does not match model.input_dim");
    }
    return data;
  }
  auto stream = derive_stream(cfg.master_seed, labels::kData);
  return synth_dataset(stream, cfg.n_devices * cfg.data.samples_per_device, cfg.model_config, cfg.data.cluster_spread);
}

namespace detail {

inline SelectionOutcome elect(const ExperimentConfig& cfg, const RoundContext& ctx, std::span<const DeviceId> cands) {
  const World& w = *ctx.world;
  const auto link = w.links();
  const LatencyFn lat = [&link, &ctx](DeviceId a, DeviceId b) { return link(ctx.round, a, b); };

  switch (cfg.selection_algorithm) {
    case SelectionAlgorithm::Fixed: return {w.fixed_server, 0.0, 0};
    case SelectionAlgorithm::RandomK:
    case SelectionAlgorithm::RandomN: {
      auto s = derive_stream(cfg.master_seed, labels::kSelection).fork(ctx.round);
      return select_random(cands, s);
    }
    case SelectionAlgorithm::LeastDistanceK:
    case SelectionAlgorithm::LeastDistanceN: return select_least_distance(cands, ctx.participants, w.placement);
    case SelectionAlgorithm::LeastStressK:
    case SelectionAlgorithm::LeastStressN: {
      std::vector<double> stress(w.n_devices);
      for (DeviceId d = 0; d < w.n_devices; ++d) stress[d] = stress_metric(w.type(d), ctx.occupancy[d]);
      return run_gossip_min(cands, stress, lat, cfg.gossip_interval_ms).outcome;
    }
    case SelectionAlgorithm::PowK:
    case SelectionAlgorithm::PowN: {
      PowElectionSetup setup;
      setup.candidates = cands;
      setup.participants = ctx.participants;
      setup.catalog = w.catalog;
      setup.type_of = w.type_of;
      setup.occupancy = ctx.occupancy;
      setup.latency = lat;
      setup.difficulty = cfg.pow_difficulty;
      setup.verify_cost_ms = cfg.verify_cost_ms;
      return run_pow_election(setup, derive_stream(cfg.master_seed, labels::kPow).fork(ctx.round)).outcome;
    }
    case SelectionAlgorithm::OptimalK:
    case SelectionAlgorithm::OptimalN: return select_optimal(cands, time_oracle(ctx));
  }
  throw Error(ErrorKind::InvalidRange, "unknown selection algorithm");
}

}  // namespace detail

/// Runs the flying-master loop for cfg.rounds rounds. The model trajectory
/// depends only on the sampling, shuffle, init and data streams, never on the
/// elected masters.
inline RunResult run_fl(const ExperimentConfig& cfg, const Dataset* dataset = nullptr, const RunHooks& hooks = {}) {
  cfg.validate();
  const World world = build_world(cfg);
  const auto& mc = cfg.model_config;

  auto init_stream = derive_stream(cfg.master_seed, labels::kInit);
  RunResult result{init_model(init_stream, mc), {}};

  std::vector<Shard> shards;
  std::optional<Dataset> owned;
  if (cfg.train && cfg.rounds > 0) {
    if (dataset == nullptr) owned = load_dataset(cfg);
    const Dataset& data = dataset != nullptr ? *dataset : *owned;
    data.validate(mc.classes);
    auto part_stream = derive_stream(cfg.master_seed, labels::kData).fork(1);
    shards = partition(data, cfg.n_devices, part_stream);
  }

  const auto stress_root = derive_stream(cfg.master_seed, labels::kStress);
  const auto sampling_root = derive_stream(cfg.master_seed, labels::kSampling);
  const auto shuffle_root = derive_stream(cfg.master_seed, labels::kShuffle);

  DeviceId master = cfg.selection_algorithm == SelectionAlgorithm::Fixed ? world.fixed_server : DeviceId{0};
  double cumulative = 0.0;
  result.records.reserve(cfg.rounds);

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    RoundContext ctx;
    ctx.world = &world;
    ctx.round = t;
    ctx.master_prev = master;
    ctx.local_steps = mc.local_steps;
    ctx.model_size = static_cast<double>(mc.parameter_count());
    ctx.timing = cfg.selection_timing;

    auto stress_stream = stress_root.fork(t);
    ctx.occupancy.resize(cfg.n_devices);
    for (auto& o : ctx.occupancy) o = draw_occupancy(stress_stream);

    auto sampling_stream = sampling_root.fork(t);
    ctx.participants = sample_participants(cfg.n_devices, cfg.participants_per_round, sampling_stream);

    const auto cands = candidate_set(cfg.selection_algorithm, ctx.participants, cfg.n_devices, world.fixed_server);
    const auto outcome = detail::elect(cfg, ctx, cands);

    if (cfg.train) {
      std::vector<ModelParams> updates;
      std::vector<double> weights;
      updates.reserve(ctx.participants.size());
      for (auto k : ctx.participants) {
        auto s = shuffle_root.fork(t, k);
        updates.push_back(local_sgd(result.final_params, shards[k], mc, s));
        weights.push_back(static_cast<double>(shards[k].size()));
      }
      result.final_params = cfg.aggregation_weighting == AggregationWeighting::DataSize
                                ? aggregate(updates, std::span<const double>(weights))
                                : aggregate(updates);
      if (hooks.on_model) hooks.on_model(t, result.final_params);
    }

    RoundRecord rec;
    rec.round = t;
    rec.master_prev = master;
    rec.master_next = outcome.master;
    rec.participants = ctx.participants;
    rec.times = round_time(ctx, outcome.master, outcome.selection_elapsed_ms);
    cumulative += rec.times.total_ms;
    rec.cumulative_ms = cumulative;
    if (hooks.on_round) hooks.on_round(ctx, rec);
    result.records.push_back(std::move(rec));

    master = outcome.master;
  }
  return result;
}

inline constexpr std::string_view kLedgerHeader =
    "algo,N,K,types,seed,round,master_prev,master_next,broadcast_ms,selection_ms,compute_ms,upload_ms,"
    "aggregate_ms,total_ms,cumulative_ms";

inline std::string ledger_csv(const ExperimentConfig& cfg, std::span<const RoundRecord> records) {
  std::ostringstream out;
  out << kLedgerHeader << '\n';
  for (const auto& r : records) {
    out << to_string(cfg.selection_algorithm) << ',' << cfg.n_devices << ',' << cfg.participants_per_round << ','
        << cfg.device_type_count << ',' << cfg.master_seed << ',' << r.round << ',' << r.master_prev << ','
        << r.master_next << ',' << format_double(r.times.broadcast_ms) << ',' << format_double(r.times.selection_ms)
        << ',' << format_double(r.times.compute_ms) << ',' << format_double(r.times.upload_ms) << ','
        << format_double(r.times.aggregate_ms) << ',' << format_double(r.times.total_ms) << ','
        << format_double(r.cumulative_ms) << '\n';
  }
  return out.str();
}

}  // namespace flymaster
