#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "flymaster/error.hpp"
#include "flymaster/latency.hpp"
#include "flymaster/rng.hpp"
#include "flymaster/selection_algorithm.hpp"

namespace flymaster {

struct SelectionOutcome {
  DeviceId master = 0;
  double selection_elapsed_ms = 0.0;
  std::size_t messages = 0;
};

/// One-way latency between two distinct devices within the current round.
using LatencyFn = std::function<double(DeviceId, DeviceId)>;

/// Zero for a device talking to itself, the link latency otherwise.
inline double hop(const LatencyFn& lat, DeviceId src, DeviceId dst) { return src == dst ? 0.0 : lat(src, dst); }

inline std::vector<DeviceId> candidate_set(SelectionAlgorithm algo, std::span<const DeviceId> participants,
                                           std::size_t n_devices, DeviceId fixed_server) {
  if (algo == SelectionAlgorithm::Fixed) return {fixed_server};
  if (selects_among_participants(algo)) return {participants.begin(), participants.end()};
  std::vector<DeviceId> all(n_devices);
  std::iota(all.begin(), all.end(), DeviceId{0});
  return all;
}

namespace detail {
inline void require_candidates(std::span<const DeviceId> candidates) {
  if (candidates.empty()) throw Error(ErrorKind::EmptyCandidates, "candidate set is empty");
}

/// Argmin of score over candidates; equal scores go to the smaller id.
template <class Score>
DeviceId argmin_by_id(std::span<const DeviceId> candidates, Score&& score) {
  DeviceId best = candidates.front();
  double best_score = score(best);
  for (auto c : candidates.subspan(1)) {
    const double s = score(c);
    if (s < best_score || (s == best_score && c < best)) {
      best = c;
      best_score = s;
    }
  }
  return best;
}
}  // namespace detail

inline SelectionOutcome select_random(std::span<const DeviceId> candidates, RngStream& stream) {
  detail::require_candidates(candidates);
  return {candidates[stream.below(candidates.size())], 0.0, 0};
}

inline SelectionOutcome select_least_distance(std::span<const DeviceId> candidates,
                                              std::span<const DeviceId> participants, const Placement& placement) {
  detail::require_candidates(candidates);
  if (participants.empty()) throw Error(ErrorKind::EmptyList, "participant set is empty");
  const auto master = detail::argmin_by_id(candidates, [&](DeviceId m) {
    double sum = 0.0;
    for (auto k : participants) sum += distance(placement, m, k);
    return sum;
  });
  return {master, 0.0, 0};
}

namespace detail {
inline double stress_of(std::span<const double> stress_by_device, DeviceId id) {
  if (id >= stress_by_device.size() || !std::isfinite(stress_by_device[id])) {
    throw Error(ErrorKind::MissingStress, "no stress sample for device " + std::to_string(id));
  }
  return stress_by_device[id];
}
}  // namespace detail

/// `stress_by_device[i]` is device i's stress this round (NaN = not sampled).
inline SelectionOutcome select_least_stress(std::span<const DeviceId> candidates,
                                            std::span<const double> stress_by_device) {
  detail::require_candidates(candidates);
  for (auto c : candidates) detail::stress_of(stress_by_device, c);
  return {detail::argmin_by_id(candidates, [&](DeviceId c) { return stress_by_device[c]; }), 0.0, 0};
}

inline SelectionOutcome select_optimal(std::span<const DeviceId> candidates,
                                       const std::function<double(DeviceId)>& time_oracle) {
  detail::require_candidates(candidates);
  return {detail::argmin_by_id(candidates, time_oracle), 0.0, 0};
}

}  // namespace flymaster
