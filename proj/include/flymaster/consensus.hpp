#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "flymaster/csv.hpp"
#include "flymaster/device.hpp"
#include "flymaster/error.hpp"
#include "flymaster/fl_core.hpp"
#include "flymaster/selection.hpp"

namespace flymaster {

// ---------------------------------------------------------------------------
// Gossip min-consensus over stress values
// ---------------------------------------------------------------------------

struct GossipState {
  DeviceId node_id;
  double best_value;
  DeviceId best_id;
  bool woken = false;
};

struct GossipResult {
  SelectionOutcome outcome;
  std::vector<GossipState> final_states;
};

namespace detail {
inline bool lex_less(double v1, DeviceId id1, double v2, DeviceId id2) {
  return v1 < v2 || (v1 == v2 && id1 < id2);
}
}  // namespace detail

/// Every candidate wakes after `interval_ms` and broadcasts its (stress, id)
/// to every other candidate; receivers keep the lexicographic minimum.
/// On a complete graph a single wave reaches agreement.
inline GossipResult run_gossip_min(std::span<const DeviceId> candidates, std::span<const double> stress_by_device,
                                   const LatencyFn& latency, double interval_ms) {
  detail::require_candidates(candidates);
  const std::size_t n = candidates.size();
  std::vector<GossipState> states;
  states.reserve(n);
  for (auto c : candidates) states.push_back({c, detail::stress_of(stress_by_device, c), c, false});

  struct Delivery {
    double time;
    std::uint32_t src;  // indices into candidates
    std::uint32_t dst;
  };
  std::vector<Delivery> queue;
  queue.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    states[i].woken = true;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      queue.push_back({interval_ms + latency(candidates[i], candidates[j]), static_cast<std::uint32_t>(i),
                       static_cast<std::uint32_t>(j)});
    }
  }
  std::sort(queue.begin(), queue.end(), [](const Delivery& a, const Delivery& b) {
    if (a.time != b.time) return a.time < b.time;
    if (a.dst != b.dst) return a.dst < b.dst;
    return a.src < b.src;
  });

  // Senders broadcast the value they held when they woke, which is their own.
  double elapsed = interval_ms;
  for (const auto& d : queue) {
    const auto& sender = states[d.src];
    auto& receiver = states[d.dst];
    const double value = stress_by_device[sender.node_id];
    if (detail::lex_less(value, sender.node_id, receiver.best_value, receiver.best_id)) {
      receiver.best_value = value;
      receiver.best_id = sender.node_id;
    }
    elapsed = d.time;
  }

  for (const auto& s : states) {
    if (s.best_id != states.front().best_id || s.best_value != states.front().best_value) {
      throw Error(ErrorKind::InvalidRange, "gossip ended without agreement");
    }
  }
  GossipResult result;
  result.outcome = {states.front().best_id, elapsed, queue.size()};
  result.final_states = std::move(states);
  return result;
}

// ---------------------------------------------------------------------------
// Proof-of-work puzzle
// ---------------------------------------------------------------------------

using Digest = std::array<std::uint8_t, 32>;

struct Puzzle {
  std::uint64_t round_index;
  Digest model_digest;
  unsigned difficulty;
};

struct Solution {
  DeviceId device_id;
  std::uint64_t nonce;
};

namespace detail {

inline Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw Error(ErrorKind::Io, "SHA-256 failed");
  }
  return out;
}

inline void put_u64_le(std::uint8_t* dst, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) dst[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline unsigned leading_zero_bits(const Digest& d) {
  unsigned bits = 0;
  for (auto byte : d) {
    if (byte == 0) {
      bits += 8;
      continue;
    }
    return bits + static_cast<unsigned>(std::countl_zero(byte));
  }
  return bits;
}

inline Digest attempt_hash(const Puzzle& p, DeviceId device_id, std::uint64_t nonce) {
  std::array<std::uint8_t, 32 + 24> pre{};
  std::memcpy(pre.data(), p.model_digest.data(), 32);
  put_u64_le(pre.data() + 32, p.round_index);
  put_u64_le(pre.data() + 40, device_id);
  put_u64_le(pre.data() + 48, nonce);
  return sha256(pre);
}

}  // namespace detail

/// Digest of the little-endian float64 serialization of the parameters.
inline Digest params_digest(const ModelParams& params) {
  const auto values = params.values();
  std::vector<std::uint8_t> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    detail::put_u64_le(bytes.data() + 8 * i, std::bit_cast<std::uint64_t>(values[i]));
  }
  return detail::sha256(bytes);
}

inline Puzzle make_puzzle(std::uint64_t round, const ModelParams& params, unsigned difficulty) {
  if (difficulty < 1) throw Error(ErrorKind::InvalidRange, "difficulty must be >= 1");
  return {round, params_digest(params), difficulty};
}

inline bool verify_solution(const Puzzle& p, DeviceId device_id, std::uint64_t nonce) {
  return detail::leading_zero_bits(detail::attempt_hash(p, device_id, nonce)) >= p.difficulty;
}

/// Smallest nonce in [0, max_attempts) that satisfies the puzzle.
inline Solution solve_puzzle(const Puzzle& p, DeviceId device_id, std::uint64_t max_attempts) {
  if (max_attempts < 1) throw Error(ErrorKind::InvalidRange, "max_attempts must be >= 1");
  for (std::uint64_t nonce = 0; nonce < max_attempts; ++nonce) {
    if (verify_solution(p, device_id, nonce)) return {device_id, nonce};
  }
  throw Error(ErrorKind::NotFound, "no solution within " + std::to_string(max_attempts) + " attempts");
}

// ---------------------------------------------------------------------------
// Proof-of-work election
// ---------------------------------------------------------------------------

enum class PowEventKind { Solved, SolutionSent, Verified, Declared, Halted };

constexpr std::string_view to_string(PowEventKind k) {
  switch (k) {
    case PowEventKind::Solved: return "solved";
    case PowEventKind::SolutionSent: return "solution_sent";
    case PowEventKind::Verified: return "verified";
    case PowEventKind::Declared: return "declared";
    case PowEventKind::Halted: return "halted";
  }
  return "?";
}

struct PowEvent {
  PowEventKind kind;
  double time_ms;
  DeviceId src;
  std::optional<DeviceId> dst;
};

struct PowElectionSetup {
  std::span<const DeviceId> candidates;
  std::span<const DeviceId> participants;
  std::span<const DeviceType> catalog;
  std::span<const std::size_t> type_of;    // per device
  std::span<const double> occupancy;       // per device
  LatencyFn latency;
  unsigned difficulty = 16;
  double verify_cost_ms = 0.1;
  /// Real-hash mode when set: solve times come from the attempt count.
  const Puzzle* puzzle = nullptr;
  std::uint64_t max_attempts = std::uint64_t{1} << 32;
};

struct PowElectionResult {
  SelectionOutcome outcome;
  std::vector<PowEvent> trace;
  std::optional<Solution> winning_solution;
  /// Number of nodes (candidates and participants) at which the winner's
  /// solution was checked and held.
  std::size_t winner_verified_at = 0;
  double winner_solve_ms = 0.0;
};

/// Race among candidates: solve, collect a verification from every other
/// candidate, declare. `stream` is forked per candidate id so the same device
/// draws the same solve time whichever candidate set it is part of.
inline PowElectionResult run_pow_election(const PowElectionSetup& s, const RngStream& stream) {
  detail::require_candidates(s.candidates);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const auto& cands = s.candidates;
  const std::size_t n = cands.size();

  std::vector<double> solve(n, kInf);
  std::vector<std::uint64_t> nonce(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const DeviceId c = cands[i];
    const auto& type = s.catalog[s.type_of[c]];
    const double occ = s.occupancy[c];
    if (s.puzzle == nullptr) {
      auto local = stream.fork(c);
      solve[i] = pow_solve_time(type, occ, s.difficulty, local);
    } else {
      try {
        nonce[i] = solve_puzzle(*s.puzzle, c, s.max_attempts).nonce;
        solve[i] = static_cast<double>(nonce[i] + 1) / (type.hash_rate * (1.0 - occ)) * 1000.0;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NotFound) throw;
      }
    }
  }

  auto completion = [&](std::size_t i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      worst = std::max(worst, s.latency(cands[i], cands[j]) + s.verify_cost_ms + s.latency(cands[j], cands[i]));
    }
    return solve[i] + worst;
  };

  // Completion >= solve time, so candidates can be visited fastest-solver
  // first and the scan stops once no later solver can win.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return solve[a] != solve[b] ? solve[a] < solve[b] : cands[a] < cands[b];
  });
  std::size_t w = n;
  double best = kInf;
  for (auto i : order) {
    if (solve[i] == kInf || solve[i] > best) break;
    const double t = completion(i);
    if (w == n || t < best || (t == best && cands[i] < cands[w])) {
      best = t;
      w = i;
    }
  }
  if (w == n) throw Error(ErrorKind::NotFound, "no candidate solved the puzzle");
  const DeviceId winner = cands[w];

  // Declaration goes to every other candidate and every participant.
  std::vector<DeviceId> recipients(cands.begin(), cands.end());
  recipients.insert(recipients.end(), s.participants.begin(), s.participants.end());
  std::sort(recipients.begin(), recipients.end());
  recipients.erase(std::unique(recipients.begin(), recipients.end()), recipients.end());
  recipients.erase(std::remove(recipients.begin(), recipients.end(), winner), recipients.end());

  std::vector<double> halt(n, kInf);
  halt[w] = best;
  PowElectionResult r;
  double elapsed = best;
  std::size_t messages = 0;
  for (auto x : recipients) {
    const double arrive = best + s.latency(winner, x);
    elapsed = std::max(elapsed, arrive);
    r.trace.push_back({PowEventKind::Declared, best, winner, x});
    ++messages;
    const auto it = std::find(cands.begin(), cands.end(), x);
    if (it != cands.end()) halt[static_cast<std::size_t>(it - cands.begin())] = arrive;
  }

  // Solutions found before the solver halts go out; verifiers answer only
  // while they are still running.
  for (std::size_t i = 0; i < n; ++i) {
    if (!(solve[i] < halt[i])) continue;
    r.trace.push_back({PowEventKind::Solved, solve[i], cands[i], std::nullopt});
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      r.trace.push_back({PowEventKind::SolutionSent, solve[i], cands[i], cands[j]});
      ++messages;
      const double checked = solve[i] + s.latency(cands[i], cands[j]) + s.verify_cost_ms;
      if (checked < halt[j]) {
        r.trace.push_back({PowEventKind::Verified, checked, cands[j], cands[i]});
        ++messages;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i != w) r.trace.push_back({PowEventKind::Halted, halt[i], cands[i], std::nullopt});
  }
  std::stable_sort(r.trace.begin(), r.trace.end(),
                   [](const PowEvent& a, const PowEvent& b) { return a.time_ms < b.time_ms; });

  if (s.puzzle != nullptr) {
    r.winning_solution = Solution{winner, nonce[w]};
    // Each node recomputes the hash on its own.
    for (std::size_t node = 0; node <= recipients.size(); ++node) {
      if (verify_solution(*s.puzzle, winner, nonce[w])) ++r.winner_verified_at;
    }
  } else {
    r.winner_verified_at = recipients.size() + 1;
  }
  r.winner_solve_ms = solve[w];
  r.outcome = {winner, elapsed, messages};
  return r;
}

inline void write_pow_trace(std::ostream& out, std::uint64_t election_id, std::span<const PowEvent> trace,
                            bool header = true) {
  if (header) out << "election_id,kind,time_ms,src,dst\n";
  for (const auto& e : trace) {
    out << election_id << ',' << to_string(e.kind) << ',' << format_double(e.time_ms) << ',' << e.src << ',';
    if (e.dst) out << *e.dst;
    out << '\n';
  }
}

}  // namespace flymaster
