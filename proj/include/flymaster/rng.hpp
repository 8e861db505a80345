#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "flymaster/error.hpp"

namespace flymaster {

namespace labels {
inline constexpr std::string_view kPlacement = "placement";
inline constexpr std::string_view kSampling = "sampling";
inline constexpr std::string_view kLatency = "latency";
inline constexpr std::string_view kStress = "stress";
inline constexpr std::string_view kPow = "pow";
inline constexpr std::string_view kInit = "init";
inline constexpr std::string_view kShuffle = "shuffle";
inline constexpr std::string_view kSelection = "selection";
inline constexpr std::string_view kData = "data";
}  // namespace labels

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based random stream. Draw i of a stream is a pure function of
/// (key, i), and fork() derives child streams from the key alone, so a child
/// never depends on how much of its parent has been consumed.
///
/// Satisfies UniformRandomBitGenerator, but the helpers below should be
/// preferred over <random> distributions: their output is identical across
/// standard library implementations.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t key, std::string label) : key_(key), label_(std::move(label)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return mix64(key_ + (++counter_) * kGamma); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x = (*this)();
    while (x >= limit) x = (*this)();
    return x % n;
  }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal() noexcept {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double exponential(double mean) noexcept { return -std::log(uniform_open()) * mean; }

  [[nodiscard]] RngStream fork(std::uint64_t a) const {
    return {mix64(key_ ^ mix64(a + 0x632be59bd9b4e019ULL)), label_};
  }
  [[nodiscard]] RngStream fork(std::uint64_t a, std::uint64_t b) const { return fork(a).fork(b); }
  [[nodiscard]] RngStream fork(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
    return fork(a).fork(b).fork(c);
  }

  /// Uniform (0,1) keyed directly by up to three indices without building a
  /// child stream. Used for per-link draws.
  [[nodiscard]] double keyed_uniform(std::uint64_t a, std::uint64_t b, std::uint64_t c) const noexcept {
    std::uint64_t h = mix64(key_ ^ mix64(a ^ 0x8cb92ba72f3d8dd7ULL));
    h = mix64(h ^ mix64(b ^ 0x2545f4914f6cdd1dULL));
    h = mix64(h ^ mix64(c ^ 0x9e3779b97f4a7c15ULL));
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
  }

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] const std::string& label() const noexcept { return label_; }
  [[nodiscard]] std::uint64_t consumed() const noexcept { return counter_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::string label_;
};

inline RngStream derive_stream(std::uint64_t master_seed, std::string_view label) {
  if (label.empty()) throw Error(ErrorKind::InvalidRange, "stream label must be non-empty");
  return {mix64(mix64(master_seed) ^ fnv1a64(label)), std::string(label)};
}

/// Fisher-Yates shuffle driven by the stream's own integer draws.
template <class T>
void shuffle(std::span<T> items, RngStream& stream) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(stream.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace flymaster
