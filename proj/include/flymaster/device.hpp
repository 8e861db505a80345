#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "flymaster/config.hpp"
#include "flymaster/error.hpp"
#include "flymaster/rng.hpp"

namespace flymaster {

struct DeviceType {
  std::string name;
  double cpu;            // GHz
  double mem;            // GB
  double net;            // MB/s
  double batch_time_ms;  // one mini-batch of the reference model, idle device
  double hash_rate;      // puzzle attempts per second, idle device

  void validate() const {
    if (!(cpu > 0 && mem > 0 && net > 0 && batch_time_ms > 0 && hash_rate > 0)) {
      throw Error(ErrorKind::InvalidRange, "device type '" + name + "' needs positive numeric fields");
    }
  }
};

/// Parameter count of the default 784-64-10 model; compute and aggregation
/// costs scale relative to it.
inline constexpr double kReferenceModelSize = 50890.0;

// Datasheet-derived defaults for the five-board testbed. Net is gigabit
// Ethernet for every board.
inline const std::array<DeviceType, ExperimentConfig::kCatalogSize>& default_catalog() {
  static const std::array<DeviceType, ExperimentConfig::kCatalogSize> catalog = {{
      {"jetson_nano", 1.43, 4.0, 125.0, 15.0, 2.0e6},
      {"coral_dev_board", 1.5, 1.0, 125.0, 26.0, 1.2e6},
      {"up_squared_n3350", 2.4, 2.0, 125.0, 10.0, 8.0e6},
      {"up_squared_n4200", 2.5, 4.0, 125.0, 6.0, 1.2e7},
      {"up_squared_e3950", 2.0, 8.0, 125.0, 7.0, 1.0e7},
  }};
  return catalog;
}

/// Aggregating 10 updates of the reference model on the fastest default
/// board (2.5 GHz, idle) takes 5 ms.
inline constexpr double kAggregationCalib = 5.0 * 2.5 / (10.0 * kReferenceModelSize);

inline std::vector<DeviceType> build_catalog(std::size_t count, std::span<const DeviceOverride> overrides = {}) {
  const auto& defaults = default_catalog();
  if (count < 1 || count > defaults.size()) {
    throw Error(ErrorKind::CountOutOfRange,
                "device_type_count must be in [1, " + std::to_string(defaults.size()) + "], got " + std::to_string(count));
  }
  std::vector<DeviceType> out(defaults.begin(), defaults.end());
  for (const auto& o : overrides) {
    if (o.index >= out.size()) throw Error(ErrorKind::CountOutOfRange, "override index out of range");
    auto& t = out[o.index];
    if (o.field == "name") {
      t.name = o.value;
      continue;
    }
    const double v = parse_number<double>(o.value, o.field);
    if (o.field == "cpu") t.cpu = v;
    else if (o.field == "mem") t.mem = v;
    else if (o.field == "net") t.net = v;
    else if (o.field == "batch_time_ms") t.batch_time_ms = v;
    else if (o.field == "hash_rate") t.hash_rate = v;
    else throw Error(ErrorKind::ParseError, "unknown device field '" + o.field + "'");
  }
  out.resize(count);
  for (const auto& t : out) t.validate();
  return out;
}

inline std::vector<std::size_t> assign_types(std::size_t n, std::span<const DeviceType> catalog, RngStream& stream) {
  if (catalog.empty()) throw Error(ErrorKind::EmptyList, "catalog is empty");
  std::vector<std::size_t> out(n);
  for (auto& t : out) t = static_cast<std::size_t>(stream.below(catalog.size()));
  return out;
}

inline constexpr std::array<double, 3> kOccupancyLevels = {0.25, 0.50, 0.75};

inline double draw_occupancy(RngStream& stream) { return kOccupancyLevels[stream.below(kOccupancyLevels.size())]; }

namespace detail {
inline double available_fraction(double occupancy) {
  if (!(occupancy >= 0.0 && occupancy < 1.0)) throw Error(ErrorKind::InvalidRange, "occupancy must be in [0, 1)");
  return 1.0 - occupancy;
}
}  // namespace detail

/// 1 / (CPU * MEM * NET) over the resources left after occupancy.
inline double stress_metric(const DeviceType& t, double occupancy) {
  const double a = detail::available_fraction(occupancy);
  return 1.0 / ((t.cpu * a) * (t.mem * a) * (t.net * a));
}

inline double compute_time(const DeviceType& t, double occupancy, std::size_t local_steps, double model_size) {
  if (local_steps < 1) throw Error(ErrorKind::InvalidRange, "local_steps must be >= 1");
  const double a = detail::available_fraction(occupancy);
  return static_cast<double>(local_steps) * t.batch_time_ms * (model_size / kReferenceModelSize) / a;
}

inline double transfer_time(const DeviceType& t, double occupancy, double payload_bytes) {
  if (!(payload_bytes >= 0.0)) throw Error(ErrorKind::InvalidRange, "payload must be >= 0");
  const double a = detail::available_fraction(occupancy);
  return payload_bytes / (t.net * 1e6 * a) * 1000.0;
}

inline double aggregation_time(const DeviceType& t, double occupancy, std::size_t k, double model_size,
                               double c_agg = kAggregationCalib) {
  if (k < 1) throw Error(ErrorKind::InvalidRange, "aggregation needs k >= 1");
  const double a = detail::available_fraction(occupancy);
  return c_agg * static_cast<double>(k) * model_size / (t.cpu * a);
}

inline double pow_mean_solve_ms(const DeviceType& t, double occupancy, unsigned difficulty) {
  if (difficulty < 1) throw Error(ErrorKind::InvalidRange, "difficulty must be >= 1");
  const double a = detail::available_fraction(occupancy);
  return std::ldexp(1.0, static_cast<int>(difficulty)) / (t.hash_rate * a) * 1000.0;
}

/// Memoryless search: each attempt succeeds independently, so the time to
/// the first success is exponential.
inline double pow_solve_time(const DeviceType& t, double occupancy, unsigned difficulty, RngStream& stream) {
  return stream.exponential(pow_mean_solve_ms(t, occupancy, difficulty));
}

}  // namespace flymaster
