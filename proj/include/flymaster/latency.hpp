#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "flymaster/config.hpp"
#include "flymaster/error.hpp"
#include "flymaster/rng.hpp"

namespace flymaster {

using DeviceId = std::size_t;

inline constexpr double kPlaneSize = 1000.0;
/// Physical floor applied to every link latency draw.
inline constexpr double kMinLatencyMs = 0.01;

struct Point {
  double x;
  double y;
};

struct Placement {
  std::vector<Point> coords;

  [[nodiscard]] std::size_t size() const { return coords.size(); }
};

inline Placement place_devices(std::size_t n, RngStream& stream) {
  if (n < 1) throw Error(ErrorKind::InvalidRange, "place_devices needs n >= 1");
  Placement p;
  p.coords.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = stream.uniform() * kPlaneSize;
    const double y = stream.uniform() * kPlaneSize;
    p.coords.push_back({x, y});
  }
  return p;
}

inline double distance(const Placement& p, DeviceId i, DeviceId j) {
  if (i >= p.size() || j >= p.size()) throw Error(ErrorKind::UnknownDevice, "device id out of range");
  return std::hypot(p.coords[i].x - p.coords[j].x, p.coords[i].y - p.coords[j].y);
}

// ---------------------------------------------------------------------------
// Generalized extreme value distribution
// ---------------------------------------------------------------------------

struct GevParams {
  double shape;     // xi
  double scale;     // sigma > 0
  double location;  // mu, ms
};

/// |xi| below this is treated as the Gumbel limit.
inline constexpr double kGumbelShapeEps = 1e-12;

inline double gev_quantile(const GevParams& p, double u) {
  if (!(u > 0.0 && u < 1.0)) throw Error(ErrorKind::InvalidProbability, "quantile needs 0 < u < 1");
  const double t = -std::log(u);
  if (std::abs(p.shape) < kGumbelShapeEps) return p.location - p.scale * std::log(t);
  return p.location + p.scale * std::expm1(-p.shape * std::log(t)) / p.shape;
}

inline double gev_cdf(const GevParams& p, double x) {
  const double z = (x - p.location) / p.scale;
  if (std::abs(p.shape) < kGumbelShapeEps) return std::exp(-std::exp(-z));
  const double t = 1.0 + p.shape * z;
  if (t <= 0.0) return p.shape > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::exp(-std::log(t) / p.shape));
}

inline double gev_log_pdf(const GevParams& p, double x) {
  const double z = (x - p.location) / p.scale;
  if (std::abs(p.shape) < kGumbelShapeEps) return -std::log(p.scale) - z - std::exp(-z);
  const double t = 1.0 + p.shape * z;
  if (t <= 0.0) return -INFINITY;
  const double lt = std::log(t);
  return -std::log(p.scale) - (1.0 + 1.0 / p.shape) * lt - std::exp(-lt / p.shape);
}

inline double gev_sample(const GevParams& p, RngStream& stream) { return gev_quantile(p, stream.uniform_open()); }

/// Location grows linearly with distance; shape and scale are shared by all links.
inline GevParams expected_link_latency(const GevCalib& calib, double d) {
  if (!(d >= 0.0)) throw Error(ErrorKind::InvalidRange, "distance must be >= 0");
  return {calib.shape, calib.scale, calib.ms_per_unit * d};
}

/// Per-message one-way latencies. The draw for (round, src, dst) is a pure
/// function of the latency stream's key, so every query of the same key in a
/// run returns the same value and every selection algorithm sees the same
/// network in a given round.
class LinkLatencyModel {
 public:
  LinkLatencyModel(GevCalib calib, const Placement& placement, const RngStream& latency_stream)
      : calib_(calib), placement_(&placement), stream_(latency_stream) {}

  [[nodiscard]] double operator()(std::size_t round, DeviceId src, DeviceId dst) const {
    if (src == dst) throw Error(ErrorKind::SelfLink, "link latency requested for src == dst");
    const auto params = expected_link_latency(calib_, distance(*placement_, src, dst));
    const double u = stream_.keyed_uniform(round, src, dst);
    return std::max(gev_quantile(params, u), kMinLatencyMs);
  }

  [[nodiscard]] const GevCalib& calibration() const { return calib_; }
  [[nodiscard]] const Placement& placement() const { return *placement_; }

 private:
  GevCalib calib_;
  const Placement* placement_;
  RngStream stream_;
};

inline double link_latency(const GevCalib& calib, const Placement& placement, std::size_t round, DeviceId src,
                           DeviceId dst, const RngStream& latency_stream) {
  return LinkLatencyModel(calib, placement, latency_stream)(round, src, dst);
}

}  // namespace flymaster
