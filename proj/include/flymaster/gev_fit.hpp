#pragma once

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "flymaster/config.hpp"
#include "flymaster/error.hpp"
#include "flymaster/latency.hpp"

namespace flymaster {

inline constexpr std::size_t kMinGevSamples = 50;

inline double gev_loglik(const GevParams& p, std::span<const double> xs) {
  if (!(p.scale > 0.0)) return -INFINITY;
  double ll = 0.0;
  for (double x : xs) {
    const double v = gev_log_pdf(p, x);
    if (!std::isfinite(v)) return -INFINITY;
    ll += v;
  }
  return ll;
}

/// Hosking's L-moment estimator. Used as the starting point of the MLE.
inline GevParams gev_lmoments_estimate(std::span<const double> samples) {
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double j = static_cast<double>(i);  // 0-based rank
    b0 += x[i];
    b1 += x[i] * j / (n - 1.0);
    b2 += x[i] * j * (j - 1.0) / ((n - 1.0) * (n - 2.0));
  }
  b0 /= n;
  b1 /= n;
  b2 /= n;
  const double l1 = b0;
  const double l2 = 2.0 * b1 - b0;
  const double l3 = 6.0 * b2 - 6.0 * b1 + b0;
  const double t3 = l3 / l2;

  const double c = 2.0 / (3.0 + t3) - std::numbers::ln2 / std::log(3.0);
  // Hosking's k = -xi. The gamma function is undefined at k <= -1 (infinite mean).
  double k = 7.8590 * c + 2.9554 * c * c;
  k = std::max(k, -0.95);
  if (std::abs(k) < 1e-6) {
    const double sigma = l2 / std::numbers::ln2;
    return {0.0, sigma, l1 - std::numbers::egamma * sigma};
  }
  const double g = std::tgamma(1.0 + k);
  const double sigma = l2 * k / ((1.0 - std::pow(2.0, -k)) * g);
  const double mu = l1 - sigma * (1.0 - g) / k;
  return {-k, sigma, mu};
}

namespace detail {

struct GevObjective {
  std::span<const double> xs;
};

inline double gev_negll(const gsl_vector* v, void* raw) {
  const auto* obj = static_cast<const GevObjective*>(raw);
  const GevParams p{gsl_vector_get(v, 0), std::exp(gsl_vector_get(v, 1)), gsl_vector_get(v, 2)};
  const double ll = gev_loglik(p, obj->xs);
  return std::isfinite(ll) ? -ll : std::numeric_limits<double>::max();
}

inline void check_fit_input(std::span<const double> samples, std::size_t min_count) {
  if (samples.size() < min_count) {
    throw Error(ErrorKind::TooFewSamples,
                "need at least " + std::to_string(min_count) + " samples, got " + std::to_string(samples.size()));
  }
  for (double x : samples) {
    if (!std::isfinite(x)) throw Error(ErrorKind::InvalidRange, "samples must be finite");
  }
}

}  // namespace detail

/// Maximum-likelihood GEV fit: L-moment start, Nelder-Mead refinement over
/// (xi, log sigma, mu).
inline GevParams fit_gev(std::span<const double> samples) {
  detail::check_fit_input(samples, kMinGevSamples);
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  if (*lo == *hi) throw Error(ErrorKind::DegenerateSamples, "all samples are equal");

  GevParams start = gev_lmoments_estimate(samples);
  // The L-moment start can leave extreme samples outside the support.
  for (int i = 0; i < 60 && !std::isfinite(gev_loglik(start, samples)); ++i) start.scale *= 1.5;
  if (!std::isfinite(gev_loglik(start, samples))) {
    start = {0.0, *hi - *lo, std::accumulate(samples.begin(), samples.end(), 0.0) / samples.size()};
  }

  detail::GevObjective obj{samples};
  gsl_multimin_function f{&detail::gev_negll, 3, &obj};

  gsl_vector* x = gsl_vector_alloc(3);
  gsl_vector* step = gsl_vector_alloc(3);
  gsl_vector_set(x, 0, start.shape);
  gsl_vector_set(x, 1, std::log(start.scale));
  gsl_vector_set(x, 2, start.location);
  gsl_vector_set(step, 0, 0.05);
  gsl_vector_set(step, 1, 0.1);
  gsl_vector_set(step, 2, 0.1 * start.scale);

  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3);
  gsl_multimin_fminimizer_set(s, &f, x, step);

  // Two passes: a restart from the first optimum avoids simplex collapse.
  for (int pass = 0; pass < 2; ++pass) {
    for (int iter = 0; iter < 5000; ++iter) {
      if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-9) == GSL_SUCCESS) break;
    }
    if (pass == 0) gsl_multimin_fminimizer_set(s, &f, gsl_multimin_fminimizer_x(s), step);
  }

  const gsl_vector* best = gsl_multimin_fminimizer_x(s);
  GevParams fitted{gsl_vector_get(best, 0), std::exp(gsl_vector_get(best, 1)), gsl_vector_get(best, 2)};
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);

  if (gev_loglik(fitted, samples) < gev_loglik(start, samples)) return start;
  return fitted;
}

struct GaussianParams {
  double mean;
  double stddev;
};

/// Sample mean and unbiased (n-1) standard deviation.
inline GaussianParams fit_gaussian(std::span<const double> samples) {
  detail::check_fit_input(samples, 2);
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

inline double gaussian_loglik(const GaussianParams& p, std::span<const double> xs) {
  if (!(p.stddev > 0.0)) return -INFINITY;
  const double n = static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - p.mean) * (x - p.mean);
  return -0.5 * n * std::log(2.0 * std::numbers::pi * p.stddev * p.stddev) - ss / (2.0 * p.stddev * p.stddev);
}

struct FitReportRow {
  std::string model;
  double loglik;
  double aic;
  std::vector<double> params;
};

/// Fits every candidate family and ranks by AIC, best first.
inline std::vector<FitReportRow> compare_fits(std::span<const double> samples) {
  const auto gev = fit_gev(samples);
  const auto gauss = fit_gaussian(samples);
  const double gev_ll = gev_loglik(gev, samples);
  const double gauss_ll = gaussian_loglik(gauss, samples);
  std::vector<FitReportRow> rows{
      {"gev", gev_ll, 2.0 * 3 - 2.0 * gev_ll, {gev.shape, gev.scale, gev.location}},
      {"gaussian", gauss_ll, 2.0 * 2 - 2.0 * gauss_ll, {gauss.mean, gauss.stddev}},
  };
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.aic < b.aic; });
  return rows;
}

/// Reads a latency trace CSV: header `rtt_ms`, one sample per row.
inline std::vector<double> load_latency_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (KeyValues::trim(line) != "rtt_ms") throw Error(ErrorKind::MissingColumns, path.string() + ": expected header 'rtt_ms'");
  std::vector<double> out;
  while (std::getline(in, line)) {
    const auto t = KeyValues::trim(line);
    if (t.empty()) continue;
    out.push_back(parse_number<double>(t, "rtt_ms"));
  }
  return out;
}

}  // namespace flymaster
