#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "flymaster/config.hpp"
#include "flymaster/error.hpp"
#include "flymaster/rng.hpp"

namespace flymaster {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Examples as rows. Also used for per-device shards and mini-batches.
struct Dataset {
  RowMatrix features;
  std::vector<int> labels;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  void validate(std::size_t classes) const {
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
      throw Error(ErrorKind::CountMismatch, "feature rows != label count");
    }
    if (!features.allFinite()) throw Error(ErrorKind::InvalidRange, "non-finite feature value");
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= classes) throw Error(ErrorKind::InvalidRange, "label out of range");
    }
  }

  [[nodiscard]] Dataset rows(std::span<const std::size_t> index) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(index.size()), features.cols());
    out.labels.resize(index.size());
    for (std::size_t r = 0; r < index.size(); ++r) {
      out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(index[r]));
      out.labels[r] = labels[index[r]];
    }
    return out;
  }
};

using Shard = Dataset;

/// Flat parameter vector of the two-layer network, laid out as
/// [W1 (input x hidden, row-major) | b1 | W2 (hidden x classes, row-major) | b2].
class ModelParams {
 public:
  ModelParams() = default;

  explicit ModelParams(const ModelConfig& cfg)
      : ModelParams(cfg.input_dim, cfg.hidden_dim, cfg.classes) {}

  ModelParams(std::size_t input_dim, std::size_t hidden_dim, std::size_t classes)
      : input_(input_dim), hidden_(hidden_dim), classes_(classes), w_(expected_size(), 0.0) {}

  ModelParams(std::size_t input_dim, std::size_t hidden_dim, std::size_t classes, std::vector<double> weights)
      : input_(input_dim), hidden_(hidden_dim), classes_(classes), w_(std::move(weights)) {
    if (w_.size() != expected_size()) throw Error(ErrorKind::ShapeMismatch, "weight vector length does not match shape");
    for (double v : w_) {
      if (!std::isfinite(v)) throw Error(ErrorKind::InvalidRange, "non-finite parameter");
    }
  }

  [[nodiscard]] std::size_t input_dim() const { return input_; }
  [[nodiscard]] std::size_t hidden_dim() const { return hidden_; }
  [[nodiscard]] std::size_t classes() const { return classes_; }
  [[nodiscard]] std::size_t size() const { return w_.size(); }

  [[nodiscard]] std::span<double> values() { return w_; }
  [[nodiscard]] std::span<const double> values() const { return w_; }

  [[nodiscard]] bool same_shape(const ModelParams& o) const {
    return input_ == o.input_ && hidden_ == o.hidden_ && classes_ == o.classes_;
  }

  [[nodiscard]] Eigen::Map<const RowMatrix> w1() const { return {w_.data(), rows(input_), rows(hidden_)}; }
  [[nodiscard]] Eigen::Map<const Eigen::RowVectorXd> b1() const { return {w_.data() + off_b1(), rows(hidden_)}; }
  [[nodiscard]] Eigen::Map<const RowMatrix> w2() const { return {w_.data() + off_w2(), rows(hidden_), rows(classes_)}; }
  [[nodiscard]] Eigen::Map<const Eigen::RowVectorXd> b2() const { return {w_.data() + off_b2(), rows(classes_)}; }

  [[nodiscard]] Eigen::Map<RowMatrix> w1() { return {w_.data(), rows(input_), rows(hidden_)}; }
  [[nodiscard]] Eigen::Map<Eigen::RowVectorXd> b1() { return {w_.data() + off_b1(), rows(hidden_)}; }
  [[nodiscard]] Eigen::Map<RowMatrix> w2() { return {w_.data() + off_w2(), rows(hidden_), rows(classes_)}; }
  [[nodiscard]] Eigen::Map<Eigen::RowVectorXd> b2() { return {w_.data() + off_b2(), rows(classes_)}; }

  [[nodiscard]] std::size_t off_b1() const { return input_ * hidden_; }
  [[nodiscard]] std::size_t off_w2() const { return off_b1() + hidden_; }
  [[nodiscard]] std::size_t off_b2() const { return off_w2() + hidden_ * classes_; }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.same_shape(b) && a.w_ == b.w_;
  }

 private:
  [[nodiscard]] std::size_t expected_size() const { return input_ * hidden_ + hidden_ + hidden_ * classes_ + classes_; }
  static Eigen::Index rows(std::size_t n) { return static_cast<Eigen::Index>(n); }

  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
  std::size_t classes_ = 0;
  std::vector<double> w_;
};

/// Glorot-uniform weights, zero biases.
inline ModelParams init_model(RngStream& stream, const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p(cfg);
  const double r1 = std::sqrt(6.0 / static_cast<double>(cfg.input_dim + cfg.hidden_dim));
  const double r2 = std::sqrt(6.0 / static_cast<double>(cfg.hidden_dim + cfg.classes));
  auto w = p.values();
  for (std::size_t i = 0; i < p.off_b1(); ++i) w[i] = (2.0 * stream.uniform() - 1.0) * r1;
  for (std::size_t i = p.off_w2(); i < p.off_b2(); ++i) w[i] = (2.0 * stream.uniform() - 1.0) * r2;
  return p;
}

namespace detail {

inline void check_batch(const ModelParams& params, const Dataset& batch) {
  if (batch.dim() != params.input_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "batch feature dim " + std::to_string(batch.dim()) +
                                                  " != model input dim " + std::to_string(params.input_dim()));
  }
  if (static_cast<std::size_t>(batch.features.rows()) != batch.labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "feature rows != label count");
  }
}

inline RowMatrix hidden_activations(const ModelParams& p, const Dataset& batch) {
  RowMatrix a = batch.features * p.w1();
  a.rowwise() += p.b1();
  return a.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

inline RowMatrix logits(const ModelParams& p, const RowMatrix& hidden) {
  RowMatrix z = hidden * p.w2();
  z.rowwise() += p.b2();
  return z;
}

inline RowMatrix output_probabilities(const RowMatrix& z, OutputActivation act) {
  if (act == OutputActivation::Sigmoid) return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  RowMatrix p(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    p.row(i) = (z.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace detail

/// Class probabilities, one row per example. With the softmax output each
/// row sums to one.
inline RowMatrix forward(const ModelParams& params, const Dataset& batch,
                         OutputActivation act = OutputActivation::Softmax) {
  detail::check_batch(params, batch);
  const RowMatrix h = detail::hidden_activations(params, batch);
  return detail::output_probabilities(detail::logits(params, h), act);
}

struct LossGrad {
  double loss;
  std::vector<double> grad;
};

/// Mean cross-entropy over the batch and its gradient in parameter layout.
/// Softmax pairs with categorical CE; sigmoid with per-class binary CE.
inline LossGrad loss_and_grad(const ModelParams& params, const Dataset& batch,
                              OutputActivation act = OutputActivation::Softmax) {
  detail::check_batch(params, batch);
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw Error(ErrorKind::EmptyShard, "empty batch");
  const auto classes = static_cast<Eigen::Index>(params.classes());

  const RowMatrix h = detail::hidden_activations(params, batch);
  const RowMatrix z = detail::logits(params, h);
  const RowMatrix p = detail::output_probabilities(z, act);

  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = batch.labels[static_cast<std::size_t>(i)];
    if (act == OutputActivation::Softmax) {
      const double m = z.row(i).maxCoeff();
      const double lse = m + std::log((z.row(i).array() - m).exp().sum());
      loss += lse - z(i, y);
    } else {
      for (Eigen::Index c = 0; c < classes; ++c) {
        const double v = z(i, c);
        const double softplus = v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
        loss += softplus - (c == y ? v : 0.0);
      }
    }
  }
  loss /= static_cast<double>(n);

  // Both output/loss pairings share dL/dz = (p - onehot(y)) / n.
  RowMatrix dz = p;
  for (Eigen::Index i = 0; i < n; ++i) dz(i, batch.labels[static_cast<std::size_t>(i)]) -= 1.0;
  dz /= static_cast<double>(n);

  LossGrad out{loss, std::vector<double>(params.size(), 0.0)};
  ModelParams g(params.input_dim(), params.hidden_dim(), params.classes());
  g.w2() = h.transpose() * dz;
  g.b2() = dz.colwise().sum();
  const RowMatrix dh = dz * params.w2().transpose();
  const RowMatrix da = dh.array() * h.array() * (1.0 - h.array());
  g.w1() = batch.features.transpose() * da;
  g.b1() = da.colwise().sum();
  std::copy(g.values().begin(), g.values().end(), out.grad.begin());
  return out;
}

/// `local_steps` mini-batch SGD updates. Batches walk a fresh permutation of
/// the shard each pass; the final batch of a pass may be short.
inline ModelParams local_sgd(const ModelParams& params, const Shard& shard, const ModelConfig& cfg,
                             RngStream& stream) {
  if (shard.size() == 0) throw Error(ErrorKind::EmptyShard, "local_sgd on empty shard");
  ModelParams w = params;
  std::vector<std::size_t> order(shard.size());
  std::size_t cursor = order.size();
  std::vector<std::size_t> batch_index;
  for (std::size_t step = 0; step < cfg.local_steps; ++step) {
    if (cursor >= order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      shuffle(std::span(order), stream);
      cursor = 0;
    }
    const std::size_t take = std::min(cfg.batch_size, order.size() - cursor);
    batch_index.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                       order.begin() + static_cast<std::ptrdiff_t>(cursor + take));
    cursor += take;
    const auto lg = loss_and_grad(w, shard.rows(batch_index), cfg.output_activation);
    auto v = w.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg.learning_rate * lg.grad[i];
  }
  return w;
}

/// Weighted mean of parameter vectors, uniform when no weights are given.
/// Accumulates in input order.
inline ModelParams aggregate(std::span<const ModelParams> updates,
                             std::optional<std::span<const double>> weights = std::nullopt) {
  if (updates.empty()) throw Error(ErrorKind::EmptyList, "aggregate needs at least one update");
  for (const auto& u : updates) {
    if (!u.same_shape(updates.front()) || u.size() != updates.front().size()) {
      throw Error(ErrorKind::ShapeMismatch, "updates differ in shape");
    }
  }
  double total = 0.0;
  if (weights) {
    if (weights->size() != updates.size()) throw Error(ErrorKind::InvalidWeights, "one weight per update required");
    for (double wi : *weights) {
      if (!(wi >= 0.0) || !std::isfinite(wi)) throw Error(ErrorKind::InvalidWeights, "weights must be finite and >= 0");
      total += wi;
    }
    if (!(total > 0.0)) throw Error(ErrorKind::InvalidWeights, "weights must have positive sum");
  } else {
    total = static_cast<double>(updates.size());
  }

  const auto& first = updates.front();
  ModelParams out(first.input_dim(), first.hidden_dim(), first.classes());
  auto acc = out.values();
  for (std::size_t k = 0; k < updates.size(); ++k) {
    const double wk = weights ? (*weights)[k] : 1.0;
    const auto v = updates[k].values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += wk * v[i];
  }
  for (double& a : acc) a /= total;
  return out;
}

/// Per-class Gaussian clusters around random centers in [0,1]^d, clipped to
/// [0,1]. Row i has label i mod classes.
inline Dataset synth_dataset(RngStream& stream, std::size_t n, const ModelConfig& cfg, double cluster_spread) {
  if (n < cfg.classes) throw Error(ErrorKind::TooFewExamples, "synth_dataset needs n >= classes");
  const auto d = static_cast<Eigen::Index>(cfg.input_dim);
  RowMatrix centers(static_cast<Eigen::Index>(cfg.classes), d);
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    for (Eigen::Index j = 0; j < d; ++j) centers(c, j) = stream.uniform();
  }
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(n), d);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<int>(i % cfg.classes);
    out.labels[i] = y;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double noise = cluster_spread > 0.0 ? cluster_spread * stream.normal() : 0.0;
      out.features(static_cast<Eigen::Index>(i), j) = std::clamp(centers(y, j) + noise, 0.0, 1.0);
    }
  }
  return out;
}

/// Row indices of each device's shard: a random permutation cut into
/// near-equal pieces, the first (n mod devices) shards one row larger.
inline std::vector<std::vector<std::size_t>> partition_indices(std::size_t n, std::size_t n_devices,
                                                               RngStream& stream) {
  if (n_devices == 0 || n < n_devices) {
    throw Error(ErrorKind::TooFewExamples, "dataset of " + std::to_string(n) + " rows cannot cover " +
                                               std::to_string(n_devices) + " devices");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  shuffle(std::span(perm), stream);
  std::vector<std::vector<std::size_t>> out(n_devices);
  const std::size_t base = n / n_devices;
  const std::size_t extra = n % n_devices;
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < n_devices; ++k) {
    const std::size_t len = base + (k < extra ? 1 : 0);
    out[k].assign(perm.begin() + static_cast<std::ptrdiff_t>(cursor),
                  perm.begin() + static_cast<std::ptrdiff_t>(cursor + len));
    cursor += len;
  }
  return out;
}

inline std::vector<Shard> partition(const Dataset& dataset, std::size_t n_devices, RngStream& stream) {
  std::vector<Shard> shards;
  for (const auto& idx : partition_indices(dataset.size(), n_devices, stream)) shards.push_back(dataset.rows(idx));
  return shards;
}

inline double accuracy(const ModelParams& params, const Dataset& data,
                       OutputActivation act = OutputActivation::Softmax) {
  const RowMatrix p = forward(params, data, act);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index arg = 0;
    p.row(i).maxCoeff(&arg);
    correct += static_cast<int>(arg) == data.labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace flymaster
