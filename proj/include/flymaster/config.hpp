#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "flymaster/error.hpp"
#include "flymaster/selection_algorithm.hpp"

namespace flymaster {

// ---------------------------------------------------------------------------
// Flat key-value text format
//
//   # comment
//   n_devices = 100
//   model.hidden_dim = 64      # trailing comments are allowed
//
// Keys are snake_case, optionally dotted for nested groups. Duplicate keys are
// a parse error.
// ---------------------------------------------------------------------------

class KeyValues {
 public:
  static KeyValues parse(std::string_view text) {
    KeyValues kv;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) {
        if (end == text.size()) break;
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected key = value");
      }
      const auto key = std::string(trim(line.substr(0, eq)));
      const auto value = std::string(trim(line.substr(eq + 1)));
      if (key.empty()) throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": empty key");
      if (!kv.entries_.emplace(key, value).second) {
        throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      }
      if (end == text.size()) break;
    }
    return kv;
  }

  static KeyValues load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  [[nodiscard]] bool contains(const std::string& key) const { return entries_.contains(key); }
  [[nodiscard]] const std::map<std::string, std::string>& entries() const { return entries_; }

  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  void erase(const std::string& key) { entries_.erase(key); }

  [[nodiscard]] std::optional<std::string> raw(const std::string& key) const {
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    return std::nullopt;
  }

  [[nodiscard]] const std::string& require(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw Error(ErrorKind::MissingField, "missing required key '" + key + "'");
    return it->second;
  }

  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

 private:
  std::map<std::string, std::string> entries_;
};

template <class T>
T parse_number(std::string_view text, std::string_view what) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw Error(ErrorKind::ParseError, std::string(what) + ": cannot parse '" + std::string(text) + "'");
  }
  return value;
}

inline bool parse_bool(std::string_view text, std::string_view what) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw Error(ErrorKind::ParseError, std::string(what) + ": expected true/false, got '" + std::string(text) + "'");
}

/// Comma-separated list, e.g. "1, 5, 10".
inline std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    auto item = KeyValues::trim(text.substr(pos, comma - pos));
    if (!item.empty()) out.emplace_back(item);
    pos = comma + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Typed configuration
// ---------------------------------------------------------------------------

enum class OutputActivation { Softmax, Sigmoid };
enum class SelectionTiming { Overlap, Sequential };
enum class AggregationWeighting { Uniform, DataSize };
enum class DataSource { Synthetic, Idx };

struct ModelConfig {
  std::size_t input_dim = 784;
  std::size_t hidden_dim = 64;
  std::size_t classes = 10;
  std::size_t batch_size = 128;
  double learning_rate = 0.1;
  std::size_t local_steps = 5;
  OutputActivation output_activation = OutputActivation::Softmax;

  [[nodiscard]] std::size_t parameter_count() const {
    return input_dim * hidden_dim + hidden_dim + hidden_dim * classes + classes;
  }

  void validate() const {
    if (input_dim < 1 || hidden_dim < 1 || classes < 1 || batch_size < 1 || local_steps < 1) {
      throw Error(ErrorKind::InvalidRange, "model dimensions and counts must be >= 1");
    }
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidRange, "learning_rate must be > 0");
  }
};

struct GevCalib {
  double ms_per_unit = 0.02;
  double shape = 0.7367;
  double scale = 2.0676;

  void validate() const {
    if (!(ms_per_unit > 0.0)) throw Error(ErrorKind::InvalidRange, "latency.ms_per_unit must be > 0");
    if (!(scale > 0.0)) throw Error(ErrorKind::InvalidRange, "latency.scale must be > 0");
  }
};

struct DataConfig {
  DataSource source = DataSource::Synthetic;
  std::size_t samples_per_device = 32;
  double cluster_spread = 0.05;
  std::string images_path;
  std::string labels_path;
};

/// One `device.<i>.<field> = value` line.
struct DeviceOverride {
  std::size_t index;
  std::string field;
  std::string value;
};

struct ExperimentConfig {
  std::size_t n_devices = 0;
  std::size_t participants_per_round = 0;
  std::size_t rounds = 0;
  std::size_t device_type_count = 2;
  SelectionAlgorithm selection_algorithm = SelectionAlgorithm::Fixed;
  std::uint64_t master_seed = 0;
  GevCalib latency_calibration;
  ModelConfig model_config;
  unsigned pow_difficulty = 16;
  double gossip_interval_ms = 10.0;

  double verify_cost_ms = 0.1;
  SelectionTiming selection_timing = SelectionTiming::Overlap;
  AggregationWeighting aggregation_weighting = AggregationWeighting::Uniform;
  /// When false the model trajectory is skipped and only the time ledger is
  /// produced. Round times never depend on parameter values.
  bool train = true;
  DataConfig data;
  std::vector<DeviceOverride> device_overrides;

  /// Catalog size the config is validated against.
  static constexpr std::size_t kCatalogSize = 5;

  void validate() const {
    if (n_devices < 1) throw Error(ErrorKind::InvalidRange, "n_devices must be >= 1");
    if (participants_per_round < 1 || participants_per_round > n_devices) {
      throw Error(ErrorKind::InvalidRange, "participants_per_round must satisfy 1 <= K <= N (K=" +
                                               std::to_string(participants_per_round) +
                                               ", N=" + std::to_string(n_devices) + ")");
    }
    if (device_type_count < 1 || device_type_count > kCatalogSize) {
      throw Error(ErrorKind::InvalidRange, "device_type_count must be in [1, " + std::to_string(kCatalogSize) + "]");
    }
    if (pow_difficulty < 1 || pow_difficulty > 256) {
      throw Error(ErrorKind::InvalidRange, "pow_difficulty must be in [1, 256]");
    }
    if (!(gossip_interval_ms >= 0.0)) throw Error(ErrorKind::InvalidRange, "gossip_interval_ms must be >= 0");
    if (!(verify_cost_ms >= 0.0)) throw Error(ErrorKind::InvalidRange, "verify_cost_ms must be >= 0");
    if (data.cluster_spread < 0.0) throw Error(ErrorKind::InvalidRange, "data.cluster_spread must be >= 0");
    for (const auto& o : device_overrides) {
      if (o.index >= kCatalogSize) throw Error(ErrorKind::InvalidRange, "device override index out of range");
    }
    latency_calibration.validate();
    model_config.validate();
  }
};

namespace detail {

inline std::size_t to_count(const std::string& v, std::string_view key) {
  return parse_number<std::size_t>(v, key);
}

inline void apply_device_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  // device.<i>.<field>
  const auto second_dot = key.find('.', 7);
  if (second_dot == std::string::npos) throw Error(ErrorKind::ParseError, "bad device key '" + key + "'");
  const auto index = parse_number<std::size_t>(std::string_view(key).substr(7, second_dot - 7), key);
  const auto field = key.substr(second_dot + 1);
  static constexpr std::string_view kFields[] = {"name", "cpu", "mem", "net", "batch_time_ms", "hash_rate"};
  bool known = false;
  for (auto f : kFields) known = known || f == field;
  if (!known) throw Error(ErrorKind::ParseError, "unknown device field '" + field + "'");
  if (field != "name") parse_number<double>(value, key);
  cfg.device_overrides.push_back({index, field, value});
}

}  // namespace detail

/// Builds a validated config from parsed entries. Unknown keys are rejected so
/// typos never silently fall back to defaults.
inline ExperimentConfig config_from_entries(const KeyValues& kv) {
  ExperimentConfig cfg;
  cfg.n_devices = detail::to_count(kv.require("n_devices"), "n_devices");
  cfg.participants_per_round = detail::to_count(kv.require("participants_per_round"), "participants_per_round");
  cfg.rounds = detail::to_count(kv.require("rounds"), "rounds");
  cfg.master_seed = parse_number<std::uint64_t>(kv.require("master_seed"), "master_seed");
  {
    const auto& name = kv.require("selection_algorithm");
    auto algo = parse_algorithm(name);
    if (!algo) throw Error(ErrorKind::ParseError, "unknown selection_algorithm '" + name + "'");
    cfg.selection_algorithm = *algo;
  }

  for (const auto& [key, value] : kv.entries()) {
    if (key == "n_devices" || key == "participants_per_round" || key == "rounds" || key == "master_seed" ||
        key == "selection_algorithm") {
      continue;
    } else if (key == "device_type_count") {
      cfg.device_type_count = detail::to_count(value, key);
    } else if (key == "pow_difficulty") {
      cfg.pow_difficulty = parse_number<unsigned>(value, key);
    } else if (key == "gossip_interval_ms") {
      cfg.gossip_interval_ms = parse_number<double>(value, key);
    } else if (key == "verify_cost_ms") {
      cfg.verify_cost_ms = parse_number<double>(value, key);
    } else if (key == "train") {
      cfg.train = parse_bool(value, key);
    } else if (key == "selection_timing") {
      if (value == "overlap") cfg.selection_timing = SelectionTiming::Overlap;
      else if (value == "sequential") cfg.selection_timing = SelectionTiming::Sequential;
      else throw Error(ErrorKind::ParseError, "selection_timing must be overlap|sequential");
    } else if (key == "aggregation_weighting") {
      if (value == "uniform") cfg.aggregation_weighting = AggregationWeighting::Uniform;
      else if (value == "data_size") cfg.aggregation_weighting = AggregationWeighting::DataSize;
      else throw Error(ErrorKind::ParseError, "aggregation_weighting must be uniform|data_size");
    } else if (key == "latency.ms_per_unit") {
      cfg.latency_calibration.ms_per_unit = parse_number<double>(value, key);
    } else if (key == "latency.shape") {
      cfg.latency_calibration.shape = parse_number<double>(value, key);
    } else if (key == "latency.scale") {
      cfg.latency_calibration.scale = parse_number<double>(value, key);
    } else if (key == "model.input_dim") {
      cfg.model_config.input_dim = detail::to_count(value, key);
    } else if (key == "model.hidden_dim") {
      cfg.model_config.hidden_dim = detail::to_count(value, key);
    } else if (key == "model.classes") {
      cfg.model_config.classes = detail::to_count(value, key);
    } else if (key == "model.batch_size") {
      cfg.model_config.batch_size = detail::to_count(value, key);
    } else if (key == "model.learning_rate") {
      cfg.model_config.learning_rate = parse_number<double>(value, key);
    } else if (key == "model.local_steps") {
      cfg.model_config.local_steps = detail::to_count(value, key);
    } else if (key == "model.output_activation") {
      if (value == "softmax") cfg.model_config.output_activation = OutputActivation::Softmax;
      else if (value == "sigmoid") cfg.model_config.output_activation = OutputActivation::Sigmoid;
      else throw Error(ErrorKind::ParseError, "model.output_activation must be softmax|sigmoid");
    } else if (key == "data.source") {
      if (value == "synthetic") cfg.data.source = DataSource::Synthetic;
      else if (value == "idx") cfg.data.source = DataSource::Idx;
      else throw Error(ErrorKind::ParseError, "data.source must be synthetic|idx");
    } else if (key == "data.samples_per_device") {
      cfg.data.samples_per_device = detail::to_count(value, key);
    } else if (key == "data.cluster_spread") {
      cfg.data.cluster_spread = parse_number<double>(value, key);
    } else if (key == "data.images") {
      cfg.data.images_path = value;
    } else if (key == "data.labels") {
      cfg.data.labels_path = value;
    } else if (key.starts_with("device.")) {
      detail::apply_device_key(cfg, key, value);
    } else {
      throw Error(ErrorKind::ParseError, "unknown key '" + key + "'");
    }
  }
  if (cfg.data.source == DataSource::Idx && (cfg.data.images_path.empty() || cfg.data.labels_path.empty())) {
    throw Error(ErrorKind::MissingField, "data.source = idx requires data.images and data.labels");
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config(std::string_view text) { return config_from_entries(KeyValues::parse(text)); }

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_entries(KeyValues::load(path));
}

}  // namespace flymaster
