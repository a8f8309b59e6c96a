#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "actreg/data.hpp"
#include "actreg/error.hpp"
#include "actreg/zoo.hpp"

namespace actreg {

struct TelemetryConfig {
  std::string command;  // external command printing one wattage per call
  double hz = 1.0;
  std::string replay;   // replay file used instead of live sampling
};

struct DatasetConfig {
  std::string kind = "synth";  // synth | idx
  std::string name;            // defaults to kind
  BlobOptions blobs;
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
};

/// Everything a training run depends on. input_dim / output_dim of `model`
/// are filled from the dataset when the run starts.
struct RunConfig {
  ModelSpec model{Arch::mlp, 0, 64, 0, std::nullopt, {}};
  DatasetConfig data;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  double lambda = 0.0;
  std::uint64_t seed = 42;
  double weight_decay = 1e-5;
  double val_fraction = 0.1;
  TelemetryConfig telemetry;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double to_double(std::string_view key, std::string_view v) {
  std::string tmp(v);
  char* end = nullptr;
  const double d = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size() || !std::isfinite(d)) {
    throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + tmp + "'");
  }
  return d;
}

template <class Int>
Int to_int(std::string_view key, std::string_view v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected a non-negative integer, got '" +
                      std::string(v) + "'");
  }
  return out;
}

}  // namespace detail

/// Applies one `key = value` setting.
inline void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  using detail::to_double;
  const auto sz = [&] { return detail::to_int<std::size_t>(key, value); };
  const std::string v(value);
  if (key == "arch") {
    c.model.arch = parse_arch(value);
  } else if (key == "hidden_dim") {
    c.model.hidden_dim = sz();
  } else if (key == "glia_ratio") {
    c.model.glia_ratio = to_double(key, value);
  } else if (key == "cnn.conv1") {
    c.model.cnn.conv1 = sz();
  } else if (key == "cnn.conv2") {
    c.model.cnn.conv2 = sz();
  } else if (key == "cnn.dense") {
    c.model.cnn.dense = sz();
  } else if (key == "dataset") {
    if (v != "synth" && v != "idx") throw ConfigError("config key 'dataset': expected synth|idx, got '" + v + "'");
    c.data.kind = v;
  } else if (key == "dataset.name") {
    c.data.name = v;
  } else if (key == "synth.classes") {
    c.data.blobs.classes = sz();
  } else if (key == "synth.dim") {
    c.data.blobs.dim = sz();
  } else if (key == "synth.n_per_class") {
    c.data.blobs.n_per_class = sz();
  } else if (key == "synth.separation") {
    c.data.blobs.separation = to_double(key, value);
  } else if (key == "synth.seed") {
    c.data.blobs.seed = detail::to_int<std::uint64_t>(key, value);
  } else if (key == "idx.train_images") {
    c.data.train_images = v;
  } else if (key == "idx.train_labels") {
    c.data.train_labels = v;
  } else if (key == "idx.test_images") {
    c.data.test_images = v;
  } else if (key == "idx.test_labels") {
    c.data.test_labels = v;
  } else if (key == "idx.train_limit") {
    c.data.train_limit = sz();
  } else if (key == "idx.test_limit") {
    c.data.test_limit = sz();
  } else if (key == "lr") {
    c.lr = to_double(key, value);
  } else if (key == "batch_size") {
    c.batch_size = sz();
  } else if (key == "max_epochs") {
    c.max_epochs = sz();
  } else if (key == "patience") {
    c.patience = sz();
  } else if (key == "lambda") {
    c.lambda = to_double(key, value);
  } else if (key == "seed") {
    c.seed = detail::to_int<std::uint64_t>(key, value);
  } else if (key == "weight_decay") {
    c.weight_decay = to_double(key, value);
  } else if (key == "val_fraction") {
    c.val_fraction = to_double(key, value);
  } else if (key == "telemetry.command") {
    c.telemetry.command = v;
  } else if (key == "telemetry.hz") {
    c.telemetry.hz = to_double(key, value);
  } else if (key == "telemetry.replay") {
    c.telemetry.replay = v;
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

/// Parses `key=value` (as used by command-line overrides).
inline void apply_assignment(RunConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  }
  apply_setting(c, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

/// Flat key/value text: one `key = value` per line, `#` starts a comment.
inline void apply_config_text(RunConfig& c, std::string_view text, const std::string& source = "<config>") {
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    try {
      apply_assignment(c, line);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  RunConfig c;
  apply_config_text(c, text, path.string());
  return c;
}

/// ACTREG_SEED, when set, replaces the configured seed.
inline void apply_environment(RunConfig& c) {
  if (const char* s = std::getenv("ACTREG_SEED"); s && *s) {
    c.seed = detail::to_int<std::uint64_t>("ACTREG_SEED", s);
  }
}

inline std::string dataset_name(const RunConfig& c) { return c.data.name.empty() ? c.data.kind : c.data.name; }

inline void validate(const RunConfig& c) {
  if (c.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (c.max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (c.patience > c.max_epochs) throw ConfigError("patience must not exceed max_epochs");
  if (!(c.lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(c.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(c.val_fraction >= 0.0 && c.val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  if (!(c.telemetry.hz > 0.0)) throw ConfigError("telemetry.hz must be positive");
  if (c.data.kind == "idx" && (c.data.train_images.empty() || c.data.train_labels.empty() ||
                               c.data.test_images.empty() || c.data.test_labels.empty())) {
    throw ConfigError("dataset idx requires idx.train_images, idx.train_labels, idx.test_images, idx.test_labels");
  }
}

/// The protocol's fixed seed list.
inline const std::vector<std::uint64_t>& seed_protocol() {
  static const std::vector<std::uint64_t> seeds{42, 123, 456, 789, 1011, 1213, 1415, 1617, 1819, 2021};
  return seeds;
}

/// Materialises the configured dataset.
inline DatasetHandle load_dataset(const RunConfig& c) {
  DatasetHandle d;
  if (c.data.kind == "synth") {
    d = synth_blobs(c.data.blobs);
  } else {
    d.train = load_idx(c.data.train_images, c.data.train_labels, c.data.train_limit);
    d.test = load_idx(c.data.test_images, c.data.test_labels, c.data.test_limit);
    int max_label = 0;
    for (int l : d.train.labels) max_label = std::max(max_label, l);
    for (int l : d.test.labels) max_label = std::max(max_label, l);
    d.classes = static_cast<std::size_t>(max_label) + 1;
  }
  d.name = dataset_name(c);
  return d;
}

}  // namespace actreg
