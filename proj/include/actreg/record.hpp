#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "actreg/error.hpp"

namespace actreg {

/// One training run: configuration, outcome and energy figures.
struct ExperimentRecord {
  std::string architecture;
  std::string dataset;
  std::uint64_t seed = 0;
  std::string status = "completed";  // completed | diverged

  // architecture configuration
  std::optional<double> glia_ratio;
  std::size_t hidden_dim = 0;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<std::string> activations;
  std::size_t param_count = 0;

  // hyperparameters
  double lr = 0.0;
  std::size_t batch_size = 0;
  std::size_t epochs_run = 0;
  std::size_t max_epochs = 0;
  std::size_t patience = 0;
  double lambda = 0.0;
  double weight_decay = 0.0;

  // outcome
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  std::size_t n_correct = 0;
  std::size_t n_test = 0;
  double activation_energy = 0.0;

  // measured energy; absent values mean telemetry was unavailable
  std::optional<double> energy_mj;
  std::optional<double> energy_mj_per_correct;
  std::string energy_status = "unavailable";

  double training_duration_seconds = 0.0;
  nlohmann::json hardware = nlohmann::json::object();

  /// The JSON object this record was read from, so unknown fields survive a
  /// load/save cycle.
  nlohmann::json source = nlohmann::json::object();
};

namespace detail {

template <class T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentRecord& r) {
  nlohmann::json j = r.source.is_object() ? r.source : nlohmann::json::object();
  j["architecture"] = r.architecture;
  j["dataset"] = r.dataset;
  j["seed"] = r.seed;
  j["status"] = r.status;
  auto& cfg = j["config"];
  if (!cfg.is_object()) cfg = nlohmann::json::object();
  cfg["glia_ratio"] = detail::opt(r.glia_ratio);
  cfg["hidden_dim"] = r.hidden_dim;
  cfg["input_dim"] = r.input_dim;
  cfg["output_dim"] = r.output_dim;
  cfg["activations"] = r.activations;
  cfg["param_count"] = r.param_count;
  auto& hp = j["hyperparameters"];
  if (!hp.is_object()) hp = nlohmann::json::object();
  hp["lr"] = r.lr;
  hp["batch_size"] = r.batch_size;
  hp["epochs"] = r.epochs_run;
  hp["max_epochs"] = r.max_epochs;
  hp["patience"] = r.patience;
  hp["lambda"] = r.lambda;
  hp["weight_decay"] = r.weight_decay;
  j["test_accuracy"] = r.test_accuracy;
  j["test_loss"] = r.test_loss;
  j["n_correct"] = r.n_correct;
  j["n_test"] = r.n_test;
  j["activation_energy"] = r.activation_energy;
  auto& en = j["energy"];
  if (!en.is_object()) en = nlohmann::json::object();
  en["total_mj"] = detail::opt(r.energy_mj);
  en["mj_per_correct"] = detail::opt(r.energy_mj_per_correct);
  en["status"] = r.energy_status;
  j["training_duration_seconds"] = r.training_duration_seconds;
  j["hardware"] = r.hardware;
  return j;
}

/// Records are equal when they serialise identically (unknown fields included).
inline bool operator==(const ExperimentRecord& a, const ExperimentRecord& b) { return to_json(a) == to_json(b); }

namespace detail {

/// First present, non-null value among `keys`, searched at the top level and
/// then inside the listed sub-objects.
/// Containers are skipped unless `containers` is set, so a section named like
/// a scalar key (e.g. an `architecture` object) does not shadow the scalar.
inline const nlohmann::json* find_any(const nlohmann::json& j, std::initializer_list<const char*> keys,
                                      std::span<const char* const> sections = {}, bool containers = false) {
  auto usable = [&](const nlohmann::json& v) { return !v.is_null() && (containers || v.is_primitive()); };
  for (const char* k : keys) {
    if (auto it = j.find(k); it != j.end() && usable(*it)) return &*it;
  }
  for (const char* s : sections) {
    auto sec = j.find(s);
    if (sec == j.end() || !sec->is_object()) continue;
    for (const char* k : keys) {
      if (auto it = sec->find(k); it != sec->end() && usable(*it)) return &*it;
    }
  }
  return nullptr;
}

inline std::optional<double> number(const nlohmann::json* v) {
  if (!v) return std::nullopt;
  if (v->is_number()) return v->get<double>();
  if (v->is_string()) {
    try {
      std::size_t used = 0;
      const std::string s = v->get<std::string>();
      const double d = std::stod(s, &used);
      if (used == s.size()) return d;
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

template <class Int>
Int integer_or(const nlohmann::json* v, Int fallback) {
  if (v && v->is_number_unsigned()) return static_cast<Int>(v->get<std::uint64_t>());
  const auto d = number(v);
  return d && *d >= 0.0 ? static_cast<Int>(std::llround(*d)) : fallback;
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

/// Reads a record. Besides the native layout this accepts the common
/// variations found in archived run logs (flat or nested hyperparameters,
/// `arch`/`model` for the architecture, `accuracy` for test accuracy, and
/// accuracies stored as percentages). Throws ParseError when the architecture,
/// dataset or test accuracy cannot be found.
inline ExperimentRecord from_json(const nlohmann::json& j) {
  using detail::find_any;
  using detail::number;
  if (!j.is_object()) throw ParseError("record: top-level value is not an object");
  static constexpr std::array<const char*, 4> cfg_secs = {"config", "architecture", "architecture_config", "model_config"};
  static constexpr std::array<const char*, 3> hp_secs = {"hyperparameters", "training", "config"};
  static constexpr std::array<const char*, 3> res_secs = {"results", "metrics", "final"};
  static constexpr std::array<const char*, 1> energy_sec = {"energy"};

  ExperimentRecord r;
  r.source = j;

  const auto* arch = find_any(j, {"architecture", "arch", "model", "model_type"}, cfg_secs);
  if (!arch || !arch->is_string()) throw ParseError("record: missing architecture");
  r.architecture = detail::lower(arch->get<std::string>());
  const auto* ds = find_any(j, {"dataset", "dataset_name", "data"}, cfg_secs);
  if (!ds || !ds->is_string()) throw ParseError("record: missing dataset");
  r.dataset = detail::lower(ds->get<std::string>());

  const auto acc = number(find_any(j, {"test_accuracy", "accuracy", "final_test_accuracy", "test_acc"}, res_secs));
  if (!acc || !std::isfinite(*acc)) throw ParseError("record: missing test accuracy");
  r.test_accuracy = *acc > 1.0 && *acc <= 100.0 ? *acc / 100.0 : *acc;
  if (r.test_accuracy < 0.0 || r.test_accuracy > 1.0) throw ParseError("record: test accuracy out of range");

  r.seed = detail::integer_or<std::uint64_t>(find_any(j, {"seed", "random_seed"}, hp_secs), 0);
  if (const auto* s = find_any(j, {"status"}); s && s->is_string()) r.status = s->get<std::string>();

  r.glia_ratio = number(find_any(j, {"glia_ratio"}, cfg_secs));
  r.hidden_dim = detail::integer_or<std::size_t>(find_any(j, {"hidden_dim"}, cfg_secs), 0);
  r.input_dim = detail::integer_or<std::size_t>(find_any(j, {"input_dim"}, cfg_secs), 0);
  r.output_dim = detail::integer_or<std::size_t>(find_any(j, {"output_dim", "num_classes"}, cfg_secs), 0);
  r.param_count = detail::integer_or<std::size_t>(find_any(j, {"param_count", "parameters", "n_params"}, cfg_secs), 0);
  if (const auto* a = find_any(j, {"activations", "activation_functions"}, cfg_secs, true); a && a->is_array()) {
    for (const auto& e : *a)
      if (e.is_string()) r.activations.push_back(e.get<std::string>());
  }

  r.lr = number(find_any(j, {"lr", "learning_rate"}, hp_secs)).value_or(0.0);
  r.batch_size = detail::integer_or<std::size_t>(find_any(j, {"batch_size"}, hp_secs), 0);
  r.epochs_run = detail::integer_or<std::size_t>(find_any(j, {"epochs", "epochs_run", "epochs_trained"}, hp_secs), 0);
  r.max_epochs = detail::integer_or<std::size_t>(find_any(j, {"max_epochs"}, hp_secs), r.epochs_run);
  r.patience = detail::integer_or<std::size_t>(find_any(j, {"patience"}, hp_secs), 0);
  r.lambda = number(find_any(j, {"lambda", "action_lambda"}, hp_secs)).value_or(0.0);
  r.weight_decay = number(find_any(j, {"weight_decay"}, hp_secs)).value_or(0.0);

  r.test_loss = number(find_any(j, {"test_loss", "loss", "final_test_loss"}, res_secs)).value_or(0.0);
  r.n_correct = detail::integer_or<std::size_t>(find_any(j, {"n_correct"}, res_secs), 0);
  r.n_test = detail::integer_or<std::size_t>(find_any(j, {"n_test"}, res_secs), 0);
  r.activation_energy = number(find_any(j, {"activation_energy"}, res_secs)).value_or(0.0);

  r.energy_mj = number(find_any(j, {"total_mj", "energy_mj", "total_energy_mj"}, energy_sec));
  r.energy_mj_per_correct = number(find_any(j, {"mj_per_correct", "energy_mj_per_correct", "energy_per_correct_mj"}, energy_sec));
  r.energy_status = r.energy_mj ? "measured" : "unavailable";
  if (const auto en = j.find("energy"); en != j.end() && en->is_object()) {
    if (const auto st = en->find("status"); st != en->end() && st->is_string()) r.energy_status = st->get<std::string>();
  }

  r.training_duration_seconds =
      number(find_any(j, {"training_duration_seconds", "training_time", "duration_seconds", "train_time_s"}, res_secs))
          .value_or(0.0);
  if (const auto* h = find_any(j, {"hardware"}, {}, true); h) r.hardware = *h;
  return r;
}

/// Shortest decimal that keeps a trailing ".0" for integral values (1 -> "1.0").
inline std::string format_ratio(double v) {
  std::ostringstream os;
  os << v;
  std::string s = os.str();
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

/// `{arch}_{dataset}_h{hidden}[_g{glia}]_seed{seed}.json`
inline std::string record_filename(const ExperimentRecord& r) {
  std::string name = r.architecture + "_" + r.dataset + "_h" + std::to_string(r.hidden_dim);
  if (r.glia_ratio) name += "_g" + format_ratio(*r.glia_ratio);
  name += "_seed" + std::to_string(r.seed) + ".json";
  return name;
}

/// Writes `text` to `path` via a temporary file and rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
  std::ostringstream suffix;
  suffix << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id());
  const auto tmp = std::filesystem::path(path.string() + suffix.str());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

inline std::filesystem::path persist_record(const std::filesystem::path& dir, const ExperimentRecord& r) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create record directory " + dir.string() + ": " + ec.message());
  const auto path = dir / record_filename(r);
  write_atomic(path, to_json(r).dump(2) + "\n");
  return path;
}

struct LoadedRecords {
  std::vector<ExperimentRecord> records;
  std::vector<std::string> warnings;  // one per skipped file
};

/// Reads every `*.json` file in `dir` (sorted by name); malformed files are
/// skipped and reported.
inline LoadedRecords load_records(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("record directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  LoadedRecords out;
  for (const auto& f : files) {
    try {
      std::ifstream in(f);
      if (!in) throw IoError("unreadable");
      out.records.push_back(from_json(nlohmann::json::parse(in)));
    } catch (const std::exception& e) {
      out.warnings.push_back(f.filename().string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace actreg
