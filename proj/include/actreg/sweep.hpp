#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "actreg/config.hpp"
#include "actreg/train.hpp"

namespace actreg {

inline const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid{0.0, 1e-5, 1e-4, 1e-3, 1e-2};
  return grid;
}

struct SweepCell {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string failure;
  double accuracy = 0.0;
  double activation_energy = 0.0;
  ExperimentRecord record;
};

struct SweepRow {
  double lambda = 0.0;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  double mean_accuracy = 0.0;
  double mean_energy = 0.0;
  std::optional<double> relative_energy;  // empty when no cell in the row (or baseline) completed
};

struct SweepReport {
  std::string dataset;
  std::vector<SweepCell> cells;  // (lambda, seed) order
  std::vector<SweepRow> rows;    // lambda order as given

  const SweepRow& row(double lambda) const {
    for (const auto& r : rows)
      if (r.lambda == lambda) return r;
    throw ValidationError("sweep report has no row for lambda " + std::to_string(lambda));
  }
};

/// Folds cells into per-lambda rows. Failed cells are counted but excluded
/// from means. Relative energy divides by the lambda = 0 row's mean energy.
inline std::vector<SweepRow> aggregate_sweep(const std::vector<SweepCell>& cells, const std::vector<double>& lambdas) {
  std::vector<SweepRow> rows;
  for (double l : lambdas) {
    SweepRow row;
    row.lambda = l;
    for (const auto& c : cells) {
      if (c.lambda != l) continue;
      if (c.failed) {
        ++row.n_failed;
        continue;
      }
      ++row.n_ok;
      row.mean_accuracy += c.accuracy;
      row.mean_energy += c.activation_energy;
    }
    if (row.n_ok > 0) {
      row.mean_accuracy /= static_cast<double>(row.n_ok);
      row.mean_energy /= static_cast<double>(row.n_ok);
    }
    rows.push_back(row);
  }
  const auto base = std::find_if(rows.begin(), rows.end(), [](const SweepRow& r) { return r.lambda == 0.0; });
  for (auto& r : rows) {
    if (r.lambda == 0.0 && r.n_ok > 0) {
      r.relative_energy = 1.0;
    } else if (base != rows.end() && base->n_ok > 0 && r.n_ok > 0 && base->mean_energy > 0.0) {
      r.relative_energy = r.mean_energy / base->mean_energy;
    }
  }
  return rows;
}

/// Trains one model per (lambda, seed) cell from `base`, overriding only lambda
/// and seed. Cells run on up to `workers` threads; results are placed by index
/// so the report does not depend on completion order.
inline SweepReport run_lambda_sweep(const DatasetHandle& data, const RunConfig& base, const std::vector<double>& lambdas,
                                    const std::vector<std::uint64_t>& seeds, std::size_t workers = 1) {
  if (std::find(lambdas.begin(), lambdas.end(), 0.0) == lambdas.end()) {
    throw ConfigError("lambda grid must contain 0 (baseline for relative energy)");
  }
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw ConfigError("lambda values must be >= 0");
  }
  validate(base);

  SweepReport report;
  report.dataset = data.name;
  for (double l : lambdas) {
    for (std::uint64_t s : seeds) {
      SweepCell c;
      c.lambda = l;
      c.seed = s;
      report.cells.push_back(c);
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr error;
  auto work = [&] {
    for (std::size_t i = next++; i < report.cells.size(); i = next++) {
      try {
        SweepCell& cell = report.cells[i];
        RunConfig cfg = base;
        cfg.lambda = cell.lambda;
        cfg.seed = cell.seed;
        TrainResult r = train(cfg, data);
        cell.record = std::move(r.record);
        cell.failed = r.failure.has_value();
        if (r.failure) cell.failure = *r.failure;
        cell.accuracy = cell.record.test_accuracy;
        cell.activation_energy = cell.record.activation_energy;
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next = report.cells.size();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, report.cells.size());
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);

  report.rows = aggregate_sweep(report.cells, lambdas);
  return report;
}

inline std::string format_lambda(double l) {
  if (l == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.0e", l);
  return buf;
}

/// Aligned text with columns lambda, accuracy (%), activation energy, relative energy.
inline std::string sweep_table(const SweepReport& report) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %12s %18s %16s %8s\n", "lambda", "accuracy(%)", "activation_energy",
                "relative_energy", "failed");
  out << "dataset: " << report.dataset << "\n" << buf;
  for (const auto& r : report.rows) {
    const std::string rel = r.relative_energy ? [&] {
      char b[32];
      std::snprintf(b, sizeof b, "%.3f", *r.relative_energy);
      return std::string(b);
    }()
                                               : std::string("n/a");
    if (r.n_ok > 0) {
      std::snprintf(buf, sizeof buf, "%-8s %12.2f %18.4f %16s %8zu\n", format_lambda(r.lambda).c_str(),
                    100.0 * r.mean_accuracy, r.mean_energy, rel.c_str(), r.n_failed);
    } else {
      std::snprintf(buf, sizeof buf, "%-8s %12s %18s %16s %8zu\n", format_lambda(r.lambda).c_str(), "n/a", "n/a",
                    rel.c_str(), r.n_failed);
    }
    out << buf;
  }
  return out.str();
}

inline nlohmann::json to_json(const SweepReport& report) {
  nlohmann::json j;
  j["dataset"] = report.dataset;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json cell{{"lambda", c.lambda}, {"seed", c.seed}, {"status", c.failed ? "failed" : "completed"}};
    if (c.failed) {
      cell["failure"] = c.failure;
    } else {
      cell["test_accuracy"] = c.accuracy;
      cell["activation_energy"] = c.activation_energy;
    }
    j["cells"].push_back(cell);
  }
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row{{"lambda", r.lambda}, {"n_completed", r.n_ok}, {"n_failed", r.n_failed}};
    row["mean_accuracy"] = r.n_ok ? nlohmann::json(r.mean_accuracy) : nlohmann::json(nullptr);
    row["mean_activation_energy"] = r.n_ok ? nlohmann::json(r.mean_energy) : nlohmann::json(nullptr);
    row["relative_energy"] = r.relative_energy ? nlohmann::json(*r.relative_energy) : nlohmann::json(nullptr);
    j["rows"].push_back(row);
  }
  return j;
}

/// Inverse of to_json for the fields the table needs; records are not restored.
inline SweepReport sweep_from_json(const nlohmann::json& j) {
  try {
    SweepReport r;
    r.dataset = j.value("dataset", "");
    for (const auto& c : j.at("cells")) {
      SweepCell cell;
      cell.lambda = c.at("lambda").get<double>();
      cell.seed = c.at("seed").get<std::uint64_t>();
      cell.failed = c.value("status", "completed") != "completed";
      if (cell.failed) {
        cell.failure = c.value("failure", "");
      } else {
        cell.accuracy = c.at("test_accuracy").get<double>();
        cell.activation_energy = c.at("activation_energy").get<double>();
      }
      r.cells.push_back(std::move(cell));
    }
    std::vector<double> lambdas;
    for (const auto& row : j.at("rows")) lambdas.push_back(row.at("lambda").get<double>());
    r.rows = aggregate_sweep(r.cells, lambdas);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("sweep report: ") + e.what());
  }
}

}  // namespace actreg
