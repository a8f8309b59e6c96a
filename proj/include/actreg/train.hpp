#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "actreg/config.hpp"
#include "actreg/data.hpp"
#include "actreg/energy.hpp"
#include "actreg/objective.hpp"
#include "actreg/optim.hpp"
#include "actreg/record.hpp"
#include "actreg/rng.hpp"
#include "actreg/zoo.hpp"

namespace actreg {

/// Sub-stream identifiers derived from the run seed.
namespace streams {
constexpr std::uint64_t init = 1;
constexpr std::uint64_t validation_split = 2;
constexpr std::uint64_t batch_order = 3;
}  // namespace streams

struct EvalResult {
  double accuracy = 0.0;
  double cross_entropy = 0.0;
  double activation_energy = 0.0;  // mean over all samples of the summed per-layer squared norms
  std::size_t n_correct = 0;
  std::size_t n = 0;

  double objective(double lambda) const { return lambda == 0.0 ? cross_entropy : cross_entropy + lambda * activation_energy; }
};

/// Full-split evaluation in chunks of `chunk` samples; CE and energy are
/// sample-weighted so the result does not depend on the chunk size beyond rounding.
inline EvalResult evaluate(const Model& model, const Split& split, std::size_t chunk = 256) {
  EvalResult r;
  r.n = split.size();
  if (r.n == 0) return r;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < r.n; start += chunk) {
    const std::size_t stop = std::min(r.n, start + chunk);
    idx.resize(stop - start);
    for (std::size_t i = start; i < stop; ++i) idx[i - start] = i;
    auto [x, y] = gather(split, idx);
    Tape tape;
    const auto params = bind_parameters(tape, model, false);
    const ForwardTrace trace = forward_traced(model, params, tape.constant(std::move(x)));
    const double b = static_cast<double>(y.size());
    r.cross_entropy += ops::softmax_cross_entropy(trace.logits, y).item() * b;
    r.activation_energy += activation_energy(trace).value() * b;
    const Tensor& logits = trace.logits.value();
    for (std::size_t i = 0; i < y.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < logits.dim(1); ++k)
        if (logits.at(i, k) > logits.at(i, best)) best = k;
      r.n_correct += static_cast<int>(best) == y[i];
    }
  }
  const double n = static_cast<double>(r.n);
  r.cross_entropy /= n;
  r.activation_energy /= n;
  r.accuracy = static_cast<double>(r.n_correct) / n;
  return r;
}

inline nlohmann::json hardware_descriptor() {
  nlohmann::json h;
  std::string cpu = "unknown";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      if (const auto colon = line.find(':'); colon != std::string::npos) cpu = line.substr(colon + 2);
      break;
    }
  }
  h["cpu"] = cpu;
  h["logical_cores"] = std::thread::hardware_concurrency();
  h["gpu"] = nullptr;
  return h;
}

/// Fills input/output dims of the model spec from the dataset and applies
/// architecture defaults (bimodal glia ratio 1.0).
inline ModelSpec resolve_model(const RunConfig& config, const DatasetHandle& data) {
  ModelSpec spec = config.model;
  spec.input_dim = data.feature_dim();
  spec.output_dim = data.classes;
  if (spec.arch == Arch::bimodal) {
    if (!spec.glia_ratio) spec.glia_ratio = 1.0;
  } else {
    spec.glia_ratio.reset();
  }
  validate(spec);
  return spec;
}

struct TrainResult {
  ExperimentRecord record;
  Model model;
  std::vector<double> validation_losses;  // one per completed epoch
  std::optional<std::string> failure;     // set when the run diverged
};

namespace detail {

/// Starts whichever power source the run is configured with.
class EnergyCapture {
 public:
  explicit EnergyCapture(const TelemetryConfig& cfg) : cfg_(cfg) {
    if (cfg.replay.empty() && !cfg.command.empty()) {
      live_ = std::make_unique<energy::LiveTelemetry>(cfg.command, cfg.hz);
      live_->start(energy::Phase::training);
    }
  }

  void phase(energy::Phase p) {
    if (live_) live_->set_phase(p);
  }

  /// Training-phase joules, or nullopt when no telemetry was available.
  std::optional<double> finish() {
    std::vector<energy::PowerSample> samples;
    if (!cfg_.replay.empty()) {
      samples = energy::replay_source(cfg_.replay);
    } else if (live_) {
      live_->stop();
      if (live_->status() == energy::TelemetryStatus::unavailable) return std::nullopt;
      samples = live_->samples();
    } else {
      return std::nullopt;
    }
    return energy::integrate(samples, energy::Phase::training).total_energy_joules;
  }

 private:
  TelemetryConfig cfg_;
  std::unique_ptr<energy::LiveTelemetry> live_;
};

}  // namespace detail

/// Seeded training with Adam on cross entropy plus lambda-weighted activation
/// energy. Early stopping monitors the same objective on a seeded holdout of
/// the training split; the test split is only used for the final metrics.
/// Divergence (a non-finite value anywhere) ends the run with status "diverged".
inline TrainResult train(const RunConfig& config, const DatasetHandle& data) {
  validate(config);
  validate_split(data.train, data.classes, "train split");
  validate_split(data.test, data.classes, "test split");
  const ModelSpec spec = resolve_model(config, data);
  const auto wall_start = std::chrono::steady_clock::now();

  TrainResult out;
  out.model = build_model(spec, derive_seed(config.seed, streams::init));

  auto [fit, holdout] = holdout_split(data.train, config.val_fraction, derive_seed(config.seed, streams::validation_split));
  if (config.val_fraction == 0.0) fit = data.train;
  Rng order_rng(derive_seed(config.seed, streams::batch_order));

  std::vector<Tensor> params = out.model.values();
  AdamState adam = AdamState::for_params(params);
  const AdamConfig adam_cfg{config.lr, 0.9, 0.999, 1e-8, config.weight_decay};

  detail::EnergyCapture capture(config.telemetry);
  std::vector<std::size_t> order(fit.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t epochs = 0;
  try {
    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
      capture.phase(energy::Phase::training);
      order_rng.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        auto [x, y] = gather(fit, std::span(order).subspan(start, stop - start));
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(params.size());
        for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
        const ObjectiveTerms terms = objective(out.model, leaves, tape.constant(std::move(x)), y, config.lambda);
        tape.backward(terms.loss);
        std::vector<Tensor> grads;
        grads.reserve(leaves.size());
        for (const Var& v : leaves) grads.push_back(v.grad());
        adam_step(params, grads, adam, adam_cfg);
        for (const Tensor& p : params) {
          if (!p.all_finite()) throw NumericError("parameters became non-finite");
        }
        out.model.assign(params);
      }
      ++epochs;

      if (holdout.size() == 0) continue;
      capture.phase(energy::Phase::validation);
      const double val = evaluate(out.model, holdout).objective(config.lambda);
      if (!std::isfinite(val)) throw NumericError("validation loss is non-finite");
      out.validation_losses.push_back(val);
      if (val < best_val) {
        best_val = val;
        since_best = 0;
      } else if (++since_best >= config.patience && config.patience > 0) {
        break;
      }
    }
  } catch (const NumericError& e) {
    out.failure = e.what();
  }

  capture.phase(energy::Phase::testing);
  ExperimentRecord& r = out.record;
  r.architecture = arch_name(spec.arch);
  r.dataset = data.name.empty() ? dataset_name(config) : data.name;
  r.seed = config.seed;
  r.glia_ratio = spec.glia_ratio;
  r.hidden_dim = spec.hidden_dim;
  r.input_dim = spec.input_dim;
  r.output_dim = spec.output_dim;
  r.activations = activation_names(spec.arch);
  r.param_count = param_count(out.model);
  r.lr = config.lr;
  r.batch_size = config.batch_size;
  r.epochs_run = epochs;
  r.max_epochs = config.max_epochs;
  r.patience = config.patience;
  r.lambda = config.lambda;
  r.weight_decay = config.weight_decay;

  std::optional<double> joules;
  if (!out.failure) {
    try {
      const EvalResult test = evaluate(out.model, data.test);
      r.test_accuracy = test.accuracy;
      r.test_loss = test.cross_entropy;
      r.n_correct = test.n_correct;
      r.n_test = test.n;
      r.activation_energy = test.activation_energy;
    } catch (const NumericError& e) {
      out.failure = e.what();
    }
  }
  joules = capture.finish();
  r.status = out.failure ? "diverged" : "completed";
  if (joules) {
    r.energy_mj = *joules * 1000.0;
    r.energy_mj_per_correct = energy::energy_per_correct(*joules, r.n_correct);
    r.energy_status = "measured";
  } else {
    r.energy_status = "unavailable";
  }
  r.training_duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  r.hardware = hardware_descriptor();
  return out;
}

}  // namespace actreg
