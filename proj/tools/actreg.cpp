// Command-line front end: run, sweep, gradcheck, analyze, report.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "actreg/actreg.hpp"

namespace {

using namespace actreg;

enum Exit { ok = 0, validation = 1, divergence = 2, io = 3 };

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;

  void add(CLI::App* app) {
    app->add_option("-c,--config", file, "key = value config file");
    app->add_option("-s,--set", sets, "override, key=value (repeatable)");
  }

  /// File values are applied over `base`, then --set overrides, then ACTREG_SEED.
  RunConfig resolve(RunConfig base = {}) const {
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw IoError("cannot open config file " + file);
      const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      apply_config_text(base, text, file);
    }
    for (const auto& s : sets) apply_assignment(base, s);
    apply_environment(base);
    validate(base);
    return base;
  }
};

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');) {
    RunConfig scratch;
    apply_setting(scratch, "lambda", detail::trim(item));
    out.push_back(scratch.lambda);
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

int cmd_run(const ConfigArgs& args, const std::string& out_dir, bool quiet) {
  const RunConfig cfg = args.resolve();
  const DatasetHandle data = load_dataset(cfg);
  const TrainResult r = train(cfg, data);
  const auto path = persist_record(out_dir, r.record);
  if (!quiet) {
    std::printf("%s  acc=%.4f  loss=%.4f  activation_energy=%.4f  epochs=%zu  status=%s\n", path.string().c_str(),
                r.record.test_accuracy, r.record.test_loss, r.record.activation_energy, r.record.epochs_run,
                r.record.status.c_str());
  }
  if (r.failure) {
    std::fprintf(stderr, "actreg: run diverged: %s\n", r.failure->c_str());
    return divergence;
  }
  return ok;
}

int cmd_sweep(const ConfigArgs& args, const std::string& lambdas, const std::string& seeds_csv, std::size_t workers,
              const std::string& json_out, const std::string& records_dir) {
  RunConfig base;
  base.batch_size = 128;
  base.max_epochs = 5;
  base.patience = 5;
  const RunConfig cfg = args.resolve(base);
  std::vector<std::uint64_t> seeds;
  if (seeds_csv.empty()) {
    seeds.assign(seed_protocol().begin(), seed_protocol().begin() + 3);
  } else {
    std::stringstream ss(seeds_csv);
    for (std::string item; std::getline(ss, item, ',');) {
      RunConfig scratch;
      apply_setting(scratch, "seed", detail::trim(item));
      seeds.push_back(scratch.seed);
    }
  }
  const auto grid = lambdas.empty() ? default_lambda_grid() : parse_doubles(lambdas);
  const DatasetHandle data = load_dataset(cfg);
  const SweepReport report = run_lambda_sweep(data, cfg, grid, seeds, workers);
  std::cout << sweep_table(report);
  for (const auto& c : report.cells) {
    if (c.failed) std::fprintf(stderr, "cell lambda=%g seed=%llu failed: %s\n", c.lambda,
                               static_cast<unsigned long long>(c.seed), c.failure.c_str());
  }
  if (!json_out.empty()) write_text(json_out, to_json(report).dump(2) + "\n");
  if (!records_dir.empty()) {
    // The file name does not carry lambda, so each lambda gets its own directory.
    for (const auto& c : report.cells) {
      persist_record(std::filesystem::path(records_dir) / ("lambda_" + format_lambda(c.lambda)), c.record);
    }
  }
  return ok;
}

int cmd_gradcheck(const std::string& arch, std::size_t in, std::size_t hidden, std::size_t out,
                  const std::string& lambdas, double tol, std::uint64_t seed) {
  std::vector<Arch> archs;
  if (arch == "all") {
    archs = {Arch::bimodal, Arch::physics, Arch::mlp, Arch::cnn};
  } else {
    archs = {parse_arch(arch)};
  }
  bool pass = true;
  for (Arch a : archs) {
    ModelSpec spec{a, in, hidden, out, std::nullopt, {}};
    if (a == Arch::bimodal) spec.glia_ratio = 1.0;
    if (a == Arch::cnn) spec.cnn = {4, 6, hidden};
    for (double l : parse_doubles(lambdas)) {
      const GradCheckResult r = check_model_gradients(spec, l, 3, seed);
      const bool good = r.max_rel_error < tol;
      pass = pass && good;
      std::printf("%-8s lambda=%-6g max_rel_error=%.3e coords=%zu %s\n", arch_name(a), l, r.max_rel_error,
                  r.coords_checked, good ? "PASS" : "FAIL");
    }
  }
  return pass ? ok : divergence;
}

LoadedRecords load_with_warnings(const std::string& dir) {
  LoadedRecords loaded = load_records(dir);
  for (const auto& w : loaded.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::fprintf(stderr, "loaded %zu records (%zu skipped)\n", loaded.records.size(), loaded.warnings.size());
  return loaded;
}

int cmd_analyze(const std::string& dir, const std::string& metric, double alpha, std::uint64_t seed,
                const std::string& csv_out, bool anova_only) {
  const LoadedRecords loaded = load_with_warnings(dir);
  AnalysisOptions opt;
  opt.metric = parse_metric(metric);
  opt.alpha = alpha;
  opt.seed = seed;
  AnalysisReport report = analyze(loaded.records, opt);
  if (anova_only) {
    std::erase_if(report.tables, [](const Table& t) { return t.title.find("ANOVA") == std::string::npos; });
  }
  std::cout << render_text(report);
  if (!csv_out.empty()) write_text(csv_out, render_csv(report));
  return ok;
}

int cmd_report_params(std::size_t in, std::size_t hidden, std::size_t out, double glia) {
  std::printf("%-8s %8s %8s %8s %14s\n", "arch", "input", "hidden", "output", "parameters");
  for (Arch a : {Arch::bimodal, Arch::physics, Arch::mlp, Arch::cnn}) {
    ModelSpec spec{a, in, hidden, out, std::nullopt, {}};
    if (a == Arch::bimodal) spec.glia_ratio = glia;
    if (a == Arch::cnn) {
      try {
        infer_image(in);
      } catch (const ValidationError&) {
        continue;  // not an image-shaped input
      }
    }
    std::printf("%-8s %8zu %8zu %8zu %14zu\n", arch_name(a), in, hidden, out, param_count(build_model(spec, 0)));
  }
  return ok;
}

int cmd_report_sweep(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  std::cout << sweep_table(sweep_from_json(j));
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"activation-regularized training, sweeps and analysis"};
  app.require_subcommand(1);

  ConfigArgs run_args;
  std::string out_dir = "records";
  bool quiet = false;
  auto* run = app.add_subcommand("run", "train one model and write its record");
  run_args.add(run);
  run->add_option("-o,--out", out_dir, "record directory");
  run->add_flag("-q,--quiet", quiet);

  ConfigArgs sweep_args;
  std::string lambdas, seeds, json_out, sweep_records;
  std::size_t workers = 1;
  auto* sweep = app.add_subcommand("sweep", "lambda sweep over seeds");
  sweep_args.add(sweep);
  sweep->add_option("--lambdas", lambdas, "comma-separated grid (default 0,1e-5,1e-4,1e-3,1e-2)");
  sweep->add_option("--seeds", seeds, "comma-separated seeds (default: first 3 of the protocol)");
  sweep->add_option("-j,--workers", workers)->check(CLI::PositiveNumber);
  sweep->add_option("--json", json_out, "write the report as JSON");
  sweep->add_option("--records", sweep_records, "also write one record per cell here");

  std::string gc_arch = "all", gc_lambdas = "0,1e-3,1e-1";
  std::size_t gc_in = 16, gc_hidden = 12, gc_out = 4;
  double gc_tol = 1e-4;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "compare autodiff gradients with central differences");
  gc->add_option("--arch", gc_arch, "bimodal|physics|mlp|cnn|all");
  gc->add_option("--input", gc_in);
  gc->add_option("--hidden", gc_hidden);
  gc->add_option("--output", gc_out);
  gc->add_option("--lambdas", gc_lambdas);
  gc->add_option("--tol", gc_tol);
  gc->add_option("--seed", gc_seed);

  std::string an_dir, an_metric = "accuracy", an_csv;
  double an_alpha = 0.05;
  std::uint64_t an_seed = 42;
  auto* an = app.add_subcommand("analyze", "statistics over a directory of records");
  an->add_option("dir", an_dir)->required();
  an->add_option("--metric", an_metric, "accuracy|activation_energy|energy_per_correct");
  an->add_option("--alpha", an_alpha);
  an->add_option("--seed", an_seed, "bootstrap seed");
  an->add_option("--csv", an_csv, "write tables as CSV");

  auto* report = app.add_subcommand("report", "summary tables");
  report->require_subcommand(1);
  std::size_t rp_in = 784, rp_hidden = 1024, rp_out = 10;
  double rp_glia = 1.0;
  auto* rp_params = report->add_subcommand("params", "parameter counts per architecture");
  rp_params->add_option("--input", rp_in);
  rp_params->add_option("--hidden", rp_hidden);
  rp_params->add_option("--output", rp_out);
  rp_params->add_option("--glia", rp_glia);
  std::string rs_path;
  auto* rp_sweep = report->add_subcommand("sweep", "render a sweep JSON report");
  rp_sweep->add_option("file", rs_path)->required();
  std::string ra_dir, ra_metric = "accuracy";
  auto* rp_anova = report->add_subcommand("anova", "ANOVA tables for a record directory");
  rp_anova->add_option("dir", ra_dir)->required();
  rp_anova->add_option("--metric", ra_metric);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : validation;
  }

  try {
    if (*run) return cmd_run(run_args, out_dir, quiet);
    if (*sweep) return cmd_sweep(sweep_args, lambdas, seeds, workers, json_out, sweep_records);
    if (*gc) return cmd_gradcheck(gc_arch, gc_in, gc_hidden, gc_out, gc_lambdas, gc_tol, gc_seed);
    if (*an) return cmd_analyze(an_dir, an_metric, an_alpha, an_seed, an_csv, false);
    if (*rp_params) return cmd_report_params(rp_in, rp_hidden, rp_out, rp_glia);
    if (*rp_sweep) return cmd_report_sweep(rs_path);
    if (*rp_anova) return cmd_analyze(ra_dir, ra_metric, 0.05, 42, "", true);
  } catch (const IoError& e) {
    std::fprintf(stderr, "actreg: %s\n", e.what());
    return io;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "actreg: %s\n", e.what());
    return io;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "actreg: %s\n", e.what());
    return divergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "actreg: %s\n", e.what());
    return validation;
  }
  return ok;
}
