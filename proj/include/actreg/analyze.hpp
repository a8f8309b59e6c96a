#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "actreg/error.hpp"
#include "actreg/record.hpp"
#include "actreg/rng.hpp"
#include "actreg/stats/stats.hpp"

namespace actreg {

enum class Metric { accuracy, activation_energy, energy_per_correct };

inline Metric parse_metric(std::string_view s) {
  if (s == "accuracy") return Metric::accuracy;
  if (s == "activation_energy") return Metric::activation_energy;
  if (s == "energy_per_correct") return Metric::energy_per_correct;
  throw ConfigError("unknown metric '" + std::string(s) + "' (expected accuracy|activation_energy|energy_per_correct)");
}

inline std::optional<double> metric_value(const ExperimentRecord& r, Metric m) {
  switch (m) {
    case Metric::accuracy: return r.test_accuracy;
    case Metric::activation_energy: return r.activation_energy;
    case Metric::energy_per_correct: return r.energy_mj_per_correct;
  }
  return std::nullopt;
}

struct AnalysisOptions {
  Metric metric = Metric::accuracy;
  double alpha = 0.05;
  std::size_t bootstrap_iterations = 1000;
  double ci_level = 95.0;
  std::uint64_t seed = 42;
};

/// A rectangular table of preformatted cells.
struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct AnalysisReport {
  std::vector<Table> tables;
  std::vector<std::string> notes;

  const Table* find(std::string_view title) const {
    for (const auto& t : tables)
      if (t.title == title) return &t;
    return nullptr;
  }
};

namespace detail {

inline std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string pval(double p) {
  if (p < 0.001) return "<0.001";
  return num(p, 3);
}

inline std::string fstat(double f) { return f >= 1e300 ? "inf" : num(f, 2); }

inline void add_anova_rows(Table& t, const stats::AnovaResult& r, bool with_eta) {
  for (const auto& e : r.effects) {
    std::vector<std::string> row{e.source, num(e.ss), num(e.df, 0), num(e.ms), fstat(e.f), pval(e.p)};
    if (with_eta) row.push_back(num(e.partial_eta2, 3));
    t.rows.push_back(std::move(row));
  }
  std::vector<std::string> err{"Residual", num(r.ss_error), num(r.df_error, 0), num(r.ms_error), "", ""};
  if (with_eta) err.emplace_back("");
  t.rows.push_back(std::move(err));
}

/// Groups keyed by factor level; groups with fewer than 2 values are dropped with a note.
inline stats::GroupedSamples usable_groups(const std::map<std::string, std::vector<double>>& by_level,
                                           const std::string& factor, std::vector<std::string>& notes) {
  stats::GroupedSamples g;
  for (const auto& [level, values] : by_level) {
    if (values.size() < 2) {
      notes.push_back(factor + " level '" + level + "' has fewer than 2 records; left out of the " + factor +
                      " comparison");
      continue;
    }
    g.push_back({level, values});
  }
  return g;
}

inline void one_way_section(AnalysisReport& out, const std::map<std::string, std::vector<double>>& by_level,
                            const std::string& factor, const AnalysisOptions& opt) {
  const auto groups = usable_groups(by_level, factor, out.notes);
  if (groups.size() < 2) {
    out.notes.push_back("one-way ANOVA by " + factor + " skipped: fewer than 2 " + factor +
                        " levels with at least 2 records");
    return;
  }
  const stats::AnovaResult r = stats::one_way_anova(groups);
  Table t{"One-way ANOVA by " + factor, {"source", "SS", "df", "MS", "F", "p"}, {}};
  add_anova_rows(t, r, false);
  out.tables.push_back(std::move(t));

  Table tk{"Tukey HSD by " + factor, {"group1", "group2", "meandiff", "q", "p_adj", "reject"}, {}};
  for (const auto& p : stats::tukey_hsd(groups, opt.alpha)) {
    tk.rows.push_back({p.group1, p.group2, num(p.mean_diff), fstat(p.q), num(p.p_adj, 3), p.reject ? "True" : "False"});
  }
  out.tables.push_back(std::move(tk));
}

}  // namespace detail

/// Picks tests from the factor levels present in `records`: one-way ANOVA and
/// Tukey for each factor with at least 2 levels, two-way ANOVA with partial eta
/// squared when both factors vary, per-group bootstrap CI and CV, and rank
/// variance of architectures across datasets. Diverged records and records
/// lacking the metric are left out.
inline AnalysisReport analyze(const std::vector<ExperimentRecord>& records, const AnalysisOptions& opt = {}) {
  AnalysisReport out;
  std::vector<const ExperimentRecord*> used;
  for (const auto& r : records) {
    if (r.status != "completed" || !metric_value(r, opt.metric)) continue;
    used.push_back(&r);
  }
  if (used.size() < 2) {
    throw ValidationError("analysis needs at least 2 completed records with the chosen metric; got " +
                          std::to_string(used.size()));
  }

  std::map<std::string, std::vector<double>> by_arch, by_data;
  std::map<std::pair<std::string, std::string>, std::vector<double>> by_cell;
  for (const auto* r : used) {
    const double v = *metric_value(*r, opt.metric);
    by_arch[r->architecture].push_back(v);
    by_data[r->dataset].push_back(v);
    by_cell[{r->architecture, r->dataset}].push_back(v);
  }
  if (by_arch.size() < 2 && by_data.size() < 2) {
    throw ValidationError("analysis needs at least 2 levels of architecture or dataset; records have only architecture '" +
                          by_arch.begin()->first + "' and dataset '" + by_data.begin()->first + "'");
  }

  if (by_arch.size() >= 2) detail::one_way_section(out, by_arch, "architecture", opt);
  if (by_data.size() >= 2) detail::one_way_section(out, by_data, "dataset", opt);

  if (by_arch.size() >= 2 && by_data.size() >= 2) {
    stats::FactorialTable table;
    for (const auto* r : used) table.push_back({r->architecture, r->dataset, *metric_value(*r, opt.metric)});
    try {
      const stats::AnovaResult r = stats::two_way_anova(table);
      Table t{"Two-way ANOVA architecture x dataset", {"source", "SS", "df", "MS", "F", "p", "partial_eta2"}, {}};
      detail::add_anova_rows(t, r, true);
      for (auto& row : t.rows) {
        if (row[0] == "A") row[0] = "architecture";
        else if (row[0] == "B") row[0] = "dataset";
        else if (row[0] == "A:B") row[0] = "architecture x dataset";
      }
      out.tables.push_back(std::move(t));
    } catch (const ValidationError& e) {
      out.notes.push_back(std::string("two-way ANOVA skipped: ") + e.what());
    }

    // Rank of each architecture within each dataset by mean metric (1 = best).
    const bool higher_is_better = opt.metric == Metric::accuracy;
    std::map<std::string, std::vector<double>> ranks;
    for (const auto& [data, _] : by_data) {
      std::vector<std::string> names;
      std::vector<double> means;
      for (const auto& [cell, values] : by_cell) {
        if (cell.second != data) continue;
        names.push_back(cell.first);
        const double m = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        means.push_back(higher_is_better ? m : -m);
      }
      const auto rk = stats::descending_ranks(means);
      for (std::size_t i = 0; i < names.size(); ++i) ranks[names[i]].push_back(rk[i]);
    }
    Table t{"Rank variance across datasets", {"architecture", "datasets", "mean_rank", "rank_variance"}, {}};
    for (const auto& [arch, rk] : ranks) {
      if (rk.size() < 2) continue;
      const double m = std::accumulate(rk.begin(), rk.end(), 0.0) / static_cast<double>(rk.size());
      t.rows.push_back({arch, std::to_string(rk.size()), detail::num(m, 2), detail::num(stats::rank_variance(rk), 3)});
    }
    if (!t.rows.empty()) out.tables.push_back(std::move(t));
  }

  Table summary{"Group summary",
                {"architecture", "dataset", "n", "mean", "ci_lower", "ci_upper", "cv_percent"}, {}};
  Rng rng(opt.seed);
  for (const auto& [cell, values] : by_cell) {
    const auto ci = stats::bootstrap_ci(values, rng, opt.bootstrap_iterations, opt.ci_level);
    const auto cv = values.size() >= 2 ? stats::coefficient_of_variation(values) : std::nullopt;
    summary.rows.push_back({cell.first, cell.second, std::to_string(values.size()), detail::num(ci.mean),
                            detail::num(ci.lower), detail::num(ci.upper), cv ? detail::num(*cv, 2) : "n/a"});
  }
  out.tables.push_back(std::move(summary));
  return out;
}

inline std::string render_text(const AnalysisReport& report) {
  std::ostringstream out;
  for (const auto& t : report.tables) {
    std::vector<std::size_t> width(t.header.size());
    for (std::size_t c = 0; c < t.header.size(); ++c) width[c] = t.header[c].size();
    for (const auto& row : t.rows)
      for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (c) out << "  ";
        out << cells[c] << std::string(width[c] - cells[c].size(), ' ');
      }
      out << "\n";
    };
    out << t.title << "\n";
    line(t.header);
    for (const auto& row : t.rows) line(row);
    out << "\n";
  }
  for (const auto& n : report.notes) out << "note: " << n << "\n";
  return out.str();
}

/// All tables as one CSV stream with a leading `table` column.
inline std::string render_csv(const AnalysisReport& report) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  std::ostringstream out;
  for (const auto& t : report.tables) {
    out << "table";
    for (const auto& h : t.header) out << "," << quote(h);
    out << "\n";
    for (const auto& row : t.rows) {
      out << quote(t.title);
      for (const auto& c : row) out << "," << quote(c);
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace actreg
