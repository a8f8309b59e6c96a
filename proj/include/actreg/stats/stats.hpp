#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "actreg/error.hpp"
#include "actreg/rng.hpp"
#include "actreg/stats/special.hpp"

namespace actreg::stats {

struct Group {
  std::string name;
  std::vector<double> values;
};

using GroupedSamples = std::vector<Group>;

/// One source line of an ANOVA table.
struct AnovaEffect {
  std::string source;
  double ss = 0.0;
  double df = 0.0;
  double ms = 0.0;
  double f = 0.0;
  double p = 1.0;
  double partial_eta2 = 0.0;
};

struct AnovaResult {
  std::vector<AnovaEffect> effects;
  double ss_error = 0.0;
  double df_error = 0.0;
  double ms_error = 0.0;
  /// Set when the error term vanishes; F and p are then conventional values.
  bool degenerate = false;

  const AnovaEffect& effect(const std::string& source) const {
    for (const auto& e : effects)
      if (e.source == source) return e;
    throw ValidationError("ANOVA result has no source '" + source + "'");
  }
};

namespace detail {

inline double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sum_sq_dev(std::span<const double> v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s;
}

/// Scale below which a sum of squares is rounding noise for data of this size.
inline double noise_floor(std::span<const double> all) {
  double mx = 0.0;
  for (double v : all) mx = std::max(mx, std::abs(v));
  const double e = static_cast<double>(all.size()) * mx * std::numeric_limits<double>::epsilon() * 16.0;
  return e * e;
}

/// Fills F, p and partial eta^2 from SS/df, handling a vanishing error term.
inline void finish_effect(AnovaEffect& e, double ss_error, double df_error, bool error_vanishes) {
  e.ms = e.df > 0.0 ? e.ss / e.df : 0.0;
  const double denom = e.ss + ss_error;
  e.partial_eta2 = denom > 0.0 ? std::clamp(e.ss / denom, 0.0, 1.0) : 0.0;
  if (error_vanishes) {
    const bool no_effect = e.ss <= 0.0 || e.df <= 0.0;
    e.f = no_effect ? 0.0 : std::numeric_limits<double>::max();
    e.p = no_effect ? 1.0 : 0.0;
    return;
  }
  if (e.df <= 0.0) {
    e.f = 0.0;
    e.p = 1.0;
    return;
  }
  e.f = e.ms / (ss_error / df_error);
  e.p = special::f_survival(e.f, e.df, df_error);
}

}  // namespace detail

/// Between/within decomposition with an F test. Every group needs >= 2 values.
inline AnovaResult one_way_anova(const GroupedSamples& groups) {
  if (groups.size() < 2) throw ValidationError("one-way ANOVA: need at least 2 groups");
  std::vector<double> all;
  for (const auto& g : groups) {
    if (g.values.size() < 2) {
      throw ValidationError("one-way ANOVA: group '" + g.name + "' has fewer than 2 observations");
    }
    all.insert(all.end(), g.values.begin(), g.values.end());
  }
  const double grand = detail::mean(all);
  double ssb = 0.0, ssw = 0.0;
  for (const auto& g : groups) {
    const double m = detail::mean(g.values);
    ssb += static_cast<double>(g.values.size()) * (m - grand) * (m - grand);
    ssw += detail::sum_sq_dev(g.values, m);
  }
  const double floor = detail::noise_floor(all);
  if (ssw <= floor) ssw = 0.0;
  if (ssb <= floor) ssb = 0.0;

  AnovaResult r;
  r.df_error = static_cast<double>(all.size() - groups.size());
  r.ss_error = ssw;
  r.ms_error = ssw / r.df_error;
  r.degenerate = ssw == 0.0;
  AnovaEffect between{"between", ssb, static_cast<double>(groups.size() - 1)};
  detail::finish_effect(between, ssw, r.df_error, r.degenerate);
  r.effects.push_back(between);
  return r;
}

struct Observation {
  std::string a;
  std::string b;
  double response = 0.0;
};

using FactorialTable = std::vector<Observation>;

namespace detail {

struct FitRss {
  double rss;
  double rank;
};

/// Least-squares residual sum of squares and rank of the dummy-coded design
/// built from the requested terms.
inline FitRss fit_terms(const std::vector<int>& ai, const std::vector<int>& bi, std::span<const double> y, int na,
                        int nb, bool with_a, bool with_b, bool with_ab) {
  const auto n = static_cast<Eigen::Index>(y.size());
  int cols = 1 + (with_a ? na - 1 : 0) + (with_b ? nb - 1 : 0) + (with_ab ? (na - 1) * (nb - 1) : 0);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, cols);
  Eigen::VectorXd yy(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    yy(i) = y[static_cast<std::size_t>(i)];
    int c = 0;
    x(i, c++) = 1.0;
    const int a = ai[static_cast<std::size_t>(i)], b = bi[static_cast<std::size_t>(i)];
    if (with_a) {
      for (int l = 1; l < na; ++l) x(i, c++) = a == l ? 1.0 : 0.0;
    }
    if (with_b) {
      for (int l = 1; l < nb; ++l) x(i, c++) = b == l ? 1.0 : 0.0;
    }
    if (with_ab) {
      for (int la = 1; la < na; ++la)
        for (int lb = 1; lb < nb; ++lb) x(i, c++) = (a == la && b == lb) ? 1.0 : 0.0;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  const Eigen::VectorXd beta = qr.solve(yy);
  const double rss = (yy - x * beta).squaredNorm();
  return {rss, static_cast<double>(qr.rank())};
}

}  // namespace detail

/// Two-factor ANOVA with interaction using Type-II sums of squares, so that
/// unbalanced designs give the same table as `anova_lm(..., typ=2)`.
/// Sources are named "A", "B" and "A:B".
inline AnovaResult two_way_anova(const FactorialTable& table) {
  std::map<std::string, int> a_levels, b_levels;
  for (const auto& o : table) {
    a_levels.emplace(o.a, 0);
    b_levels.emplace(o.b, 0);
  }
  if (a_levels.size() < 2 || b_levels.size() < 2) {
    throw ValidationError("two-way ANOVA: each factor needs at least 2 levels (A has " +
                          std::to_string(a_levels.size()) + ", B has " + std::to_string(b_levels.size()) + ")");
  }
  int idx = 0;
  for (auto& [k, v] : a_levels) v = idx++;
  idx = 0;
  for (auto& [k, v] : b_levels) v = idx++;

  std::vector<int> ai, bi;
  std::vector<double> y;
  std::map<std::pair<int, int>, std::vector<double>> cells;
  for (const auto& o : table) {
    ai.push_back(a_levels[o.a]);
    bi.push_back(b_levels[o.b]);
    y.push_back(o.response);
    cells[{ai.back(), bi.back()}].push_back(o.response);
  }
  const auto n = static_cast<double>(y.size());
  const double df_error = n - static_cast<double>(cells.size());
  if (df_error < 1.0) throw ValidationError("two-way ANOVA: no residual degrees of freedom (need replicates)");

  const int na = static_cast<int>(a_levels.size()), nb = static_cast<int>(b_levels.size());
  double ss_error = 0.0;
  for (const auto& [key, vals] : cells) ss_error += detail::sum_sq_dev(vals, detail::mean(vals));

  const auto fit_a = detail::fit_terms(ai, bi, y, na, nb, true, false, false);
  const auto fit_b = detail::fit_terms(ai, bi, y, na, nb, false, true, false);
  const auto fit_ab = detail::fit_terms(ai, bi, y, na, nb, true, true, false);
  const double rank_full = static_cast<double>(cells.size());

  const double floor = detail::noise_floor(y);
  auto clean = [&](double ss) { return ss <= floor ? 0.0 : ss; };

  AnovaResult r;
  r.ss_error = clean(ss_error);
  r.df_error = df_error;
  r.ms_error = r.ss_error / df_error;
  r.degenerate = r.ss_error == 0.0;
  AnovaEffect ea{"A", clean(fit_b.rss - fit_ab.rss), fit_ab.rank - fit_b.rank};
  AnovaEffect eb{"B", clean(fit_a.rss - fit_ab.rss), fit_ab.rank - fit_a.rank};
  AnovaEffect eab{"A:B", clean(fit_ab.rss - ss_error), rank_full - fit_ab.rank};
  for (AnovaEffect* e : {&ea, &eb, &eab}) {
    detail::finish_effect(*e, r.ss_error, df_error, r.degenerate);
    r.effects.push_back(*e);
  }
  return r;
}

struct TukeyPair {
  std::string group1;
  std::string group2;
  double mean_diff = 0.0;  // mean(group2) - mean(group1)
  double q = 0.0;
  double p_adj = 1.0;
  bool reject = false;
};

/// All-pairs Tukey HSD on the one-way error term, with the Tukey-Kramer
/// harmonic-mean adjustment for unequal group sizes.
inline std::vector<TukeyPair> tukey_hsd(const GroupedSamples& groups, double alpha = 0.05) {
  if (groups.size() < 2) throw ValidationError("Tukey HSD: need at least 2 groups");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("Tukey HSD: alpha must lie in (0, 1)");
  const AnovaResult anova = one_way_anova(groups);
  const int k = static_cast<int>(groups.size());
  std::vector<TukeyPair> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      TukeyPair tp;
      tp.group1 = groups[i].name;
      tp.group2 = groups[j].name;
      tp.mean_diff = detail::mean(groups[j].values) - detail::mean(groups[i].values);
      const double ni = static_cast<double>(groups[i].values.size());
      const double nj = static_cast<double>(groups[j].values.size());
      const double se = std::sqrt(anova.ms_error * 0.5 * (1.0 / ni + 1.0 / nj));
      if (se > 0.0) {
        tp.q = std::abs(tp.mean_diff) / se;
        tp.p_adj = std::clamp(1.0 - special::studentized_range_cdf(tp.q, k, anova.df_error), 0.0, 1.0);
      } else {
        const bool differs = std::abs(tp.mean_diff) > 0.0;
        tp.q = differs ? std::numeric_limits<double>::max() : 0.0;
        tp.p_adj = differs ? 0.0 : 1.0;
      }
      tp.reject = tp.p_adj < alpha;
      out.push_back(tp);
    }
  }
  return out;
}

struct BootstrapCI {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 95.0;
};

/// Linear-interpolation percentile (numpy default) of sorted data, p in [0, 100].
inline double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("percentile of empty data");
  const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

/// Percentile bootstrap interval for the mean: resample with replacement
/// `n_iterations` times and take the (100-level)/2 and 100-(100-level)/2
/// percentiles of the resampled means.
inline BootstrapCI bootstrap_ci(std::span<const double> data, Rng& rng, std::size_t n_iterations = 1000,
                                double level = 95.0) {
  if (data.empty()) throw ValidationError("bootstrap: data must be nonempty");
  if (n_iterations == 0) throw ValidationError("bootstrap: need at least one iteration");
  if (!(level > 0.0 && level < 100.0)) throw ValidationError("bootstrap: level must lie in (0, 100)");
  std::vector<double> means(n_iterations);
  const auto n = static_cast<std::uint64_t>(data.size());
  for (auto& m : means) {
    double s = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) s += data[rng.below(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double tail = (100.0 - level) / 2.0;
  BootstrapCI ci;
  ci.mean = detail::mean(data);
  ci.lower = percentile_sorted(means, tail);
  ci.upper = percentile_sorted(means, 100.0 - tail);
  ci.level = level;
  return ci;
}

enum class Alternative { two_sided, greater, less };

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-) for two-sided, W+ otherwise
  double w_plus = 0.0;
  std::size_t n = 0;       // nonzero differences
  double p = 1.0;
  bool exact = false;
  bool degenerate = false;
};

namespace detail {

/// Ranks of |d| with ties mid-ranked (1-based).
inline std::vector<double> abs_midranks(std::span<const double> d) {
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return std::abs(d[i]) < std::abs(d[j]); });
  std::vector<double> ranks(d.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mid;
    i = j + 1;
  }
  return ranks;
}

inline std::vector<double> nonzero(std::span<const double> d) {
  std::vector<double> out;
  for (double x : d)
    if (x != 0.0) out.push_back(x);
  return out;
}

}  // namespace detail

/// Signed-rank test by exhaustive enumeration of all 2^n sign patterns
/// (uses the observed mid-ranks, so ties are handled exactly). n <= 20.
inline WilcoxonResult wilcoxon_exact(std::span<const double> differences, Alternative alt = Alternative::two_sided) {
  const auto d = detail::nonzero(differences);
  WilcoxonResult r;
  r.n = d.size();
  r.exact = true;
  if (d.empty()) {
    r.degenerate = true;
    return r;
  }
  if (d.size() > 20) throw ValidationError("wilcoxon_exact: enumeration limited to 20 nonzero differences");
  const auto ranks = detail::abs_midranks(d);
  const double total = std::accumulate(ranks.begin(), ranks.end(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0.0) r.w_plus += ranks[i];
  const double center = total / 2.0;
  const double obs_dev = std::abs(r.w_plus - center);
  const double tol = 1e-9;

  const std::uint64_t patterns = std::uint64_t{1} << d.size();
  std::uint64_t hits = 0;
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (mask >> i & 1U) w += ranks[i];
    switch (alt) {
      case Alternative::two_sided: hits += std::abs(w - center) >= obs_dev - tol; break;
      case Alternative::greater: hits += w >= r.w_plus - tol; break;
      case Alternative::less: hits += w <= r.w_plus + tol; break;
    }
  }
  r.p = std::min(1.0, static_cast<double>(hits) / static_cast<double>(patterns));
  r.statistic = alt == Alternative::two_sided ? std::min(r.w_plus, total - r.w_plus) : r.w_plus;
  return r;
}

/// Normal approximation with tie-corrected variance and continuity correction.
inline WilcoxonResult wilcoxon_normal(std::span<const double> differences, Alternative alt = Alternative::two_sided) {
  const auto d = detail::nonzero(differences);
  WilcoxonResult r;
  r.n = d.size();
  if (d.empty()) {
    r.degenerate = true;
    return r;
  }
  const auto ranks = detail::abs_midranks(d);
  const double nn = static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0.0) r.w_plus += ranks[i];
  const double total = nn * (nn + 1.0) / 2.0;
  const double mean = total / 2.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  std::map<double, int> ties;
  for (double rk : ranks) ties[rk]++;
  for (const auto& [rk, t] : ties) var -= (static_cast<double>(t) * t * t - t) / 48.0;
  r.statistic = alt == Alternative::two_sided ? std::min(r.w_plus, total - r.w_plus) : r.w_plus;
  if (var <= 0.0) {
    r.degenerate = true;
    return r;
  }
  const double sd = std::sqrt(var);
  const double diff = r.w_plus - mean;
  switch (alt) {
    case Alternative::two_sided: {
      const double z = std::max(0.0, std::abs(diff) - 0.5) / sd;
      r.p = std::min(1.0, 2.0 * (1.0 - special::normal_cdf(z)));
      break;
    }
    case Alternative::greater: r.p = 1.0 - special::normal_cdf((diff - 0.5) / sd); break;
    case Alternative::less: r.p = special::normal_cdf((diff + 0.5) / sd); break;
  }
  return r;
}

/// Zero differences are dropped; exact enumeration for n <= 12, normal
/// approximation beyond. All-zero input gives p = 1 flagged degenerate.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences,
                                           Alternative alt = Alternative::two_sided) {
  const auto n = detail::nonzero(differences).size();
  return n <= 12 ? wilcoxon_exact(differences, alt) : wilcoxon_normal(differences, alt);
}

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_p = 1.0;  // two-sided t test of slope = 0
  std::size_t n = 0;
  bool degenerate = false;  // constant response
};

/// Ordinary least squares y = slope * x + intercept.
inline RegressionFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("linear_fit: x and y lengths differ");
  if (x.size() < 3) throw ValidationError("linear_fit: need at least 3 points");
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) {
    throw ValidationError("linear_fit: x values are all equal");
  }
  RegressionFit f;
  f.n = x.size();
  const double mx = detail::mean(x);
  if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) {
    f.intercept = y[0];
    f.degenerate = true;
    return f;
  }
  const double my = detail::mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.slope * x[i] + f.intercept);
    ss_res += e * e;
  }
  f.r2 = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  const double df = static_cast<double>(x.size()) - 2.0;
  const double se = std::sqrt(ss_res / df / sxx);
  f.slope_p = se > 0.0 ? special::t_two_sided(f.slope / se, df) : 0.0;
  return f;
}

/// 100 * sample sd / mean; nullopt when the mean is zero or n < 2.
inline std::optional<double> coefficient_of_variation(std::span<const double> data) {
  if (data.size() < 2) return std::nullopt;
  const double m = detail::mean(data);
  if (m == 0.0) return std::nullopt;
  const double sd = std::sqrt(detail::sum_sq_dev(data, m) / static_cast<double>(data.size() - 1));
  return 100.0 * sd / m;
}

/// Population variance of one architecture's rank across datasets.
inline double rank_variance(std::span<const double> ranks) {
  if (ranks.size() < 2) throw ValidationError("rank_variance: need at least 2 rankings");
  const double m = detail::mean(ranks);
  return detail::sum_sq_dev(ranks, m) / static_cast<double>(ranks.size());
}

/// Descending ranks (1 = largest), ties mid-ranked.
inline std::vector<double> descending_ranks(std::span<const double> values) {
  std::vector<double> neg(values.begin(), values.end());
  for (double& v : neg) v = -v;
  std::vector<std::size_t> order(neg.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return neg[i] < neg[j]; });
  std::vector<double> ranks(neg.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && neg[order[j + 1]] == neg[order[i]]) ++j;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return ranks;
}

}  // namespace actreg::stats
