#include "strata/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>

#include "strata/error.hpp"

namespace strata::stats {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Ratio of mean squares with the degeneracy conventions used by every F here.
std::pair<double, Flag> f_ratio(double ss_num, double dof_num, double ss_den, double dof_den) {
  if (!(ss_num > 0.0) || dof_num <= 0) {
    if (ss_den > 0.0 && dof_den > 0) return {0.0, Flag::kNone};
    return {ss_num > 0.0 ? kInf : 0.0, ss_num > 0.0 ? Flag::kDegenerate : Flag::kUndefined};
  }
  if (!(ss_den > 0.0) || dof_den <= 0) return {kInf, Flag::kDegenerate};
  return {(ss_num / dof_num) / (ss_den / dof_den), Flag::kNone};
}

}  // namespace

double mean(std::span<const double> xs) {
  if (xs.empty()) throw DataError("EmptyInput", "mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DataError("EmptyInput", "quantile of an empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median(std::span<const double> xs) {
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.5);
}

FiveNumber five_number_summary(std::span<const double> xs) {
  if (xs.empty()) throw DataError("EmptyInput", "five-number summary of an empty sample");
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  return {v.front(), quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75),
          v.back()};
}

// ---------------------------------------------------------------------------
// Tail probabilities

double tail_probability(Distribution dist, double statistic, double d1, double d2) {
  if (std::isnan(statistic)) throw NumericError("InvalidStatistic", "statistic is NaN");
  auto check = [](double d, const char* what) {
    if (!(d > 0.0) || !std::isfinite(d))
      throw NumericError("InvalidDof", fmt::format("{} degrees of freedom must be positive, got {}", what, d));
  };
  check(d1, "first");
  switch (dist) {
    case Distribution::kF: {
      check(d2, "second");
      if (statistic <= 0.0) return 1.0;
      if (std::isinf(statistic)) return 0.0;
      // P(F > f) = I_{d2/(d2+d1 f)}(d2/2, d1/2)
      const double x = d2 / (d2 + d1 * statistic);
      return boost::math::ibeta(d2 / 2.0, d1 / 2.0, x);
    }
    case Distribution::kChiSquared:
      if (statistic <= 0.0) return 1.0;
      if (std::isinf(statistic)) return 0.0;
      return boost::math::gamma_q(d1 / 2.0, statistic / 2.0);
    case Distribution::kStudentT: {
      const double t = std::fabs(statistic);
      if (t == 0.0) return 1.0;
      if (std::isinf(t)) return 0.0;
      // P(|T| > t) = I_{d/(d+t^2)}(d/2, 1/2)
      return boost::math::ibeta(d1 / 2.0, 0.5, d1 / (d1 + t * t));
    }
  }
  return kNaN;
}

double f_upper_tail(double f, double d1, double d2) { return tail_probability(Distribution::kF, f, d1, d2); }
double chi2_upper_tail(double x, double dof) { return tail_probability(Distribution::kChiSquared, x, dof); }
double t_two_sided(double t, double dof) { return tail_probability(Distribution::kStudentT, t, dof); }

double normal_two_sided(double z) {
  if (std::isnan(z)) throw NumericError("InvalidStatistic", "statistic is NaN");
  return std::erfc(std::fabs(z) / std::sqrt(2.0));
}

// ---------------------------------------------------------------------------
// ANOVA

OneWayAnova one_way_anova(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw DataError("TooFewGroups", "one-way ANOVA needs at least two groups");
  std::size_t n = 0;
  double total = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw DataError("EmptyGroup", fmt::format("group {} is empty", g + 1));
    n += groups[g].size();
    for (double x : groups[g]) total += x;
  }
  const std::size_t k = groups.size();
  if (n <= k) throw DataError("TooFewObservations", fmt::format("{} observations in {} groups", n, k));
  const double grand = total / static_cast<double>(n);

  OneWayAnova out;
  for (const auto& g : groups) {
    const double m = mean(g);
    out.ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double x : g) {
      out.ss_within += (x - m) * (x - m);
      out.ss_total += (x - grand) * (x - grand);
    }
  }
  const double d1 = static_cast<double>(k - 1), d2 = static_cast<double>(n - k);
  auto [f, flag] = f_ratio(out.ss_between, d1, out.ss_within, d2);
  if (flag == Flag::kUndefined) f = kNaN;
  out.test.statistic = f;
  out.test.flag = flag;
  out.test.dof = {d1, d2};
  out.test.p_value = std::isnan(f) ? 1.0 : f_upper_tail(f, d1, d2);
  return out;
}

TwoWayAnova two_way_anova_2xk(std::span<const double> values, std::span<const char> treated,
                              std::span<const int> subclass, int k) {
  if (values.size() != treated.size() || values.size() != subclass.size())
    throw DataError("InvalidInput", "values, treatment and subclass lengths differ");
  if (k < 2) throw DataError("InvalidInput", "two-way ANOVA needs at least two subclasses");

  const auto K = static_cast<std::size_t>(k);
  std::vector<std::array<double, 2>> sum(K, {0.0, 0.0});
  std::vector<std::array<std::size_t, 2>> count(K, {0, 0});
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int s = subclass[i];
    if (s < 1 || s > k) throw DataError("InvalidInput", fmt::format("subclass label {} outside 1..{}", s, k));
    const std::size_t a = treated[i] ? 1 : 0;
    sum[static_cast<std::size_t>(s - 1)][a] += values[i];
    ++count[static_cast<std::size_t>(s - 1)][a];
  }

  TwoWayAnova out;
  std::vector<std::size_t> kept;
  std::size_t nonempty_cells = 0;
  for (std::size_t s = 0; s < K; ++s) {
    nonempty_cells += (count[s][0] > 0) + (count[s][1] > 0);
    if (count[s][0] > 0 && count[s][1] > 0) {
      kept.push_back(s);
    } else if (count[s][0] + count[s][1] > 0) {
      out.dropped_subclasses.push_back(static_cast<int>(s + 1));
      out.warnings.push_back(fmt::format("subclass {} lacks the {} arm", s + 1,
                                         count[s][1] == 0 ? "treated" : "untreated"));
    } else {
      out.dropped_subclasses.push_back(static_cast<int>(s + 1));
      out.warnings.push_back(fmt::format("subclass {} is empty", s + 1));
    }
  }
  if (kept.empty())
    throw DataError("AllCellsEmptyForTreatment", "no subclass contains both treated and untreated observations");

  // Within-cell sum of squares over every observation.
  std::vector<std::array<double, 2>> cell(K, {0.0, 0.0});
  for (std::size_t s = 0; s < K; ++s)
    for (std::size_t a = 0; a < 2; ++a)
      if (count[s][a]) cell[s][a] = sum[s][a] / static_cast<double>(count[s][a]);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - cell[static_cast<std::size_t>(subclass[i] - 1)][treated[i] ? 1 : 0];
    out.ss_within += d * d;
  }
  out.dof_within = static_cast<int>(values.size() - nonempty_cells);

  const double kk = static_cast<double>(kept.size());
  double inv = 0.0;
  for (auto s : kept) inv += 1.0 / static_cast<double>(count[s][0]) + 1.0 / static_cast<double>(count[s][1]);
  out.n_harmonic = 2.0 * kk / inv;

  std::array<double, 2> arm{0.0, 0.0};
  std::vector<double> col(K, 0.0);
  double grand = 0.0;
  for (auto s : kept) {
    col[s] = 0.5 * (cell[s][0] + cell[s][1]);
    arm[0] += cell[s][0] / kk;
    arm[1] += cell[s][1] / kk;
    grand += col[s] / kk;
  }
  const double nh = out.n_harmonic;
  for (double r : arm) out.ss_a += nh * kk * (r - grand) * (r - grand);
  for (auto s : kept) {
    out.ss_b += nh * 2.0 * (col[s] - grand) * (col[s] - grand);
    for (std::size_t a = 0; a < 2; ++a) {
      const double d = cell[s][a] - grand;
      out.ss_between_cells += nh * d * d;
      const double r = cell[s][a] - arm[a] - col[s] + grand;
      out.ss_ab += nh * r * r;
    }
  }

  out.dof_primary = 1;
  out.dof_secondary = static_cast<int>(kept.size()) - 1;
  auto [fa, flag_a] = f_ratio(out.ss_a, 1, out.ss_within, out.dof_within);
  auto [fab, flag_ab] = f_ratio(out.ss_ab, out.dof_secondary, out.ss_within, out.dof_within);
  // A vanishing effect reads as perfect balance even without replication.
  if (flag_a == Flag::kUndefined) flag_a = Flag::kNone;
  if (flag_ab == Flag::kUndefined) flag_ab = Flag::kNone;
  out.f_primary = fa;
  out.f_secondary = fab;
  out.flag_primary = flag_a;
  out.flag_secondary = flag_ab;
  if (out.dof_within > 0) {
    out.p_primary = f_upper_tail(fa, 1, out.dof_within);
    if (out.dof_secondary > 0) out.p_secondary = f_upper_tail(fab, out.dof_secondary, out.dof_within);
  } else {
    out.p_primary = fa > 0 ? 0.0 : 1.0;
    out.p_secondary = fab > 0 ? 0.0 : 1.0;
  }
  if (out.dof_secondary == 0) out.warnings.push_back("a single usable subclass leaves no interaction");
  if (flag_a == Flag::kDegenerate || flag_ab == Flag::kDegenerate)
    out.warnings.push_back("zero within-cell variance");
  return out;
}

// ---------------------------------------------------------------------------
// Contingency and two-sample tests

TestResult chi_squared_2x2(const std::array<std::array<std::int64_t, 2>, 2>& counts, bool yates) {
  double row[2] = {0, 0}, colsum[2] = {0, 0}, n = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const auto c = counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (c < 0) throw DataError("NegativeCount", "contingency counts must be non-negative");
      row[i] += static_cast<double>(c);
      colsum[j] += static_cast<double>(c);
      n += static_cast<double>(c);
    }
  for (double m : {row[0], row[1], colsum[0], colsum[1]})
    if (m == 0) throw DataError("ZeroMarginal", "a row or column of the 2x2 table sums to zero");
  double stat = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double e = row[i] * colsum[j] / n;
      double d = std::fabs(static_cast<double>(counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) - e);
      if (yates) d = std::max(0.0, d - 0.5);
      stat += d * d / e;
    }
  return {stat, chi2_upper_tail(stat, 1.0), {1.0}, Flag::kNone};
}

TestResult t_test_two_sample(std::span<const double> a, std::span<const double> b, TTestVariant variant) {
  if (a.size() < 2 || b.size() < 2)
    throw DataError("TooFewObservations", "each sample needs at least two values");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = sample_variance(a), vb = sample_variance(b);
  const double diff = mean(a) - mean(b);
  double se2 = 0.0, dof = 0.0;
  if (variant == TTestVariant::kWelch) {
    se2 = va / na + vb / nb;
    const double qa = va / na, qb = vb / nb;
    dof = se2 * se2 / (qa * qa / (na - 1) + qb * qb / (nb - 1));
  } else {
    dof = na + nb - 2;
    const double pooled = ((na - 1) * va + (nb - 1) * vb) / dof;
    se2 = pooled * (1 / na + 1 / nb);
  }
  if (!(se2 > 0.0)) throw NumericError("ZeroVariance", "both samples have zero variance");
  const double t = diff / std::sqrt(se2);
  return {t, t_two_sided(t, dof), {dof}, Flag::kNone};
}

}  // namespace strata::stats
