#pragma once

// Statistical kernel: order statistics, ANOVA F-ratios, contingency and
// two-sample tests, and the tail probabilities behind their p-values.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace strata::stats {

struct FiveNumber {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Quartiles by linear interpolation at positions 1+(n-1)p.
/// Throws DataError("EmptyInput").
FiveNumber five_number_summary(std::span<const double> xs);

/// Interpolated quantile of already sorted data, p in [0,1].
double quantile_sorted(std::span<const double> sorted, double p);

double median(std::span<const double> xs);
double mean(std::span<const double> xs);
/// Sample variance (n-1 denominator); 0 for fewer than two values.
double sample_variance(std::span<const double> xs);

enum class Flag {
  kNone,
  kDegenerate,  // zero denominator with a positive numerator: F = +inf
  kUndefined,   // 0/0: F = NaN
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<double> dof;
  Flag flag = Flag::kNone;
};

enum class Distribution { kF, kChiSquared, kStudentT };

/// Upper tail for F and chi-squared, two-sided tail for t. A statistic of
/// +inf gives 0, statistics at or below the support minimum give 1.
/// Errors: InvalidDof, InvalidStatistic (NaN).
double tail_probability(Distribution dist, double statistic, double d1, double d2 = 0.0);

double f_upper_tail(double f, double d1, double d2);
double chi2_upper_tail(double x, double dof);
double t_two_sided(double t, double dof);
/// Two-sided standard normal tail 2*Phi(-|z|).
double normal_two_sided(double z);

struct OneWayAnova {
  TestResult test;  // statistic = F, dof = {k-1, n-k}
  double ss_between = 0.0;
  double ss_within = 0.0;
  double ss_total = 0.0;
};

/// Errors: TooFewGroups, EmptyGroup, TooFewObservations (n <= k).
OneWayAnova one_way_anova(const std::vector<std::vector<double>>& groups);

/// Two-way 2 x K layout: treatment (A) by subclass (B).
///
/// Cells are combined through their means with equal weight (unweighted
/// means analysis): every cell counts as holding the harmonic mean of the
/// cell sizes. A subclass lacking one of the two arms is left out of the
/// between-cell decomposition and reported in `dropped_subclasses`; its
/// observations still enter the within-cell sum of squares.
struct TwoWayAnova {
  double f_primary = 0.0;    // treatment main effect
  double f_secondary = 0.0;  // treatment x subclass interaction
  double p_primary = 1.0;
  double p_secondary = 1.0;
  Flag flag_primary = Flag::kNone;
  Flag flag_secondary = Flag::kNone;

  int dof_primary = 1;
  int dof_secondary = 0;
  int dof_within = 0;

  double n_harmonic = 0.0;
  double ss_a = 0.0;
  double ss_b = 0.0;
  double ss_ab = 0.0;
  double ss_between_cells = 0.0;
  double ss_within = 0.0;

  std::vector<int> dropped_subclasses;  // 1-based
  std::vector<std::string> warnings;
};

/// `treated[i]` marks arm membership, `subclass[i]` lies in 1..k.
/// Errors: InvalidInput (length mismatch, k < 2, label out of range),
/// AllCellsEmptyForTreatment (no subclass holds both arms).
TwoWayAnova two_way_anova_2xk(std::span<const double> values, std::span<const char> treated,
                              std::span<const int> subclass, int k);

/// Pearson chi-squared on [[a,b],[c,d]], dof 1. Errors: ZeroMarginal.
TestResult chi_squared_2x2(const std::array<std::array<std::int64_t, 2>, 2>& counts,
                           bool yates = false);

enum class TTestVariant { kWelch, kStudent };

/// Two-sided test of equal means; statistic is mean(a) - mean(b) over its
/// standard error. Errors: TooFewObservations, ZeroVariance.
TestResult t_test_two_sample(std::span<const double> a, std::span<const double> b,
                             TTestVariant variant = TTestVariant::kWelch);

}  // namespace strata::stats
