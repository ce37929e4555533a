#pragma once

// Independent reference implementations the tests compare against. None of
// them call into the library's numeric code.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Tail probabilities by adaptive Gauss-Kronrod quadrature of the density in
// long double.
long double chi2_upper(long double x, long double dof);
long double f_upper(long double x, long double d1, long double d2);
long double t_two_sided(long double t, long double dof);

// Linear-interpolation quantile by explicit sort.
double quantile(std::vector<double> xs, double p);
double median(std::vector<double> xs);

double one_way_f(const std::vector<std::vector<double>>& groups);

struct TwoWay {
  double f_a = 0.0;
  double f_ab = 0.0;
  double s1_a = 0.0, s1_b = 0.0, s_bw = 0.0, s1_ab = 0.0, s_wi = 0.0;
  double s2_a = 0.0, s2_b = 0.0;  // within sums of the one-factor groupings
};

// The fifteen steps in order over an unweighted-means layout: every cell
// carries the harmonic mean of the cell sizes, the interaction sum comes
// from subtraction (step 11) and both ratios use the within-cell sum of
// step 12. Every subclass must hold both arms.
TwoWay two_way_steps(std::span<const double> values, std::span<const char> treated, std::span<const int> subclass,
                     int k);

double chi2_2x2(const std::array<std::array<std::int64_t, 2>, 2>& c, bool yates);

struct TTest {
  double t = 0.0;
  double dof = 0.0;
};
TTest welch(std::span<const double> a, std::span<const double> b);
TTest student(std::span<const double> a, std::span<const double> b);

// Least squares through the SVD pseudo-inverse.
Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

long double logistic_ll(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta);

// Coordinate grid search from a start point, shrinking the step tenfold
// each sweep; returns the best coefficients found.
Eigen::VectorXd logistic_grid(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::VectorXd start,
                              double step, int sweeps);

struct Confusion {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};
Confusion confusion(std::span<const double> predicted_raw, std::span<const double> labels);

// Groups every value row whose key equals each id, by brute force.
template <class K, class P>
std::vector<std::optional<std::vector<P>>> nested_loop_join(const std::vector<K>& ids,
                                                            const std::vector<std::pair<K, P>>& values) {
  std::vector<std::optional<std::vector<P>>> out;
  for (const auto& id : ids) {
    std::vector<P> rows;
    for (const auto& [k, p] : values)
      if (k == id) rows.push_back(p);
    out.push_back(rows.empty() ? std::nullopt : std::optional<std::vector<P>>(rows));
  }
  return out;
}

}  // namespace oracle
