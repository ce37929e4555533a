#pragma once

// Logistic and linear regression over model specs built from study
// variables, Wald p-values and two-phase forward stepwise selection.

#include <compare>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "strata/stats.hpp"
#include "strata/varprep.hpp"

namespace strata::regress {

/// Variable id of the propensity score column (reported as V1).
inline constexpr int kPropensityVar = 59;

std::string variable_name(int id);

enum class TermKind { kIntercept, kMain, kSquare, kInteraction };

struct ModelTerm {
  TermKind kind = TermKind::kIntercept;
  int i = 0;
  int j = 0;

  static ModelTerm intercept() { return {}; }
  static ModelTerm main(int v) { return {TermKind::kMain, v, 0}; }
  static ModelTerm square(int v) { return {TermKind::kSquare, v, v}; }
  /// Orders the pair; interaction(v, v) is the square of v.
  static ModelTerm interaction(int a, int b);

  /// "1", "x5", "x43*x43", "x1*x5".
  std::string name() const;
  /// Variable ids the term reads.
  std::vector<int> variables() const;

  auto operator<=>(const ModelTerm&) const = default;
};

/// Parses one term: "1", "x12", "V1", "x40*x43", "x43^2".
ModelTerm parse_term(std::string_view text);

class ModelSpec {
 public:
  /// Intercept only.
  ModelSpec();
  /// Terms after the leading intercept; throws ConfigError("DuplicateTerm").
  explicit ModelSpec(const std::vector<ModelTerm>& terms);

  const std::vector<ModelTerm>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool contains(const ModelTerm& t) const;
  bool has_main(int v) const { return contains(ModelTerm::main(v)); }
  /// Variables entering as main effects, ascending.
  std::vector<int> main_effects() const;

  ModelSpec with(const ModelTerm& t) const;
  void add(const ModelTerm& t);

  /// "1 + x11 + x12 + x40*x43"
  std::string to_string() const;
  static ModelSpec parse(std::string_view text);

  bool operator==(const ModelSpec&) const = default;

 private:
  std::vector<ModelTerm> terms_;
};

/// Columns addressable by variable id.
class VariableTable {
 public:
  VariableTable() = default;
  explicit VariableTable(const varprep::StudyGroup& group);

  std::size_t rows() const { return n_; }
  bool has(int id) const { return cols_.count(id) > 0; }
  const std::vector<double>& column(int id) const;
  /// Adds or replaces a column; the length must match.
  void set(int id, std::vector<double> values);

 private:
  std::size_t n_ = 0;
  std::map<int, std::vector<double>> cols_;
};

Eigen::VectorXd term_column(const VariableTable& table, const ModelTerm& term);
Eigen::MatrixXd design_matrix(const VariableTable& table, const ModelSpec& spec);

/// Throws NumericError("RankDeficient") naming the first term, in spec
/// order, that adds no rank. Pivot tolerance is 1e-10 of the largest pivot.
void check_full_rank(const Eigen::MatrixXd& x, const ModelSpec& spec);
bool is_full_rank(const Eigen::MatrixXd& x);

/// Recodes a -1/+1 column to 0/1; throws DataError("InvalidOutcome").
std::vector<double> to_binary01(std::span<const double> values);

struct LogitOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 50;
  double separation_bound = 30.0;
};

struct LogitFit {
  ModelSpec spec;
  std::vector<double> coefficients;
  std::vector<double> standard_errors;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  bool separation = false;
  std::size_t n = 0;

  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x) const;
};

/// Newton iterations with step halving from zero, on internally
/// standardized columns. `y` must be 0/1. Errors: RankDeficient,
/// InvalidOutcome, EmptyInput.
LogitFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ModelSpec& spec,
                      const LogitOptions& options = {});
LogitFit fit_logistic(const VariableTable& table, const ModelSpec& spec, std::span<const double> y01,
                      const LogitOptions& options = {});

/// Stable log-likelihood of 0/1 outcomes at linear predictor eta.
double logistic_log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y);

struct LinearFit {
  ModelSpec spec;
  std::vector<double> coefficients;
  std::vector<double> standard_errors;
  double residual_variance = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

LinearFit fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ModelSpec& spec);
LinearFit fit_linear(const VariableTable& table, const ModelSpec& spec, std::span<const double> y);

/// Two-sided Wald tests, normal reference. Throws NumericError("NotConverged").
std::vector<stats::TestResult> coefficient_p_values(const LogitFit& fit);
/// Two-sided Wald tests against t(n - p).
std::vector<stats::TestResult> coefficient_p_values(const LinearFit& fit);

struct StepwiseOptions {
  double p_enter = 0.05;
  bool second_phase = true;
  bool squares = true;
  LogitOptions logit;
};

struct StepwiseEntry {
  int phase = 1;
  ModelTerm term;
  double lr_statistic = 0.0;
  double p_value = 1.0;
  double log_likelihood = 0.0;
};

struct StepwiseResult {
  ModelSpec spec;
  LogitFit fit;
  std::vector<StepwiseEntry> entries;
  std::vector<std::string> warnings;
};

/// Forward selection by likelihood-ratio test: main effects over
/// `candidates`, then pairwise interactions and squares of the survivors.
/// Ties go to the lower variable index.
StepwiseResult stepwise_select(const VariableTable& table, std::span<const int> candidates,
                               std::span<const double> y01, const StepwiseOptions& options = {});

}  // namespace strata::regress
