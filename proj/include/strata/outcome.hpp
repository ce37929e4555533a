#pragma once

// Confounder-adjusted outcome analysis: ModelA (treatment, health condition
// and propensity score), ModelB (adds the treatment x SAPS-T0 cross term),
// ModelC (ModelB per median split) and per-quintile stratified tests.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "strata/csv.hpp"
#include "strata/propensity.hpp"
#include "strata/regress.hpp"
#include "strata/stats.hpp"
#include "strata/varprep.hpp"

namespace strata::outcome {

inline constexpr double kAlpha = 0.05;

/// Health-condition scores of the outcome models, labelled SAPS-T0 and
/// SOFA-T0 in the outcome tables.
inline constexpr int kSapsScore = varprep::kSapsAvg;
inline constexpr int kSofaScore = varprep::kSofaAvg;

/// Evidence label for a p-value: absence, weak, moderate, strong, very strong.
std::string_view evidence_band(double p);

enum class ModelId { kAMortality, kALos, kB, kCLessSick, kCSicker };
std::string_view to_string(ModelId id);

struct TermReport {
  regress::ModelTerm term;
  double beta = 0.0;
  double standard_error = 0.0;
  double statistic = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

struct OutcomeModelReport {
  ModelId id = ModelId::kAMortality;
  regress::ModelSpec spec;
  std::vector<TermReport> terms;
  std::size_t n = 0;
  double log_likelihood = 0.0;  // logistic models only
  double r_squared = 0.0;       // linear models only
  bool treatment_significant = false;
  bool cross_effect_significant = false;
  /// Set when the fit failed; terms are then empty.
  std::optional<std::string> error;

  const TermReport& term(const regress::ModelTerm& t) const;
};

/// 1 + x1 + x2 + x3 + x5 + x10 + x15 + V1
regress::ModelSpec model_a_spec();
/// ModelA plus x1*x5.
regress::ModelSpec model_b_spec();

/// Study variables plus the propensity score as V1.
regress::VariableTable outcome_variables(const varprep::StudyGroup& group, std::span<const double> scores);

OutcomeModelReport fit_mortality(ModelId id, const varprep::StudyGroup& group, std::span<const double> scores,
                                 const regress::ModelSpec& spec);
OutcomeModelReport fit_los(ModelId id, const varprep::StudyGroup& group, std::span<const double> scores,
                           const regress::ModelSpec& spec);

/// Mortality (logistic) and LOS (linear) on the ModelA terms.
std::pair<OutcomeModelReport, OutcomeModelReport> fit_model_a(const varprep::StudyGroup& group,
                                                              std::span<const double> scores);
OutcomeModelReport fit_model_b(const varprep::StudyGroup& group, std::span<const double> scores);

struct SubsetSplit {
  int variable = kSapsScore;
  double threshold = 0.0;
  varprep::StudyGroup less_sick;
  varprep::StudyGroup sicker;
  std::vector<double> less_sick_scores;
  std::vector<double> sicker_scores;
};

/// Rows below the median go to less_sick, the rest (ties included) to
/// sicker. Throws DataError("ConstantVariable").
SubsetSplit split_by_median(const varprep::StudyGroup& group, std::span<const double> scores,
                            int variable = kSapsScore);

/// ModelB per subset; failures are recorded in the report, not thrown.
std::pair<OutcomeModelReport, OutcomeModelReport> fit_model_c(const SubsetSplit& split);

enum class OutcomeKind { kMortality, kLengthOfStay };

struct StratumTest {
  int quintile = 0;
  std::size_t n_treated = 0;
  std::size_t n_untreated = 0;
  bool testable = false;
  std::string reason;  // why the stratum is untestable
  stats::TestResult result;
  bool significant = false;
};

/// Chi-squared (mortality) or two-sample t (LOS) per quintile.
std::vector<StratumTest> stratified_outcome_tests(const varprep::StudyGroup& group,
                                                  const propensity::Stratification& strat, OutcomeKind kind,
                                                  stats::TTestVariant variant = stats::TTestVariant::kWelch,
                                                  bool yates = false);

csv::Table outcome_models_table(const std::vector<OutcomeModelReport>& reports);
csv::Table stratified_tests_table(const std::vector<StratumTest>& mortality, const std::vector<StratumTest>& los);

}  // namespace strata::outcome
