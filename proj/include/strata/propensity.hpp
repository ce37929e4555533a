#pragma once

// Propensity scores, quintile stratification, covariate balance by F-ratio
// and the refinement loop that grows the score model.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "strata/cohort.hpp"
#include "strata/csv.hpp"
#include "strata/regress.hpp"
#include "strata/stats.hpp"
#include "strata/varprep.hpp"

namespace strata::propensity {

inline constexpr int kStrata = 5;

/// Logistic of eta clamped to [1e-12, 1 - 1e-12].
double score_from_eta(double eta);

/// Throws NumericError("NotConverged").
std::vector<double> propensity_scores(const regress::LogitFit& fit, const regress::VariableTable& table);

/// Block sizes for n patients: floor(n/k) each, remainder to the top blocks.
std::array<std::size_t, kStrata> quintile_sizes(std::size_t n);

struct Stratification {
  std::vector<cohort::PatientKey> keys;  // input order
  std::vector<double> scores;            // input order
  std::vector<int> quintile;             // input order, 1..5
  std::array<std::size_t, kStrata> sizes{};
  std::array<std::pair<double, double>, kStrata> ranges{};
};

/// Ranks by (score, key) and cuts five contiguous blocks.
/// Throws DataError("TooFewPatients") below five patients.
Stratification stratify_quintiles(std::span<const double> scores, std::span<const cohort::PatientKey> keys);

/// Covariates assessed for balance: x2..x56.
std::vector<int> balance_covariates();

struct CovariateBalance {
  int variable = 0;
  double f_pre = 0.0;
  double f_primary = 0.0;
  double f_secondary = 0.0;
  std::vector<std::string> warnings;
};

struct BalanceReport {
  std::vector<CovariateBalance> rows;
  stats::FiveNumber pre, primary, secondary;

  const CovariateBalance& of(int variable) const;
};

/// f_primary of one covariate under a stratification.
CovariateBalance covariate_balance(const varprep::StudyGroup& group, const Stratification& strat, int variable);

/// The stratification must list the group's keys in group order.
BalanceReport assess_balance(const varprep::StudyGroup& group, const Stratification& strat);

struct RefineOptions {
  double candidate_fraction = 0.25;
  int max_passes = 1;
  /// A candidate is tried only when its f_primary is significant at this
  /// level; 1 tries every candidate.
  double significance_gate = 0.05;
  regress::LogitOptions logit;
};

struct RefinementAttempt {
  int pass = 1;
  int variable = 0;
  regress::ModelTerm term;
  std::string form;  // main, square, interaction(xK), or blank when skipped
  double f_before = 0.0;
  double f_after = 0.0;
  bool accepted = false;
  std::string note;
};

struct RefineResult {
  regress::ModelSpec spec;
  regress::LogitFit fit;
  Stratification strat;
  std::vector<RefinementAttempt> log;
  std::vector<int> candidates;  // every pass, in trial order
};

/// Fits the spec with treatment (x1) as outcome and stratifies.
std::pair<regress::LogitFit, Stratification> fit_and_stratify(const varprep::StudyGroup& group,
                                                              const regress::VariableTable& table,
                                                              const regress::ModelSpec& spec,
                                                              const regress::LogitOptions& options = {});

RefineResult refine_model(const varprep::StudyGroup& group, const regress::ModelSpec& initial,
                          const Stratification& initial_strat, const RefineOptions& options = {});

struct ArmSummary {
  std::size_t n = 0;
  std::size_t deaths = 0;
  std::optional<double> mortality_pct;
  std::optional<double> mean_los;
};

struct QuintileRow {
  int quintile = 0;
  double score_low = 0.0;
  double score_high = 0.0;
  ArmSummary treated;
  ArmSummary untreated;
};

std::vector<QuintileRow> strata_outcome_table(const varprep::StudyGroup& group, const Stratification& strat);

csv::Table strata_table(const Stratification& strat);
Stratification strata_from_table(const csv::Table& table);
csv::Table balance_table(const BalanceReport& report);
csv::Table balance_summary_table(const BalanceReport& report);
csv::Table refinement_log_table(const std::vector<RefinementAttempt>& log);
csv::Table quintile_table(const std::vector<QuintileRow>& rows);

}  // namespace strata::propensity
