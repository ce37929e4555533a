#pragma once

// Stage runners behind the command-line driver. Every stage reads its
// inputs from the run configuration, writes its report files into the
// output directory and returns what the next stage needs.

#include <iosfwd>
#include <string>
#include <vector>

#include "strata/cohort.hpp"
#include "strata/config.hpp"
#include "strata/gp.hpp"
#include "strata/kmeans.hpp"
#include "strata/outcome.hpp"
#include "strata/propensity.hpp"
#include "strata/regress.hpp"
#include "strata/varprep.hpp"

namespace strata::pipeline {

cohort::PipelineResult run_cohort(const RunConfig& config);

varprep::AssemblyResult run_varprep(const RunConfig& config, const std::vector<cohort::PatientKey>& keys);

/// Stepwise propensity model over the configured candidates.
regress::StepwiseResult propensity_fit(const RunConfig& config, const varprep::StudyGroup& group);
propensity::Stratification propensity_stratify(const RunConfig& config, const varprep::StudyGroup& group,
                                               const regress::ModelSpec& spec);
propensity::BalanceReport propensity_balance(const RunConfig& config, const varprep::StudyGroup& group,
                                             const propensity::Stratification& strat,
                                             const std::string& file = "balance.csv");
propensity::RefineResult propensity_refine(const RunConfig& config, const varprep::StudyGroup& group,
                                           const regress::ModelSpec& initial);

/// fit, stratify, balance, refine, final balance and quintile table.
propensity::Stratification run_propensity(const RunConfig& config, const varprep::StudyGroup& group);

void run_outcome(const RunConfig& config, const varprep::StudyGroup& group, const propensity::Stratification& strat);

evoml::KMeansResult ml_kmeans(const RunConfig& config, const varprep::StudyGroup& group);

struct GpOutcome {
  std::string group;
  evoml::GpTask task = evoml::GpTask::kClassify;
  evoml::GpRun run;
  evoml::Split split;
  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
};

GpOutcome train_gp(const RunConfig& config, const std::string& label, const varprep::StudyGroup& group,
                   std::span<const double> scores, evoml::GpTask task);

void ml_gp(const RunConfig& config, const varprep::StudyGroup& group, const propensity::Stratification& strat,
           evoml::GpTask task);
void ml_simulate(const RunConfig& config, const varprep::StudyGroup& group, const propensity::Stratification& strat);
/// k-means, then GP classification and regression with simulation on the
/// whole group, each cluster and both halves of the median split.
void run_ml(const RunConfig& config, const varprep::StudyGroup& group, const propensity::Stratification& strat);

/// Runs the enabled stages in order; a failure is rethrown naming its stage.
void run_all(const RunConfig& config, std::ostream& log);

/// Strata reordered to follow the group's rows; throws
/// DataError("StratificationMismatch") if a patient is missing.
propensity::Stratification align_strata(const propensity::Stratification& strat, const varprep::StudyGroup& group);

csv::Table logit_fit_table(const regress::LogitFit& fit);
csv::Table stepwise_table(const regress::StepwiseResult& result);

}  // namespace strata::pipeline
