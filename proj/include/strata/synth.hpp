#pragma once

// Seeded synthetic ICU cohorts with planted ground truth. The generator
// emits the same flat extracts the cohort stage ingests, and records what
// every downstream stage should find: filter survivors per step, the
// expected study rows and the planted model parameters.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "strata/cohort.hpp"
#include "strata/varprep.hpp"

namespace strata::synth {

/// Treatment-assignment term: beta per standard deviation of the variable.
struct Driver {
  int variable = 0;
  double beta = 0.0;
};

struct SynthSpec {
  /// ICU stay records written to icustays, decoys included.
  std::size_t n = 200;
  std::uint64_t seed = 1;
  /// Records failing each filter step, plus the same number rejected at
  /// assembly for a missing day.
  std::size_t decoys_per_step = 1;

  double prevalence = 0.12;
  std::vector<Driver> drivers{{11, 0.8}, {41, 0.8}, {45, 0.6}};
  /// Scales how strongly the latent severity shows in every covariate.
  double severity_loading = 1.0;

  // Mortality logit, SAPS centred at its overlap-weighted mean c:
  //   a + b_saps (x5 - c) + b_age (x2 - 64)/10 + b_treat x1 + b_int x1 (x5 - c)
  double mort_intercept = -1.2;
  double mort_saps = 0.06;
  double mort_age = 0.15;
  double mort_treatment = 0.0;
  double mort_interaction = -0.043;

  // Length of stay in days: base + b_treat x1 + b_saps (x5 - c) + sd e
  double los_base = 10.0;
  double los_treatment = 2.6;
  double los_saps = 0.1;
  double los_sd = 3.0;
};

/// Throws ConfigError("InvalidSpec").
void validate(const SynthSpec& spec);

/// Drivers must be fixed before the decision day is known.
bool is_pre_decision_variable(int variable);

enum class Decoy {
  kNone,
  kNoKey,
  kReadmitted,
  kShortStay,
  kMinor,
  kNoSepsis,
  kComfortCare,
  kNoSummary,
  kPriorDiuretics,
  kIncomplete,
  kMissingDay,
};

std::string_view to_string(Decoy d);

struct Manifest {
  SynthSpec spec;
  double alpha = 0.0;        // assignment intercept found for the prevalence
  double saps_center = 0.0;  // c
  std::size_t n_study = 0;
  std::size_t n_treated = 0;
  /// Survivors per step of the default 16-step pipeline.
  std::vector<std::size_t> expected_trace;
  varprep::StudyGroup expected_group;
  std::vector<varprep::Rejection> expected_rejections;
  std::vector<std::pair<cohort::PatientKey, Decoy>> decoys;
};

struct SynthCohort {
  cohort::Extracts extracts;
  Manifest manifest;
};

SynthCohort synth_generate(const SynthSpec& spec);

/// The study rows only, without writing or re-reading extracts.
varprep::StudyGroup synth_study_group(const SynthSpec& spec);

/// Writes extracts/, truth/ and pipeline.txt under `dir`.
void write_cohort(const std::filesystem::path& dir, const SynthCohort& cohort);

csv::Table expected_trace_table(const Manifest& m);
std::string manifest_text(const Manifest& m);

}  // namespace strata::synth
