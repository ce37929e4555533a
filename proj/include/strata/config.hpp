#pragma once

// Run configuration: a flat "key = value" file, overridable key by key from
// the command line. Unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "strata/gp.hpp"
#include "strata/stats.hpp"
#include "strata/synth.hpp"
#include "strata/varprep.hpp"

namespace strata {

inline const std::vector<std::string> kAllStages{"cohort", "varprep", "propensity", "outcome", "ml"};

struct RunConfig {
  std::filesystem::path extracts_dir = "extracts";
  std::filesystem::path out_dir = "out";
  std::filesystem::path pipeline_file;  // empty: the built-in 16 steps
  std::filesystem::path group_file;     // empty: <out>/studygroup.csv
  std::filesystem::path strata_file;    // empty: <out>/strata.csv
  std::vector<std::string> stages = kAllStages;

  std::uint64_t seed = 1;
  // Named seeds fall back to `seed`.
  std::optional<std::uint64_t> synth_seed, kmeans_seed, gp_seed, split_seed;

  std::vector<std::string> naive_headings;  // empty: defaults
  varprep::TimepointPolicy timepoints;
  std::vector<int> mandatory;  // empty: x1..x58

  std::vector<int> candidates;  // empty: x2..x56
  double p_enter = 0.05;
  bool second_phase = true;
  bool squares = true;
  double refine_fraction = 0.25;
  int refine_passes = 1;
  double refine_gate = 0.05;

  stats::TTestVariant ttest = stats::TTestVariant::kWelch;
  bool yates = false;
  int split_variable = varprep::kSapsAvg;

  int kmeans_k = 4;
  evoml::GpConfig gp;
  double train_fraction = 0.7;

  synth::SynthSpec synth;

  std::uint64_t effective(const std::optional<std::uint64_t>& s) const { return s.value_or(seed); }
  std::filesystem::path group_path() const { return group_file.empty() ? out_dir / "studygroup.csv" : group_file; }
  std::filesystem::path strata_path() const { return strata_file.empty() ? out_dir / "strata.csv" : strata_file; }
  bool stage_enabled(std::string_view stage) const;
};

/// Sets one key; throws ConfigError("UnknownKey") or ("BadValue").
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Applies every "key = value" line; '#' starts a comment.
void apply_config_text(RunConfig& config, std::string_view text);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

std::vector<std::string> config_keys();

/// Every key with its effective value, one per line, in config_keys() order.
/// Path keys are left out unless `with_paths`.
std::string config_text(const RunConfig& config, bool with_paths = true);

}  // namespace strata
