#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "strata/config.hpp"
#include "strata/error.hpp"
#include "strata/pipeline.hpp"
#include "strata/synth.hpp"

namespace fs = std::filesystem;
using namespace strata;

namespace {

struct Globals {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string stages;
  std::vector<std::string> settings;
};

struct Inputs {
  std::string extracts, pipeline, trace_out, keys, group, strata, model, model_file;
  std::optional<int> n;
};

RunConfig make_config(const Globals& g, const Inputs& in) {
  RunConfig c;
  if (!g.config_file.empty()) apply_config_file(c, g.config_file);
  for (const auto& s : g.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("BadValue", fmt::format("--set expects key=value, got '{}'", s));
    apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
  }
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.out_dir = g.out;
  if (!g.stages.empty()) apply_setting(c, "stages", g.stages);
  if (!in.extracts.empty()) c.extracts_dir = in.extracts;
  if (!in.pipeline.empty()) c.pipeline_file = in.pipeline;
  if (!in.group.empty()) c.group_file = in.group;
  if (!in.strata.empty()) c.strata_file = in.strata;
  if (in.n) apply_setting(c, "synth_n", std::to_string(*in.n));
  return c;
}

varprep::StudyGroup load_group(const RunConfig& c) {
  const auto p = c.group_path();
  if (!fs::exists(p)) throw ConfigError("MissingPath", fmt::format("study group '{}' does not exist", p.string()));
  return varprep::study_group_from_table(csv::read_file(p));
}

propensity::Stratification load_strata(const RunConfig& c) {
  const auto p = c.strata_path();
  if (!fs::exists(p)) throw ConfigError("MissingPath", fmt::format("strata file '{}' does not exist", p.string()));
  return propensity::strata_from_table(csv::read_file(p));
}

regress::ModelSpec load_model(const RunConfig& c, const Inputs& in) {
  if (!in.model.empty()) return regress::ModelSpec::parse(in.model);
  fs::path p = in.model_file.empty() ? c.out_dir / "propensity_model.txt" : fs::path(in.model_file);
  std::ifstream f(p);
  if (!f) throw ConfigError("MissingPath", fmt::format("model file '{}' does not exist", p.string()));
  // Last "name = spec" line wins, so a refined file yields the final model.
  std::string line, found;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    found = eq == std::string::npos ? line : line.substr(eq + 1);
  }
  if (found.empty()) throw ConfigError("BadValue", fmt::format("no model in '{}'", p.string()));
  return regress::ModelSpec::parse(found);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Propensity-score stratification toolkit for ICU cohort studies"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  Inputs in;
  app.add_option("--config", g.config_file, "key = value configuration file");
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--stages", g.stages, "comma-separated stages for run-all");
  app.add_option("--set", g.settings, "override one configuration key (key=value)");

  std::function<void(const RunConfig&)> action;

  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort with its ground truth");
  synth->add_option("--n", in.n, "records to generate");
  synth->callback([&] {
    action = [](const RunConfig& c) {
      auto spec = c.synth;
      spec.seed = c.effective(c.synth_seed);
      synth::write_cohort(c.out_dir, synth::synth_generate(spec));
    };
  });

  auto* cohort = app.add_subcommand("cohort", "cohort extraction")->require_subcommand(1);
  auto* cohort_run = cohort->add_subcommand("run", "run the filter pipeline");
  cohort_run->add_option("--pipeline", in.pipeline, "pipeline definition file");
  cohort_run->add_option("--extracts", in.extracts, "extracts directory");
  cohort_run->add_option("--trace-out", in.trace_out, "write the filter trace here as well");
  cohort_run->callback([&] {
    action = [&](const RunConfig& c) {
      const auto r = pipeline::run_cohort(c);
      if (!in.trace_out.empty()) csv::write_file(in.trace_out, cohort::trace_table(r.trace));
    };
  });

  auto* varprep = app.add_subcommand("varprep", "covariate preparation")->require_subcommand(1);
  auto* varprep_run = varprep->add_subcommand("run", "join extracts and assemble the study group");
  varprep_run->add_option("--extracts", in.extracts, "extracts directory");
  varprep_run->add_option("--keys", in.keys, "cohort keys (default <out>/cohort_keys.csv)");
  varprep_run->callback([&] {
    action = [&](const RunConfig& c) {
      const fs::path p = in.keys.empty() ? c.out_dir / "cohort_keys.csv" : fs::path(in.keys);
      if (!fs::exists(p)) throw ConfigError("MissingPath", fmt::format("keys file '{}' does not exist", p.string()));
      pipeline::run_varprep(c, cohort::keys_from_table(csv::read_file(p)));
    };
  });

  auto* prop = app.add_subcommand("propensity", "propensity model and stratification")->require_subcommand(1);
  auto add_group = [&](CLI::App* s) { s->add_option("--group", in.group, "studygroup.csv"); };
  auto add_strata = [&](CLI::App* s) { s->add_option("--strata", in.strata, "strata.csv"); };
  auto add_model = [&](CLI::App* s) {
    s->add_option("--model", in.model, "model formula, e.g. \"1 + x2 + x5*x10\"");
    s->add_option("--model-file", in.model_file, "file holding the model (default <out>/propensity_model.txt)");
  };
  auto* p_fit = prop->add_subcommand("fit", "stepwise propensity model");
  add_group(p_fit);
  p_fit->callback([&] { action = [](const RunConfig& c) { pipeline::propensity_fit(c, load_group(c)); }; });
  auto* p_strat = prop->add_subcommand("stratify", "scores and quintiles for a model");
  add_group(p_strat);
  add_model(p_strat);
  p_strat->callback([&] {
    action = [&](const RunConfig& c) { pipeline::propensity_stratify(c, load_group(c), load_model(c, in)); };
  });
  auto* p_bal = prop->add_subcommand("balance", "covariate balance within strata");
  add_group(p_bal);
  add_strata(p_bal);
  p_bal->callback([&] {
    action = [](const RunConfig& c) { pipeline::propensity_balance(c, load_group(c), load_strata(c)); };
  });
  auto* p_ref = prop->add_subcommand("refine", "balance-driven model refinement");
  add_group(p_ref);
  add_model(p_ref);
  p_ref->callback([&] {
    action = [&](const RunConfig& c) {
      const auto group = load_group(c);
      const auto r = pipeline::propensity_refine(c, group, load_model(c, in));
      pipeline::propensity_balance(c, group, r.strat);
    };
  });

  auto* outc = app.add_subcommand("outcome", "outcome analysis")->require_subcommand(1);
  auto* o_run = outc->add_subcommand("run", "outcome models and stratified tests");
  add_group(o_run);
  add_strata(o_run);
  o_run->callback([&] {
    action = [](const RunConfig& c) { pipeline::run_outcome(c, load_group(c), load_strata(c)); };
  });

  auto* ml = app.add_subcommand("ml", "clustering and genetic programming")->require_subcommand(1);
  auto* m_km = ml->add_subcommand("kmeans", "k-means clusters");
  add_group(m_km);
  m_km->callback([&] { action = [](const RunConfig& c) { pipeline::ml_kmeans(c, load_group(c)); }; });
  auto* m_gc = ml->add_subcommand("gp-classify", "GP mortality classifier");
  auto* m_gr = ml->add_subcommand("gp-regress", "GP length-of-stay regression");
  auto* m_sim = ml->add_subcommand("simulate", "counterfactual simulation with both GP models");
  for (auto* s : {m_gc, m_gr, m_sim}) {
    add_group(s);
    add_strata(s);
  }
  m_gc->callback([&] {
    action = [](const RunConfig& c) {
      pipeline::ml_gp(c, load_group(c), load_strata(c), evoml::GpTask::kClassify);
    };
  });
  m_gr->callback([&] {
    action = [](const RunConfig& c) {
      pipeline::ml_gp(c, load_group(c), load_strata(c), evoml::GpTask::kRegress);
    };
  });
  m_sim->callback([&] {
    action = [](const RunConfig& c) { pipeline::ml_simulate(c, load_group(c), load_strata(c)); };
  });

  auto* all = app.add_subcommand("run-all", "every enabled stage in order");
  all->add_option("--extracts", in.extracts, "extracts directory");
  all->add_option("--pipeline", in.pipeline, "pipeline definition file");
  all->callback([&] { action = [](const RunConfig& c) { pipeline::run_all(c, std::cerr); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::kConfig);
  }

  try {
    action(make_config(g, in));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(exit_code_for(e));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}
