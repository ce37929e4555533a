#include "strata/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "strata/error.hpp"
#include "strata/stats.hpp"

namespace strata::pipeline {

namespace {

namespace fs = std::filesystem;

void write(const RunConfig& c, const std::string& name, const csv::Table& t) {
  fs::create_directories(c.out_dir);
  csv::write_file(c.out_dir / name, t);
}

void write_text(const RunConfig& c, const std::string& name, const std::string& text) {
  fs::create_directories(c.out_dir);
  std::ofstream f(c.out_dir / name, std::ios::binary);
  if (!f) throw DataError("WriteFailed", fmt::format("cannot write '{}'", (c.out_dir / name).string()));
  f << text;
}

std::string num(double v) { return csv::format_number(v); }

std::vector<int> candidates_of(const RunConfig& c) {
  if (!c.candidates.empty()) return c.candidates;
  return propensity::balance_covariates();
}

regress::LogitOptions logit_options() { return {}; }

std::vector<double> treatment01(const varprep::StudyGroup& group) {
  return regress::to_binary01(group.column(varprep::kTreatment));
}

void write_strata(const RunConfig& c, const varprep::StudyGroup& group, const propensity::Stratification& strat) {
  write(c, "strata.csv", propensity::strata_table(strat));
  write(c, "quintile_table.csv", propensity::quintile_table(propensity::strata_outcome_table(group, strat)));
  std::string sizes;
  for (auto n : strat.sizes) sizes += (sizes.empty() ? "" : ",") + std::to_string(n);
  write_text(c, "strata_meta.txt",
             fmt::format("patients = {}\nsizes = {}\nremainder = highest quintiles\n", strat.keys.size(), sizes));
}

}  // namespace

csv::Table logit_fit_table(const regress::LogitFit& fit) {
  csv::Table t;
  t.header = {"term", "beta", "se", "z", "p"};
  const auto tests = regress::coefficient_p_values(fit);
  for (std::size_t k = 0; k < fit.spec.size(); ++k)
    t.rows.push_back({fit.spec.terms()[k].name(), num(fit.coefficients[k]), num(fit.standard_errors[k]),
                      num(tests[k].statistic), num(tests[k].p_value)});
  return t;
}

csv::Table stepwise_table(const regress::StepwiseResult& result) {
  csv::Table t;
  t.header = {"step", "phase", "term", "lr_statistic", "p", "log_likelihood"};
  for (std::size_t i = 0; i < result.entries.size(); ++i) {
    const auto& e = result.entries[i];
    t.rows.push_back({std::to_string(i + 1), std::to_string(e.phase), e.term.name(), num(e.lr_statistic),
                      num(e.p_value), num(e.log_likelihood)});
  }
  return t;
}

cohort::PipelineResult run_cohort(const RunConfig& config) {
  const auto extracts = cohort::Extracts::load_dir(config.extracts_dir);
  const auto spec = config.pipeline_file.empty() ? cohort::parse_pipeline(cohort::default_pipeline_text())
                                                 : cohort::read_pipeline(config.pipeline_file);
  cohort::PipelineOptions options;
  if (!config.naive_headings.empty()) options.naive.headings = config.naive_headings;
  auto result = cohort::run_filter_pipeline(extracts, spec, options);
  write(config, "cohort_trace.csv", cohort::trace_table(result.trace));
  write(config, "cohort_keys.csv", cohort::keys_table(result.final_keys));
  return result;
}

varprep::AssemblyResult run_varprep(const RunConfig& config, const std::vector<cohort::PatientKey>& keys) {
  const auto extracts = cohort::Extracts::load_dir(config.extracts_dir);
  const auto joined = varprep::join_extracts(keys, extracts);
  varprep::AssemblyOptions options;
  options.timepoints = config.timepoints;
  options.mandatory = config.mandatory;
  auto result = varprep::assemble_study_group(joined, options);
  write(config, "studygroup.csv", varprep::study_group_table(result.group));
  write(config, "rejections.csv", varprep::rejections_table(result.rejected));
  return result;
}

regress::StepwiseResult propensity_fit(const RunConfig& config, const varprep::StudyGroup& group) {
  const regress::VariableTable table(group);
  regress::StepwiseOptions options;
  options.p_enter = config.p_enter;
  options.second_phase = config.second_phase;
  options.squares = config.squares;
  const auto candidates = candidates_of(config);
  auto result = regress::stepwise_select(table, candidates, treatment01(group), options);
  write(config, "stepwise.csv", stepwise_table(result));
  write(config, "propensity_fit.csv", logit_fit_table(result.fit));
  std::string warnings;
  for (const auto& w : result.warnings) warnings += "# " + w + "\n";
  write_text(config, "propensity_model.txt", fmt::format("{}model = {}\n", warnings, result.spec.to_string()));
  return result;
}

propensity::Stratification propensity_stratify(const RunConfig& config, const varprep::StudyGroup& group,
                                               const regress::ModelSpec& spec) {
  const regress::VariableTable table(group);
  auto [fit, strat] = propensity::fit_and_stratify(group, table, spec, logit_options());
  write_strata(config, group, strat);
  return strat;
}

propensity::BalanceReport propensity_balance(const RunConfig& config, const varprep::StudyGroup& group,
                                             const propensity::Stratification& strat, const std::string& file) {
  auto report = propensity::assess_balance(group, align_strata(strat, group));
  write(config, file, propensity::balance_table(report));
  const auto stem = file.substr(0, file.rfind('.'));
  write(config, stem + "_summary.csv", propensity::balance_summary_table(report));
  return report;
}

propensity::RefineResult propensity_refine(const RunConfig& config, const varprep::StudyGroup& group,
                                           const regress::ModelSpec& initial) {
  const regress::VariableTable table(group);
  auto [fit, strat] = propensity::fit_and_stratify(group, table, initial, logit_options());
  propensity::RefineOptions options;
  options.candidate_fraction = config.refine_fraction;
  options.max_passes = config.refine_passes;
  options.significance_gate = config.refine_gate;
  auto result = propensity::refine_model(group, initial, strat, options);
  write(config, "refinement_log.csv", propensity::refinement_log_table(result.log));
  write_strata(config, group, result.strat);
  write(config, "propensity_final_fit.csv", logit_fit_table(result.fit));
  return result;
}

propensity::Stratification run_propensity(const RunConfig& config, const varprep::StudyGroup& group) {
  const auto initial = propensity_fit(config, group);
  const regress::VariableTable table(group);
  auto [fit, strat] = propensity::fit_and_stratify(group, table, initial.spec, logit_options());
  propensity_balance(config, group, strat, "balance_initial.csv");
  auto refined = propensity_refine(config, group, initial.spec);
  propensity_balance(config, group, refined.strat, "balance.csv");
  write_text(config, "propensity_model.txt",
             fmt::format("initial = {}\nfinal = {}\n", initial.spec.to_string(), refined.spec.to_string()));
  return refined.strat;
}

propensity::Stratification align_strata(const propensity::Stratification& strat, const varprep::StudyGroup& group) {
  if (strat.keys.size() == group.n() && strat.keys == group.keys()) return strat;
  std::map<cohort::PatientKey, std::size_t> at;
  for (std::size_t i = 0; i < strat.keys.size(); ++i) at[strat.keys[i]] = i;
  propensity::Stratification out = strat;
  out.keys.clear();
  out.scores.clear();
  out.quintile.clear();
  for (const auto& k : group.keys()) {
    auto it = at.find(k);
    if (it == at.end())
      throw DataError("StratificationMismatch", fmt::format("patient {} has no stratum", k.to_string()));
    out.keys.push_back(k);
    out.scores.push_back(strat.scores[it->second]);
    out.quintile.push_back(strat.quintile[it->second]);
  }
  return out;
}

void run_outcome(const RunConfig& config, const varprep::StudyGroup& group,
                 const propensity::Stratification& strat_in) {
  const auto strat = align_strata(strat_in, group);
  std::vector<outcome::OutcomeModelReport> reports;
  auto [a_mort, a_los] = outcome::fit_model_a(group, strat.scores);
  reports.push_back(a_mort);
  reports.push_back(a_los);
  reports.push_back(outcome::fit_model_b(group, strat.scores));
  const auto split = outcome::split_by_median(group, strat.scores, config.split_variable);
  auto [less, more] = outcome::fit_model_c(split);
  reports.push_back(less);
  reports.push_back(more);
  write(config, "outcome_models.csv", outcome::outcome_models_table(reports));
  const auto mort = outcome::stratified_outcome_tests(group, strat, outcome::OutcomeKind::kMortality, config.ttest,
                                                      config.yates);
  const auto los = outcome::stratified_outcome_tests(group, strat, outcome::OutcomeKind::kLengthOfStay, config.ttest,
                                                     config.yates);
  write(config, "stratified_tests.csv", outcome::stratified_tests_table(mort, los));
  write_text(config, "outcome_split.txt",
             fmt::format("variable = x{}\nthreshold = {}\nless_sick = {}\nsicker = {}\n"
                         "cross_term = x1*x5 on raw x5, uncentred; its p-value depends on the centring\n",
                         split.variable, num(split.threshold), split.less_sick.n(), split.sicker.n()));
}

evoml::KMeansResult ml_kmeans(const RunConfig& config, const varprep::StudyGroup& group) {
  const auto points = evoml::standardize(evoml::feature_points(group, evoml::kmeans_features()));
  auto result = evoml::kmeans_cluster(points, config.kmeans_k, config.effective(config.kmeans_seed));
  write(config, "clusters.csv", evoml::clusters_table(group, result));
  std::string features;
  for (int v : evoml::kmeans_features()) features += fmt::format("{}x{}", features.empty() ? "" : ",", v);
  write_text(config, "clusters_meta.txt",
             fmt::format("k = {}\nfeatures = {}\nscaling = z-score per feature\niterations = {}\ninertia = {}\n",
                         result.k, features, result.iterations, num(result.inertia)));
  return result;
}

GpOutcome train_gp(const RunConfig& config, const std::string& label, const varprep::StudyGroup& group,
                   std::span<const double> scores, evoml::GpTask task) {
  GpOutcome out;
  out.group = label;
  out.task = task;
  out.rows = evoml::gp_feature_rows(group, scores);
  out.targets = group.column(task == evoml::GpTask::kClassify ? varprep::kMortality : varprep::kLengthOfStay);
  out.split = evoml::train_test_split(group.n(), config.effective(config.split_seed), config.train_fraction);
  if (out.split.train.empty()) throw DataError("EmptyInput", fmt::format("group '{}' has no training rows", label));
  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  for (auto i : out.split.train) {
    rows.push_back(out.rows[i]);
    targets.push_back(out.targets[i]);
  }
  evoml::GpConfig gp = config.gp;
  gp.seed = config.effective(config.gp_seed);
  out.run = evoml::gp_evolve(gp, rows, targets, task);
  return out;
}

namespace {

std::string task_name(evoml::GpTask t) { return t == evoml::GpTask::kClassify ? "mortality" : "los"; }

struct GpTables {
  csv::Table runs{{"group", "task", "generation", "best_fitness"}, {}};
  csv::Table models{{"group", "task", "expression", "depth", "size", "train_fitness"}, {}};
  csv::Table class_metrics{{"group", "split", "n", "success_rate", "tp", "tn", "fp", "fn", "sensitivity_paper",
                            "specificity_paper", "sensitivity_std", "specificity_std"},
                           {}};
  csv::Table los_metrics{{"group", "split", "n", "mae", "baseline_mae"}, {}};
  csv::Table simulated{{"group", "task", "untreated", "treated"}, {}};

  void add(const GpOutcome& g) {
    const auto trace = evoml::gp_run_table(g.run);
    for (const auto& r : trace.rows) runs.rows.push_back({g.group, task_name(g.task), r[0], r[1]});
    models.rows.push_back({g.group, task_name(g.task), g.run.best.to_string(evoml::gp_feature_names()),
                           std::to_string(g.run.best.depth()), std::to_string(g.run.best.size()),
                           num(g.run.trace.back())});
    auto subset = [&](const std::vector<std::size_t>& idx) {
      std::pair<std::vector<std::vector<double>>, std::vector<double>> s;
      for (auto i : idx) {
        s.first.push_back(g.rows[i]);
        s.second.push_back(g.targets[i]);
      }
      return s;
    };
    const auto [train_rows, train_y] = subset(g.split.train);
    const auto [test_rows, test_y] = subset(g.split.test);
    if (g.task == evoml::GpTask::kClassify) {
      const auto tr = evoml::classification_metrics(g.run.best, train_rows, train_y);
      const auto te = evoml::classification_metrics(g.run.best, test_rows, test_y);
      const auto t = evoml::gp_metrics_table(tr, te);
      for (const auto& r : t.rows) {
        std::vector<std::string> row{g.group};
        row.insert(row.end(), r.begin(), r.end());
        class_metrics.rows.push_back(std::move(row));
      }
    } else {
      const double med = train_y.empty() ? 0.0 : stats::median(train_y);
      auto mae = [&](const std::vector<std::vector<double>>& rows, const std::vector<double>& y, bool baseline) {
        if (y.empty()) return std::string();
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i)
          s += std::fabs((baseline ? med : evoml::predict(g.run.best, rows[i], g.task)) - y[i]);
        return num(s / static_cast<double>(y.size()));
      };
      los_metrics.rows.push_back({g.group, "train", std::to_string(train_y.size()), mae(train_rows, train_y, false),
                                  mae(train_rows, train_y, true)});
      los_metrics.rows.push_back({g.group, "test", std::to_string(test_y.size()), mae(test_rows, test_y, false),
                                  mae(test_rows, test_y, true)});
    }
    const auto cf = evoml::simulate_counterfactual(g.run.best, g.rows, 0, g.task, evoml::gp_feature_products());
    if (g.task == evoml::GpTask::kClassify)
      simulated.rows.push_back({g.group, task_name(g.task), num(100.0 * cf.positive_rate_untreated),
                                num(100.0 * cf.positive_rate_treated)});
    else
      simulated.rows.push_back({g.group, task_name(g.task), num(cf.mean_untreated), num(cf.mean_treated)});
  }

  void write_all(const RunConfig& c) const {
    write(c, "gp_run.csv", runs);
    write(c, "gp_models.csv", models);
    if (!class_metrics.rows.empty()) write(c, "gp_metrics.csv", class_metrics);
    if (!los_metrics.rows.empty()) write(c, "gp_los_metrics.csv", los_metrics);
    write(c, "simulated.csv", simulated);
  }
};

csv::Table counterfactual_both(const varprep::StudyGroup& group, const GpOutcome& mort, const GpOutcome& los) {
  const auto cm = evoml::simulate_counterfactual(mort.run.best, mort.rows, 0, mort.task, evoml::gp_feature_products());
  const auto cl = evoml::simulate_counterfactual(los.run.best, los.rows, 0, los.task, evoml::gp_feature_products());
  csv::Table t;
  t.header = {"subject_id", "hadm_id", "icustay_id", "mortality_untreated", "mortality_treated", "los_untreated",
              "los_treated"};
  for (std::size_t i = 0; i < group.n(); ++i) {
    const auto& k = group.rows()[i].key;
    t.rows.push_back({std::to_string(k.subject_id), std::to_string(k.hadm_id), std::to_string(k.icustay_id),
                      num(cm.untreated[i]), num(cm.treated[i]), num(cl.untreated[i]), num(cl.treated[i])});
  }
  return t;
}

std::vector<double> scores_of(const varprep::StudyGroup& sub, const varprep::StudyGroup& group,
                              const propensity::Stratification& strat) {
  (void)group;
  return align_strata(strat, sub).scores;
}

}  // namespace

void ml_gp(const RunConfig& config, const varprep::StudyGroup& group, const propensity::Stratification& strat_in,
           evoml::GpTask task) {
  const auto strat = align_strata(strat_in, group);
  GpTables tables;
  tables.add(train_gp(config, "dataset", group, strat.scores, task));
  tables.write_all(config);
}

void ml_simulate(const RunConfig& config, const varprep::StudyGroup& group,
                 const propensity::Stratification& strat_in) {
  const auto strat = align_strata(strat_in, group);
  GpTables tables;
  const auto mort = train_gp(config, "dataset", group, strat.scores, evoml::GpTask::kClassify);
  const auto los = train_gp(config, "dataset", group, strat.scores, evoml::GpTask::kRegress);
  tables.add(mort);
  tables.add(los);
  tables.write_all(config);
  write(config, "counterfactual.csv", counterfactual_both(group, mort, los));
}

void run_ml(const RunConfig& config, const varprep::StudyGroup& group, const propensity::Stratification& strat_in) {
  const auto strat = align_strata(strat_in, group);
  const auto clusters = ml_kmeans(config, group);

  std::vector<std::pair<std::string, varprep::StudyGroup>> groups;
  groups.emplace_back("dataset", group);
  for (int c = 0; c < clusters.k; ++c) {
    std::vector<varprep::StudyRow> rows;
    for (std::size_t i = 0; i < group.n(); ++i)
      if (clusters.assignment[i] == c) rows.push_back(group.rows()[i]);
    groups.emplace_back(fmt::format("cluster{}", c + 1), varprep::StudyGroup(std::move(rows)));
  }
  const auto split = outcome::split_by_median(group, strat.scores, config.split_variable);
  groups.emplace_back("less_sick", split.less_sick);
  groups.emplace_back("sicker", split.sicker);

  GpTables tables;
  for (const auto& [label, g] : groups) {
    if (g.n() < 2) continue;
    const auto scores = scores_of(g, group, strat);
    const auto mort = train_gp(config, label, g, scores, evoml::GpTask::kClassify);
    const auto los = train_gp(config, label, g, scores, evoml::GpTask::kRegress);
    tables.add(mort);
    tables.add(los);
    if (label == "dataset") write(config, "counterfactual.csv", counterfactual_both(g, mort, los));
  }
  tables.write_all(config);
}

void run_all(const RunConfig& config, std::ostream& log) {
  auto stage = [&](const std::string& name, auto&& body) {
    log << fmt::format("stage {}\n", name);
    try {
      return body();
    } catch (const Error& e) {
      const std::string what = e.what();
      const std::string detail = what.size() > e.kind().size() + 2 ? what.substr(e.kind().size() + 2) : what;
      throw Error(e.error_class(), e.kind(), fmt::format("stage {}: {}", name, detail));
    } catch (const std::exception& e) {
      throw DataError("StageFailure", fmt::format("stage {}: {}", name, e.what()));
    }
  };

  fs::create_directories(config.out_dir);
  write_text(config, "config_used.txt", config_text(config, false));

  std::vector<cohort::PatientKey> keys;
  if (config.stage_enabled("cohort")) {
    if (!fs::is_directory(config.extracts_dir))
      throw ConfigError("MissingPath",
                        fmt::format("stage cohort: extracts directory '{}' does not exist", config.extracts_dir.string()));
    keys = stage("cohort", [&] { return run_cohort(config).final_keys; });
  }

  std::optional<varprep::StudyGroup> group;
  if (config.stage_enabled("varprep")) {
    if (!config.stage_enabled("cohort")) {
      keys = stage("varprep", [&] {
        const auto p = config.out_dir / "cohort_keys.csv";
        if (!fs::exists(p)) throw ConfigError("MissingPath", fmt::format("'{}' does not exist", p.string()));
        return cohort::keys_from_table(csv::read_file(p));
      });
    }
    group = stage("varprep", [&] { return run_varprep(config, keys).group; });
  }
  auto need_group = [&](const std::string& name) -> const varprep::StudyGroup& {
    if (!group) {
      group = stage(name, [&] {
        const auto p = config.group_path();
        if (!fs::exists(p)) throw ConfigError("MissingPath", fmt::format("study group '{}' does not exist", p.string()));
        return varprep::study_group_from_table(csv::read_file(p));
      });
    }
    return *group;
  };

  std::optional<propensity::Stratification> strat;
  if (config.stage_enabled("propensity")) {
    const auto& g = need_group("propensity");
    strat = stage("propensity", [&] { return run_propensity(config, g); });
  }
  auto need_strat = [&](const std::string& name) -> const propensity::Stratification& {
    if (!strat) {
      strat = stage(name, [&] {
        const auto p = config.strata_path();
        if (!fs::exists(p)) throw ConfigError("MissingPath", fmt::format("strata file '{}' does not exist", p.string()));
        return propensity::strata_from_table(csv::read_file(p));
      });
    }
    return *strat;
  };

  if (config.stage_enabled("outcome")) {
    const auto& g = need_group("outcome");
    const auto& s = need_strat("outcome");
    stage("outcome", [&] { run_outcome(config, g, s); });
  }
  if (config.stage_enabled("ml")) {
    const auto& g = need_group("ml");
    const auto& s = need_strat("ml");
    stage("ml", [&] { run_ml(config, g, s); });
  }
  log << "done\n";
}

}  // namespace strata::pipeline
