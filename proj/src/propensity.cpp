#include "strata/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "strata/error.hpp"

namespace strata::propensity {

using regress::ModelSpec;
using regress::ModelTerm;
using varprep::StudyGroup;

double score_from_eta(double eta) {
  double p = eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
  return std::clamp(p, 1e-12, 1.0 - 1e-12);
}

std::vector<double> propensity_scores(const regress::LogitFit& fit, const regress::VariableTable& table) {
  if (!fit.converged)
    throw NumericError("NotConverged", fmt::format("propensity model {} did not converge", fit.spec.to_string()));
  const Eigen::VectorXd eta = fit.linear_predictor(regress::design_matrix(table, fit.spec));
  std::vector<double> out(static_cast<std::size_t>(eta.size()));
  for (Eigen::Index i = 0; i < eta.size(); ++i) out[static_cast<std::size_t>(i)] = score_from_eta(eta[i]);
  return out;
}

std::array<std::size_t, kStrata> quintile_sizes(std::size_t n) {
  std::array<std::size_t, kStrata> sizes{};
  const std::size_t base = n / kStrata, rem = n % kStrata;
  for (std::size_t q = 0; q < kStrata; ++q) sizes[q] = base + (q >= kStrata - rem ? 1 : 0);
  return sizes;
}

Stratification stratify_quintiles(std::span<const double> scores, std::span<const cohort::PatientKey> keys) {
  if (scores.size() != keys.size()) throw DataError("LengthMismatch", "scores and keys differ in length");
  if (scores.size() < kStrata)
    throw DataError("TooFewPatients", fmt::format("{} patients cannot fill {} strata", scores.size(), kStrata));
  Stratification s;
  s.keys.assign(keys.begin(), keys.end());
  s.scores.assign(scores.begin(), scores.end());
  s.quintile.assign(scores.size(), 0);
  s.sizes = quintile_sizes(scores.size());

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return keys[a] < keys[b];
  });
  std::size_t pos = 0;
  for (std::size_t q = 0; q < kStrata; ++q) {
    s.ranges[q] = {scores[order[pos]], scores[order[pos + s.sizes[q] - 1]]};
    for (std::size_t k = 0; k < s.sizes[q]; ++k) s.quintile[order[pos++]] = static_cast<int>(q + 1);
  }
  return s;
}

std::vector<int> balance_covariates() {
  std::vector<int> v;
  for (int i = 2; i <= 56; ++i) v.push_back(i);
  return v;
}

const CovariateBalance& BalanceReport::of(int variable) const {
  for (const auto& r : rows)
    if (r.variable == variable) return r;
  throw ConfigError("UnknownVariable", fmt::format("x{} is not in the balance report", variable));
}

namespace {

void check_alignment(const StudyGroup& group, const Stratification& strat) {
  if (strat.keys.size() != group.n())
    throw DataError("StratificationMismatch",
                    fmt::format("stratification covers {} patients, group has {}", strat.keys.size(), group.n()));
  for (std::size_t i = 0; i < group.n(); ++i)
    if (strat.keys[i] != group.rows()[i].key)
      throw DataError("StratificationMismatch",
                      fmt::format("patient {} is not stratified in group order", group.rows()[i].key.to_string()));
}

std::vector<char> treated_flags(const StudyGroup& group) {
  std::vector<char> t;
  t.reserve(group.n());
  for (const auto& r : group.rows()) t.push_back(r[varprep::kTreatment] > 0);
  return t;
}

CovariateBalance balance_of(const std::vector<double>& values, const std::vector<char>& treated,
                            const std::vector<int>& quintile, int variable, bool with_pre) {
  CovariateBalance b;
  b.variable = variable;
  if (with_pre) {
    std::vector<std::vector<double>> arms(2);
    for (std::size_t i = 0; i < values.size(); ++i) arms[treated[i] ? 0 : 1].push_back(values[i]);
    if (arms[0].empty() || arms[1].empty()) {
      b.warnings.push_back("one treatment arm is empty");
    } else {
      const auto one = stats::one_way_anova(arms);
      b.f_pre = std::isnan(one.test.statistic) ? 0.0 : one.test.statistic;
      if (one.test.flag == stats::Flag::kUndefined) b.warnings.push_back("constant covariate");
      if (one.test.flag == stats::Flag::kDegenerate) b.warnings.push_back("zero within-arm variance before stratification");
    }
  }
  const auto two = stats::two_way_anova_2xk(values, treated, quintile, kStrata);
  b.f_primary = two.f_primary;
  b.f_secondary = two.f_secondary;
  b.warnings.insert(b.warnings.end(), two.warnings.begin(), two.warnings.end());
  return b;
}

}  // namespace

CovariateBalance covariate_balance(const StudyGroup& group, const Stratification& strat, int variable) {
  check_alignment(group, strat);
  return balance_of(group.column(variable), treated_flags(group), strat.quintile, variable, true);
}

BalanceReport assess_balance(const StudyGroup& group, const Stratification& strat) {
  check_alignment(group, strat);
  const auto treated = treated_flags(group);
  BalanceReport report;
  std::vector<double> pre, primary, secondary;
  for (int v : balance_covariates()) {
    report.rows.push_back(balance_of(group.column(v), treated, strat.quintile, v, true));
    pre.push_back(report.rows.back().f_pre);
    primary.push_back(report.rows.back().f_primary);
    secondary.push_back(report.rows.back().f_secondary);
  }
  report.pre = stats::five_number_summary(pre);
  report.primary = stats::five_number_summary(primary);
  report.secondary = stats::five_number_summary(secondary);
  return report;
}

std::pair<regress::LogitFit, Stratification> fit_and_stratify(const StudyGroup& group,
                                                              const regress::VariableTable& table,
                                                              const ModelSpec& spec,
                                                              const regress::LogitOptions& options) {
  const auto y = regress::to_binary01(table.column(varprep::kTreatment));
  auto fit = regress::fit_logistic(table, spec, y, options);
  const auto scores = propensity_scores(fit, table);
  const auto keys = group.keys();
  return {std::move(fit), stratify_quintiles(scores, keys)};
}

RefineResult refine_model(const StudyGroup& group, const ModelSpec& initial, const Stratification& initial_strat,
                          const RefineOptions& options) {
  check_alignment(group, initial_strat);
  const regress::VariableTable table(group);
  const auto treated = treated_flags(group);
  RefineResult result;
  result.spec = initial;
  result.strat = initial_strat;
  result.fit = regress::fit_logistic(table, initial, regress::to_binary01(table.column(varprep::kTreatment)),
                                     options.logit);
  if (!result.fit.converged)
    throw NumericError("NotConverged", fmt::format("initial model {} did not converge", initial.to_string()));

  auto f_of = [&](int v, const Stratification& s) {
    return balance_of(table.column(v), treated, s.quintile, v, false).f_primary;
  };

  for (int pass = 1; pass <= options.max_passes; ++pass) {
    std::vector<std::pair<double, int>> excluded;
    for (int v : balance_covariates())
      if (!result.spec.has_main(v)) excluded.push_back({f_of(v, result.strat), v});
    std::stable_sort(excluded.begin(), excluded.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    const auto count = static_cast<std::size_t>(
        std::ceil(options.candidate_fraction * static_cast<double>(excluded.size()) - 1e-9));
    bool changed = false;

    for (std::size_t c = 0; c < std::min(count, excluded.size()); ++c) {
      const int v = excluded[c].second;
      result.candidates.push_back(v);
      const double f_before = f_of(v, result.strat);

      if (options.significance_gate < 1.0) {
        const auto tw = stats::two_way_anova_2xk(table.column(v), treated, result.strat.quintile, kStrata);
        const double p = tw.dof_within > 0 ? tw.p_primary : (f_before > 0 ? 0.0 : 1.0);
        if (!(p < options.significance_gate)) {
          RefinementAttempt a;
          a.pass = pass;
          a.variable = v;
          a.term = ModelTerm::main(v);
          a.f_before = f_before;
          a.f_after = f_before;
          a.note = fmt::format("balanced (p = {})", csv::format_number(p));
          result.log.push_back(a);
          continue;
        }
      }

      std::vector<std::pair<ModelTerm, std::string>> forms{{ModelTerm::main(v), "main"}};
      forms.push_back({ModelTerm::square(v), "square"});
      for (int m : result.spec.main_effects())
        if (m != v) forms.push_back({ModelTerm::interaction(v, m), fmt::format("interaction(x{})", m)});

      for (const auto& [term, form] : forms) {
        RefinementAttempt a;
        a.pass = pass;
        a.variable = v;
        a.term = term;
        a.form = form;
        a.f_before = f_before;
        a.f_after = f_before;
        if (result.spec.contains(term)) {
          a.note = "already in model";
          result.log.push_back(a);
          continue;
        }
        const ModelSpec trial = result.spec.with(term);
        try {
          auto [fit, strat] = fit_and_stratify(group, table, trial, options.logit);
          a.f_after = f_of(v, strat);
          if (a.f_after < f_before) {
            a.accepted = true;
            result.spec = trial;
            result.fit = std::move(fit);
            result.strat = std::move(strat);
            changed = true;
          }
        } catch (const NumericError& e) {
          a.note = e.kind();
        }
        result.log.push_back(a);
        if (a.accepted) break;
      }
    }
    if (!changed) break;
  }
  return result;
}

std::vector<QuintileRow> strata_outcome_table(const StudyGroup& group, const Stratification& strat) {
  check_alignment(group, strat);
  std::vector<QuintileRow> rows(kStrata);
  std::array<std::array<double, 2>, kStrata> los{};
  for (std::size_t q = 0; q < kStrata; ++q) {
    rows[q].quintile = static_cast<int>(q + 1);
    rows[q].score_low = strat.ranges[q].first;
    rows[q].score_high = strat.ranges[q].second;
  }
  for (std::size_t i = 0; i < group.n(); ++i) {
    const auto& r = group.rows()[i];
    const auto q = static_cast<std::size_t>(strat.quintile[i] - 1);
    const bool t = r[varprep::kTreatment] > 0;
    ArmSummary& arm = t ? rows[q].treated : rows[q].untreated;
    ++arm.n;
    if (r[varprep::kMortality] > 0) ++arm.deaths;
    los[q][t ? 0 : 1] += r[varprep::kLengthOfStay];
  }
  for (std::size_t q = 0; q < kStrata; ++q) {
    for (int t = 0; t < 2; ++t) {
      ArmSummary& arm = t == 0 ? rows[q].treated : rows[q].untreated;
      if (arm.n == 0) continue;
      arm.mortality_pct = 100.0 * static_cast<double>(arm.deaths) / static_cast<double>(arm.n);
      arm.mean_los = los[q][static_cast<std::size_t>(t)] / static_cast<double>(arm.n);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Tables

namespace {

std::string opt(const std::optional<double>& v) { return v ? csv::format_number(*v) : ""; }

std::string join_warnings(const std::vector<std::string>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "; " : "") + w[i];
  return out;
}

}  // namespace

csv::Table strata_table(const Stratification& strat) {
  csv::Table t;
  t.header = {"subject_id", "hadm_id", "icustay_id", "score", "quintile"};
  for (std::size_t i = 0; i < strat.keys.size(); ++i) {
    const auto& k = strat.keys[i];
    t.rows.push_back({std::to_string(k.subject_id), std::to_string(k.hadm_id), std::to_string(k.icustay_id),
                      csv::format_number(strat.scores[i]), std::to_string(strat.quintile[i])});
  }
  return t;
}

Stratification strata_from_table(const csv::Table& table) {
  const auto keys = cohort::keys_from_table(table);
  const auto sc = table.column("score");
  const auto qc = table.column("quintile");
  Stratification s;
  s.keys = keys;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    auto score = csv::parse_number(table.rows[r][sc]);
    auto q = csv::parse_number(table.rows[r][qc]);
    if (!score || !q || *q < 1 || *q > kStrata || *q != std::floor(*q))
      throw DataError("InvalidStrata", fmt::format("strata line {} is malformed", r + 2));
    s.scores.push_back(*score);
    s.quintile.push_back(static_cast<int>(*q));
  }
  for (std::size_t q = 0; q < kStrata; ++q) s.ranges[q] = {1.0, 0.0};
  std::array<bool, kStrata> seen{};
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    const auto q = static_cast<std::size_t>(s.quintile[i] - 1);
    ++s.sizes[q];
    auto& r = s.ranges[q];
    if (!seen[q]) r = {s.scores[i], s.scores[i]};
    r.first = std::min(r.first, s.scores[i]);
    r.second = std::max(r.second, s.scores[i]);
    seen[q] = true;
  }
  return s;
}

csv::Table balance_table(const BalanceReport& report) {
  csv::Table t;
  t.header = {"covariate", "F_pre", "F_primary", "F_secondary", "F_main_effect", "F_interaction", "warnings"};
  for (const auto& r : report.rows) {
    t.rows.push_back({fmt::format("x{}", r.variable), csv::format_number(r.f_pre), csv::format_number(r.f_primary),
                      csv::format_number(r.f_secondary), csv::format_number(r.f_primary),
                      csv::format_number(r.f_secondary), join_warnings(r.warnings)});
  }
  return t;
}

csv::Table balance_summary_table(const BalanceReport& report) {
  csv::Table t;
  t.header = {"column", "min", "q1", "median", "q3", "max"};
  auto add = [&](const char* name, const stats::FiveNumber& f) {
    t.rows.push_back({name, csv::format_number(f.min), csv::format_number(f.q1), csv::format_number(f.median),
                      csv::format_number(f.q3), csv::format_number(f.max)});
  };
  add("F_pre", report.pre);
  add("F_primary", report.primary);
  add("F_secondary", report.secondary);
  return t;
}

csv::Table refinement_log_table(const std::vector<RefinementAttempt>& log) {
  csv::Table t;
  t.header = {"pass", "variable", "form", "term", "F_before", "F_after", "accepted", "note"};
  for (const auto& a : log) {
    t.rows.push_back({std::to_string(a.pass), fmt::format("x{}", a.variable), a.form, a.form.empty() ? "" : a.term.name(),
                      csv::format_number(a.f_before), csv::format_number(a.f_after), a.accepted ? "1" : "0", a.note});
  }
  return t;
}

csv::Table quintile_table(const std::vector<QuintileRow>& rows) {
  csv::Table t;
  t.header = {"quintile", "score_low", "score_high", "n_treated", "n_untreated", "deaths_treated",
              "deaths_untreated", "mortality_pct_treated", "mortality_pct_untreated", "mean_los_treated",
              "mean_los_untreated"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.quintile), csv::format_number(r.score_low), csv::format_number(r.score_high),
                      std::to_string(r.treated.n), std::to_string(r.untreated.n), std::to_string(r.treated.deaths),
                      std::to_string(r.untreated.deaths), opt(r.treated.mortality_pct),
                      opt(r.untreated.mortality_pct), opt(r.treated.mean_los), opt(r.untreated.mean_los)});
  }
  return t;
}

}  // namespace strata::propensity
