#include "strata/outcome.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "strata/error.hpp"

namespace strata::outcome {

using regress::ModelSpec;
using regress::ModelTerm;
using varprep::StudyGroup;

std::string_view evidence_band(double p) {
  if (std::isnan(p)) return "";
  if (p > 0.1) return "absence";
  if (p > 0.05) return "weak";
  if (p > 0.01) return "moderate";
  if (p >= 0.001) return "strong";
  return "very strong";
}

std::string_view to_string(ModelId id) {
  switch (id) {
    case ModelId::kAMortality: return "A.Mortality";
    case ModelId::kALos: return "A.LOS";
    case ModelId::kB: return "B";
    case ModelId::kCLessSick: return "C.LessSick";
    case ModelId::kCSicker: return "C.Sicker";
  }
  return "";
}

const TermReport& OutcomeModelReport::term(const ModelTerm& t) const {
  for (const auto& r : terms)
    if (r.term == t) return r;
  throw ConfigError("UnknownTerm", fmt::format("model {} has no term {}", to_string(id), t.name()));
}

ModelSpec model_a_spec() {
  return ModelSpec({ModelTerm::main(varprep::kTreatment), ModelTerm::main(varprep::kAge),
                    ModelTerm::main(varprep::kGender), ModelTerm::main(kSapsScore),
                    ModelTerm::main(kSofaScore), ModelTerm::main(varprep::kElixOverall),
                    ModelTerm::main(regress::kPropensityVar)});
}

ModelSpec model_b_spec() {
  return model_a_spec().with(ModelTerm::interaction(varprep::kTreatment, kSapsScore));
}

regress::VariableTable outcome_variables(const StudyGroup& group, std::span<const double> scores) {
  if (scores.size() != group.n())
    throw DataError("LengthMismatch",
                    fmt::format("{} propensity scores for {} patients", scores.size(), group.n()));
  regress::VariableTable table(group);
  table.set(regress::kPropensityVar, std::vector<double>(scores.begin(), scores.end()));
  return table;
}

namespace {

const ModelTerm kTreatmentTerm = ModelTerm::main(varprep::kTreatment);
const ModelTerm kCrossTerm = ModelTerm::interaction(varprep::kTreatment, kSapsScore);

void fill_terms(OutcomeModelReport& r, const std::vector<double>& beta, const std::vector<double>& se,
                const std::vector<stats::TestResult>& tests) {
  for (std::size_t k = 0; k < r.spec.size(); ++k) {
    TermReport t;
    t.term = r.spec.terms()[k];
    t.beta = beta[k];
    t.standard_error = se[k];
    t.statistic = tests[k].statistic;
    t.p_value = tests[k].p_value;
    t.significant = t.p_value < kAlpha;
    if (t.term == kTreatmentTerm) r.treatment_significant = t.significant;
    if (t.term == kCrossTerm) r.cross_effect_significant = t.significant;
    r.terms.push_back(t);
  }
}

}  // namespace

OutcomeModelReport fit_mortality(ModelId id, const StudyGroup& group, std::span<const double> scores,
                                 const ModelSpec& spec) {
  const auto table = outcome_variables(group, scores);
  const auto y = regress::to_binary01(table.column(varprep::kMortality));
  const auto fit = regress::fit_logistic(table, spec, y);
  OutcomeModelReport r;
  r.id = id;
  r.spec = spec;
  r.n = group.n();
  r.log_likelihood = fit.log_likelihood;
  fill_terms(r, fit.coefficients, fit.standard_errors, regress::coefficient_p_values(fit));
  return r;
}

OutcomeModelReport fit_los(ModelId id, const StudyGroup& group, std::span<const double> scores,
                           const ModelSpec& spec) {
  const auto table = outcome_variables(group, scores);
  const auto fit = regress::fit_linear(table, spec, table.column(varprep::kLengthOfStay));
  OutcomeModelReport r;
  r.id = id;
  r.spec = spec;
  r.n = group.n();
  r.log_likelihood = std::numeric_limits<double>::quiet_NaN();
  r.r_squared = fit.r_squared;
  fill_terms(r, fit.coefficients, fit.standard_errors, regress::coefficient_p_values(fit));
  return r;
}

std::pair<OutcomeModelReport, OutcomeModelReport> fit_model_a(const StudyGroup& group,
                                                              std::span<const double> scores) {
  return {fit_mortality(ModelId::kAMortality, group, scores, model_a_spec()),
          fit_los(ModelId::kALos, group, scores, model_a_spec())};
}

OutcomeModelReport fit_model_b(const StudyGroup& group, std::span<const double> scores) {
  return fit_mortality(ModelId::kB, group, scores, model_b_spec());
}

SubsetSplit split_by_median(const StudyGroup& group, std::span<const double> scores, int variable) {
  if (scores.size() != group.n())
    throw DataError("LengthMismatch", fmt::format("{} scores for {} patients", scores.size(), group.n()));
  const auto values = group.column(variable);
  if (values.empty() || std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); }))
    throw DataError("ConstantVariable", fmt::format("x{} is constant and cannot split the group", variable));
  SubsetSplit split;
  split.variable = variable;
  split.threshold = stats::median(values);
  std::vector<varprep::StudyRow> less, more;
  for (std::size_t i = 0; i < group.n(); ++i) {
    if (values[i] < split.threshold) {
      less.push_back(group.rows()[i]);
      split.less_sick_scores.push_back(scores[i]);
    } else {
      more.push_back(group.rows()[i]);
      split.sicker_scores.push_back(scores[i]);
    }
  }
  split.less_sick = StudyGroup(std::move(less));
  split.sicker = StudyGroup(std::move(more));
  return split;
}

std::pair<OutcomeModelReport, OutcomeModelReport> fit_model_c(const SubsetSplit& split) {
  auto guarded = [](ModelId id, const StudyGroup& g, const std::vector<double>& s) {
    try {
      return fit_mortality(id, g, s, model_b_spec());
    } catch (const Error& e) {
      OutcomeModelReport r;
      r.id = id;
      r.spec = model_b_spec();
      r.n = g.n();
      r.error = e.what();
      return r;
    }
  };
  return {guarded(ModelId::kCLessSick, split.less_sick, split.less_sick_scores),
          guarded(ModelId::kCSicker, split.sicker, split.sicker_scores)};
}

std::vector<StratumTest> stratified_outcome_tests(const StudyGroup& group, const propensity::Stratification& strat,
                                                  OutcomeKind kind, stats::TTestVariant variant, bool yates) {
  if (strat.quintile.size() != group.n())
    throw DataError("StratificationMismatch", "stratification does not cover the group");
  std::vector<StratumTest> out;
  for (int q = 1; q <= propensity::kStrata; ++q) {
    std::vector<double> treated, untreated;
    for (std::size_t i = 0; i < group.n(); ++i) {
      if (strat.quintile[i] != q) continue;
      const auto& r = group.rows()[i];
      const double v = kind == OutcomeKind::kMortality ? r[varprep::kMortality] : r[varprep::kLengthOfStay];
      (r[varprep::kTreatment] > 0 ? treated : untreated).push_back(v);
    }
    StratumTest t;
    t.quintile = q;
    t.n_treated = treated.size();
    t.n_untreated = untreated.size();
    if (treated.empty() || untreated.empty()) {
      t.reason = treated.empty() ? "no treated patients" : "no untreated patients";
      out.push_back(t);
      continue;
    }
    try {
      if (kind == OutcomeKind::kMortality) {
        auto dead = [](const std::vector<double>& v) {
          return static_cast<std::int64_t>(std::count_if(v.begin(), v.end(), [](double x) { return x > 0; }));
        };
        const std::int64_t dt = dead(treated), du = dead(untreated);
        t.result = stats::chi_squared_2x2(
            {{{dt, static_cast<std::int64_t>(treated.size()) - dt}, {du, static_cast<std::int64_t>(untreated.size()) - du}}},
            yates);
      } else {
        t.result = stats::t_test_two_sample(treated, untreated, variant);
      }
      t.testable = true;
      t.significant = t.result.p_value < kAlpha;
    } catch (const Error& e) {
      t.reason = e.kind();
    }
    out.push_back(t);
  }
  return out;
}

csv::Table outcome_models_table(const std::vector<OutcomeModelReport>& reports) {
  csv::Table t;
  t.header = {"model", "term", "beta", "se", "statistic", "p", "band", "significant", "n", "note"};
  for (const auto& r : reports) {
    if (r.error) {
      t.rows.push_back({std::string(to_string(r.id)), "", "", "", "", "", "", "", std::to_string(r.n), *r.error});
      continue;
    }
    for (const auto& term : r.terms) {
      t.rows.push_back({std::string(to_string(r.id)), term.term.name(), csv::format_number(term.beta),
                        csv::format_number(term.standard_error), csv::format_number(term.statistic),
                        csv::format_number(term.p_value), std::string(evidence_band(term.p_value)),
                        term.significant ? "1" : "0", std::to_string(r.n), ""});
    }
  }
  return t;
}

csv::Table stratified_tests_table(const std::vector<StratumTest>& mortality, const std::vector<StratumTest>& los) {
  csv::Table t;
  t.header = {"outcome", "quintile", "n_treated", "n_untreated", "test", "statistic", "dof", "p", "band",
              "significant", "note"};
  auto emit = [&](const char* name, const char* test, const std::vector<StratumTest>& rows) {
    for (const auto& s : rows) {
      if (!s.testable) {
        t.rows.push_back({name, std::to_string(s.quintile), std::to_string(s.n_treated),
                          std::to_string(s.n_untreated), test, "", "", "", "", "", "untestable: " + s.reason});
        continue;
      }
      t.rows.push_back({name, std::to_string(s.quintile), std::to_string(s.n_treated), std::to_string(s.n_untreated),
                        test, csv::format_number(s.result.statistic),
                        s.result.dof.empty() ? "" : csv::format_number(s.result.dof.front()),
                        csv::format_number(s.result.p_value), std::string(evidence_band(s.result.p_value)),
                        s.significant ? "1" : "0", ""});
    }
  };
  emit("mortality", "chi_squared", mortality);
  emit("los", "t", los);
  return t;
}

}  // namespace strata::outcome
