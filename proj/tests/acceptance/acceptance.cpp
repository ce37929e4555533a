// Acceptance run: one PASS/FAIL line per criterion with its measurements.
// Exits non-zero when any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles/oracles.hpp"
#include "strata/cohort.hpp"
#include "strata/csv.hpp"
#include "strata/gp.hpp"
#include "strata/outcome.hpp"
#include "strata/propensity.hpp"
#include "strata/regress.hpp"
#include "strata/stats.hpp"
#include "strata/synth.hpp"

namespace fs = std::filesystem;
using namespace strata;

namespace {

struct Verdict {
  bool ok = false;
  std::string detail;
};

Eigen::VectorXd vec(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

// Propensity model chosen by stepwise selection, then quintiles.
std::pair<regress::VariableTable, propensity::Stratification> stratify(const varprep::StudyGroup& g) {
  regress::VariableTable table(g);
  const auto cands = propensity::balance_covariates();
  const auto step = regress::stepwise_select(table, cands, regress::to_binary01(g.column(varprep::kTreatment)));
  auto [fit, strat] = propensity::fit_and_stratify(g, table, step.spec);
  return {std::move(table), std::move(strat)};
}

synth::SynthSpec study_spec(std::uint64_t seed, std::size_t n) {
  synth::SynthSpec s;
  s.seed = seed;
  s.n = n;
  s.decoys_per_step = 0;
  return s;
}

Verdict logistic_mle() {
  regress::VariableTable t;
  std::vector<double> x(200), y(200);
  for (int i = 0; i < 200; ++i) {
    x[i] = i < 100 ? 0 : 1;
    y[i] = i < 100 ? (i < 30) : (i - 100 < 60);
  }
  t.set(2, x);
  const auto sat = regress::fit_logistic(t, regress::ModelSpec::parse("1 + x2"), y);
  const double p0 = 1 / (1 + std::exp(-sat.coefficients[0]));
  const double p1 = 1 / (1 + std::exp(-(sat.coefficients[0] + sat.coefficients[1])));
  const double sat_err = std::max(std::abs(p0 - 0.3), std::abs(p1 - 0.6));

  double worst_beta = 0, worst_score = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0, 1);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> xs(5000), ys(5000);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      xs[i] = d(rng);
      ys[i] = u(rng) < 1 / (1 + std::exp(1.0 - 0.8 * xs[i])) ? 1 : 0;
    }
    regress::VariableTable tab;
    tab.set(2, xs);
    const auto spec = regress::ModelSpec::parse("1 + x2");
    const auto f = regress::fit_logistic(tab, spec, ys);
    worst_beta = std::max(worst_beta, std::abs(f.coefficients[1] - 0.8));
    const Eigen::MatrixXd m = regress::design_matrix(tab, spec);
    const Eigen::VectorXd eta = m * vec(f.coefficients);
    const Eigen::VectorXd p = (1.0 + (-eta.array()).exp()).inverse().matrix();
    worst_score = std::max(worst_score, (m.transpose() * (vec(ys) - p)).cwiseAbs().maxCoeff());
  }
  return {sat_err <= 1e-8 && worst_beta <= 0.15 && worst_score <= 1e-6,
          fmt::format("saturated error {:.2e}, max |beta - 0.8| {:.3f} over 10 seeds, max score {:.2e}", sat_err,
                      worst_beta, worst_score)};
}

Verdict anova_fidelity() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> d(0, 1);
  std::uniform_int_distribution<int> size(2, 40);
  std::uniform_real_distribution<double> effect(-2, 2);
  double worst = 0;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> values;
    std::vector<char> treated;
    std::vector<int> subclass;
    for (int b = 1; b <= 5; ++b)
      for (int a = 0; a < 2; ++a) {
        const double shift = effect(rng);
        for (int i = size(rng); i > 0; --i) {
          values.push_back(shift + d(rng));
          treated.push_back(static_cast<char>(a));
          subclass.push_back(b);
        }
      }
    const auto r = stats::two_way_anova_2xk(values, treated, subclass, 5);
    const auto o = oracle::two_way_steps(values, treated, subclass, 5);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); };
    worst = std::max({worst, rel(r.f_primary, o.f_a), rel(r.f_secondary, o.f_ab)});
  }
  return {worst <= 1e-9, fmt::format("200 layouts, max relative difference {:.2e}", worst)};
}

Verdict balance_improvement() {
  int good = 0;
  std::string ratios;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = synth::synth_study_group(study_spec(seed, 1522));
    const auto [table, strat] = stratify(g);
    const auto rep = propensity::assess_balance(g, strat);
    const double ratio = rep.primary.median / rep.pre.median;
    good += ratio <= 0.5;
    ratios += fmt::format("{}{:.3f}", ratios.empty() ? "" : " ", ratio);
  }
  return {good >= 9, fmt::format("post/pre median F ratio <= 0.5 in {}/10 seeds [{}]", good, ratios)};
}

Verdict refinement_ledger() {
  synth::SynthSpec s;
  s.seed = 11;
  s.n = 1200;
  s.prevalence = 0.3;
  s.drivers = {{11, 0.6}, {41, 0.6}, {4, 1.2}};
  const auto g = synth::synth_study_group(s);
  const regress::VariableTable table(g);
  const auto initial = regress::ModelSpec::parse("1 + x11 + x41");
  const auto [fit, strat] = propensity::fit_and_stratify(g, table, initial);
  const auto r = propensity::refine_model(g, initial, strat);
  bool planted = false;
  double before = 0, after = 0;
  for (const auto& a : r.log)
    if (a.variable == 4 && a.accepted) {
      planted = a.f_after < a.f_before;
      before = a.f_before;
      after = a.f_after;
    }

  std::size_t tried = 0, accepted = 0, seeds_with_acceptance = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto null = study_spec(100 + seed, 1200);
    null.prevalence = 0.3;
    null.drivers.clear();
    const auto h = synth::synth_study_group(null);
    const auto [tab, st] = stratify(h);
    const auto spec = regress::stepwise_select(tab, propensity::balance_covariates(),
                                               regress::to_binary01(h.column(varprep::kTreatment)))
                          .spec;
    const auto rr = propensity::refine_model(h, spec, st);
    std::size_t acc = 0;
    for (const auto& a : rr.log) acc += a.accepted;
    tried += rr.log.size();
    accepted += acc;
    seeds_with_acceptance += acc > 0;
  }
  const double rate = tried ? static_cast<double>(accepted) / static_cast<double>(tried) : 0.0;
  return {planted && rate <= 0.25,
          fmt::format("planted x4 accepted: {} (F {:.2f} -> {:.2f}); null acceptance {}/{} candidates = {:.3f}, "
                      "seeds with any acceptance {}/20",
                      planted ? "yes" : "no", before, after, accepted, tried, rate, seeds_with_acceptance)};
}

Verdict outcome_shape() {
  int los_ok = 0, mort_ok = 0, main_quiet = 0, cross_flagged = 0;
  std::string betas;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto s = study_spec(seed, 1500);
    s.prevalence = 0.3;
    const auto g = synth::synth_study_group(s);
    const auto [table, strat] = stratify(g);
    const auto [mort, los] = outcome::fit_model_a(g, strat.scores);
    const auto& b = los.term(regress::ModelTerm::main(1));
    los_ok += los.treatment_significant && std::abs(b.beta - 2.6) <= 0.3;
    betas += fmt::format("{}{:.2f}", betas.empty() ? "" : " ", b.beta);
    const auto mb = outcome::fit_model_b(g, strat.scores);
    main_quiet += !mort.treatment_significant;
    cross_flagged += mb.cross_effect_significant;
    mort_ok += !mort.treatment_significant && mb.cross_effect_significant;
  }
  return {los_ok >= 8 && mort_ok >= 7,
          fmt::format("LOS effect recovered {}/10 [beta {}]; mortality pattern {}/10 (x1 quiet {}, x1*x5 flagged {})",
                      los_ok, betas, mort_ok, main_quiet, cross_flagged)};
}

Verdict stratified_tests() {
  int exact = 0;
  std::string seen;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto s = study_spec(seed, 1522);
    s.prevalence = 0.3;
    s.los_treatment = 0;
    s.los_saps = 0;
    const auto g0 = synth::synth_study_group(s);
    const auto [table, strat] = stratify(g0);
    auto rows = g0.rows();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int q = strat.quintile[i];
      if (rows[i][varprep::kTreatment] > 0 && q % 2 == 1) rows[i][varprep::kLengthOfStay] += 6;
    }
    const varprep::StudyGroup g(rows);
    const auto tests = outcome::stratified_outcome_tests(g, strat, outcome::OutcomeKind::kLengthOfStay);
    bool ok = true;
    std::string sig;
    for (const auto& t : tests) {
      ok = ok && t.testable && t.significant == (t.quintile % 2 == 1);
      if (t.significant) sig += std::to_string(t.quintile);
    }
    exact += ok;
    seen += fmt::format("{}{}", seen.empty() ? "" : " ", sig.empty() ? "-" : sig);
  }
  return {exact >= 7, fmt::format("exactly quintiles 1,3,5 significant in {}/10 seeds [{}]", exact, seen)};
}

Verdict join_and_pipeline(const fs::path& fixture) {
  std::mt19937_64 rng(77);
  int mismatches = 0, cursor_violations = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n = static_cast<int>(rng() % 400);
    const int m = static_cast<int>(rng() % 1200);
    const int range = 1 + static_cast<int>(rng() % 500);
    std::vector<std::int64_t> raw(n);
    for (auto& v : raw) v = static_cast<std::int64_t>(rng() % range);
    std::sort(raw.begin(), raw.end());
    std::vector<std::pair<std::int64_t, int>> values(m);
    for (int i = 0; i < m; ++i) values[i] = {static_cast<std::int64_t>(rng() % range), i};
    std::stable_sort(values.begin(), values.end(), [](auto& a, auto& b) { return a.first < b.first; });
    std::vector<cohort::PatientKey> ids;
    for (auto v : raw) ids.push_back({v, 1, 1});
    cohort::JoinStats js;
    const auto got = cohort::sorted_merge_join<int>(ids, cohort::KeyComponent::kSubject, values, &js);
    const auto want = oracle::nested_loop_join(raw, values);
    for (std::size_t i = 0; i < got.size(); ++i) mismatches += got[i].rows != want[i];
    mismatches += got.size() != want.size();
    cursor_violations += js.total() > ids.size() + values.size();
  }

  const auto ex = cohort::Extracts::load_dir(fixture / "extracts");
  std::ifstream pf(fixture / "pipeline.txt");
  std::stringstream ps;
  ps << pf.rdbuf();
  const auto run = cohort::run_filter_pipeline(ex, cohort::parse_pipeline(ps.str()));
  const auto truth = csv::read_file(fixture / "truth" / "expected_trace.csv");
  bool trace_ok = truth.rows.size() == run.trace.size();
  for (std::size_t i = 0; trace_ok && i < run.trace.size(); ++i)
    trace_ok = std::to_string(run.trace[i].surviving) == truth.rows[i][1];
  return {mismatches == 0 && cursor_violations == 0 && trace_ok,
          fmt::format("200 joins: {} mismatches, {} cursor bound violations; fixture trace ({} steps) {}", mismatches,
                      cursor_violations, run.trace.size(), trace_ok ? "matches" : "differs")};
}

Verdict gp_engine() {
  const auto g = synth::synth_study_group(study_spec(3, 300));
  const std::vector<double> scores(g.n(), 0.5);
  const auto rows = evoml::gp_feature_rows(g, scores);
  std::vector<double> y;
  for (const auto& r : rows) y.push_back(r[1]);  // x2
  const double med = oracle::median(y);
  double base = 0;
  for (double v : y) base += std::abs(v - med);
  base /= static_cast<double>(y.size());

  int reached = 0;
  bool monotone = true, shallow = true, repeatable = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    evoml::GpConfig c;
    c.seed = seed;
    c.generations = 10;
    const auto run = evoml::gp_evolve(c, rows, y, evoml::GpTask::kRegress);
    reached += run.trace.back() < 0.1 * base;
    for (std::size_t i = 1; i < run.trace.size(); ++i) monotone = monotone && run.trace[i] <= run.trace[i - 1];
    shallow = shallow && run.max_depth_seen <= 17;
    if (seed <= 2) {
      const auto again = evoml::gp_evolve(c, rows, y, evoml::GpTask::kRegress);
      repeatable = repeatable && again.best == run.best && again.trace == run.trace;
    }
  }
  return {reached >= 6 && monotone && shallow && repeatable,
          fmt::format("MAE < 0.1 baseline ({:.3f}) in {}/10 seeds; trace monotone {}, depth <= 17 {}, repeatable {}",
                      base, reached, monotone, shallow, repeatable)};
}

Verdict kernel_spot_values() {
  const double lib = stats::chi2_upper_tail(3.8415, 1);
  const double ref = static_cast<double>(oracle::chi2_upper(3.8415L, 1));
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const double x = 0.05 + 0.2 * i;
    const double dof = 1 + (i % 7) * 3;
    worst = std::max(worst, std::abs(stats::t_two_sided(x, dof) - static_cast<double>(oracle::t_two_sided(x, dof))));
    worst = std::max(worst, std::abs(stats::f_upper_tail(x, 1 + i % 5, dof) -
                                     static_cast<double>(oracle::f_upper(x, 1 + i % 5, dof))));
  }
  const bool ok = std::abs(lib - 0.05) <= 1e-4 && std::abs(ref - 0.05) <= 1e-4 && std::abs(lib - ref) <= 1e-8 &&
                  worst <= 1e-8;
  return {ok, fmt::format("chi2(1) tail at 3.8415 = {:.7f} (quadrature {:.7f}); t and F grid max difference {:.2e}",
                          lib, ref, worst)};
}

std::map<std::string, std::string> bundle(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      std::ifstream f(e.path(), std::ios::binary);
      std::stringstream ss;
      ss << f.rdbuf();
      out[fs::relative(e.path(), dir).string()] = ss.str();
    }
  return out;
}

Verdict end_to_end(const fs::path& fixture) {
  const fs::path tmp = fs::temp_directory_path() / ("strata_accept_" + std::to_string(::getpid()));
  fs::remove_all(tmp);
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* name : {"a", "b"}) {
    const std::string cmd = fmt::format("\"{}\" --out \"{}\" run-all --extracts \"{}\" 2>/dev/null", STRATA_BINARY,
                                        (tmp / name).string(), (fixture / "extracts").string());
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      fs::remove_all(tmp);
      return {false, fmt::format("run-all exited with status {}", status)};
    }
    runs.push_back(bundle(tmp / name));
  }
  fs::remove_all(tmp);
  std::size_t differing = 0;
  for (const auto& [k, v] : runs[0]) differing += !runs[1].count(k) || runs[1].at(k) != v;
  const bool ok = runs[0].size() == runs[1].size() && differing == 0 && !runs[0].empty();
  return {ok, fmt::format("{} report files, {} differ", runs[0].size(), differing)};
}

}  // namespace

int main() {
  const fs::path fixture = STRATA_FIXTURE_DIR;
  struct Criterion {
    int id;
    double limit_s;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {1, 5, logistic_mle},
      {2, 10, anova_fidelity},
      {3, 30, balance_improvement},
      {4, 60, refinement_ledger},
      {5, 60, outcome_shape},
      {6, 30, stratified_tests},
      {7, 10, [&] { return join_and_pipeline(fixture); }},
      {8, 60, gp_engine},
      {9, 5, kernel_spot_values},
      {10, 0, [&] { return end_to_end(fixture); }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, fmt::format("threw: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_s <= 0 || secs < c.limit_s;
    const bool ok = v.ok && in_time;
    failed += !ok;
    std::cout << fmt::format("criterion {:2}: {}  {} ({:.2f} s{})", c.id, ok ? "PASS" : "FAIL", v.detail, secs,
                             c.limit_s > 0 ? fmt::format(", limit {:.0f} s", c.limit_s) : "")
              << std::endl;
  }
  std::cout << fmt::format("{}/{} criteria passed", criteria.size() - failed, criteria.size()) << std::endl;
  return failed == 0 ? 0 : 1;
}
