#include <algorithm>
#include <cmath>
#include <random>

#include "oracles/oracles.hpp"
#include "strata/stats.hpp"
#include "support.hpp"

using namespace strata::stats;

TEST_CASE("five-number summary") {
  const std::vector<double> one{5};
  const auto a = five_number_summary(one);
  CHECK(a.min == 5);
  CHECK(a.q1 == 5);
  CHECK(a.median == 5);
  CHECK(a.q3 == 5);
  CHECK(a.max == 5);

  const std::vector<double> five{3, 1, 5, 2, 4};
  const auto b = five_number_summary(five);
  CHECK(b.min == 1);
  CHECK(b.q1 == 2);
  CHECK(b.median == 3);
  CHECK(b.q3 == 4);
  CHECK(b.max == 5);

  CHECK_KIND(five_number_summary(std::vector<double>{}), "EmptyInput");
}

TEST_CASE("quartiles match the sort oracle on random data") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> d(3, 2);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> xs(1 + rng() % 1000);
    for (auto& x : xs) x = d(rng);
    const auto f = five_number_summary(xs);
    CHECK(f.q1 == doctest::Approx(oracle::quantile(xs, 0.25)).epsilon(1e-14));
    CHECK(f.median == doctest::Approx(oracle::median(xs)).epsilon(1e-14));
    CHECK(f.q3 == doctest::Approx(oracle::quantile(xs, 0.75)).epsilon(1e-14));
    CHECK(f.min <= f.q1);
    CHECK(f.q1 <= f.median);
    CHECK(f.median <= f.q3);
    CHECK(f.q3 <= f.max);
  }
}

TEST_CASE("one-way ANOVA") {
  const auto same = one_way_anova({{1, 2, 3}, {1, 2, 3}});
  CHECK(same.test.statistic == 0.0);
  CHECK(same.test.p_value == doctest::Approx(1.0));

  const auto split = one_way_anova({{0, 0}, {1, 1}});
  CHECK(std::isinf(split.test.statistic));
  CHECK(split.test.flag == Flag::kDegenerate);

  const auto flat = one_way_anova({{2, 2}, {2, 2}});
  CHECK(std::isnan(flat.test.statistic));
  CHECK(flat.test.flag == Flag::kUndefined);

  CHECK_KIND(one_way_anova({{1, 2}}), "TooFewGroups");
  CHECK_KIND(one_way_anova({{1, 2}, {}}), "EmptyGroup");
  CHECK_KIND(one_way_anova({{1}, {2}}), "TooFewObservations");

  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0, 1);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<std::vector<double>> g(3);
    for (int i = 0; i < 3; ++i) {
      g[i].resize(2 + rng() % 30);
      for (auto& v : g[i]) v = d(rng) + 0.3 * i;
    }
    const auto r = one_way_anova(g);
    CHECK(rel_diff(r.test.statistic, oracle::one_way_f(g)) < 1e-10);
    CHECK(std::abs(r.ss_between + r.ss_within - r.ss_total) <= 1e-9 * r.ss_total);
    CHECK(r.test.dof[0] == 2);
  }
}

namespace {

struct Layout {
  std::vector<double> values;
  std::vector<char> treated;
  std::vector<int> subclass;
};

Layout random_layout(std::mt19937_64& rng, int k, int min_per_cell, int max_per_cell) {
  Layout l;
  std::normal_distribution<double> d(0, 1);
  std::uniform_int_distribution<int> size(min_per_cell, max_per_cell);
  std::uniform_real_distribution<double> effect(-1, 1);
  for (int b = 1; b <= k; ++b)
    for (int a = 0; a < 2; ++a) {
      const double shift = effect(rng);
      for (int i = size(rng); i > 0; --i) {
        l.values.push_back(shift + d(rng));
        l.treated.push_back(static_cast<char>(a));
        l.subclass.push_back(b);
      }
    }
  // Rows arrive in random order.
  std::vector<std::size_t> order(l.values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  Layout s;
  for (auto i : order) {
    s.values.push_back(l.values[i]);
    s.treated.push_back(l.treated[i]);
    s.subclass.push_back(l.subclass[i]);
  }
  return s;
}

}  // namespace

TEST_CASE("two-way ANOVA agrees with the fifteen-step oracle") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    const auto l = random_layout(rng, 5, 3, 20);
    const auto r = two_way_anova_2xk(l.values, l.treated, l.subclass, 5);
    const auto o = oracle::two_way_steps(l.values, l.treated, l.subclass, 5);
    CHECK(rel_diff(r.f_primary, o.f_a) < 1e-9);
    CHECK(rel_diff(r.f_secondary, o.f_ab) < 1e-9);
    CHECK(r.ss_between_cells >= r.ss_a - 1e-9);
    CHECK(r.ss_a >= 0);
    CHECK(r.ss_b >= 0);
    CHECK(r.ss_ab >= 0);
    CHECK(r.dof_within == static_cast<int>(l.values.size()) - 10);
  }
}

TEST_CASE("two-way ANOVA on balanced layouts reduces to the classical decomposition") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto l = random_layout(rng, 4, 6, 6);
    const auto r = two_way_anova_2xk(l.values, l.treated, l.subclass, 4);
    double grand = 0;
    for (double v : l.values) grand += v;
    grand /= static_cast<double>(l.values.size());
    double total = 0;
    for (double v : l.values) total += (v - grand) * (v - grand);
    CHECK(std::abs(r.ss_a + r.ss_b + r.ss_ab + r.ss_within - total) <= 1e-9 * total);
    CHECK(r.n_harmonic == doctest::Approx(6.0));
  }
}

TEST_CASE("two-way ANOVA boundary cases") {
  const std::vector<double> constant(12, 4.0);
  const std::vector<char> arm{0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 1};
  const std::vector<int> sub{1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2};
  const auto c = two_way_anova_2xk(constant, arm, sub, 2);
  CHECK(c.f_primary == 0.0);
  CHECK(c.f_secondary == 0.0);

  // Additive effects, noiseless.
  std::vector<double> additive;
  for (std::size_t i = 0; i < arm.size(); ++i) additive.push_back(1.0 + 2.0 * arm[i] + 5.0 * sub[i]);
  const auto a = two_way_anova_2xk(additive, arm, sub, 2);
  CHECK(a.ss_ab == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a.f_secondary == doctest::Approx(0.0));

  // A subclass without treated patients is dropped with a warning.
  const std::vector<char> arm2{0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  std::vector<double> v(12);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 5);
  const auto d = two_way_anova_2xk(v, arm2, sub, 2);
  CHECK(d.dropped_subclasses == std::vector<int>{2});
  CHECK_FALSE(d.warnings.empty());

  const std::vector<char> none(12, 0);
  CHECK_KIND(two_way_anova_2xk(v, none, sub, 2), "AllCellsEmptyForTreatment");
  CHECK_KIND(two_way_anova_2xk(v, arm, std::vector<int>(12, 3), 2), "InvalidInput");
}

TEST_CASE("two-way ANOVA invariances") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    auto l = random_layout(rng, 5, 2, 10);
    const auto r = two_way_anova_2xk(l.values, l.treated, l.subclass, 5);

    auto scaled = l.values;
    for (auto& v : scaled) v = 3.7 * v + 11.0;
    const auto s = two_way_anova_2xk(scaled, l.treated, l.subclass, 5);
    CHECK(rel_diff(r.f_primary, s.f_primary) < 1e-9);
    CHECK(rel_diff(r.f_secondary, s.f_secondary) < 1e-9);

    std::vector<std::size_t> order(l.values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    Layout p;
    for (auto i : order) {
      p.values.push_back(l.values[i]);
      p.treated.push_back(l.treated[i]);
      p.subclass.push_back(l.subclass[i]);
    }
    const auto q = two_way_anova_2xk(p.values, p.treated, p.subclass, 5);
    CHECK(rel_diff(r.f_primary, q.f_primary) < 1e-12);
    CHECK(rel_diff(r.f_secondary, q.f_secondary) < 1e-12);
  }
}

TEST_CASE("chi-squared 2x2") {
  const auto even = chi_squared_2x2({{{10, 10}, {10, 10}}});
  CHECK(even.statistic == 0.0);
  CHECK(even.p_value == doctest::Approx(1.0));

  const std::array<std::array<std::int64_t, 2>, 2> t{{{20, 10}, {10, 20}}};
  CHECK(chi_squared_2x2(t).statistic == doctest::Approx(oracle::chi2_2x2(t, false)).epsilon(1e-13));
  CHECK(chi_squared_2x2(t, true).statistic == doctest::Approx(oracle::chi2_2x2(t, true)).epsilon(1e-13));

  const std::array<std::array<std::int64_t, 2>, 2> tiny{{{1, 0}, {0, 1}}};
  CHECK(chi_squared_2x2(tiny, true).statistic < chi_squared_2x2(tiny, false).statistic);

  CHECK_KIND(chi_squared_2x2({{{0, 0}, {3, 4}}}), "ZeroMarginal");
  CHECK_KIND(chi_squared_2x2({{{0, 5}, {0, 4}}}), "ZeroMarginal");
}

TEST_CASE("two-sample t test") {
  const std::vector<double> a{1, 2, 3, 4};
  const auto same = t_test_two_sample(a, a);
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == doctest::Approx(1.0));

  const std::vector<double> x{0, 0, 0, 1}, y{1, 1, 1, 0};
  for (auto variant : {TTestVariant::kWelch, TTestVariant::kStudent}) {
    const auto r = t_test_two_sample(x, y, variant);
    const auto o = variant == TTestVariant::kWelch ? oracle::welch(x, y) : oracle::student(x, y);
    CHECK(r.statistic == doctest::Approx(o.t).epsilon(1e-13));
    CHECK(r.dof[0] == doctest::Approx(o.dof).epsilon(1e-13));
    CHECK(r.p_value == doctest::Approx(static_cast<double>(oracle::t_two_sided(o.t, o.dof))).epsilon(1e-9));
    const auto s = t_test_two_sample(y, x, variant);
    CHECK(s.statistic == doctest::Approx(-r.statistic));
    CHECK(s.p_value == doctest::Approx(r.p_value));
  }

  std::mt19937_64 rng(9);
  std::normal_distribution<double> d(0, 1);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> p(2 + rng() % 40), q(2 + rng() % 40);
    for (auto& v : p) v = d(rng);
    for (auto& v : q) v = 3 * d(rng) + 0.5;
    const auto r = t_test_two_sample(p, q);
    const auto o = oracle::welch(p, q);
    CHECK(r.statistic == doctest::Approx(o.t).epsilon(1e-12));
    CHECK(r.dof[0] == doctest::Approx(o.dof).epsilon(1e-12));
  }

  CHECK_KIND(t_test_two_sample(std::vector<double>{1}, a), "TooFewObservations");
  CHECK_KIND(t_test_two_sample(std::vector<double>{1, 1}, std::vector<double>{2, 2}), "ZeroVariance");
}

TEST_CASE("tail probabilities against quadrature") {
  CHECK(chi2_upper_tail(0.0, 1) == 1.0);
  CHECK(t_two_sided(0.0, 7) == 1.0);
  CHECK(std::abs(chi2_upper_tail(3.8415, 1) - 0.05) < 1e-4);
  CHECK(std::abs(chi2_upper_tail(3.8415, 1) - static_cast<double>(oracle::chi2_upper(3.8415L, 1))) < 1e-10);
  CHECK(f_upper_tail(std::numeric_limits<double>::infinity(), 2, 3) == 0.0);

  for (double x : {0.05, 0.4, 1.3, 2.9, 6.0, 15.0})
    for (double d : {1.0, 3.0, 12.0, 80.0}) {
      CHECK(std::abs(t_two_sided(x, d) - static_cast<double>(oracle::t_two_sided(x, d))) < 1e-8);
      CHECK(std::abs(f_upper_tail(x, d, 9) - static_cast<double>(oracle::f_upper(x, d, 9))) < 1e-8);
      CHECK(std::abs(chi2_upper_tail(x, d) - static_cast<double>(oracle::chi2_upper(x, d))) < 1e-8);
    }

  CHECK_KIND(tail_probability(Distribution::kF, 1.0, 0.0, 3.0), "InvalidDof");
  CHECK_KIND(tail_probability(Distribution::kChiSquared, 1.0, -1.0), "InvalidDof");
  CHECK_KIND(tail_probability(Distribution::kStudentT, std::nan(""), 3.0), "InvalidStatistic");
}

TEST_CASE("tail probabilities decrease in the statistic") {
  // Strict wherever the exact tails differ once rounded to double; a tail
  // that rounds to 1 on both sides can only stay equal.
  auto step = [](double cur, double prev, long double exact_cur, long double exact_prev) {
    CHECK(cur <= prev);
    if (static_cast<double>(exact_cur) < static_cast<double>(exact_prev)) CHECK(cur < prev);
  };
  for (double d : {1.0, 4.0, 25.0}) {
    double prev_x = 0;
    double prev_f = 1, prev_c = 1, prev_t = 1;
    for (double x = 0.01; x < 12; x *= 1.3) {
      const double f = f_upper_tail(x, d, 10), c = chi2_upper_tail(x, d), t = t_two_sided(x, d);
      step(f, prev_f, oracle::f_upper(x, d, 10), prev_x > 0 ? oracle::f_upper(prev_x, d, 10) : 1.0L);
      step(c, prev_c, oracle::chi2_upper(x, d), prev_x > 0 ? oracle::chi2_upper(prev_x, d) : 1.0L);
      step(t, prev_t, oracle::t_two_sided(x, d), prev_x > 0 ? oracle::t_two_sided(prev_x, d) : 1.0L);
      CHECK(f >= 0);
      CHECK(f <= 1);
      prev_x = x;
      prev_f = f;
      prev_c = c;
      prev_t = t;
    }
  }
}
