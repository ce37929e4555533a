#include "oracles/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace oracle {

namespace {

using LD = long double;
using Fn = std::function<LD(LD)>;

// Gauss-Kronrod 7/15 nodes and weights.
constexpr LD kXgk[8] = {0.991455371120812639206854697526329L, 0.949107912342758524526189684047851L,
                        0.864864423359769072789712788640926L, 0.741531185599394439863864773280788L,
                        0.586087235467691130294144845693013L, 0.405845151377397166906606412076961L,
                        0.207784955007898467600689403773245L, 0.000000000000000000000000000000000L};
constexpr LD kWgk[8] = {0.022935322010529224963732008058970L, 0.063092092629978553290700663189204L,
                        0.104790010322250183839876322541518L, 0.140653259715525918745189590510238L,
                        0.169004726639267902826583426598550L, 0.190350578064785409913256402421014L,
                        0.204432940075298892414161999234649L, 0.209482141084727828012999174891714L};
constexpr LD kWg[4] = {0.129484966168869693270611432679082L, 0.279705391489276667901467771423780L,
                       0.381830050505118944950369775488975L, 0.417959183673469387755102040816327L};

std::pair<LD, LD> gk15(const Fn& f, LD a, LD b) {
  const LD c = 0.5L * (a + b), h = 0.5L * (b - a);
  const LD fc = f(c);
  LD kron = fc * kWgk[7];
  LD gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const LD x = h * kXgk[j];
    const LD s = f(c - x) + f(c + x);
    kron += kWgk[j] * s;
    if (j % 2 == 1) gauss += kWg[j / 2] * s;
  }
  return {kron * h, std::fabs((kron - gauss) * h)};
}

LD adaptive(const Fn& f, LD a, LD b, LD tol, int depth) {
  auto [v, err] = gk15(f, a, b);
  if (err <= tol || depth > 40) return v;
  const LD m = 0.5L * (a + b);
  const LD half = std::max(tol * 0.5L, 1e-24L);
  return adaptive(f, a, m, half, depth + 1) + adaptive(f, m, b, half, depth + 1);
}

// Integral of f over [x, inf) through t = x / s^2, which keeps the
// integrand bounded for tails as heavy as t^(-3/2).
LD upper_integral(const Fn& f, LD x) {
  auto g = [&](LD s) -> LD {
    if (s <= 0.0L) return 0.0L;
    const LD v = 2.0L * x * f(x / (s * s)) / (s * s * s);
    return std::isfinite(v) ? v : 0.0L;
  };
  LD total = 0.0L;
  const LD cuts[] = {0.0L, 0.01L, 0.05L, 0.1L, 0.2L, 0.35L, 0.5L, 0.7L, 0.85L, 1.0L};
  for (int i = 0; i + 1 < 10; ++i) total += adaptive(g, cuts[i], cuts[i + 1], 1e-19L, 0);
  return total;
}

LD integral(const Fn& f, LD a, LD b) {
  LD total = 0.0L;
  const int pieces = 16;
  for (int i = 0; i < pieces; ++i) {
    const LD lo = a + (b - a) * i / pieces, hi = a + (b - a) * (i + 1) / pieces;
    total += adaptive(f, lo, hi, 1e-18L, 0);
  }
  return total;
}

LD chi2_density(LD x, LD k) {
  if (x <= 0) return 0.0L;
  return std::exp((k / 2 - 1) * std::log(x) - x / 2 - (k / 2) * std::log(2.0L) - std::lgamma(k / 2));
}

LD f_density(LD x, LD d1, LD d2) {
  if (x <= 0) return 0.0L;
  const LD lb = std::lgamma(d1 / 2) + std::lgamma(d2 / 2) - std::lgamma((d1 + d2) / 2);
  return std::exp((d1 / 2) * std::log(d1 / d2) + (d1 / 2 - 1) * std::log(x) -
                  ((d1 + d2) / 2) * std::log1p(d1 * x / d2) - lb);
}

LD t_density(LD t, LD v) {
  return std::exp(std::lgamma((v + 1) / 2) - std::lgamma(v / 2) - 0.5L * std::log(v * 3.14159265358979323846264338L) -
                  ((v + 1) / 2) * std::log1p(t * t / v));
}

// Upper tails of densities singular at 0 are taken as 1 minus the lower
// integral when the point lies in the body of the distribution.
LD tail(const Fn& dens, LD x, LD body) {
  if (x <= 0) return 1.0L;
  if (x < body) {
    // Split off [0, e] where the density may be singular; substitute
    // x = s^2 there so the integrand is bounded.
    const LD e = std::min<LD>(x, 1e-2L);
    auto g = [&](LD s) { return 2 * s * dens(s * s); };
    const LD lower = integral(g, 0.0L, std::sqrt(e)) + (x > e ? integral(dens, e, x) : 0.0L);
    return 1.0L - lower;
  }
  return upper_integral(dens, x);
}

}  // namespace

long double chi2_upper(long double x, long double dof) {
  return tail([dof](LD v) { return chi2_density(v, dof); }, x, dof);
}

long double f_upper(long double x, long double d1, long double d2) {
  return tail([d1, d2](LD v) { return f_density(v, d1, d2); }, x, 1.0L);
}

long double t_two_sided(long double t, long double dof) {
  const LD a = std::fabs(t);
  if (a == 0) return 1.0L;
  if (a < 2) return 1.0L - 2.0L * integral([dof](LD v) { return t_density(v, dof); }, 0.0L, a);
  return 2.0L * upper_integral([dof](LD v) { return t_density(v, dof); }, a);
}

double quantile(std::vector<double> xs, double p) {
  std::sort(xs.begin(), xs.end());
  const double pos = p * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double one_way_f(const std::vector<std::vector<double>>& groups) {
  LD total = 0, count = 0;
  for (const auto& g : groups)
    for (double v : g) total += v, count += 1;
  const LD m = total / count;
  LD s1 = 0, s2 = 0;
  for (const auto& g : groups) {
    LD gs = 0;
    for (double v : g) gs += v;
    const LD gm = gs / g.size();
    s1 += g.size() * (gm - m) * (gm - m);
    for (double v : g) s2 += (v - gm) * (v - gm);
  }
  const LD k = groups.size();
  return static_cast<double>((s1 / (k - 1)) / (s2 / (count - k)));
}

TwoWay two_way_steps(std::span<const double> values, std::span<const char> treated, std::span<const int> subclass,
                     int k) {
  // Cell contents.
  std::vector<std::vector<std::vector<LD>>> cells(2, std::vector<std::vector<LD>>(k));
  for (std::size_t i = 0; i < values.size(); ++i) cells[treated[i] ? 1 : 0][subclass[i] - 1].push_back(values[i]);
  std::vector<std::vector<LD>> cm(2, std::vector<LD>(k));
  LD inv_sum = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < k; ++b) {
      if (cells[a][b].empty()) throw std::invalid_argument("empty cell");
      LD s = 0;
      for (LD v : cells[a][b]) s += v;
      cm[a][b] = s / cells[a][b].size();
      inv_sum += 1.0L / cells[a][b].size();
    }
  const LD nh = 2.0L * k / inv_sum;

  // Step 2: overall mean of the cell means.
  LD m = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < k; ++b) m += cm[a][b];
  m /= 2 * k;

  TwoWay out;
  // Steps 3-6 over the rows (treatment).
  for (int a = 0; a < 2; ++a) {
    LD ma = 0;
    for (int b = 0; b < k; ++b) ma += cm[a][b];
    ma /= k;
    const LD na = nh * k;
    out.s1_a += static_cast<double>(na * (ma - m) * (ma - m));
    for (int b = 0; b < k; ++b)
      for (LD v : cells[a][b]) out.s2_a += static_cast<double>((v - ma) * (v - ma));
  }
  // Step 9 over the columns (subclass).
  for (int b = 0; b < k; ++b) {
    const LD mb = (cm[0][b] + cm[1][b]) / 2;
    out.s1_b += static_cast<double>(nh * 2 * (mb - m) * (mb - m));
    for (int a = 0; a < 2; ++a)
      for (LD v : cells[a][b]) out.s2_b += static_cast<double>((v - mb) * (v - mb));
  }
  // Step 10: between all cells.
  LD sbw = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < k; ++b) sbw += nh * (cm[a][b] - m) * (cm[a][b] - m);
  out.s_bw = static_cast<double>(sbw);
  // Step 11.
  out.s1_ab = static_cast<double>(sbw - out.s1_a - out.s1_b);
  // Step 12.
  LD swi = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < k; ++b)
      for (LD v : cells[a][b]) swi += (v - cm[a][b]) * (v - cm[a][b]);
  out.s_wi = static_cast<double>(swi);
  // Steps 7-8 and 14-15.
  const LD n = values.size();
  const LD dof_within = n - 2 * k;
  out.f_a = static_cast<double>((out.s1_a / 1.0L) / (swi / dof_within));
  out.f_ab = static_cast<double>((out.s1_ab / (k - 1.0L)) / (swi / dof_within));
  return out;
}

double chi2_2x2(const std::array<std::array<std::int64_t, 2>, 2>& c, bool yates) {
  const LD n = c[0][0] + c[0][1] + c[1][0] + c[1][1];
  LD stat = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const LD e = LD(c[i][0] + c[i][1]) * LD(c[0][j] + c[1][j]) / n;
      LD d = std::fabs(c[i][j] - e);
      if (yates) d = std::max<LD>(0, d - 0.5L);
      stat += d * d / e;
    }
  return static_cast<double>(stat);
}

namespace {
std::pair<LD, LD> mean_var(std::span<const double> x) {
  LD s = 0;
  for (double v : x) s += v;
  const LD m = s / x.size();
  LD ss = 0;
  for (double v : x) ss += (v - m) * (v - m);
  return {m, ss / (x.size() - 1)};
}
}  // namespace

TTest welch(std::span<const double> a, std::span<const double> b) {
  auto [ma, va] = mean_var(a);
  auto [mb, vb] = mean_var(b);
  const LD qa = va / a.size(), qb = vb / b.size();
  const LD t = (ma - mb) / std::sqrt(qa + qb);
  const LD dof = (qa + qb) * (qa + qb) / (qa * qa / (a.size() - 1) + qb * qb / (b.size() - 1));
  return {static_cast<double>(t), static_cast<double>(dof)};
}

TTest student(std::span<const double> a, std::span<const double> b) {
  auto [ma, va] = mean_var(a);
  auto [mb, vb] = mean_var(b);
  const LD na = a.size(), nb = b.size();
  const LD sp = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2);
  const LD t = (ma - mb) / std::sqrt(sp * (1 / na + 1 / nb));
  return {static_cast<double>(t), static_cast<double>(na + nb - 2)};
}

Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  Eigen::VectorXd inv(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) inv[i] = s[i] > 1e-12 * s[0] ? 1.0 / s[i] : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * y;
}

long double logistic_ll(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  LD ll = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    LD eta = 0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) eta += LD(x(i, j)) * beta[j];
    // log(1 + e^eta) computed stably
    const LD soft = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    ll += y[i] * eta - soft;
  }
  return ll;
}

Eigen::VectorXd logistic_grid(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::VectorXd b, double step,
                              int sweeps) {
  LD best = logistic_ll(x, y, b);
  for (int s = 0; s < sweeps; ++s, step /= 10) {
    bool moved = true;
    while (moved) {
      moved = false;
      for (Eigen::Index j = 0; j < b.size(); ++j)
        for (double dir : {-1.0, 1.0}) {
          Eigen::VectorXd c = b;
          c[j] += dir * step;
          const LD ll = logistic_ll(x, y, c);
          if (ll > best) {
            best = ll;
            b = c;
            moved = true;
          }
        }
    }
  }
  return b;
}

Confusion confusion(std::span<const double> predicted_raw, std::span<const double> labels) {
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted_raw[i] > 0, l = labels[i] > 0;
    if (p && l) ++c.tp;
    if (!p && !l) ++c.tn;
    if (p && !l) ++c.fp;
    if (!p && l) ++c.fn;
  }
  return c;
}

}  // namespace oracle
