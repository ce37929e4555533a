#include "strata/regress.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "strata/error.hpp"

namespace strata::regress {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

int parse_variable(std::string_view text) {
  const std::string t = trim(text);
  if (t == "V1") return kPropensityVar;
  if (t.size() >= 2 && t[0] == 'x') {
    int v = 0;
    for (std::size_t i = 1; i < t.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(t[i]))) v = -1;
      if (v < 0) break;
      v = v * 10 + (t[i] - '0');
      if (v > 1000) break;
    }
    if (v >= 1 && v <= varprep::kNumVariables) return v;
  }
  throw ConfigError("BadTerm", fmt::format("'{}' is not a variable (x1..x58 or V1)", t));
}

double sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double softplus(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

bool has_intercept(const ModelSpec& spec) {
  return !spec.terms().empty() && spec.terms().front().kind == TermKind::kIntercept;
}

}  // namespace

std::string variable_name(int id) { return id == kPropensityVar ? "V1" : fmt::format("x{}", id); }

// ---------------------------------------------------------------------------
// Terms and specs

ModelTerm ModelTerm::interaction(int a, int b) {
  if (a == b) return square(a);
  return {TermKind::kInteraction, std::min(a, b), std::max(a, b)};
}

std::string ModelTerm::name() const {
  switch (kind) {
    case TermKind::kIntercept: return "1";
    case TermKind::kMain: return variable_name(i);
    case TermKind::kSquare: return variable_name(i) + "*" + variable_name(i);
    case TermKind::kInteraction: return variable_name(i) + "*" + variable_name(j);
  }
  return "";
}

std::vector<int> ModelTerm::variables() const {
  switch (kind) {
    case TermKind::kIntercept: return {};
    case TermKind::kMain:
    case TermKind::kSquare: return {i};
    case TermKind::kInteraction: return {i, j};
  }
  return {};
}

ModelTerm parse_term(std::string_view text) {
  const std::string t = trim(text);
  if (t == "1") return ModelTerm::intercept();
  if (auto caret = t.find('^'); caret != std::string::npos) {
    if (trim(t.substr(caret + 1)) != "2") throw ConfigError("BadTerm", fmt::format("'{}': only ^2 is supported", t));
    return ModelTerm::square(parse_variable(t.substr(0, caret)));
  }
  if (auto star = t.find('*'); star != std::string::npos)
    return ModelTerm::interaction(parse_variable(t.substr(0, star)), parse_variable(t.substr(star + 1)));
  return ModelTerm::main(parse_variable(t));
}

ModelSpec::ModelSpec() : terms_{ModelTerm::intercept()} {}

ModelSpec::ModelSpec(const std::vector<ModelTerm>& terms) : ModelSpec() {
  for (const auto& t : terms)
    if (t.kind != TermKind::kIntercept) add(t);
}

bool ModelSpec::contains(const ModelTerm& t) const {
  return std::find(terms_.begin(), terms_.end(), t) != terms_.end();
}

std::vector<int> ModelSpec::main_effects() const {
  std::vector<int> out;
  for (const auto& t : terms_)
    if (t.kind == TermKind::kMain) out.push_back(t.i);
  std::sort(out.begin(), out.end());
  return out;
}

void ModelSpec::add(const ModelTerm& t) {
  if (contains(t)) throw ConfigError("DuplicateTerm", fmt::format("term {} is already in the model", t.name()));
  terms_.push_back(t);
}

ModelSpec ModelSpec::with(const ModelTerm& t) const {
  ModelSpec copy = *this;
  copy.add(t);
  return copy;
}

std::string ModelSpec::to_string() const {
  std::string out;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    if (k) out += " + ";
    out += terms_[k].name();
  }
  return out;
}

ModelSpec ModelSpec::parse(std::string_view text) {
  std::vector<ModelTerm> terms;
  std::stringstream ss{std::string(text)};
  for (std::string part; std::getline(ss, part, '+');) {
    if (trim(part).empty()) throw ConfigError("BadTerm", fmt::format("empty term in '{}'", text));
    terms.push_back(parse_term(part));
  }
  ModelSpec spec;
  for (const auto& t : terms)
    if (t.kind != TermKind::kIntercept) spec.add(t);
  return spec;
}

// ---------------------------------------------------------------------------
// Design

VariableTable::VariableTable(const varprep::StudyGroup& group) : n_(group.n()) {
  for (int v = 1; v <= varprep::kNumVariables; ++v) cols_[v] = group.column(v);
}

const std::vector<double>& VariableTable::column(int id) const {
  auto it = cols_.find(id);
  if (it == cols_.end())
    throw ConfigError("UnknownVariable", fmt::format("variable {} is not available", variable_name(id)));
  return it->second;
}

void VariableTable::set(int id, std::vector<double> values) {
  if (cols_.empty() && n_ == 0) n_ = values.size();
  if (values.size() != n_)
    throw DataError("LengthMismatch", fmt::format("column {} has {} rows, table has {}", variable_name(id),
                                                  values.size(), n_));
  cols_[id] = std::move(values);
}

Eigen::VectorXd term_column(const VariableTable& table, const ModelTerm& term) {
  const auto n = static_cast<Eigen::Index>(table.rows());
  Eigen::VectorXd out(n);
  switch (term.kind) {
    case TermKind::kIntercept:
      out.setOnes();
      break;
    case TermKind::kMain: {
      const auto& c = table.column(term.i);
      for (Eigen::Index r = 0; r < n; ++r) out[r] = c[static_cast<std::size_t>(r)];
      break;
    }
    case TermKind::kSquare:
    case TermKind::kInteraction: {
      const auto& a = table.column(term.i);
      const auto& b = table.column(term.j);
      for (Eigen::Index r = 0; r < n; ++r)
        out[r] = a[static_cast<std::size_t>(r)] * b[static_cast<std::size_t>(r)];
      break;
    }
  }
  return out;
}

Eigen::MatrixXd design_matrix(const VariableTable& table, const ModelSpec& spec) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(table.rows()), static_cast<Eigen::Index>(spec.size()));
  for (std::size_t k = 0; k < spec.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = term_column(table, spec.terms()[k]);
  return x;
}

namespace {

Eigen::Index rank_of(const Eigen::MatrixXd& x) {
  if (x.cols() == 0) return 0;
  Eigen::MatrixXd scaled = x;
  for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
    const double norm = scaled.col(j).norm();
    if (norm > 0) scaled.col(j) /= norm;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(1e-10);
  return qr.rank();
}

}  // namespace

bool is_full_rank(const Eigen::MatrixXd& x) {
  if (x.rows() < x.cols()) return false;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (x.col(j).norm() == 0.0 || !x.col(j).allFinite()) return false;
  return rank_of(x) == x.cols();
}

void check_full_rank(const Eigen::MatrixXd& x, const ModelSpec& spec) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (!x.col(j).allFinite())
      throw DataError("NonFiniteValue", fmt::format("term {} has missing or non-finite values",
                                                    spec.terms()[static_cast<std::size_t>(j)].name()));
  }
  if (is_full_rank(x)) return;
  // Name the first term that adds nothing to the span of its predecessors.
  for (Eigen::Index j = 1; j <= x.cols(); ++j) {
    if (rank_of(x.leftCols(j)) < j || x.col(j - 1).norm() == 0.0)
      throw NumericError("RankDeficient",
                         fmt::format("design is rank deficient at term {}",
                                     spec.terms()[static_cast<std::size_t>(j - 1)].name()));
  }
  throw NumericError("RankDeficient", "design has more columns than rows");
}

std::vector<double> to_binary01(std::span<const double> values) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) {
    if (v == 1.0) out.push_back(1.0);
    else if (v == -1.0) out.push_back(0.0);
    else throw DataError("InvalidOutcome", fmt::format("binary outcome holds {}", v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logistic regression

double logistic_log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - softplus(eta[i]);
  return ll;
}

Eigen::VectorXd LogitFit::linear_predictor(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd b(static_cast<Eigen::Index>(coefficients.size()));
  for (std::size_t k = 0; k < coefficients.size(); ++k) b[static_cast<Eigen::Index>(k)] = coefficients[k];
  return x * b;
}

LogitFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ModelSpec& spec,
                      const LogitOptions& options) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (n == 0) throw DataError("EmptyInput", "logistic fit on zero rows");
  if (p != static_cast<Eigen::Index>(spec.size()) || y.size() != n)
    throw DataError("LengthMismatch", "design, outcome and spec sizes disagree");
  for (Eigen::Index i = 0; i < n; ++i)
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("InvalidOutcome", fmt::format("outcome holds {}", y[i]));
  check_full_rank(x, spec);

  // Standardize every non-intercept column.
  const bool intercept = has_intercept(spec);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(p), sd = Eigen::VectorXd::Ones(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (spec.terms()[static_cast<std::size_t>(j)].kind == TermKind::kIntercept) continue;
    if (intercept) mu[j] = x.col(j).mean();
    const double s = std::sqrt((x.col(j).array() - mu[j]).square().mean());
    if (s > 0) sd[j] = s;
  }
  const Eigen::MatrixXd z = (x.rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array();

  LogitFit fit;
  fit.spec = spec;
  fit.n = static_cast<std::size_t>(n);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double ll = logistic_log_likelihood(eta, y);
  Eigen::VectorXd prob(n), w(n);

  auto hessian = [&](const Eigen::VectorXd& e) {
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = sigmoid(e[i]);
      w[i] = prob[i] * (1.0 - prob[i]);
    }
    return Eigen::MatrixXd(z.transpose() * w.asDiagonal() * z);
  };

  for (int iter = 0;; ++iter) {
    const Eigen::MatrixXd h = hessian(eta);
    const Eigen::VectorXd g = z.transpose() * (y - prob);
    if (g.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    if (beta.cwiseAbs().maxCoeff() > options.separation_bound) {
      fit.separation = true;
      break;
    }
    if (iter >= options.max_iterations) break;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    Eigen::VectorXd delta = ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !delta.allFinite())
      delta = h.completeOrthogonalDecomposition().solve(g);
    double step = 1.0;
    Eigen::VectorXd next = beta + delta;
    Eigen::VectorXd next_eta = z * next;
    double next_ll = logistic_log_likelihood(next_eta, y);
    for (int half = 0; half < 40 && !(next_ll >= ll - 1e-12 * std::fabs(ll)); ++half) {
      step *= 0.5;
      next = beta + step * delta;
      next_eta = z * next;
      next_ll = logistic_log_likelihood(next_eta, y);
    }
    beta = next;
    eta = next_eta;
    ll = next_ll;
    fit.iterations = iter + 1;
  }
  fit.log_likelihood = ll;

  // Back to original units: beta_orig = T beta, Cov_orig = T Cov T'.
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(p, p);
  Eigen::Index icol = -1;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (spec.terms()[static_cast<std::size_t>(j)].kind == TermKind::kIntercept) icol = j;
    t(j, j) = 1.0 / sd[j];
  }
  if (icol >= 0) {
    t(icol, icol) = 1.0;
    for (Eigen::Index j = 0; j < p; ++j)
      if (j != icol) t(icol, j) = -mu[j] / sd[j];
  }
  const Eigen::VectorXd b_orig = t * beta;
  const Eigen::MatrixXd h = hessian(eta);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  const bool cov_ok = ldlt.info() == Eigen::Success && cov.allFinite() && ldlt.isPositive();
  const Eigen::MatrixXd cov_orig = t * cov * t.transpose();
  for (Eigen::Index j = 0; j < p; ++j) {
    fit.coefficients.push_back(b_orig[j]);
    fit.standard_errors.push_back(cov_ok && cov_orig(j, j) >= 0 ? std::sqrt(cov_orig(j, j)) : kNaN);
  }
  return fit;
}

LogitFit fit_logistic(const VariableTable& table, const ModelSpec& spec, std::span<const double> y01,
                      const LogitOptions& options) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(y01.size()));
  for (std::size_t i = 0; i < y01.size(); ++i) y[static_cast<Eigen::Index>(i)] = y01[i];
  return fit_logistic(design_matrix(table, spec), y, spec, options);
}

// ---------------------------------------------------------------------------
// Linear regression

LinearFit fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ModelSpec& spec) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (n == 0) throw DataError("EmptyInput", "linear fit on zero rows");
  if (p != static_cast<Eigen::Index>(spec.size()) || y.size() != n)
    throw DataError("LengthMismatch", "design, outcome and spec sizes disagree");
  if (!y.allFinite()) throw DataError("NonFiniteValue", "outcome has missing or non-finite values");
  check_full_rank(x, spec);

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd resid = y - x * beta;
  const double rss = resid.squaredNorm();

  LinearFit fit;
  fit.spec = spec;
  fit.n = static_cast<std::size_t>(n);
  fit.residual_variance = n > p ? rss / static_cast<double>(n - p) : 0.0;
  const double center = has_intercept(spec) ? y.mean() : 0.0;
  const double tss = (y.array() - center).square().sum();
  fit.r_squared = tss > 0 ? std::clamp(1.0 - rss / tss, 0.0, 1.0) : 0.0;

  const Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd xtx_inv = rinv * rinv.transpose();
  for (Eigen::Index j = 0; j < p; ++j) {
    fit.coefficients.push_back(beta[j]);
    fit.standard_errors.push_back(std::sqrt(std::max(0.0, fit.residual_variance * xtx_inv(j, j))));
  }
  return fit;
}

LinearFit fit_linear(const VariableTable& table, const ModelSpec& spec, std::span<const double> y) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) v[static_cast<Eigen::Index>(i)] = y[i];
  return fit_linear(design_matrix(table, spec), v, spec);
}

namespace {

template <class Tail>
std::vector<stats::TestResult> wald(const std::vector<double>& coef, const std::vector<double>& se,
                                    double dof, Tail tail) {
  std::vector<stats::TestResult> out;
  for (std::size_t k = 0; k < coef.size(); ++k) {
    stats::TestResult r;
    r.dof = {dof};
    if (coef[k] == 0.0) {
      r.statistic = 0.0;
      r.p_value = 1.0;
    } else if (!(se[k] > 0.0)) {
      r.statistic = std::isnan(se[k]) ? kNaN : std::copysign(std::numeric_limits<double>::infinity(), coef[k]);
      r.p_value = std::isnan(se[k]) ? kNaN : 0.0;
      r.flag = stats::Flag::kDegenerate;
    } else {
      r.statistic = coef[k] / se[k];
      r.p_value = tail(r.statistic);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace

std::vector<stats::TestResult> coefficient_p_values(const LogitFit& fit) {
  if (!fit.converged)
    throw NumericError("NotConverged", fmt::format("logistic fit of {} did not converge{}", fit.spec.to_string(),
                                                   fit.separation ? " (separation)" : ""));
  return wald(fit.coefficients, fit.standard_errors, std::numeric_limits<double>::infinity(),
              [](double z) { return stats::normal_two_sided(z); });
}

std::vector<stats::TestResult> coefficient_p_values(const LinearFit& fit) {
  const double dof = static_cast<double>(fit.n) - static_cast<double>(fit.coefficients.size());
  if (dof <= 0) throw NumericError("NoResidualDof", "linear fit has no residual degrees of freedom");
  return wald(fit.coefficients, fit.standard_errors, dof, [dof](double t) { return stats::t_two_sided(t, dof); });
}

// ---------------------------------------------------------------------------
// Stepwise selection

namespace {

struct Candidate {
  ModelTerm term;
  Eigen::VectorXd column;
};

bool takes_two_values(const std::vector<double>& c) {
  std::set<double> seen;
  for (double v : c) {
    seen.insert(v);
    if (seen.size() > 2) return false;
  }
  return true;
}

}  // namespace

StepwiseResult stepwise_select(const VariableTable& table, std::span<const int> candidates,
                               std::span<const double> y01, const StepwiseOptions& options) {
  if (candidates.empty()) throw ConfigError("NoCandidates", "stepwise selection needs candidate variables");
  Eigen::VectorXd y(static_cast<Eigen::Index>(y01.size()));
  for (std::size_t i = 0; i < y01.size(); ++i) y[static_cast<Eigen::Index>(i)] = y01[i];

  StepwiseResult result;
  ModelSpec spec;
  Eigen::MatrixXd x = design_matrix(table, spec);
  LogitFit current = fit_logistic(x, y, spec, options.logit);

  auto run_phase = [&](int phase, std::vector<Candidate> pool) {
    std::set<std::string> warned;
    while (!pool.empty()) {
      std::size_t best = pool.size();
      double best_p = 2.0, best_lr = 0.0;
      LogitFit best_fit;
      for (std::size_t c = 0; c < pool.size(); ++c) {
        Eigen::MatrixXd trial(x.rows(), x.cols() + 1);
        trial << x, pool[c].column;
        const ModelSpec trial_spec = spec.with(pool[c].term);
        LogitFit f;
        try {
          f = fit_logistic(trial, y, trial_spec, options.logit);
        } catch (const NumericError& e) {
          if (e.kind() != "RankDeficient") throw;
          if (warned.insert(pool[c].term.name()).second)
            result.warnings.push_back(fmt::format("skipped {}: rank deficient", pool[c].term.name()));
          continue;
        }
        if (!f.converged) {
          if (warned.insert(pool[c].term.name()).second)
            result.warnings.push_back(fmt::format("skipped {}: fit did not converge", pool[c].term.name()));
          continue;
        }
        const double lr = std::max(0.0, 2.0 * (f.log_likelihood - current.log_likelihood));
        const double p = stats::chi2_upper_tail(lr, 1.0);
        if (p < best_p) {
          best = c;
          best_p = p;
          best_lr = lr;
          best_fit = std::move(f);
        }
      }
      if (best == pool.size() || !(best_p < options.p_enter) ||
          !(best_fit.log_likelihood > current.log_likelihood))
        break;
      Eigen::MatrixXd grown(x.rows(), x.cols() + 1);
      grown << x, pool[best].column;
      x = std::move(grown);
      spec.add(pool[best].term);
      current = std::move(best_fit);
      result.entries.push_back({phase, pool[best].term, best_lr, best_p, current.log_likelihood});
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    }
  };

  std::vector<int> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<Candidate> mains;
  for (int v : sorted) mains.push_back({ModelTerm::main(v), term_column(table, ModelTerm::main(v))});
  run_phase(1, std::move(mains));

  if (options.second_phase) {
    const auto chosen = spec.main_effects();
    std::vector<Candidate> pairs;
    for (std::size_t a = 0; a < chosen.size(); ++a) {
      for (std::size_t b = a; b < chosen.size(); ++b) {
        const ModelTerm t = ModelTerm::interaction(chosen[a], chosen[b]);
        if (t.kind == TermKind::kSquare && (!options.squares || takes_two_values(table.column(t.i)))) continue;
        pairs.push_back({t, term_column(table, t)});
      }
    }
    run_phase(2, std::move(pairs));
  }
  result.spec = spec;
  result.fit = std::move(current);
  return result;
}

}  // namespace strata::regress
