#include "strata/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "strata/error.hpp"

namespace strata::evoml {

namespace {

constexpr double kMax = std::numeric_limits<double>::max();

double clamp_finite(double v) {
  if (std::isnan(v)) return 0.0;
  return std::clamp(v, -kMax, kMax);
}

constexpr Op kFunctions[] = {Op::kAdd, Op::kSub, Op::kMul, Op::kDiv, Op::kLog2, Op::kSqrt};
constexpr int kNumFunctions = 6;

Node random_terminal(int n_features, double constant_range, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, n_features);
  const int t = pick(rng);
  if (t < n_features) return {Op::kVar, t, 0.0};
  std::uniform_real_distribution<double> c(-constant_range, constant_range);
  return {Op::kConst, 0, c(rng)};
}

void grow(std::vector<Node>& out, int depth, bool full, int n_features, double constant_range, Rng& rng) {
  if (depth <= 1) {
    out.push_back(random_terminal(n_features, constant_range, rng));
    return;
  }
  bool function = full;
  if (!full) {
    std::uniform_int_distribution<int> pick(0, kNumFunctions + n_features);
    function = pick(rng) < kNumFunctions;
  }
  if (!function) {
    out.push_back(random_terminal(n_features, constant_range, rng));
    return;
  }
  std::uniform_int_distribution<int> f(0, kNumFunctions - 1);
  const Op op = kFunctions[f(rng)];
  out.push_back({op, 0, 0.0});
  for (int c = 0; c < arity(op); ++c) grow(out, depth - 1, full, n_features, constant_range, rng);
}

std::size_t random_node(std::size_t size, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, size - 1);
  return pick(rng);
}

GpIndividual splice(const GpIndividual& host, std::size_t at, const std::vector<Node>& donor_nodes,
                    std::size_t from, std::size_t to) {
  const auto& h = host.nodes();
  std::vector<Node> out(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(at));
  out.insert(out.end(), donor_nodes.begin() + static_cast<std::ptrdiff_t>(from),
             donor_nodes.begin() + static_cast<std::ptrdiff_t>(to));
  out.insert(out.end(), h.begin() + static_cast<std::ptrdiff_t>(host.subtree_end(at)), h.end());
  return GpIndividual(std::move(out));
}

}  // namespace

int arity(Op op) {
  switch (op) {
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: return 2;
    case Op::kLog2:
    case Op::kSqrt: return 1;
    case Op::kVar:
    case Op::kConst: return 0;
  }
  return 0;
}

std::size_t GpIndividual::subtree_end(std::size_t i) const {
  std::size_t need = 1;
  while (need > 0) {
    if (i >= nodes_.size()) throw DataError("InvalidTree", "prefix expression is truncated");
    need += static_cast<std::size_t>(arity(nodes_[i].op));
    --need;
    ++i;
  }
  return i;
}

bool GpIndividual::valid() const {
  if (nodes_.empty()) return false;
  std::size_t need = 1;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (need == 0) return false;
    need = need - 1 + static_cast<std::size_t>(arity(nodes_[i].op));
  }
  return need == 0;
}

int GpIndividual::depth() const {
  // Stack of remaining child counts per open node, paired with their depth.
  int max_depth = 0;
  std::vector<std::pair<int, int>> stack;
  for (const auto& n : nodes_) {
    const int d = static_cast<int>(stack.size()) + 1;
    max_depth = std::max(max_depth, d);
    if (!stack.empty()) --stack.back().first;
    if (arity(n.op) > 0) stack.push_back({arity(n.op), d});
    while (!stack.empty() && stack.back().first == 0) stack.pop_back();
  }
  return max_depth;
}

std::string GpIndividual::to_string(const std::vector<std::string>& names) const {
  std::size_t pos = 0;
  auto rec = [&](auto& self) -> std::string {
    const Node& n = nodes_.at(pos++);
    switch (n.op) {
      case Op::kVar:
        return static_cast<std::size_t>(n.var) < names.size() ? names[static_cast<std::size_t>(n.var)]
                                                              : fmt::format("f{}", n.var);
      case Op::kConst: return csv::format_number(n.value);
      case Op::kLog2: return "log2(" + self(self) + ")";
      case Op::kSqrt: return "sqrt(" + self(self) + ")";
      default: {
        const char* sym = n.op == Op::kAdd ? " + " : n.op == Op::kSub ? " - " : n.op == Op::kMul ? " * " : " / ";
        std::string a = self(self);
        std::string b = self(self);
        return "(" + a + sym + b + ")";
      }
    }
  };
  return rec(rec);
}

double eval_tree(const GpIndividual& ind, std::span<const double> row) {
  const auto& nodes = ind.nodes();
  // Evaluate right to left so children are on the stack when a function is reached.
  std::vector<double> stack;
  stack.reserve(nodes.size());
  for (std::size_t k = nodes.size(); k-- > 0;) {
    const Node& n = nodes[k];
    switch (n.op) {
      case Op::kVar: stack.push_back(clamp_finite(row[static_cast<std::size_t>(n.var)])); break;
      case Op::kConst: stack.push_back(n.value); break;
      case Op::kLog2: {
        const double x = stack.back();
        stack.back() = x > 0 ? std::log2(x) : 0.0;
        break;
      }
      case Op::kSqrt: stack.back() = std::sqrt(std::fabs(stack.back())); break;
      default: {
        const double a = stack.back();
        stack.pop_back();
        const double b = stack.back();
        double r = 0.0;
        switch (n.op) {
          case Op::kAdd: r = a + b; break;
          case Op::kSub: r = a - b; break;
          case Op::kMul: r = a * b; break;
          default: r = std::fabs(b) < 1e-9 ? 1.0 : a / b; break;
        }
        stack.back() = clamp_finite(r);
      }
    }
  }
  return stack.back();
}

void validate(const GpConfig& c) {
  auto bad = [](const std::string& why) { return ConfigError("InvalidGpConfig", why); };
  for (double p : {c.p_reproduction, c.p_crossover, c.p_mutation})
    if (!(p >= 0.0 && p <= 1.0)) throw bad("probabilities must lie in [0,1]");
  if (c.p_crossover + c.p_mutation <= 0.0 && c.p_reproduction < 1.0)
    throw bad("crossover and mutation probabilities are both zero");
  if (c.max_depth < 1) throw bad("max_depth must be at least 1");
  if (c.init_depth < 1) throw bad("init_depth must be at least 1");
  if (c.population_size < 2) throw bad("population_size must be at least 2");
  if (c.generations < 0) throw bad("generations must be non-negative");
  if (c.tournament_size < 1) throw bad("tournament_size must be at least 1");
}

GpIndividual random_tree(int depth, bool full, int n_features, double constant_range, Rng& rng) {
  std::vector<Node> nodes;
  grow(nodes, depth, full, n_features, constant_range, rng);
  return GpIndividual(std::move(nodes));
}

std::vector<GpIndividual> gp_init_population(const GpConfig& config, int n_features, Rng& rng) {
  validate(config);
  if (n_features < 1) throw ConfigError("InvalidGpConfig", "at least one feature is required");
  const int ramp = std::min(config.init_depth, config.max_depth);
  std::vector<GpIndividual> pop;
  pop.reserve(static_cast<std::size_t>(config.population_size));
  for (int i = 0; i < config.population_size; ++i) {
    const int depth = 1 + i % ramp;
    const bool full = (i / ramp) % 2 == 0;
    pop.push_back(random_tree(depth, full, n_features, config.constant_range, rng));
  }
  return pop;
}

std::vector<GpIndividual> gp_init_population(const GpConfig& config, int n_features) {
  Rng rng(config.seed);
  return gp_init_population(config, n_features, rng);
}

std::pair<GpIndividual, GpIndividual> crossover(const GpIndividual& a, const GpIndividual& b, Rng& rng) {
  const std::size_t ia = random_node(a.size(), rng);
  const std::size_t ib = random_node(b.size(), rng);
  const std::size_t ea = a.subtree_end(ia), eb = b.subtree_end(ib);
  return {splice(a, ia, b.nodes(), ib, eb), splice(b, ib, a.nodes(), ia, ea)};
}

GpIndividual mutate(const GpIndividual& a, const GpConfig& config, int n_features, Rng& rng) {
  const std::size_t at = random_node(a.size(), rng);
  std::uniform_int_distribution<int> d(1, std::max(1, config.mutation_depth));
  const GpIndividual fresh = random_tree(d(rng), false, n_features, config.constant_range, rng);
  return splice(a, at, fresh.nodes(), 0, fresh.size());
}

double predict(const GpIndividual& ind, std::span<const double> row, GpTask task) {
  const double v = eval_tree(ind, row);
  if (task == GpTask::kClassify) return v > 0 ? 1.0 : -1.0;
  return v;
}

double fitness(const GpIndividual& ind, const std::vector<std::vector<double>>& rows,
               std::span<const double> targets, GpTask task) {
  if (rows.size() != targets.size()) throw DataError("LengthMismatch", "rows and targets differ in length");
  if (rows.empty()) throw DataError("EmptyInput", "fitness over zero rows");
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double p = predict(ind, rows[i], task);
    if (task == GpTask::kClassify) total += p != targets[i] ? 1.0 : 0.0;
    else total += std::fabs(p - targets[i]);
  }
  if (task == GpTask::kRegress) total /= static_cast<double>(rows.size());
  return std::isfinite(total) ? total : kMax;
}

GpRun gp_evolve(const GpConfig& config, const std::vector<std::vector<double>>& rows,
                std::span<const double> targets, GpTask task) {
  validate(config);
  if (rows.empty()) throw DataError("EmptyInput", "GP needs training rows");
  const int n_features = static_cast<int>(rows.front().size());
  Rng rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  GpRun run;
  auto evaluate = [&](std::vector<GpIndividual>& pop) {
    for (auto& ind : pop) {
      if (!ind.fitness) ind.fitness = fitness(ind, rows, targets, task);
      run.max_depth_seen = std::max(run.max_depth_seen, ind.depth());
    }
  };
  auto best_of = [](const std::vector<GpIndividual>& pop) {
    std::size_t b = 0;
    for (std::size_t i = 1; i < pop.size(); ++i)
      if (*pop[i].fitness < *pop[b].fitness) b = i;
    return b;
  };
  auto tournament = [&](const std::vector<GpIndividual>& pop) -> const GpIndividual& {
    std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
    std::size_t w = pick(rng);
    for (int t = 1; t < config.tournament_size; ++t) {
      const std::size_t c = pick(rng);
      if (*pop[c].fitness < *pop[w].fitness || (*pop[c].fitness == *pop[w].fitness && c < w)) w = c;
    }
    return pop[w];
  };

  std::vector<GpIndividual> pop = gp_init_population(config, n_features, rng);
  evaluate(pop);
  run.best = pop[best_of(pop)];
  run.trace.push_back(*run.best.fitness);

  const auto cap = static_cast<std::size_t>(config.population_size);
  const double p_var = config.p_crossover + config.p_mutation;
  for (int g = 1; g <= config.generations; ++g) {
    std::vector<GpIndividual> next{run.best};
    while (next.size() < cap) {
      if (unit(rng) < config.p_reproduction) {
        next.push_back(tournament(pop));
        continue;
      }
      if (unit(rng) * p_var < config.p_crossover) {
        const GpIndividual& a = tournament(pop);
        const GpIndividual& b = tournament(pop);
        auto [c1, c2] = crossover(a, b, rng);
        next.push_back(c1.depth() <= config.max_depth ? std::move(c1) : a);
        if (next.size() < cap) next.push_back(c2.depth() <= config.max_depth ? std::move(c2) : b);
      } else {
        const GpIndividual& a = tournament(pop);
        GpIndividual c = mutate(a, config, n_features, rng);
        next.push_back(c.depth() <= config.max_depth ? std::move(c) : a);
      }
    }
    pop = std::move(next);
    evaluate(pop);
    const std::size_t b = best_of(pop);
    if (*pop[b].fitness < *run.best.fitness) run.best = pop[b];
    run.trace.push_back(*run.best.fitness);
  }
  return run;
}

ClassMetrics confusion_metrics(std::span<const double> predicted, std::span<const double> labels) {
  if (predicted.size() != labels.size()) throw DataError("LengthMismatch", "predictions and labels differ in length");
  ClassMetrics m;
  m.n = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted[i] > 0, l = labels[i] > 0;
    if (p && l) ++m.tp;
    else if (!p && !l) ++m.tn;
    else if (p) ++m.fp;
    else ++m.fn;
  }
  auto ratio = [](std::size_t a, std::size_t b) -> std::optional<double> {
    if (b == 0) return std::nullopt;
    return static_cast<double>(a) / static_cast<double>(b);
  };
  m.success_rate = m.n ? static_cast<double>(m.tp + m.tn) / static_cast<double>(m.n) : 0.0;
  m.sensitivity_paper = ratio(m.tp, m.tp + m.fp);
  m.specificity_paper = ratio(m.tn, m.tn + m.fn);
  m.sensitivity_std = ratio(m.tp, m.tp + m.fn);
  m.specificity_std = ratio(m.tn, m.tn + m.fp);
  return m;
}

ClassMetrics classification_metrics(const GpIndividual& ind, const std::vector<std::vector<double>>& rows,
                                    std::span<const double> labels) {
  std::vector<double> pred;
  pred.reserve(rows.size());
  for (const auto& r : rows) pred.push_back(predict(ind, r, GpTask::kClassify));
  return confusion_metrics(pred, labels);
}

Counterfactual simulate_counterfactual(const GpIndividual& ind, const std::vector<std::vector<double>>& rows,
                                       int treatment_feature, GpTask task,
                                       const std::vector<std::array<int, 3>>& products) {
  Counterfactual cf;
  for (const auto& r : rows) {
    for (double arm : {1.0, -1.0}) {
      std::vector<double> x = r;
      x.at(static_cast<std::size_t>(treatment_feature)) = arm;
      for (const auto& [p, a, b] : products)
        x.at(static_cast<std::size_t>(p)) = x.at(static_cast<std::size_t>(a)) * x.at(static_cast<std::size_t>(b));
      (arm > 0 ? cf.treated : cf.untreated).push_back(predict(ind, x, task));
    }
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    cf.mean_treated = std::accumulate(cf.treated.begin(), cf.treated.end(), 0.0) / n;
    cf.mean_untreated = std::accumulate(cf.untreated.begin(), cf.untreated.end(), 0.0) / n;
    cf.positive_rate_treated =
        static_cast<double>(std::count_if(cf.treated.begin(), cf.treated.end(), [](double v) { return v > 0; })) / n;
    cf.positive_rate_untreated =
        static_cast<double>(std::count_if(cf.untreated.begin(), cf.untreated.end(), [](double v) { return v > 0; })) / n;
  }
  return cf;
}

std::vector<std::string> gp_feature_names() { return {"x1", "x2", "x3", "x5", "x10", "x15", "V1", "x1*x5"}; }

std::vector<std::array<int, 3>> gp_feature_products() { return {{7, 0, 3}}; }

std::vector<std::vector<double>> gp_feature_rows(const varprep::StudyGroup& group, std::span<const double> scores) {
  if (scores.size() != group.n()) throw DataError("LengthMismatch", "one propensity score per patient is required");
  std::vector<std::vector<double>> out;
  out.reserve(group.n());
  for (std::size_t i = 0; i < group.n(); ++i) {
    const auto& r = group.rows()[i];
    out.push_back({r[varprep::kTreatment], r[varprep::kAge], r[varprep::kGender], r[varprep::kSapsAvg],
                   r[varprep::kSofaAvg], r[varprep::kElixOverall], scores[i],
                   r[varprep::kTreatment] * r[varprep::kSapsAvg]});
  }
  return out;
}

Split train_test_split(std::size_t n, std::uint64_t seed, double train_fraction) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n) - 1e-9));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

csv::Table gp_run_table(const GpRun& run) {
  csv::Table t;
  t.header = {"generation", "best_fitness"};
  for (std::size_t g = 0; g < run.trace.size(); ++g)
    t.rows.push_back({std::to_string(g), csv::format_number(run.trace[g])});
  return t;
}

csv::Table gp_metrics_table(const ClassMetrics& train, const ClassMetrics& test) {
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_number(*v) : ""; };
  csv::Table t;
  t.header = {"split", "n", "success_rate", "tp", "tn", "fp", "fn", "sensitivity_paper", "specificity_paper",
              "sensitivity_std", "specificity_std"};
  for (const auto& [name, m] : {std::pair{"train", &train}, std::pair{"test", &test}}) {
    t.rows.push_back({name, std::to_string(m->n), csv::format_number(m->success_rate), std::to_string(m->tp),
                      std::to_string(m->tn), std::to_string(m->fp), std::to_string(m->fn), opt(m->sensitivity_paper),
                      opt(m->specificity_paper), opt(m->sensitivity_std), opt(m->specificity_std)});
  }
  return t;
}

csv::Table counterfactual_table(const varprep::StudyGroup& group, const Counterfactual& cf) {
  csv::Table t;
  t.header = {"subject_id", "hadm_id", "icustay_id", "outcome_treated", "outcome_untreated"};
  for (std::size_t i = 0; i < group.n() && i < cf.treated.size(); ++i) {
    const auto& k = group.rows()[i].key;
    t.rows.push_back({std::to_string(k.subject_id), std::to_string(k.hadm_id), std::to_string(k.icustay_id),
                      csv::format_number(cf.treated[i]), csv::format_number(cf.untreated[i])});
  }
  return t;
}

}  // namespace strata::evoml
