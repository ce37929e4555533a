#pragma once

// Tree-based genetic programming for symbolic regression and binary
// classification, plus the metrics and counterfactual simulation built on a
// trained individual.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "strata/csv.hpp"
#include "strata/varprep.hpp"

namespace strata::evoml {

enum class Op : std::uint8_t { kAdd, kSub, kMul, kDiv, kLog2, kSqrt, kVar, kConst };

int arity(Op op);

struct Node {
  Op op = Op::kConst;
  int var = 0;         // feature index for kVar
  double value = 0.0;  // kConst

  bool operator==(const Node&) const = default;
};

/// Expression tree stored in prefix order.
class GpIndividual {
 public:
  GpIndividual() = default;
  explicit GpIndividual(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& nodes() { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  /// A lone terminal has depth 1.
  int depth() const;
  /// Every node has exactly its arity in children and the prefix is complete.
  bool valid() const;
  /// One past the last node of the subtree rooted at `i`.
  std::size_t subtree_end(std::size_t i) const;

  std::string to_string(const std::vector<std::string>& feature_names = {}) const;

  std::optional<double> fitness;

  bool operator==(const GpIndividual& o) const { return nodes_ == o.nodes_; }

 private:
  std::vector<Node> nodes_;
};

/// Protected evaluation: a/b = 1 when |b| < 1e-9, log2(x) = 0 for x <= 0,
/// sqrt(x) = sqrt(|x|); every intermediate is clamped to the finite range.
double eval_tree(const GpIndividual& ind, std::span<const double> row);

struct GpConfig {
  int population_size = 100;
  int generations = 10;
  double p_reproduction = 0.1;
  double p_crossover = 0.5;
  double p_mutation = 0.5;
  int max_depth = 17;
  int init_depth = 6;
  int mutation_depth = 4;
  int tournament_size = 4;
  double constant_range = 1.0;  // ephemeral constants in [-r, r]
  std::uint64_t seed = 1;
};

/// Throws ConfigError("InvalidGpConfig").
void validate(const GpConfig& config);

enum class GpTask { kClassify, kRegress };

using Rng = std::mt19937_64;

/// Ramped half-and-half over depths 1..min(init_depth, max_depth).
std::vector<GpIndividual> gp_init_population(const GpConfig& config, int n_features, Rng& rng);
std::vector<GpIndividual> gp_init_population(const GpConfig& config, int n_features);

/// Grows a random tree of at most `depth` levels; `full` forces every
/// branch to that depth.
GpIndividual random_tree(int depth, bool full, int n_features, double constant_range, Rng& rng);

/// Swaps random subtrees; both children are arity-correct.
std::pair<GpIndividual, GpIndividual> crossover(const GpIndividual& a, const GpIndividual& b, Rng& rng);
/// Replaces a random subtree with a fresh grown tree.
GpIndividual mutate(const GpIndividual& a, const GpConfig& config, int n_features, Rng& rng);

/// Classification maps output > 0 to +1, otherwise -1.
double predict(const GpIndividual& ind, std::span<const double> row, GpTask task);

/// Misclassification count or mean absolute error; lower is better.
double fitness(const GpIndividual& ind, const std::vector<std::vector<double>>& rows,
               std::span<const double> targets, GpTask task);

struct GpRun {
  GpIndividual best;
  std::vector<double> trace;  // best-so-far fitness, generations 0..G
  int max_depth_seen = 0;
};

GpRun gp_evolve(const GpConfig& config, const std::vector<std::vector<double>>& rows,
                std::span<const double> targets, GpTask task);

struct ClassMetrics {
  std::size_t n = 0, tp = 0, tn = 0, fp = 0, fn = 0;
  double success_rate = 0.0;
  std::optional<double> sensitivity_paper;  // TP/(TP+FP)
  std::optional<double> specificity_paper;  // TN/(TN+FN)
  std::optional<double> sensitivity_std;    // TP/(TP+FN)
  std::optional<double> specificity_std;    // TN/(TN+FP)
};

ClassMetrics classification_metrics(const GpIndividual& ind, const std::vector<std::vector<double>>& rows,
                                    std::span<const double> labels);
ClassMetrics confusion_metrics(std::span<const double> predicted, std::span<const double> labels);

struct Counterfactual {
  std::vector<double> treated;    // outcome with the treatment feature at +1
  std::vector<double> untreated;  // ... at -1
  double mean_treated = 0.0;
  double mean_untreated = 0.0;
  double positive_rate_treated = 0.0;
  double positive_rate_untreated = 0.0;
};

/// Evaluates every row twice with the treatment feature forced to +1 and -1.
/// Derived features listed in `products` (index = a * b) are recomputed.
Counterfactual simulate_counterfactual(const GpIndividual& ind, const std::vector<std::vector<double>>& rows,
                                       int treatment_feature, GpTask task,
                                       const std::vector<std::array<int, 3>>& products = {});

/// Feature layout used for the learning tasks: x1, x2, x3, x5, x10, x15, V1, x1*x5.
std::vector<std::string> gp_feature_names();
std::vector<std::vector<double>> gp_feature_rows(const varprep::StudyGroup& group, std::span<const double> scores);
/// product features of gp_feature_rows: {product, a, b}
std::vector<std::array<int, 3>> gp_feature_products();

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle; ceil(0.7 n) rows train, the rest test.
Split train_test_split(std::size_t n, std::uint64_t seed, double train_fraction = 0.7);

csv::Table gp_run_table(const GpRun& run);
csv::Table gp_metrics_table(const ClassMetrics& train, const ClassMetrics& test);
csv::Table counterfactual_table(const varprep::StudyGroup& group, const Counterfactual& cf);

}  // namespace strata::evoml
