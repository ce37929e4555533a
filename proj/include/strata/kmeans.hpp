#pragma once

// Seeded Lloyd k-means over patient feature vectors.

#include <cstdint>
#include <vector>

#include "strata/csv.hpp"
#include "strata/varprep.hpp"

namespace strata::evoml {

using Point = std::vector<double>;
using Points = std::vector<Point>;

struct KMeansResult {
  int k = 0;
  Points centroids;
  std::vector<int> assignment;  // 0-based cluster per point
  double inertia = 0.0;
  int iterations = 0;
  /// Inertia after each assignment step.
  std::vector<double> inertia_trace;
};

/// Forgy start (k distinct points drawn by seed), Lloyd iterations until
/// the assignment stops changing or `max_iterations`. A cluster that loses
/// all its points keeps its previous centroid. Errors: DegenerateK.
KMeansResult kmeans_cluster(const Points& points, int k, std::uint64_t seed, int max_iterations = 300);

/// Column-wise z-scores; constant columns become 0.
Points standardize(const Points& points);

/// Age, sex, SAPS, SOFA and Elixhauser overall.
std::vector<int> kmeans_features();

Points feature_points(const varprep::StudyGroup& group, const std::vector<int>& variables);

csv::Table clusters_table(const varprep::StudyGroup& group, const KMeansResult& result);

}  // namespace strata::evoml
