#include "strata/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "strata/error.hpp"

namespace strata::evoml {

namespace {

double sq_dist(const Point& a, const Point& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) d += (a[j] - b[j]) * (a[j] - b[j]);
  return d;
}

// Nearest centroid; ties go to the lower index.
std::pair<int, double> nearest(const Point& p, const Points& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return {best, best_d};
}

}  // namespace

KMeansResult kmeans_cluster(const Points& points, int k, std::uint64_t seed, int max_iterations) {
  if (k < 1 || static_cast<std::size_t>(k) > points.size())
    throw DataError("DegenerateK", fmt::format("k = {} for {} points", k, points.size()));
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw DataError("InvalidInput", "points differ in dimension");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(points.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::size_t> chosen;
  std::sample(idx.begin(), idx.end(), std::back_inserter(chosen), k, rng);
  std::shuffle(chosen.begin(), chosen.end(), rng);

  KMeansResult r;
  r.k = k;
  for (auto i : chosen) r.centroids.push_back(points[i]);
  r.assignment.assign(points.size(), -1);

  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto [c, d] = nearest(points[i], r.centroids);
      if (c != r.assignment[i]) changed = true;
      r.assignment[i] = c;
      inertia += d;
    }
    r.inertia_trace.push_back(inertia);
    r.inertia = inertia;
    r.iterations = iter + 1;
    if (!changed) break;

    Points sums(static_cast<std::size_t>(k), Point(dim, 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto c = static_cast<std::size_t>(r.assignment[i]);
      ++counts[c];
      for (std::size_t j = 0; j < dim; ++j) sums[c][j] += points[i][j];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) r.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
  }
  // Report inertia against the final centroids.
  r.inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    r.inertia += sq_dist(points[i], r.centroids[static_cast<std::size_t>(r.assignment[i])]);
  return r;
}

Points standardize(const Points& points) {
  if (points.empty()) return {};
  const std::size_t dim = points.front().size();
  const double n = static_cast<double>(points.size());
  Points out = points;
  for (std::size_t j = 0; j < dim; ++j) {
    double m = 0.0;
    for (const auto& p : points) m += p[j];
    m /= n;
    double ss = 0.0;
    for (const auto& p : points) ss += (p[j] - m) * (p[j] - m);
    const double sd = std::sqrt(ss / n);
    for (auto& p : out) p[j] = sd > 0 ? (p[j] - m) / sd : 0.0;
  }
  return out;
}

std::vector<int> kmeans_features() {
  return {varprep::kAge, varprep::kGender, varprep::kSapsAvg, varprep::kSofaAvg, varprep::kElixOverall};
}

Points feature_points(const varprep::StudyGroup& group, const std::vector<int>& variables) {
  Points out;
  out.reserve(group.n());
  for (const auto& r : group.rows()) {
    Point p;
    for (int v : variables) p.push_back(r[v]);
    out.push_back(std::move(p));
  }
  return out;
}

csv::Table clusters_table(const varprep::StudyGroup& group, const KMeansResult& result) {
  csv::Table t;
  t.header = {"subject_id", "hadm_id", "icustay_id", "cluster"};
  for (std::size_t i = 0; i < group.n(); ++i) {
    const auto& k = group.rows()[i].key;
    t.rows.push_back({std::to_string(k.subject_id), std::to_string(k.hadm_id), std::to_string(k.icustay_id),
                      std::to_string(result.assignment[i] + 1)});
  }
  return t;
}

}  // namespace strata::evoml
