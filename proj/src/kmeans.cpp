#include "bevrec/kmeans.hpp"

#include <limits>
#include <random>

#include "bevrec/errors.hpp"

namespace bevrec {
namespace {

struct Nearest {
  std::size_t index;
  double sq_dist;
};

Nearest nearest_center(const RowMatrix& centers, const RowMatrix& points, Eigen::Index row) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    const double d = (points.row(row) - centers.row(k)).squaredNorm();
    if (d < best.sq_dist) best = {static_cast<std::size_t>(k), d};
  }
  return best;
}

RowMatrix seed_plus_plus(const RowMatrix& points, std::size_t k, std::mt19937_64& rng) {
  const auto n = points.rows();
  RowMatrix centers(static_cast<Eigen::Index>(k), points.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = points.row(pick(rng));

  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = (points.row(i) - centers.row(0)).squaredNorm();

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (!(total > 0.0)) throw InputError("kmeans: fewer distinct points than clusters");
    const double target = unit(rng) * total;
    Eigen::Index chosen = -1;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = d2[static_cast<std::size_t>(i)];
      if (w <= 0.0) continue;
      chosen = i;
      acc += w;
      if (acc > target) break;
    }
    centers.row(static_cast<Eigen::Index>(c)) = points.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (points.row(i) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
      auto& slot = d2[static_cast<std::size_t>(i)];
      if (d < slot) slot = d;
    }
  }
  return centers;
}

}  // namespace

KMeansResult kmeans(const RowMatrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations) {
  if (k == 0) throw InputError("kmeans: k must be positive");
  if (static_cast<std::size_t>(points.rows()) < k)
    throw InputError("kmeans: " + std::to_string(points.rows()) + " points for " + std::to_string(k) + " clusters");

  std::mt19937_64 rng(seed);
  KMeansResult result;
  result.centers = seed_plus_plus(points, k, rng);
  const auto n = static_cast<std::size_t>(points.rows());
  const auto d = points.cols();
  result.assignment.assign(n, std::numeric_limits<std::size_t>::max());
  std::vector<double> sq_dist(n, 0.0);

  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Nearest best = nearest_center(result.centers, points, static_cast<Eigen::Index>(i));
      changed |= best.index != result.assignment[i];
      result.assignment[i] = best.index;
      sq_dist[i] = best.sq_dist;
      objective += best.sq_dist;
    }
    result.objective_trace.push_back(objective);
    result.iterations = iter + 1;
    if (!changed) {
      result.converged = true;
      break;
    }

    RowMatrix sums = RowMatrix::Zero(static_cast<Eigen::Index>(k), d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(result.assignment[i])) += points.row(static_cast<Eigen::Index>(i));
      ++counts[result.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      const auto row = static_cast<Eigen::Index>(c);
      if (counts[c] > 0) {
        result.centers.row(row) = sums.row(row) / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: take over the worst-served point.
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (sq_dist[i] > sq_dist[far]) far = i;
      result.centers.row(row) = points.row(static_cast<Eigen::Index>(far));
      sq_dist[far] = 0.0;
    }
  }

  for (Eigen::Index a = 0; a < result.centers.rows(); ++a)
    for (Eigen::Index b = a + 1; b < result.centers.rows(); ++b)
      if ((result.centers.row(a) - result.centers.row(b)).squaredNorm() == 0.0)
        throw InputError("kmeans: degenerate solution, centers " + std::to_string(a) + " and " + std::to_string(b) +
                         " coincide");
  return result;
}

}  // namespace bevrec
