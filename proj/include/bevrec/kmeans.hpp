#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace bevrec {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct KMeansResult {
  RowMatrix centers;                     // K x d
  std::vector<std::size_t> assignment;   // one per input row
  std::vector<double> objective_trace;   // sum of squared distances after each assignment step
  std::size_t iterations = 0;
  bool converged = false;                // assignment reached a fixpoint
};

/// Lloyd's algorithm with k-means++ seeding driven by `seed`.
///
/// Stops when an assignment step changes nothing or after `max_iterations`
/// assignment steps. A cluster that ends up empty is moved onto the point
/// farthest from its current center. Distance ties go to the lowest center
/// index. Throws InputError when there are fewer rows than `k`, or when the
/// rows do not contain `k` distinct points.
KMeansResult kmeans(const RowMatrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations = 100);

}  // namespace bevrec
