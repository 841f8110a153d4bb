#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "bevrec/bev.hpp"
#include "bevrec/kmeans.hpp"

namespace bevrec::features {

inline constexpr std::size_t kOrientationBins = 8;
inline constexpr std::size_t kSpatialCells = 4;  // 2 x 2
inline constexpr std::size_t kDescriptorDim = kOrientationBins * kSpatialCells;
inline constexpr std::size_t kDefaultPatch = 16;
inline constexpr std::size_t kDefaultStride = 8;
inline constexpr std::size_t kDefaultClusters = 64;

struct CellPos {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const CellPos&) const = default;
};

/// Local descriptors stored row-wise in one flat buffer.
class LocalFeatureSet {
 public:
  explicit LocalFeatureSet(std::size_t dim = kDescriptorDim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }

  void add(CellPos pos, std::span<const double> descriptor);
  std::span<const double> descriptor(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  CellPos position(std::size_t i) const { return positions_[i]; }

 private:
  std::size_t dim_;
  std::vector<CellPos> positions_;
  std::vector<double> values_;
};

/// Cluster centers plus the soft-assignment sharpness. alpha = +inf means
/// hard assignment to the nearest center.
struct Codebook {
  RowMatrix centers;  // K x d
  double alpha = 1.0;

  std::size_t clusters() const { return static_cast<std::size_t>(centers.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(centers.cols()); }
  /// Throws InputError unless K >= 2, centers are pairwise distinct and alpha > 0.
  void validate() const;
};

using GlobalDescriptor = Eigen::VectorXd;

/// Gradient-orientation histograms over square patches of the BEV image.
///
/// Gradients are central differences on the normalized values with
/// edge-replicated borders. Each patch on the `stride` grid is split 2x2 and
/// every pixel votes its gradient magnitude into one of 8 orientation bins
/// (bin b spans [b pi/4, (b+1) pi/4) measured from +column towards +row).
/// Layout: ((cell_row * 2 + cell_col) * 8 + bin). Descriptors are L2-normalized;
/// patches with no gradient are dropped.
LocalFeatureSet extract_local(const bev::BevImage& image, std::size_t patch = kDefaultPatch,
                              std::size_t stride = kDefaultStride);

/// Gathers every descriptor of `corpus` and clusters them with k-means.
/// alpha = 1 / (2 sigma^2) with sigma the mean distance of a feature to its
/// nearest center; sigma == 0 gives alpha = +inf.
Codebook train_codebook(std::span<const LocalFeatureSet> corpus, std::size_t clusters, std::uint64_t seed,
                        std::size_t max_iterations = 100);

/// Soft-assignment weights of one descriptor; they sum to 1.
Eigen::VectorXd soft_assign(std::span<const double> x, const Codebook& codebook);

/// Soft-assignment VLAD: per-cluster weighted residual sums, each block
/// L2-normalized, then the concatenation L2-normalized. Empty input gives the
/// zero vector of length K*d. Residuals are summed in a canonical feature order,
/// so reordering the input leaves the result bit-identical.
GlobalDescriptor aggregate(const LocalFeatureSet& features, const Codebook& codebook);

void save_codebook(const std::filesystem::path& path, const Codebook& codebook);
Codebook load_codebook(const std::filesystem::path& path);

namespace serial {
LocalFeatureSet extract_local(const bev::BevImage& image, std::size_t patch = kDefaultPatch,
                              std::size_t stride = kDefaultStride);
GlobalDescriptor aggregate(const LocalFeatureSet& features, const Codebook& codebook);
}  // namespace serial

}  // namespace bevrec::features
