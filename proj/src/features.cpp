#include "bevrec/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bevrec/binary_io.hpp"
#include "bevrec/errors.hpp"
#include "bevrec/parallel.hpp"

namespace bevrec::features {
namespace {

constexpr char kCodebookMagic[] = "I2PC";
constexpr std::uint16_t kCodebookVersion = 1;

struct Gradient {
  double magnitude;
  std::size_t bin;
};

// Folding the lower half-plane onto the upper one makes a pi rotation of the
// gradient shift the bin by exactly 4, independent of atan2 rounding.
std::size_t orientation_bin(double gx, double gy) {
  std::size_t offset = 0;
  if (gy < 0.0 || (gy == 0.0 && gx < 0.0)) {
    gx = -gx;
    gy = -gy;
    offset = kOrientationBins / 2;
  }
  const double theta = std::atan2(gy, gx);  // [0, pi]
  auto b = static_cast<std::size_t>(std::floor(theta / (std::numbers::pi / 4.0)));
  if (b > 3) b = 3;
  return b + offset;
}

Gradient gradient_at(const bev::BevImage& image, std::size_t r, std::size_t c) {
  const std::size_t left = c == 0 ? 0 : c - 1;
  const std::size_t right = c + 1 == image.cols ? c : c + 1;
  const std::size_t up = r == 0 ? 0 : r - 1;
  const std::size_t down = r + 1 == image.rows ? r : r + 1;
  const double gx = (image.value(r, right) - image.value(r, left)) / 2.0;
  const double gy = (image.value(down, c) - image.value(up, c)) / 2.0;
  return {std::sqrt(gx * gx + gy * gy), orientation_bin(gx, gy)};
}

void check_patch(const bev::BevImage& image, std::size_t patch, std::size_t stride) {
  if (patch < 2 || patch > std::min(image.rows, image.cols))
    throw ConfigError("extract_local: patch must be in [2, min(rows, cols)]");
  if (stride < 1) throw ConfigError("extract_local: stride must be >= 1");
}

std::vector<std::size_t> patch_origins(std::size_t extent, std::size_t patch, std::size_t stride) {
  std::vector<std::size_t> origins;
  for (std::size_t o = 0; o + patch <= extent; o += stride) origins.push_back(o);
  return origins;
}

// Returns false for a patch without any gradient.
template <class GradientFn>
bool describe_patch(GradientFn&& grad, std::size_t r0, std::size_t c0, std::size_t patch, double* out) {
  std::fill(out, out + kDescriptorDim, 0.0);
  const std::size_t half = patch / 2;
  for (std::size_t r = 0; r < patch; ++r) {
    const std::size_t cell_r = r < half ? 0 : 1;
    for (std::size_t c = 0; c < patch; ++c) {
      const std::size_t cell_c = c < half ? 0 : 1;
      const Gradient g = grad(r0 + r, c0 + c);
      out[(cell_r * 2 + cell_c) * kOrientationBins + g.bin] += g.magnitude;
    }
  }
  double norm2 = 0.0;
  for (std::size_t i = 0; i < kDescriptorDim; ++i) norm2 += out[i] * out[i];
  if (!(norm2 > 0.0)) return false;
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t i = 0; i < kDescriptorDim; ++i) out[i] *= inv;
  return true;
}

void check_dims(const LocalFeatureSet& features, const Codebook& codebook) {
  if (features.dim() != codebook.dim())
    throw InputError("aggregate: feature dimension " + std::to_string(features.dim()) + " != codebook dimension " +
                     std::to_string(codebook.dim()));
}

// Features sorted by descriptor value, so sums do not depend on input order.
std::vector<std::size_t> canonical_order(const LocalFeatureSet& features) {
  std::vector<std::size_t> order(features.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto x = features.descriptor(a), y = features.descriptor(b);
    return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
  });
  return order;
}

void normalize_blocks(GlobalDescriptor& v, std::size_t clusters, std::size_t dim) {
  for (std::size_t k = 0; k < clusters; ++k) {
    auto block = v.segment(static_cast<Eigen::Index>(k * dim), static_cast<Eigen::Index>(dim));
    const double n = block.norm();
    if (n > 0.0) block /= n;
  }
  const double n = v.norm();
  if (n > 0.0) v /= n;
}

}  // namespace

void LocalFeatureSet::add(CellPos pos, std::span<const double> descriptor) {
  if (descriptor.size() != dim_) throw InputError("LocalFeatureSet: descriptor dimension mismatch");
  positions_.push_back(pos);
  values_.insert(values_.end(), descriptor.begin(), descriptor.end());
}

void Codebook::validate() const {
  if (centers.rows() < 2) throw InputError("codebook: need at least 2 clusters");
  if (!(alpha > 0.0)) throw InputError("codebook: alpha must be positive");
  for (Eigen::Index a = 0; a < centers.rows(); ++a)
    for (Eigen::Index b = a + 1; b < centers.rows(); ++b)
      if ((centers.row(a) - centers.row(b)).squaredNorm() == 0.0)
        throw InputError("codebook: centers must be pairwise distinct");
}

LocalFeatureSet extract_local(const bev::BevImage& image, std::size_t patch, std::size_t stride) {
  check_patch(image, patch, stride);
  const std::size_t cells = image.rows * image.cols;
  std::vector<Gradient> grads(cells);
  const auto n_cells = static_cast<std::ptrdiff_t>(cells);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n_cells; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    grads[idx] = gradient_at(image, idx / image.cols, idx % image.cols);
  }

  const auto rows = patch_origins(image.rows, patch, stride);
  const auto cols = patch_origins(image.cols, patch, stride);
  const std::size_t n_patches = rows.size() * cols.size();
  std::vector<double> slots(n_patches * kDescriptorDim);
  std::vector<std::uint8_t> kept(n_patches, 0);
  const auto lookup = [&](std::size_t r, std::size_t c) { return grads[r * image.cols + c]; };
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(n_patches); ++p) {
    const auto idx = static_cast<std::size_t>(p);
    kept[idx] = describe_patch(lookup, rows[idx / cols.size()], cols[idx % cols.size()], patch,
                               slots.data() + idx * kDescriptorDim);
  }

  LocalFeatureSet out(kDescriptorDim);
  for (std::size_t p = 0; p < n_patches; ++p) {
    if (!kept[p]) continue;
    out.add({rows[p / cols.size()], cols[p % cols.size()]}, {slots.data() + p * kDescriptorDim, kDescriptorDim});
  }
  return out;
}

Codebook train_codebook(std::span<const LocalFeatureSet> corpus, std::size_t clusters, std::uint64_t seed,
                        std::size_t max_iterations) {
  if (clusters < 2) throw InputError("train_codebook: need at least 2 clusters");
  std::size_t total = 0;
  std::size_t dim = corpus.empty() ? kDescriptorDim : corpus.front().dim();
  for (const auto& set : corpus) {
    if (set.dim() != dim) throw InputError("train_codebook: mixed descriptor dimensions");
    total += set.size();
  }
  if (total < clusters)
    throw InputError("train_codebook: " + std::to_string(total) + " features for " + std::to_string(clusters) +
                     " clusters");

  RowMatrix points(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(dim));
  Eigen::Index row = 0;
  for (const auto& set : corpus)
    for (std::size_t i = 0; i < set.size(); ++i, ++row) {
      const auto d = set.descriptor(i);
      for (std::size_t j = 0; j < dim; ++j) points(row, static_cast<Eigen::Index>(j)) = d[j];
    }

  KMeansResult km = kmeans(points, clusters, seed, max_iterations);
  double sigma = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < km.centers.rows(); ++k)
      best = std::min(best, (points.row(i) - km.centers.row(k)).squaredNorm());
    sigma += std::sqrt(best);
  }
  sigma /= static_cast<double>(points.rows());

  Codebook cb;
  cb.centers = std::move(km.centers);
  cb.alpha = sigma > 0.0 ? 1.0 / (2.0 * sigma * sigma) : std::numeric_limits<double>::infinity();
  cb.validate();
  return cb;
}

Eigen::VectorXd soft_assign(std::span<const double> x, const Codebook& codebook) {
  const auto k = codebook.centers.rows();
  const Eigen::Map<const Eigen::RowVectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::VectorXd d(k);
  for (Eigen::Index j = 0; j < k; ++j) d(j) = (xv - codebook.centers.row(j)).squaredNorm();
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < k; ++j)
    if (d(j) < d(best)) best = j;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(k);
  if (std::isinf(codebook.alpha)) {
    w(best) = 1.0;
    return w;
  }
  const double m = d(best);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    w(j) = std::exp(-codebook.alpha * (d(j) - m));
    sum += w(j);
  }
  return w / sum;
}

GlobalDescriptor aggregate(const LocalFeatureSet& features, const Codebook& codebook) {
  check_dims(features, codebook);
  const std::size_t k = codebook.clusters();
  const std::size_t dim = codebook.dim();
  GlobalDescriptor v = GlobalDescriptor::Zero(static_cast<Eigen::Index>(k * dim));
  const std::size_t n = features.size();
  if (n == 0) return v;

  const auto order = canonical_order(features);
  RowMatrix weights(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    weights.row(i) = soft_assign(features.descriptor(order[static_cast<std::size_t>(i)]), codebook).transpose();

  // One block per cluster; each block sums features in canonical order.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(k); ++c) {
    double* block = v.data() + static_cast<std::size_t>(c) * dim;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = weights(static_cast<Eigen::Index>(i), c);
      if (a == 0.0) continue;
      const auto x = features.descriptor(order[i]);
      for (std::size_t j = 0; j < dim; ++j) block[j] += a * (x[j] - codebook.centers(c, static_cast<Eigen::Index>(j)));
    }
  }
  normalize_blocks(v, k, dim);
  return v;
}

void save_codebook(const std::filesystem::path& path, const Codebook& codebook) {
  io::ByteWriter w;
  w.magic(kCodebookMagic);
  w.u16(kCodebookVersion);
  w.u32(static_cast<std::uint32_t>(codebook.clusters()));
  w.u32(static_cast<std::uint32_t>(codebook.dim()));
  w.f64(codebook.alpha);
  for (Eigen::Index r = 0; r < codebook.centers.rows(); ++r)
    for (Eigen::Index c = 0; c < codebook.centers.cols(); ++c) w.f64(codebook.centers(r, c));
  io::write_file(path, w.bytes());
}

Codebook load_codebook(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, "codebook " + path.string());
  r.expect_magic(kCodebookMagic);
  if (const auto version = r.u16(); version != kCodebookVersion)
    throw FormatError("codebook " + path.string() + ": unsupported version " + std::to_string(version));
  const std::uint32_t k = r.u32();
  const std::uint32_t d = r.u32();
  Codebook cb;
  cb.alpha = r.f64();
  if (r.remaining() != static_cast<std::size_t>(k) * d * 8)
    throw FormatError("codebook " + path.string() + ": payload size does not match header");
  cb.centers.resize(k, d);
  for (std::uint32_t i = 0; i < k; ++i)
    for (std::uint32_t j = 0; j < d; ++j) cb.centers(i, j) = r.f64();
  cb.validate();
  return cb;
}

namespace serial {

LocalFeatureSet extract_local(const bev::BevImage& image, std::size_t patch, std::size_t stride) {
  check_patch(image, patch, stride);
  LocalFeatureSet out(kDescriptorDim);
  double desc[kDescriptorDim];
  const auto direct = [&](std::size_t r, std::size_t c) { return gradient_at(image, r, c); };
  for (std::size_t r0 : patch_origins(image.rows, patch, stride))
    for (std::size_t c0 : patch_origins(image.cols, patch, stride))
      if (describe_patch(direct, r0, c0, patch, desc)) out.add({r0, c0}, desc);
  return out;
}

GlobalDescriptor aggregate(const LocalFeatureSet& features, const Codebook& codebook) {
  check_dims(features, codebook);
  const std::size_t k = codebook.clusters();
  const std::size_t dim = codebook.dim();
  GlobalDescriptor v = GlobalDescriptor::Zero(static_cast<Eigen::Index>(k * dim));
  for (std::size_t i : canonical_order(features)) {
    const auto x = features.descriptor(i);
    const Eigen::VectorXd a = soft_assign(x, codebook);
    for (std::size_t c = 0; c < k; ++c) {
      const double w = a(static_cast<Eigen::Index>(c));
      if (w == 0.0) continue;
      for (std::size_t j = 0; j < dim; ++j)
        v(static_cast<Eigen::Index>(c * dim + j)) +=
            w * (x[j] - codebook.centers(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)));
    }
  }
  normalize_blocks(v, k, dim);
  return v;
}

}  // namespace serial

}  // namespace bevrec::features
