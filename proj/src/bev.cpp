#include "bevrec/bev.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bevrec/errors.hpp"
#include "bevrec/parallel.hpp"

namespace bevrec::bev {
namespace {

std::size_t bins_for(double lo, double hi, double cell, const char* axis) {
  const double extent = hi - lo;
  const double n = std::round(extent / cell);
  if (n < 1.0 || std::abs(n * cell - extent) > 1e-9)
    throw ConfigError(std::string("bev: ") + axis + " extent " + std::to_string(extent) +
                      " is not a multiple of cell size " + std::to_string(cell));
  return static_cast<std::size_t>(n);
}

std::size_t bin_index(double v, double lo, double cell, std::size_t n) {
  const auto j = static_cast<std::ptrdiff_t>(std::floor((v - lo) / cell));
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

struct Binner {
  CropWindow window;
  double cell;
  GridShape shape;

  std::size_t cell_of(const Vec3& p) const {
    const std::size_t col = bin_index(p.x(), window.x_min, cell, shape.cols);
    const std::size_t from_near = bin_index(p.y(), window.y_min, cell, shape.rows);
    return (shape.rows - 1 - from_near) * shape.cols + col;
  }
};

Binner make_binner(const CropWindow& window, double cell_size) {
  window.validate();
  if (!(cell_size > 0.0)) throw ConfigError("bev: cell size must be positive");
  return {window, cell_size, grid_shape(window, cell_size)};
}

BevImage empty_image(const Binner& b) {
  BevImage image;
  image.rows = b.shape.rows;
  image.cols = b.shape.cols;
  image.cell_size = b.cell;
  image.raw_counts.assign(b.shape.rows * b.shape.cols, 0);
  return image;
}

[[noreturn]] void outside(const Vec3& p) {
  std::ostringstream msg;
  msg << "rasterize: point (" << p.x() << ", " << p.y() << ", " << p.z() << ") lies outside the crop window";
  throw ContractError(msg.str());
}

}  // namespace

void CropWindow::validate() const {
  if (!(x_min < x_max) || !(y_min < y_max) || !(z_min < z_max))
    throw ConfigError("crop window: min must be below max on every axis");
}

std::uint64_t BevImage::total_count() const {
  return std::accumulate(raw_counts.begin(), raw_counts.end(), std::uint64_t{0});
}

GridShape grid_shape(const CropWindow& window, double cell_size) {
  window.validate();
  if (!(cell_size > 0.0)) throw ConfigError("bev: cell size must be positive");
  return {bins_for(window.y_min, window.y_max, cell_size, "y"), bins_for(window.x_min, window.x_max, cell_size, "x")};
}

PointCloud crop(const PointCloud& cloud, const CropWindow& window) {
  PointCloud out;
  out.points.reserve(cloud.size());
  std::copy_if(cloud.points.begin(), cloud.points.end(), std::back_inserter(out.points),
               [&](const Vec3& p) { return window.contains(p); });
  return out;
}

void normalize(BevImage& image) {
  const std::uint32_t peak = image.raw_counts.empty()
                                 ? 0
                                 : *std::max_element(image.raw_counts.begin(), image.raw_counts.end());
  image.values.assign(image.raw_counts.size(), 0.0);
  if (peak == 0) return;
  const double inv = 1.0 / static_cast<double>(peak);
  for (std::size_t i = 0; i < image.raw_counts.size(); ++i) {
    // exact 1.0 at the peak regardless of rounding in inv
    image.values[i] = image.raw_counts[i] == peak ? 1.0 : static_cast<double>(image.raw_counts[i]) * inv;
  }
}

BevImage rasterize(const PointCloud& cloud, const CropWindow& window, double cell_size) {
  const Binner b = make_binner(window, cell_size);
  BevImage image = empty_image(b);
  const auto n = static_cast<std::ptrdiff_t>(cloud.size());
  const std::size_t cells = image.raw_counts.size();
  bool bad = false;
  std::ptrdiff_t first_bad = n;

#pragma omp parallel
  {
    std::vector<std::uint32_t> local(cells, 0);
#pragma omp for schedule(static) reduction(min : first_bad) reduction(|| : bad)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const Vec3& p = cloud.points[static_cast<std::size_t>(i)];
      if (!window.contains(p)) {
        bad = true;
        first_bad = std::min(first_bad, i);
        continue;
      }
      ++local[b.cell_of(p)];
    }
#pragma omp critical(bev_merge)
    for (std::size_t c = 0; c < cells; ++c) image.raw_counts[c] += local[c];
  }
  if (bad) outside(cloud.points[static_cast<std::size_t>(first_bad)]);
  normalize(image);
  return image;
}

namespace serial {

BevImage rasterize(const PointCloud& cloud, const CropWindow& window, double cell_size) {
  const Binner b = make_binner(window, cell_size);
  BevImage image = empty_image(b);
  for (const auto& p : cloud.points) {
    if (!window.contains(p)) outside(p);
    ++image.raw_counts[b.cell_of(p)];
  }
  normalize(image);
  return image;
}

}  // namespace serial

std::string encode_pgm(const BevImage& image) {
  std::string out = "P5\n" + std::to_string(image.cols) + " " + std::to_string(image.rows) + "\n255\n";
  out.reserve(out.size() + image.values.size());
  for (double v : image.values) {
    const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    out.push_back(static_cast<char>(static_cast<unsigned char>(scaled)));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const BevImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_pgm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace bevrec::bev
