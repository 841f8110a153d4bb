#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bevrec/types.hpp"

namespace bevrec::bev {

/// Axis-aligned crop box in the vehicle frame. Every range is half-open,
/// [min, max).
struct CropWindow {
  double x_min = -25.0, x_max = 25.0;
  double y_min = 0.0, y_max = 50.0;
  double z_min = -5.0, z_max = 5.0;

  /// Throws ConfigError unless min < max on every axis.
  void validate() const;
  bool contains(const Vec3& p) const {
    return p.x() >= x_min && p.x() < x_max && p.y() >= y_min && p.y() < y_max && p.z() >= z_min && p.z() < z_max;
  }
};

inline constexpr double kDefaultCellSize = 0.4;

/// Top-down occupancy raster. Row 0 is the far (forward) edge, column 0 the
/// leftmost edge.
struct BevImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double cell_size = 0.0;
  std::vector<double> values;            // raw / max(raw), in [0,1]
  std::vector<std::uint32_t> raw_counts;

  double value(std::size_t row, std::size_t col) const { return values[row * cols + col]; }
  std::uint32_t count(std::size_t row, std::size_t col) const { return raw_counts[row * cols + col]; }
  std::uint64_t total_count() const;
};

/// Grid geometry derived from a window and cell size. Throws ConfigError when
/// an extent is not a multiple of the cell size within 1e-9.
struct GridShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
};
GridShape grid_shape(const CropWindow& window, double cell_size);

PointCloud crop(const PointCloud& cloud, const CropWindow& window);

/// Counts points per cell and max-normalizes. Cell (row, col) covers
/// x in [x_min + col s, x_min + (col+1) s) and y in [y_max - (row+1) s, y_max - row s).
/// A point outside `window` is a ContractError; crop first.
BevImage rasterize(const PointCloud& cloud, const CropWindow& window, double cell_size);

/// Recomputes `values` from `raw_counts` (per-image max normalization).
void normalize(BevImage& image);

/// Binary PGM (P5), one byte per cell, floor(value * 255 + 0.5).
std::string encode_pgm(const BevImage& image);
void write_pgm(const std::filesystem::path& path, const BevImage& image);

namespace serial {
/// Single-threaded reference for bev::rasterize.
BevImage rasterize(const PointCloud& cloud, const CropWindow& window, double cell_size);
}  // namespace serial

}  // namespace bevrec::bev
