#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include "bevrec/bev.hpp"
#include "bevrec/eval.hpp"
#include "bevrec/features.hpp"
#include "bevrec/training.hpp"

namespace bevrec {

/// Axis convention of raw LiDAR scans.
enum class LidarFrame {
  kitti,    // x forward, y left, z up
  vehicle,  // x right, y forward, z up
};

struct PipelineConfig {
  bev::CropWindow window;
  double cell_size = bev::kDefaultCellSize;

  std::size_t patch = features::kDefaultPatch;
  std::size_t stride = features::kDefaultStride;
  std::size_t clusters = features::kDefaultClusters;
  std::optional<double> alpha;  // overrides the codebook's own sharpness
  std::size_t kmeans_max_iterations = 100;

  std::string codebook_path;
  std::string embedding_path;

  double depth_max = 80.0;          // meters
  double depth_scale = 1.0 / 256;   // meters per PNG unit
  double disparity_scale = 1.0 / 256;  // pixels per PNG unit
  std::string camera = "P2";        // calibration entry of the query camera
  std::string right_camera = "P3";  // stereo partner, for disparity input

  LidarFrame lidar_frame = LidarFrame::kitti;
  double map_cone_half_angle_deg = 0.0;  // 0 keeps the full map cloud

  training::TripletConfig triplet;
  std::size_t embedding_dim = 256;
  double learning_rate = 0.01;
  std::size_t epochs = 20;

  eval::EvalConfig eval;

  /// Throws ConfigError if any component constraint is violated.
  void validate() const;
};

/// Parses "key = value" lines ('#' starts a comment). Keys that are absent
/// keep their defaults. Unknown keys and out-of-range values are ConfigError.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace bevrec
