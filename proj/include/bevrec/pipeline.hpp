#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "bevrec/bev.hpp"
#include "bevrec/config.hpp"
#include "bevrec/features.hpp"
#include "bevrec/index.hpp"
#include "bevrec/training.hpp"
#include "bevrec/types.hpp"

namespace bevrec::pipeline {

/// Rotates raw scan axes into the vehicle frame (x right, y forward, z up).
PointCloud lidar_to_vehicle(const PointCloud& scan, LidarFrame frame);

/// Keeps points in front of the vehicle whose bearing from the forward axis
/// is at most `half_angle_rad`.
PointCloud frontal_cone(const PointCloud& cloud, double half_angle_rad);

/// BEV local features for every cloud (crop, rasterize, extract), then
/// k-means over all of them.
features::Codebook train_codebook(std::span<const PointCloud> vehicle_clouds, const PipelineConfig& cfg,
                                  std::uint64_t seed);

/// Both recognition branches: LiDAR scans become map records, depth or
/// disparity maps become query descriptors. Every stage is deterministic, so
/// equal inputs give bit-identical descriptors.
class Pipeline {
 public:
  /// Throws ConfigError when the config is invalid or the codebook dimension
  /// does not match the extractor, InputError when the embedding input does
  /// not match K*d.
  Pipeline(PipelineConfig cfg, features::Codebook codebook, std::optional<training::EmbeddingMap> embedding = {});

  /// Loads the codebook (and embedding, if configured) named in `cfg`.
  static Pipeline from_files(const PipelineConfig& cfg);

  const PipelineConfig& config() const { return cfg_; }
  const features::Codebook& codebook() const { return codebook_; }
  bool has_embedding() const { return embedding_.has_value(); }

  bev::BevImage bev_image(const PointCloud& vehicle_cloud) const;
  /// Unembedded VLAD descriptor of a vehicle-frame cloud.
  features::GlobalDescriptor global_descriptor(const PointCloud& vehicle_cloud) const;
  /// Identity without an embedding map.
  Eigen::VectorXd embed(const features::GlobalDescriptor& descriptor) const;
  Eigen::VectorXd describe(const PointCloud& vehicle_cloud) const { return embed(global_descriptor(vehicle_cloud)); }

  /// `scan` must already be in the vehicle frame.
  index::FrameRecord build_map_frame(const PointCloud& scan, const Pose& pose, FrameId id) const;

  /// Depth pixels beyond the configured depth ceiling are dropped.
  Eigen::VectorXd build_query(const DepthMap& depth, const CameraIntrinsics& intrinsics,
                              const Extrinsics& extrinsics) const;
  Eigen::VectorXd build_query(const DisparityMap& disparity, const StereoRig& rig, const Extrinsics& extrinsics) const;

  /// build_map_frame over a batch, one frame per worker.
  std::vector<index::FrameRecord> build_map(std::span<const PointCloud> scans, std::span<const Pose> poses,
                                            std::span<const FrameId> ids) const;
  /// Query descriptors of a batch of depth maps sharing one calibration.
  std::vector<Eigen::VectorXd> build_queries(std::span<const DepthMap> depths, const CameraIntrinsics& intrinsics,
                                             const Extrinsics& extrinsics) const;

 private:
  PointCloud map_view(const PointCloud& scan) const;

  PipelineConfig cfg_;
  features::Codebook codebook_;
  std::optional<training::EmbeddingMap> embedding_;
};

namespace serial {
/// Frame-by-frame reference for Pipeline::build_map.
std::vector<index::FrameRecord> build_map(const Pipeline& pipeline, std::span<const PointCloud> scans,
                                          std::span<const Pose> poses, std::span<const FrameId> ids);
}  // namespace serial

}  // namespace bevrec::pipeline
