#include "bevrec/pipeline.hpp"

#include <cmath>
#include <numbers>

#include "bevrec/errors.hpp"
#include "bevrec/geometry.hpp"
#include "bevrec/parallel.hpp"

namespace bevrec::pipeline {
namespace {

void check_batch(std::size_t scans, std::size_t poses, std::size_t ids) {
  if (scans != poses || scans != ids) throw InputError("build_map: scans, poses and ids differ in length");
}

}  // namespace

PointCloud lidar_to_vehicle(const PointCloud& scan, LidarFrame frame) {
  if (frame == LidarFrame::vehicle) return scan;
  PointCloud out;
  out.points.reserve(scan.size());
  for (const auto& p : scan.points) out.points.emplace_back(-p.y(), p.x(), p.z());
  return out;
}

PointCloud frontal_cone(const PointCloud& cloud, double half_angle_rad) {
  PointCloud out;
  for (const auto& p : cloud.points) {
    if (p.y() > 0.0 && std::atan2(std::abs(p.x()), p.y()) <= half_angle_rad) out.points.push_back(p);
  }
  return out;
}

features::Codebook train_codebook(std::span<const PointCloud> vehicle_clouds, const PipelineConfig& cfg,
                                  std::uint64_t seed) {
  cfg.validate();
  std::vector<features::LocalFeatureSet> corpus(vehicle_clouds.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(vehicle_clouds.size()); ++i) {
    const auto& cloud = vehicle_clouds[static_cast<std::size_t>(i)];
    const auto image = bev::rasterize(bev::crop(cloud, cfg.window), cfg.window, cfg.cell_size);
    corpus[static_cast<std::size_t>(i)] = features::extract_local(image, cfg.patch, cfg.stride);
  }
  return features::train_codebook(corpus, cfg.clusters, seed, cfg.kmeans_max_iterations);
}

Pipeline::Pipeline(PipelineConfig cfg, features::Codebook codebook, std::optional<training::EmbeddingMap> embedding)
    : cfg_(std::move(cfg)), codebook_(std::move(codebook)), embedding_(std::move(embedding)) {
  cfg_.validate();
  if (codebook_.dim() != features::kDescriptorDim)
    throw ConfigError("pipeline: codebook dimension " + std::to_string(codebook_.dim()) + " != extractor dimension " +
                      std::to_string(features::kDescriptorDim));
  if (cfg_.alpha) codebook_.alpha = *cfg_.alpha;
  codebook_.validate();
  if (embedding_ && embedding_->input_dim() != codebook_.clusters() * codebook_.dim())
    throw InputError("pipeline: embedding expects " + std::to_string(embedding_->input_dim()) +
                     "-dim input, descriptors have " + std::to_string(codebook_.clusters() * codebook_.dim()));
}

Pipeline Pipeline::from_files(const PipelineConfig& cfg) {
  if (cfg.codebook_path.empty()) throw ConfigError("pipeline: no codebook path configured");
  std::optional<training::EmbeddingMap> embedding;
  if (!cfg.embedding_path.empty()) embedding = training::load_embedding(cfg.embedding_path);
  return Pipeline(cfg, features::load_codebook(cfg.codebook_path), std::move(embedding));
}

bev::BevImage Pipeline::bev_image(const PointCloud& vehicle_cloud) const {
  return bev::rasterize(bev::crop(vehicle_cloud, cfg_.window), cfg_.window, cfg_.cell_size);
}

features::GlobalDescriptor Pipeline::global_descriptor(const PointCloud& vehicle_cloud) const {
  const auto local = features::extract_local(bev_image(vehicle_cloud), cfg_.patch, cfg_.stride);
  return features::aggregate(local, codebook_);
}

Eigen::VectorXd Pipeline::embed(const features::GlobalDescriptor& descriptor) const {
  return embedding_ ? embedding_->apply(descriptor) : descriptor;
}

PointCloud Pipeline::map_view(const PointCloud& scan) const {
  if (cfg_.map_cone_half_angle_deg <= 0.0) return scan;
  return frontal_cone(scan, cfg_.map_cone_half_angle_deg * std::numbers::pi / 180.0);
}

index::FrameRecord Pipeline::build_map_frame(const PointCloud& scan, const Pose& pose, FrameId id) const {
  return {id, pose, describe(map_view(scan))};
}

Eigen::VectorXd Pipeline::build_query(const DepthMap& depth, const CameraIntrinsics& intrinsics,
                                      const Extrinsics& extrinsics) const {
  return describe(geometry::backproject(depth, intrinsics, extrinsics, cfg_.depth_max));
}

Eigen::VectorXd Pipeline::build_query(const DisparityMap& disparity, const StereoRig& rig,
                                      const Extrinsics& extrinsics) const {
  return build_query(geometry::disparity_to_depth(disparity, rig), rig.intrinsics, extrinsics);
}

std::vector<index::FrameRecord> Pipeline::build_map(std::span<const PointCloud> scans, std::span<const Pose> poses,
                                                    std::span<const FrameId> ids) const {
  check_batch(scans.size(), poses.size(), ids.size());
  std::vector<index::FrameRecord> records(scans.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(scans.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    records[k] = build_map_frame(scans[k], poses[k], ids[k]);
  }
  return records;
}

std::vector<Eigen::VectorXd> Pipeline::build_queries(std::span<const DepthMap> depths,
                                                     const CameraIntrinsics& intrinsics,
                                                     const Extrinsics& extrinsics) const {
  std::vector<Eigen::VectorXd> out(depths.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(depths.size()); ++i)
    out[static_cast<std::size_t>(i)] = build_query(depths[static_cast<std::size_t>(i)], intrinsics, extrinsics);
  return out;
}

namespace serial {

std::vector<index::FrameRecord> build_map(const Pipeline& pipeline, std::span<const PointCloud> scans,
                                          std::span<const Pose> poses, std::span<const FrameId> ids) {
  check_batch(scans.size(), poses.size(), ids.size());
  const auto& cfg = pipeline.config();
  std::vector<index::FrameRecord> records;
  records.reserve(scans.size());
  for (std::size_t k = 0; k < scans.size(); ++k) {
    PointCloud view = cfg.map_cone_half_angle_deg > 0.0
                          ? frontal_cone(scans[k], cfg.map_cone_half_angle_deg * std::numbers::pi / 180.0)
                          : scans[k];
    const auto image = bev::serial::rasterize(bev::crop(view, cfg.window), cfg.window, cfg.cell_size);
    const auto local = features::serial::extract_local(image, cfg.patch, cfg.stride);
    records.push_back({ids[k], poses[k], pipeline.embed(features::serial::aggregate(local, pipeline.codebook()))});
  }
  return records;
}

}  // namespace serial

}  // namespace bevrec::pipeline
