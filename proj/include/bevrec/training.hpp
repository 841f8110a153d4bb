#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "bevrec/types.hpp"

namespace bevrec::training {

using Descriptor = Eigen::VectorXd;

struct TripletConfig {
  double margin = 0.5;
  std::size_t n_pos = 2;
  std::size_t n_neg = 10;
  double d_pos = 10.0;   // meters; positives lie within this radius
  double d_neg = 50.0;   // meters; negatives lie beyond this radius
  std::size_t hard_mining_start_epoch = 10;

  void validate() const;
};

/// One query with its sampled positives and negatives. Indices refer to the
/// frame sequence the batch was drawn from.
struct TripletBatch {
  std::size_t query_index = 0;
  std::vector<std::size_t> positive_indices;
  std::vector<std::size_t> negative_indices;
  Descriptor query;
  std::vector<Descriptor> positives;
  std::vector<Descriptor> negatives;
};

/// Linear map applied to global descriptors before distances are taken.
struct EmbeddingMap {
  Eigen::MatrixXd weights;  // e x D
  double learning_rate = 0.01;
  std::size_t epoch = 0;

  std::size_t output_dim() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(weights.cols()); }

  Descriptor apply(const Descriptor& x) const { return weights * x; }

  /// Top `output_dim` rows of the D x D identity. Throws ConfigError if
  /// output_dim > input_dim or output_dim == 0.
  static EmbeddingMap identity(std::size_t output_dim, std::size_t input_dim);
};

/// For every query with at least n_pos frames within d_pos (itself excluded)
/// and n_neg frames beyond d_neg, samples both sets uniformly without
/// replacement. Other queries are skipped.
std::vector<TripletBatch> select_triplets(std::span<const Pose> poses, std::span<const Descriptor> descriptors,
                                          const TripletConfig& cfg, std::uint64_t seed);

/// Squared embedded distances of one batch.
struct BatchDistances {
  std::vector<double> positive;
  std::vector<double> negative;
};
BatchDistances batch_distances(const TripletBatch& batch, const EmbeddingMap& map);

/// Lazy triplet loss: max_j [m + min_p delta_p - delta_j]_+ with squared
/// Euclidean distances in the embedded space.
double triplet_loss(const TripletBatch& batch, const EmbeddingMap& map, double margin);

/// Exact subgradient of triplet_loss with respect to the weights. Uses the
/// closest positive and the closest negative (lowest index on ties); zero when
/// the hinge is inactive.
Eigen::MatrixXd triplet_grad(const TripletBatch& batch, const EmbeddingMap& map, double margin);

/// Indices of the `n_neg` candidates closest to `query` in the embedded space,
/// nearest first, ties by lower index. Returns all of them when there are
/// fewer than `n_neg`.
std::vector<std::size_t> mine_hard_negatives(const Descriptor& query, std::span<const Descriptor> candidates,
                                             const EmbeddingMap& map, std::size_t n_neg);

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t output_dim = 256;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

struct TrainResult {
  EmbeddingMap map;
  std::vector<double> epoch_loss;  // mean pre-update loss of each epoch
};

/// Plain SGD on the lazy triplet loss. Epochs are counted from 0; from epoch
/// `hard_mining_start_epoch` on, negatives are the hardest geometric negatives
/// under the weights at the start of the epoch, before that they are uniform
/// samples. Throws InputError when no query has a valid triplet.
TrainResult train_metric(std::span<const Descriptor> descriptors, std::span<const Pose> poses,
                         const TripletConfig& cfg, const TrainOptions& options);

void save_embedding(const std::filesystem::path& path, const EmbeddingMap& map);
EmbeddingMap load_embedding(const std::filesystem::path& path);

}  // namespace bevrec::training
