#include "bevrec/training.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "bevrec/binary_io.hpp"
#include "bevrec/errors.hpp"

namespace bevrec::training {
namespace {

constexpr char kEmbeddingMagic[] = "I2PW";
constexpr std::uint16_t kEmbeddingVersion = 1;

struct Candidates {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

std::vector<Candidates> geometric_candidates(std::span<const Pose> poses, const TripletConfig& cfg) {
  std::vector<Candidates> out(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    for (std::size_t j = 0; j < poses.size(); ++j) {
      if (i == j) continue;
      const double dist = (poses[i].position - poses[j].position).norm();
      if (dist <= cfg.d_pos) out[i].positives.push_back(j);
      else if (dist > cfg.d_neg) out[i].negatives.push_back(j);
    }
  }
  return out;
}

bool usable(const Candidates& c, const TripletConfig& cfg) {
  return c.positives.size() >= cfg.n_pos && c.negatives.size() >= cfg.n_neg;
}

// Uniform sample of `count` entries without replacement (partial Fisher-Yates).
std::vector<std::size_t> sample(std::vector<std::size_t> pool, std::size_t count, std::mt19937_64& rng) {
  count = std::min(count, pool.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

TripletBatch make_batch(std::size_t query, std::vector<std::size_t> pos, std::vector<std::size_t> neg,
                        std::span<const Descriptor> descriptors) {
  TripletBatch b;
  b.query_index = query;
  b.query = descriptors[query];
  for (auto p : pos) b.positives.push_back(descriptors[p]);
  for (auto n : neg) b.negatives.push_back(descriptors[n]);
  b.positive_indices = std::move(pos);
  b.negative_indices = std::move(neg);
  return b;
}

// Position of the smallest value, lowest index on ties.
std::size_t argmin(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

std::vector<std::size_t> smallest_k(const std::vector<double>& dist, std::size_t k) {
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
  order.resize(k);
  return order;
}

void check_dims(const TripletBatch& batch, const EmbeddingMap& map) {
  const auto d = static_cast<Eigen::Index>(map.input_dim());
  auto bad = [d](const Descriptor& x) { return x.size() != d; };
  if (bad(batch.query) || std::any_of(batch.positives.begin(), batch.positives.end(), bad) ||
      std::any_of(batch.negatives.begin(), batch.negatives.end(), bad))
    throw InputError("triplet batch dimension does not match embedding input dimension");
  if (batch.positives.empty() || batch.negatives.empty())
    throw InputError("triplet batch needs at least one positive and one negative");
}

}  // namespace

void TripletConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("triplet: margin must be positive");
  if (!(d_pos > 0.0) || !(d_neg > d_pos)) throw ConfigError("triplet: need 0 < d_pos < d_neg");
  if (n_pos < 1 || n_neg < 1) throw ConfigError("triplet: n_pos and n_neg must be >= 1");
}

EmbeddingMap EmbeddingMap::identity(std::size_t output_dim, std::size_t input_dim) {
  if (output_dim == 0 || output_dim > input_dim)
    throw ConfigError("embedding: output dim " + std::to_string(output_dim) + " must be in [1, " +
                      std::to_string(input_dim) + "]");
  EmbeddingMap m;
  m.weights = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(output_dim), static_cast<Eigen::Index>(input_dim));
  return m;
}

std::vector<TripletBatch> select_triplets(std::span<const Pose> poses, std::span<const Descriptor> descriptors,
                                          const TripletConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (poses.size() != descriptors.size()) throw InputError("select_triplets: poses and descriptors differ in length");
  const auto candidates = geometric_candidates(poses, cfg);
  std::mt19937_64 rng(seed);
  std::vector<TripletBatch> batches;
  for (std::size_t q = 0; q < poses.size(); ++q) {
    if (!usable(candidates[q], cfg)) continue;
    auto pos = sample(candidates[q].positives, cfg.n_pos, rng);
    auto neg = sample(candidates[q].negatives, cfg.n_neg, rng);
    batches.push_back(make_batch(q, std::move(pos), std::move(neg), descriptors));
  }
  return batches;
}

BatchDistances batch_distances(const TripletBatch& batch, const EmbeddingMap& map) {
  check_dims(batch, map);
  const Descriptor eq = map.apply(batch.query);
  BatchDistances d;
  for (const auto& p : batch.positives) d.positive.push_back((eq - map.apply(p)).squaredNorm());
  for (const auto& n : batch.negatives) d.negative.push_back((eq - map.apply(n)).squaredNorm());
  return d;
}

double triplet_loss(const TripletBatch& batch, const EmbeddingMap& map, double margin) {
  const BatchDistances d = batch_distances(batch, map);
  const double pos = *std::min_element(d.positive.begin(), d.positive.end());
  double loss = 0.0;
  for (double neg : d.negative) loss = std::max(loss, margin + pos - neg);
  return loss;
}

Eigen::MatrixXd triplet_grad(const TripletBatch& batch, const EmbeddingMap& map, double margin) {
  const BatchDistances d = batch_distances(batch, map);
  const std::size_t p = argmin(d.positive);
  const std::size_t n = argmin(d.negative);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(map.weights.rows(), map.weights.cols());
  if (!(margin + d.positive[p] - d.negative[n] > 0.0)) return grad;
  const Descriptor a = batch.query - batch.positives[p];
  const Descriptor b = batch.query - batch.negatives[n];
  grad.noalias() += 2.0 * (map.weights * a) * a.transpose();
  grad.noalias() -= 2.0 * (map.weights * b) * b.transpose();
  return grad;
}

std::vector<std::size_t> mine_hard_negatives(const Descriptor& query, std::span<const Descriptor> candidates,
                                             const EmbeddingMap& map, std::size_t n_neg) {
  if (candidates.empty()) throw InputError("mine_hard_negatives: no candidates");
  const Descriptor eq = map.apply(query);
  std::vector<double> dist;
  dist.reserve(candidates.size());
  for (const auto& c : candidates) dist.push_back((eq - map.apply(c)).squaredNorm());
  return smallest_k(dist, n_neg);
}

TrainResult train_metric(std::span<const Descriptor> descriptors, std::span<const Pose> poses,
                         const TripletConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (descriptors.size() != poses.size()) throw InputError("train_metric: poses and descriptors differ in length");
  if (descriptors.empty()) throw InputError("train_metric: empty dataset");
  const auto dim = static_cast<std::size_t>(descriptors.front().size());
  for (const auto& d : descriptors)
    if (static_cast<std::size_t>(d.size()) != dim) throw InputError("train_metric: mixed descriptor dimensions");

  const auto candidates = geometric_candidates(poses, cfg);
  std::vector<std::size_t> queries;
  for (std::size_t q = 0; q < candidates.size(); ++q)
    if (usable(candidates[q], cfg)) queries.push_back(q);
  if (queries.empty()) throw InputError("train_metric: no query has enough positives and negatives");

  TrainResult result;
  result.map = EmbeddingMap::identity(options.output_dim, dim);
  result.map.learning_rate = options.learning_rate;
  std::mt19937_64 rng(options.seed);
  Eigen::MatrixXd embedded;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(queries.begin(), queries.end(), rng);
    const bool mining = epoch >= cfg.hard_mining_start_epoch;
    if (mining) {
      embedded.resize(result.map.weights.rows(), static_cast<Eigen::Index>(descriptors.size()));
      for (std::size_t i = 0; i < descriptors.size(); ++i)
        embedded.col(static_cast<Eigen::Index>(i)) = result.map.apply(descriptors[i]);
    }

    double loss_sum = 0.0;
    for (std::size_t q : queries) {
      auto pos = sample(candidates[q].positives, cfg.n_pos, rng);
      std::vector<std::size_t> neg;
      if (mining) {
        const auto& pool = candidates[q].negatives;
        std::vector<double> dist;
        dist.reserve(pool.size());
        for (std::size_t j : pool)
          dist.push_back((embedded.col(static_cast<Eigen::Index>(q)) - embedded.col(static_cast<Eigen::Index>(j)))
                             .squaredNorm());
        for (std::size_t k : smallest_k(dist, cfg.n_neg)) neg.push_back(pool[k]);
      } else {
        neg = sample(candidates[q].negatives, cfg.n_neg, rng);
      }
      const TripletBatch batch = make_batch(q, std::move(pos), std::move(neg), descriptors);
      loss_sum += triplet_loss(batch, result.map, cfg.margin);
      result.map.weights -= result.map.learning_rate * triplet_grad(batch, result.map, cfg.margin);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(queries.size()));
    ++result.map.epoch;
  }
  return result;
}

void save_embedding(const std::filesystem::path& path, const EmbeddingMap& map) {
  io::ByteWriter w;
  w.magic(kEmbeddingMagic);
  w.u16(kEmbeddingVersion);
  w.u32(static_cast<std::uint32_t>(map.output_dim()));
  w.u32(static_cast<std::uint32_t>(map.input_dim()));
  for (Eigen::Index r = 0; r < map.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < map.weights.cols(); ++c) w.f64(map.weights(r, c));
  io::write_file(path, w.bytes());
}

EmbeddingMap load_embedding(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, "embedding " + path.string());
  r.expect_magic(kEmbeddingMagic);
  if (const auto version = r.u16(); version != kEmbeddingVersion)
    throw FormatError("embedding " + path.string() + ": unsupported version " + std::to_string(version));
  const std::uint32_t e = r.u32();
  const std::uint32_t d = r.u32();
  if (r.remaining() != static_cast<std::size_t>(e) * d * 8)
    throw FormatError("embedding " + path.string() + ": payload size does not match header");
  EmbeddingMap map;
  map.weights.resize(e, d);
  for (std::uint32_t i = 0; i < e; ++i)
    for (std::uint32_t j = 0; j < d; ++j) map.weights(i, j) = r.f64();
  if (!map.weights.allFinite()) throw FormatError("embedding " + path.string() + ": non-finite weight");
  return map;
}

}  // namespace bevrec::training
