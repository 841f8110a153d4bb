#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "bevrec/types.hpp"

namespace bevrec::index {

struct FrameRecord {
  FrameId frame_id = 0;
  Pose pose;
  Eigen::VectorXd descriptor;
};

struct Match {
  FrameId frame_id = 0;
  double distance = 0.0;  // Euclidean
  bool operator==(const Match&) const = default;
};

/// Ranked by distance, ties by lower frame id.
using RetrievalResult = std::vector<Match>;

/// Frames whose id lies within `radius` of `center` are skipped by a query.
struct ExclusionWindow {
  FrameId center = 0;
  std::uint64_t radius = 0;
  bool excludes(FrameId id) const { return (id > center ? id - center : center - id) <= radius; }
};

/// In-memory descriptor database answering exact Euclidean top-N queries.
///
/// Not internally synchronized: const member functions may run concurrently,
/// insert() needs exclusive access.
class Database {
 public:
  /// Throws ConflictError on a duplicate id, InputError on a dimension
  /// mismatch (the first insert fixes the dimension).
  void insert(FrameRecord record);

  /// Exact top-N by Euclidean distance; N is capped at the database size.
  /// Throws StateError on an empty database, InputError for N == 0 or a
  /// dimension mismatch.
  RetrievalResult query_knn(const Eigen::VectorXd& q, std::size_t n,
                            std::optional<ExclusionWindow> exclude = std::nullopt) const;

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t dim() const { return dim_; }
  std::span<const FrameRecord> records() const { return records_; }
  /// Throws InputError for an unknown id.
  const FrameRecord& at(FrameId id) const;
  bool contains(FrameId id) const { return by_id_.count(id) != 0; }

  void save(const std::filesystem::path& path) const;
  static Database load(const std::filesystem::path& path);

 private:
  void check_query(const Eigen::VectorXd& q, std::size_t n) const;

  std::size_t dim_ = 0;
  std::vector<FrameRecord> records_;
  std::unordered_map<FrameId, std::size_t> by_id_;
  std::vector<double> flat_;  // row-major copy of all descriptors for scanning

  friend RetrievalResult serial_query_knn(const Database&, const Eigen::VectorXd&, std::size_t,
                                          std::optional<ExclusionWindow>);
};

namespace serial {
/// Single-threaded reference scan for Database::query_knn.
RetrievalResult query_knn(const Database& db, const Eigen::VectorXd& q, std::size_t n,
                          std::optional<ExclusionWindow> exclude = std::nullopt);
}  // namespace serial

}  // namespace bevrec::index
