#pragma once

#include <cstddef>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bevrec/index.hpp"
#include "bevrec/types.hpp"

namespace bevrec::eval {

struct EvalConfig {
  double tp_threshold = 10.0;  // meters
  std::size_t top_n = 1;
  double percent = 0.01;
  std::vector<double> sweep{5.0, 10.0, 20.0, 30.0, 40.0, 50.0};
  std::uint64_t exclusion_window = 0;  // frames; 0 disables

  void validate() const;
};

/// Retrieved frame ids index into `db_poses` (frame id == position).
/// A query succeeds when any of its first N matches lies within `threshold`
/// meters (3-D Euclidean) of the query pose. Throws InputError on an empty
/// query set, a length mismatch, or an unknown frame id.
double recall_at_n(std::span<const index::RetrievalResult> results, std::span<const Pose> query_poses,
                   std::span<const Pose> db_poses, double threshold, std::size_t n);

/// ceil(percent * db_size), at least 1.
std::size_t percent_candidates(std::size_t db_size, double percent);

double recall_at_percent(std::span<const index::RetrievalResult> results, std::span<const Pose> query_poses,
                         std::span<const Pose> db_poses, double threshold, double percent);

/// recall@1 for each threshold. Thresholds must be non-empty and strictly
/// increasing (InputError otherwise).
std::vector<std::pair<double, double>> threshold_sweep(std::span<const index::RetrievalResult> results,
                                                       std::span<const Pose> query_poses,
                                                       std::span<const Pose> db_poses,
                                                       std::span<const double> thresholds);

enum class Role { train, val, test };
Role parse_role(const std::string& name);
std::string to_string(Role role);

struct FrameRange {
  std::string sequence;
  std::size_t first = 0;
  std::size_t last = 0;  // inclusive
};

struct SplitSpec {
  std::vector<FrameRange> train;
  std::vector<FrameRange> val;
  std::vector<FrameRange> test;

  const std::vector<FrameRange>& ranges(Role role) const;
  /// Throws ConfigError for inverted or overlapping ranges within a role.
  void validate() const;

  /// Train 00:0-3000, val 00:3200-4540, test 02:0-4660, 05:0-2760,
  /// 06:0-1100, 08:0-4070.
  static SplitSpec kitti_default();
};

struct FrameRef {
  std::string sequence;
  std::size_t frame = 0;
  bool operator==(const FrameRef&) const = default;
};

/// Frame counts per sequence name.
using DatasetIndex = std::map<std::string, std::size_t>;

/// Frames of `role`, in range order. A range reaching past its sequence (or a
/// sequence missing from `dataset`) is a ConfigError.
std::vector<FrameRef> apply_split(const DatasetIndex& dataset, const SplitSpec& split, Role role);

struct MetricRow {
  std::string metric;
  std::string sequence;
  double value = 0.0;
};

/// "metric,sequence,value" CSV.
void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows);
/// "threshold_m,recall_at_1" CSV.
void write_sweep_csv(std::ostream& out, std::span<const std::pair<double, double>> sweep);

}  // namespace bevrec::eval
