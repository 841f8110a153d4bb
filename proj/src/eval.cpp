#include "bevrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "bevrec/errors.hpp"

namespace bevrec::eval {
namespace {

void check_inputs(std::span<const index::RetrievalResult> results, std::span<const Pose> query_poses) {
  if (results.empty()) throw InputError("recall: empty query set");
  if (results.size() != query_poses.size())
    throw InputError("recall: " + std::to_string(results.size()) + " result lists for " +
                     std::to_string(query_poses.size()) + " query poses");
}

const Pose& db_pose(std::span<const Pose> db_poses, FrameId id) {
  if (id >= db_poses.size()) throw InputError("recall: retrieved frame id " + std::to_string(id) + " has no pose");
  return db_poses[id];
}

std::string format_number(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

}  // namespace

void EvalConfig::validate() const {
  if (!(tp_threshold > 0.0)) throw ConfigError("eval: tp_threshold must be positive");
  if (!(percent > 0.0) || percent > 1.0) throw ConfigError("eval: percent must be in (0, 1]");
  if (top_n < 1) throw ConfigError("eval: top_n must be >= 1");
}

double recall_at_n(std::span<const index::RetrievalResult> results, std::span<const Pose> query_poses,
                   std::span<const Pose> db_poses, double threshold, std::size_t n) {
  check_inputs(results, query_poses);
  if (n == 0) throw InputError("recall: N must be >= 1");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    const std::size_t depth = std::min(n, results[q].size());
    for (std::size_t r = 0; r < depth; ++r) {
      if ((db_pose(db_poses, results[q][r].frame_id).position - query_poses[q].position).norm() <= threshold) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::size_t percent_candidates(std::size_t db_size, double percent) {
  // the slack keeps exact products such as 0.01 * 300 from rounding up
  const double raw = std::ceil(percent * static_cast<double>(db_size) - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::max(raw, 0.0)));
}

double recall_at_percent(std::span<const index::RetrievalResult> results, std::span<const Pose> query_poses,
                         std::span<const Pose> db_poses, double threshold, double percent) {
  if (!(percent > 0.0) || percent > 1.0) throw InputError("recall: percent must be in (0, 1]");
  return recall_at_n(results, query_poses, db_poses, threshold, percent_candidates(db_poses.size(), percent));
}

std::vector<std::pair<double, double>> threshold_sweep(std::span<const index::RetrievalResult> results,
                                                       std::span<const Pose> query_poses,
                                                       std::span<const Pose> db_poses,
                                                       std::span<const double> thresholds) {
  if (thresholds.empty()) throw InputError("sweep: empty threshold list");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i] > thresholds[i - 1])) throw InputError("sweep: thresholds must be strictly increasing");
  std::vector<std::pair<double, double>> out;
  for (double t : thresholds) out.emplace_back(t, recall_at_n(results, query_poses, db_poses, t, 1));
  return out;
}

Role parse_role(const std::string& name) {
  if (name == "train") return Role::train;
  if (name == "val") return Role::val;
  if (name == "test") return Role::test;
  throw ConfigError("unknown split role \"" + name + "\" (expected train, val or test)");
}

std::string to_string(Role role) {
  switch (role) {
    case Role::train: return "train";
    case Role::val: return "val";
    case Role::test: return "test";
  }
  return "?";
}

const std::vector<FrameRange>& SplitSpec::ranges(Role role) const {
  switch (role) {
    case Role::train: return train;
    case Role::val: return val;
    case Role::test: break;
  }
  return test;
}

void SplitSpec::validate() const {
  for (Role role : {Role::train, Role::val, Role::test}) {
    const auto& rs = ranges(role);
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (rs[i].first > rs[i].last) throw ConfigError("split " + to_string(role) + ": inverted range");
      for (std::size_t j = i + 1; j < rs.size(); ++j) {
        if (rs[i].sequence != rs[j].sequence) continue;
        if (rs[i].first <= rs[j].last && rs[j].first <= rs[i].last)
          throw ConfigError("split " + to_string(role) + ": overlapping ranges on sequence " + rs[i].sequence);
      }
    }
  }
}

SplitSpec SplitSpec::kitti_default() {
  SplitSpec s;
  s.train = {{"00", 0, 3000}};
  s.val = {{"00", 3200, 4540}};
  s.test = {{"02", 0, 4660}, {"05", 0, 2760}, {"06", 0, 1100}, {"08", 0, 4070}};
  return s;
}

std::vector<FrameRef> apply_split(const DatasetIndex& dataset, const SplitSpec& split, Role role) {
  split.validate();
  std::vector<FrameRef> out;
  for (const auto& range : split.ranges(role)) {
    auto it = dataset.find(range.sequence);
    if (it == dataset.end()) throw ConfigError("split: sequence " + range.sequence + " is not in the dataset");
    if (range.last >= it->second)
      throw ConfigError("split: range " + range.sequence + ":" + std::to_string(range.first) + "-" +
                        std::to_string(range.last) + " exceeds " + std::to_string(it->second) + " frames");
    for (std::size_t f = range.first; f <= range.last; ++f) out.push_back({range.sequence, f});
  }
  return out;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << "metric,sequence,value\n";
  for (const auto& r : rows) out << r.metric << ',' << r.sequence << ',' << format_number(r.value) << '\n';
}

void write_sweep_csv(std::ostream& out, std::span<const std::pair<double, double>> sweep) {
  out << "threshold_m,recall_at_1\n";
  for (const auto& [t, r] : sweep) out << format_number(t) << ',' << format_number(r) << '\n';
}

}  // namespace bevrec::eval
