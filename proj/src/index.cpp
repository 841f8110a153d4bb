#include "bevrec/index.hpp"

#include <algorithm>
#include <cmath>

#include "bevrec/binary_io.hpp"
#include "bevrec/errors.hpp"
#include "bevrec/parallel.hpp"

namespace bevrec::index {
namespace {

constexpr char kDatabaseMagic[] = "I2PD";
constexpr std::uint16_t kDatabaseVersion = 1;

struct Scored {
  double sq_dist;
  FrameId id;
};

bool ranks_before(const Scored& a, const Scored& b) {
  return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.id < b.id);
}

double squared_distance(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

RetrievalResult top_n(std::vector<Scored>& scored, std::size_t n) {
  n = std::min(n, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), ranks_before);
  RetrievalResult out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({scored[i].id, std::sqrt(scored[i].sq_dist)});
  return out;
}

}  // namespace

void Database::insert(FrameRecord record) {
  if (by_id_.count(record.frame_id)) throw ConflictError("database: duplicate frame id " + std::to_string(record.frame_id));
  const auto d = static_cast<std::size_t>(record.descriptor.size());
  if (records_.empty()) {
    if (d == 0) throw InputError("database: empty descriptor");
    dim_ = d;
  } else if (d != dim_) {
    throw InputError("database: descriptor dimension " + std::to_string(d) + " != " + std::to_string(dim_));
  }
  by_id_.emplace(record.frame_id, records_.size());
  flat_.insert(flat_.end(), record.descriptor.data(), record.descriptor.data() + d);
  records_.push_back(std::move(record));
}

const FrameRecord& Database::at(FrameId id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw InputError("database: unknown frame id " + std::to_string(id));
  return records_[it->second];
}

void Database::check_query(const Eigen::VectorXd& q, std::size_t n) const {
  if (records_.empty()) throw StateError("database: query on an empty database");
  if (n == 0) throw InputError("database: N must be >= 1");
  if (static_cast<std::size_t>(q.size()) != dim_)
    throw InputError("database: query dimension " + std::to_string(q.size()) + " != " + std::to_string(dim_));
}

RetrievalResult Database::query_knn(const Eigen::VectorXd& q, std::size_t n, std::optional<ExclusionWindow> exclude) const {
  check_query(q, n);
  const auto count = static_cast<std::ptrdiff_t>(records_.size());
  std::vector<Scored> scored(records_.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    scored[idx] = {squared_distance(q.data(), flat_.data() + idx * dim_, dim_), records_[idx].frame_id};
  }
  if (exclude) std::erase_if(scored, [&](const Scored& s) { return exclude->excludes(s.id); });
  return top_n(scored, n);
}

RetrievalResult serial_query_knn(const Database& db, const Eigen::VectorXd& q, std::size_t n,
                                 std::optional<ExclusionWindow> exclude) {
  db.check_query(q, n);
  std::vector<Scored> scored;
  scored.reserve(db.size());
  for (const auto& r : db.records()) {
    if (exclude && exclude->excludes(r.frame_id)) continue;
    scored.push_back({squared_distance(q.data(), r.descriptor.data(), db.dim()), r.frame_id});
  }
  return top_n(scored, n);
}

namespace serial {
RetrievalResult query_knn(const Database& db, const Eigen::VectorXd& q, std::size_t n,
                          std::optional<ExclusionWindow> exclude) {
  return serial_query_knn(db, q, n, exclude);
}
}  // namespace serial

void Database::save(const std::filesystem::path& path) const {
  io::ByteWriter w;
  w.magic(kDatabaseMagic);
  w.u16(kDatabaseVersion);
  w.u64(records_.size());
  w.u32(static_cast<std::uint32_t>(dim_));
  double pose[12];
  for (const auto& r : records_) {
    w.u64(r.frame_id);
    r.pose.to_row_major(pose);
    for (double v : pose) w.f64(v);
    for (Eigen::Index j = 0; j < r.descriptor.size(); ++j) w.f64(r.descriptor(j));
  }
  io::write_file(path, w.bytes());
}

Database Database::load(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, "database " + path.string());
  r.expect_magic(kDatabaseMagic);
  if (const auto version = r.u16(); version != kDatabaseVersion)
    throw FormatError("database " + path.string() + ": unsupported version " + std::to_string(version));
  const std::uint64_t count = r.u64();
  const std::uint32_t dim = r.u32();
  const std::uint64_t record_bytes = 8 + 12 * 8 + std::uint64_t{dim} * 8;
  if (count > 0 && (dim == 0 || r.remaining() / record_bytes < count))
    throw FormatError("database " + path.string() + ": truncated");

  Database db;
  double pose[12];
  for (std::uint64_t i = 0; i < count; ++i) {
    FrameRecord rec;
    rec.frame_id = r.u64();
    for (double& v : pose) v = r.f64();
    rec.pose = Pose::from_row_major(pose);
    rec.descriptor.resize(dim);
    for (std::uint32_t j = 0; j < dim; ++j) rec.descriptor(j) = r.f64();
    try {
      db.insert(std::move(rec));
    } catch (const ConflictError& e) {
      throw FormatError("database " + path.string() + ": " + e.what());
    }
  }
  r.expect_end();
  return db;
}

}  // namespace bevrec::index
