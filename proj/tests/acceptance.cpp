// Acceptance run: one PASS/FAIL line per criterion, each with its time budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "aliased_places.hpp"
#include "bevrec/errors.hpp"
#include "bevrec/eval.hpp"
#include "bevrec/geometry.hpp"
#include "bevrec/index.hpp"
#include "bevrec/ingest.hpp"
#include "bevrec/pipeline.hpp"
#include "oracles.hpp"
#include "synthetic_scene.hpp"

using namespace bevrec;
namespace fs = std::filesystem;

namespace {

// First failed expectation wins; `detail` carries measured values.
struct Verdict {
  bool ok = true;
  std::string failure;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      failure = what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::vector<double>> rows_of(const features::LocalFeatureSet& s) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.emplace_back(s.descriptor(i).begin(), s.descriptor(i).end());
  return out;
}

features::LocalFeatureSet random_features(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<double> g(0.0, 1.0);
  features::LocalFeatureSet set(d);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = g(rng);
    set.add({i, 0}, x);
  }
  return set;
}

features::Codebook random_codebook(std::mt19937_64& rng, std::size_t k, std::size_t d, double alpha) {
  std::normal_distribution<double> g(0.0, 1.0);
  features::Codebook cb;
  cb.centers.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < cb.centers.size(); ++i) cb.centers.data()[i] = g(rng);
  cb.alpha = alpha;
  return cb;
}

Verdict formula_oracles() {
  Verdict v;
  DisparityMap d(1, 3);
  d.set(0, 0, 7.0);
  d.set(0, 2, 38.934);
  const auto z1 = geometry::disparity_to_depth(d, StereoRig{{700, 700, 0, 0}, 0.5});
  v.expect(std::abs(z1.at(0, 0) - 50.0) < 1e-9, "700 * 0.5 / 7 != 50");
  v.expect(!z1.is_valid(0, 1), "zero disparity kept");
  const auto z2 = geometry::disparity_to_depth(d, StereoRig{{721, 721, 0, 0}, 0.54});
  v.expect(std::abs(z2.at(0, 2) - 10.0) < 1e-9, "721 * 0.54 / 38.934 != 10");

  DepthMap center(3, 5);
  center.set(1, 2, 5.0);
  auto p = geometry::backproject(center, CameraIntrinsics{100, 100, 2, 1}, Extrinsics{});
  v.expect(p.size() == 1 && (p.points[0] - Vec3(0, 0, 5)).norm() < 1e-9, "principal point");
  DepthMap off(1, 5);
  off.set(0, 4, 2.0);
  p = geometry::backproject(off, CameraIntrinsics{2, 2, 0, 0}, Extrinsics{});
  v.expect(p.size() == 1 && (p.points[0] - Vec3(4, 0, 2)).norm() < 1e-9, "off-axis pixel");
  DepthMap axis(1, 1);
  axis.set(0, 0, 7.0);
  p = geometry::backproject(axis, CameraIntrinsics{1, 1, 0, 0}, Extrinsics::forward_camera());
  v.expect((p.points[0] - Vec3(0, 7, 0)).norm() < 1e-9, "forward camera axis");

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> f(200.0, 900.0), z(0.5, 80.0);
  const CameraIntrinsics intr{f(rng), f(rng), 611.3, 187.9};
  DepthMap depth(25, 40);  // 1000 pixels
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    depth.values[i] = z(rng);
    depth.valid[i] = 1;
  }
  const auto pts = geometry::backproject(depth, intr, Extrinsics{});
  v.expect(pts.size() == 1000, "round trip point count");
  double worst = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec3 uvz = geometry::project(pts.points[i], intr);
    worst = std::max({worst, std::abs(uvz.x() - static_cast<double>(i % 40)),
                      std::abs(uvz.y() - static_cast<double>(i / 40)), std::abs(uvz.z() - depth.values[i])});
  }
  v.expect(worst < 1e-9, "pinhole round trip");
  v.detail = "round-trip max error " + fmt("%.2e", worst);
  return v;
}

Verdict bev_geometry() {
  Verdict v;
  const auto shape = bev::grid_shape(bev::CropWindow{}, 0.4);
  v.expect(shape.rows == 125 && shape.cols == 125, "default grid is not 125 x 125");
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> size(0, 5000);
  for (int t = 0; t < 100; ++t) {
    const auto cloud = oracle::random_cloud(rng, size(rng), -25.0, 25.0 - 1e-9, 0.0, 50.0 - 1e-9, -5.0, 5.0 - 1e-9);
    const auto img = bev::rasterize(cloud, bev::CropWindow{}, 0.4);
    v.expect(img.rows == 125 && img.cols == 125, "image size");
    v.expect(img.total_count() == cloud.size(), "count conservation");
  }

  const std::vector<std::vector<unsigned>> counts{{0, 1, 0, 0, 2}, {3, 0, 0, 0, 0}, {0, 0, 1, 0, 0}};
  PointCloud fixture;
  for (std::size_t r = 0; r < counts.size(); ++r)
    for (std::size_t c = 0; c < counts[r].size(); ++c)
      for (unsigned k = 0; k < counts[r][c]; ++k)
        fixture.points.emplace_back(0.2 + 0.4 * static_cast<double>(c), 1.0 - 0.4 * static_cast<double>(r), 0.1 * k);
  const bev::CropWindow small{0.0, 2.0, 0.0, 1.2, -1.0, 1.0};
  const auto dir = oracle::scratch_dir("acceptance_pgm");
  std::string first;
  for (int run = 0; run < 3; ++run) {
    bev::write_pgm(dir / "golden.pgm", bev::rasterize(fixture, small, 0.4));
    std::ifstream in(dir / "golden.pgm", std::ios::binary);
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (run == 0) first = bytes;
    v.expect(bytes == first, "PGM bytes differ between runs");
  }
  v.expect(first == oracle::pgm_bytes(counts), "golden PGM bytes");
  v.detail = std::to_string(shape.rows) + "x" + std::to_string(shape.cols);
  return v;
}

Verdict vlad() {
  Verdict v;
  std::mt19937_64 rng(3);
  double worst_norm = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto cb = random_codebook(rng, 8, 6, 0.5);
    worst_norm = std::max(worst_norm, std::abs(features::aggregate(random_features(rng, 1 + t % 40, 6), cb).norm() - 1));
  }
  v.expect(worst_norm < 1e-9, "unit norm");
  double worst_hard = 0.0;
  for (int t = 0; t < 20; ++t) {
    auto cb = random_codebook(rng, 4, 3, std::numeric_limits<double>::infinity());
    const auto feats = random_features(rng, 10, 3);
    std::vector<std::vector<double>> centers;
    for (Eigen::Index r = 0; r < cb.centers.rows(); ++r)
      centers.emplace_back(cb.centers.row(r).data(), cb.centers.row(r).data() + 3);
    const auto expect = oracle::hard_vlad(rows_of(feats), centers);
    worst_hard = std::max(worst_hard, (features::aggregate(feats, cb) - expect).cwiseAbs().maxCoeff());
    cb.alpha = 1e6;
    worst_hard = std::max(worst_hard, (features::aggregate(feats, cb) - expect).cwiseAbs().maxCoeff());
  }
  v.expect(worst_hard < 1e-6, "hard-assignment oracle");
  for (int t = 0; t < 20; ++t) {
    const auto cb = random_codebook(rng, 8, 5, 0.8);
    const auto feats = random_features(rng, 60, 5);
    std::vector<std::size_t> perm(feats.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    features::LocalFeatureSet shuffled(5);
    for (std::size_t i : perm) shuffled.add(feats.position(i), feats.descriptor(i));
    v.expect(features::aggregate(feats, cb) == features::aggregate(shuffled, cb), "permutation changed the descriptor");
  }
  v.detail = "norm error " + fmt("%.2e", worst_norm) + ", hard error " + fmt("%.2e", worst_hard);
  return v;
}

training::TripletBatch batch_1d(double d_pos, std::vector<double> d_neg) {
  training::TripletBatch b;
  b.query = Eigen::VectorXd::Zero(1);
  b.positives = {Eigen::VectorXd::Constant(1, std::sqrt(d_pos))};
  for (double d : d_neg) b.negatives.push_back(Eigen::VectorXd::Constant(1, std::sqrt(d)));
  return b;
}

Verdict triplet_loss() {
  Verdict v;
  const auto w = training::EmbeddingMap::identity(1, 1);
  v.expect(std::abs(training::triplet_loss(batch_1d(0.2, {0.9, 0.4}), w, 0.5) - 0.3) < 1e-12, "0.5 + 0.2 - 0.4");
  v.expect(training::triplet_loss(batch_1d(0.0, {0.5, 0.7, 2.0}), w, 0.5) == 0.0, "inactive hinge");
  auto two = batch_1d(0.2, {0.4});
  two.positives.push_back(Eigen::VectorXd::Constant(1, std::sqrt(0.05)));
  v.expect(std::abs(training::triplet_loss(two, w, 0.5) - 0.15) < 1e-12, "closest positive");

  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  auto vec = [&](std::size_t d, double s) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(d));
    for (auto& e : x) e = s * g(rng);
    return x;
  };
  int checked = 0;
  double worst = 0.0;
  for (int attempt = 0; attempt < 1000 && checked < 40; ++attempt) {
    const std::size_t d = attempt % 2 ? 4 : 12, e = attempt % 2 ? 2 : 6;
    training::EmbeddingMap m;
    m.weights = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(d));
    training::TripletBatch b;
    b.query = vec(d, 1.0);
    for (int i = 0; i < 2; ++i) b.positives.push_back(b.query + vec(d, 0.3));
    for (int i = 0; i < 10; ++i) b.negatives.push_back(vec(d, 1.0));
    auto dist = training::batch_distances(b, m);
    std::sort(dist.positive.begin(), dist.positive.end());
    std::sort(dist.negative.begin(), dist.negative.end());
    // Away from kinks: hinge clearly active, unique argmin on both sides.
    if (0.5 + dist.positive[0] - dist.negative[0] < 1e-3 || dist.positive[1] - dist.positive[0] < 1e-3 ||
        dist.negative[1] - dist.negative[0] < 1e-3)
      continue;
    const Eigen::MatrixXd fd = oracle::fd_gradient(m.weights, b.query, b.positives, b.negatives, 0.5, 1e-5);
    worst = std::max(worst, (training::triplet_grad(b, m, 0.5) - fd).norm() / fd.norm());
    ++checked;
  }
  v.expect(checked >= 20, "too few smooth batches");
  v.expect(worst < 1e-4, "gradient vs finite differences");
  v.detail = std::to_string(checked) + " batches, max relative error " + fmt("%.2e", worst);
  return v;
}

Verdict retrieval() {
  Verdict v;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> size(1, 1000), dim(1, 256), top(1, 20);
  auto vec = [&](std::size_t d) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(d));
    for (auto& e : x) e = g(rng);
    return x;
  };
  index::Database last;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = t == 0 ? 1000 : size(rng), d = t == 0 ? 256 : dim(rng);
    index::Database db;
    std::vector<std::pair<std::uint64_t, Eigen::VectorXd>> rows;
    for (std::size_t i = 0; i < n; ++i) {
      index::FrameRecord r{5 * i + 1, {}, vec(d)};
      r.pose.position = Vec3(g(rng), g(rng), g(rng));
      rows.emplace_back(r.frame_id, r.descriptor);
      db.insert(std::move(r));
    }
    for (int q = 0; q < 3; ++q) {
      const auto query = vec(d);
      const std::size_t k = top(rng);
      const auto got = db.query_knn(query, k);
      const auto want = oracle::knn(rows, query, k);
      bool same = got.size() == want.size();
      for (std::size_t i = 0; same && i < got.size(); ++i)
        same = got[i].frame_id == want[i].id && std::abs(got[i].distance - want[i].distance) < 1e-9;
      v.expect(same, "query_knn differs from the linear scan");
    }
    if (t == 0) last = db;
  }
  const auto dir = oracle::scratch_dir("acceptance_db");
  last.save(dir / "db.bin");
  const auto back = index::Database::load(dir / "db.bin");
  v.expect(back.size() == last.size(), "round trip size");
  for (const auto& r : last.records()) {
    const auto& b = back.at(r.frame_id);
    v.expect(b.descriptor == r.descriptor && b.pose.position == r.pose.position && b.pose.rotation == r.pose.rotation,
             "round trip is lossy");
  }
  v.detail = "50 databases, largest 1000 x 256";
  return v;
}

Verdict metrics() {
  Verdict v;
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> nq(1, 60), nd(1, 400);
  std::uniform_real_distribution<double> u(0.0, 200.0);
  for (int t = 0; t < 20; ++t) {
    const std::size_t q = nq(rng), d = nd(rng);
    std::vector<Vec3> qpos, dpos;
    std::vector<Pose> qposes(q), dposes(d);
    for (std::size_t i = 0; i < d; ++i) dposes[i].position = Vec3(u(rng), u(rng), 0.01 * u(rng));
    for (std::size_t i = 0; i < q; ++i) qposes[i].position = Vec3(u(rng), u(rng), 0.0);
    for (const auto& p : dposes) dpos.push_back(p.position);
    for (const auto& p : qposes) qpos.push_back(p.position);
    std::uniform_int_distribution<FrameId> pick(0, d - 1);
    std::vector<index::RetrievalResult> results(q);
    std::vector<std::vector<std::uint64_t>> ids(q);
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t k = 0; k < std::min<std::size_t>(d, 30); ++k) {
        const FrameId id = pick(rng);
        results[i].push_back({id, static_cast<double>(k)});
        ids[i].push_back(id);
      }
    for (double th : {5.0, 10.0, 40.0}) {
      for (std::size_t n : {1u, 3u, 10u})
        v.expect(eval::recall_at_n(results, qposes, dposes, th, n) == oracle::recall(ids, qpos, dpos, th, n),
                 "recall@N differs from the oracle");
      const auto np = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.01 * static_cast<double>(d) - 1e-9)));
      v.expect(eval::recall_at_percent(results, qposes, dposes, th, 0.01) == oracle::recall(ids, qpos, dpos, th, np),
               "recall@1% differs from the oracle");
    }
    double prev = 0.0;
    for (std::size_t n = 1; n <= 30; ++n) {
      const double r = eval::recall_at_n(results, qposes, dposes, 20.0, n);
      v.expect(r >= prev && r <= 1.0, "recall not monotone in N");
      prev = r;
    }
    prev = 0.0;
    for (double th = 1.0; th <= 300.0; th *= 1.5) {
      const double r = eval::recall_at_n(results, qposes, dposes, th, 1);
      v.expect(r >= prev, "recall not monotone in t");
      prev = r;
    }
  }
  v.expect(eval::percent_candidates(250, 0.01) == 3, "ceil(1% of 250) != 3");
  v.detail = "recall@1% candidates for 250 frames: " + std::to_string(eval::percent_candidates(250, 0.01));
  return v;
}

Verdict loop_closure() {
  Verdict v;
  const testing::WorldParams wp;
  const auto world = testing::make_world(wp, 7);
  const std::size_t frames = 200;
  const auto poses = testing::loop_trajectory(frames, wp.loop_radius);
  const testing::CameraModel cam;
  std::vector<PointCloud> scans;
  std::vector<DepthMap> depths;
  for (std::size_t i = 0; i < frames; ++i) {
    scans.push_back(testing::lidar_scan(world, poses[i], testing::LidarModel{}, wp.point_spacing));
    depths.push_back(testing::render_depth(world, poses[i], cam, 0.05, 1000 + i, wp.point_spacing));
  }
  std::vector<PointCloud> corpus;
  for (std::size_t i = 0; i < frames; i += 2) corpus.push_back(scans[i]);
  const PipelineConfig cfg;
  const pipeline::Pipeline pipe(cfg, pipeline::train_codebook(corpus, cfg, 1));

  std::vector<FrameId> ids(frames);
  std::iota(ids.begin(), ids.end(), FrameId{0});
  index::Database db;
  for (auto& r : pipe.build_map(scans, poses, ids)) db.insert(std::move(r));
  std::vector<index::RetrievalResult> results;
  for (const auto& q : pipe.build_queries(depths, cam.intrinsics, cam.extrinsics))
    results.push_back(db.query_knn(q, eval::percent_candidates(frames, 0.01)));
  const double r1 = eval::recall_at_n(results, poses, poses, 10.0, 1);
  const double rp = eval::recall_at_percent(results, poses, poses, 10.0, 0.01);
  v.expect(r1 >= 0.9, "recall@1 < 0.9");
  v.expect(rp == 1.0, "recall@1% < 1.0");
  v.detail = "recall@1 " + fmt("%.3f", r1) + ", recall@1% " + fmt("%.3f", rp) + " over " + std::to_string(frames) +
             " frames";
  return v;
}

Verdict training_efficacy() {
  Verdict v;
  const auto data = testing::make_aliased_places({}, 1);
  training::TrainOptions opt;
  opt.output_dim = data.database.front().size();
  opt.seed = 1;
  const training::TripletConfig cfg;
  const auto trained = training::train_metric(data.database, data.poses, cfg, opt);
  auto recall = [&](const training::EmbeddingMap& m) {
    index::Database db;
    for (std::size_t i = 0; i < data.database.size(); ++i) db.insert({i, data.poses[i], m.apply(data.database[i])});
    std::vector<index::RetrievalResult> r;
    for (const auto& q : data.queries) r.push_back(db.query_knn(m.apply(q), 1));
    return eval::recall_at_n(r, data.poses, data.poses, 10.0, 1);
  };
  const double base = recall(training::EmbeddingMap::identity(opt.output_dim, opt.output_dim));
  const double learned = recall(trained.map);
  v.expect(cfg.hard_mining_start_epoch == 10 && opt.epochs == 20, "schedule");
  v.expect(trained.epoch_loss.size() == 20, "epoch count");
  v.expect(learned - base >= 0.1, "trained recall@1 gain < 0.1");
  v.expect(trained.epoch_loss.back() < trained.epoch_loss.front(), "loss did not fall");
  v.detail = "recall@1 identity " + fmt("%.3f", base) + " -> trained " + fmt("%.3f", learned) + ", loss " +
             fmt("%.4f", trained.epoch_loss.front()) + " -> " + fmt("%.4f", trained.epoch_loss.back());
  return v;
}

void put_f32(std::string& out, float x) {
  std::uint32_t bits;
  std::memcpy(&bits, &x, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

Verdict kitti_formats() {
  Verdict v;
  const auto dir = oracle::scratch_dir("acceptance_kitti");
  std::string bytes;
  for (float x : {1.0f, 2.0f, 3.0f, 0.5f, 4.0f, 5.0f, 6.0f, 0.1f}) put_f32(bytes, x);
  std::ofstream(dir / "two.bin", std::ios::binary) << bytes;
  const auto scan = ingest::read_lidar_scan(dir / "two.bin");
  v.expect(scan.size() == 2 && scan.points[0] == Vec3(1, 2, 3) && scan.points[1] == Vec3(4, 5, 6), "2-point scan");

  std::ofstream(dir / "poses.txt") << "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 5 0 1 0 0 0 0 1 -2\n";
  const auto poses = ingest::read_poses(dir / "poses.txt");
  v.expect(poses.size() == 2 && poses[1].position == Vec3(5, 0, -2) && poses[1].rotation == Mat3::Identity(),
           "12-number pose lines");
  std::ofstream(dir / "short.txt") << "1 0 0 0 0 1 0 0 0 0 1\n";
  bool rejected = false;
  try {
    ingest::read_poses(dir / "short.txt");
  } catch (const FormatError&) {
    rejected = true;
  }
  v.expect(rejected, "11-number pose line accepted");

  const eval::DatasetIndex kitti{{"00", 4541}, {"02", 4661}, {"05", 2761}, {"06", 1101}, {"08", 4071}};
  const auto train = eval::apply_split(kitti, eval::SplitSpec::kitti_default(), eval::Role::train);
  v.expect(train.size() == 3001 && train.front() == eval::FrameRef{"00", 0} && train.back() == eval::FrameRef{"00", 3000},
           "train split on 00");
  v.detail = "train split " + std::to_string(train.size()) + " frames";
  return v;
}

struct Criterion {
  const char* id;
  const char* name;
  double budget_s;  // 0: no limit
  std::function<Verdict()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"AC1", "formula oracles", 1.0, formula_oracles},
      {"AC2", "BEV geometry", 5.0, bev_geometry},
      {"AC3", "VLAD correctness", 5.0, vlad},
      {"AC4", "triplet loss", 10.0, triplet_loss},
      {"AC5", "retrieval exactness", 30.0, retrieval},
      {"AC6", "metric oracles", 5.0, metrics},
      {"AC7", "synthetic loop closure", 120.0, loop_closure},
      {"AC8", "training efficacy", 120.0, training_efficacy},
      {"AC9", "KITTI-format fidelity", 0.0, kitti_formats},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs >= c.budget_s) v.expect(false, "over the " + fmt("%.0f s", c.budget_s) + " budget");
    std::printf("%s %s  %s: %s%s%s (%.2f s)\n", c.id, v.ok ? "PASS" : "FAIL", c.name, v.detail.c_str(),
                v.ok ? "" : "; failed: ", v.failure.c_str(), secs);
    std::fflush(stdout);
    failed += !v.ok;
  }
  return failed == 0 ? 0 : 1;
}
