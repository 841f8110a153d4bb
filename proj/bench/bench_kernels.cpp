// Serial reference kernels against their OpenMP counterparts.
//   ./bench_kernels --benchmark_filter=Knn
// Set OMP_NUM_THREADS to pick the worker count of the parallel variants.

#include <random>

#include <benchmark/benchmark.h>

#include "bevrec/bev.hpp"
#include "bevrec/features.hpp"
#include "bevrec/index.hpp"
#include "bevrec/pipeline.hpp"

namespace {

using namespace bevrec;

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> x(-25.0, 25.0), y(0.0, 50.0), z(-5.0, 5.0);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(x(rng), y(rng), z(rng));
  return c;
}

// Clustered points so the BEV image has real structure.
PointCloud structured_cloud(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> cx(-22.0, 22.0), cy(2.0, 48.0), t(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.3);
  PointCloud c;
  for (int wall = 0; wall < 30; ++wall) {
    const double x0 = cx(rng), y0 = cy(rng), x1 = cx(rng), y1 = cy(rng);
    for (int i = 0; i < 2000; ++i) {
      const double s = t(rng);
      Vec3 p(x0 + s * (x1 - x0) + jitter(rng), y0 + s * (y1 - y0) + jitter(rng), 4.0 * t(rng) - 2.0);
      if (bev::CropWindow{}.contains(p)) c.points.push_back(p);
    }
  }
  return c;
}

features::Codebook random_codebook(std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  features::Codebook cb;
  cb.centers.resize(static_cast<Eigen::Index>(k), features::kDescriptorDim);
  for (Eigen::Index r = 0; r < cb.centers.rows(); ++r) {
    for (Eigen::Index c = 0; c < cb.centers.cols(); ++c) cb.centers(r, c) = std::abs(n(rng));
    cb.centers.row(r).normalize();
  }
  cb.alpha = 10.0;
  return cb;
}

void BM_RasterizeSerial(benchmark::State& state) {
  const auto cloud = random_cloud(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(bev::serial::rasterize(cloud, {}, 0.4));
}
void BM_RasterizeParallel(benchmark::State& state) {
  const auto cloud = random_cloud(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(bev::rasterize(cloud, {}, 0.4));
}
BENCHMARK(BM_RasterizeSerial)->Arg(120000);
BENCHMARK(BM_RasterizeParallel)->Arg(120000);

void BM_ExtractSerial(benchmark::State& state) {
  const auto image = bev::rasterize(structured_cloud(2), {}, 0.4);
  for (auto _ : state) benchmark::DoNotOptimize(features::serial::extract_local(image));
}
void BM_ExtractParallel(benchmark::State& state) {
  const auto image = bev::rasterize(structured_cloud(2), {}, 0.4);
  for (auto _ : state) benchmark::DoNotOptimize(features::extract_local(image));
}
BENCHMARK(BM_ExtractSerial);
BENCHMARK(BM_ExtractParallel);

void BM_AggregateSerial(benchmark::State& state) {
  const auto local = features::extract_local(bev::rasterize(structured_cloud(3), {}, 0.4));
  const auto cb = random_codebook(64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(features::serial::aggregate(local, cb));
}
void BM_AggregateParallel(benchmark::State& state) {
  const auto local = features::extract_local(bev::rasterize(structured_cloud(3), {}, 0.4));
  const auto cb = random_codebook(64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(features::aggregate(local, cb));
}
BENCHMARK(BM_AggregateSerial);
BENCHMARK(BM_AggregateParallel);

index::Database random_db(std::size_t n, std::size_t dim) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  index::Database db;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = g(rng);
    db.insert({i, Pose{}, v.normalized()});
  }
  return db;
}

void BM_KnnSerial(benchmark::State& state) {
  const auto db = random_db(static_cast<std::size_t>(state.range(0)), 256);
  const Eigen::VectorXd q = db.records()[0].descriptor;
  for (auto _ : state) benchmark::DoNotOptimize(index::serial::query_knn(db, q, 10));
}
void BM_KnnParallel(benchmark::State& state) {
  const auto db = random_db(static_cast<std::size_t>(state.range(0)), 256);
  const Eigen::VectorXd q = db.records()[0].descriptor;
  for (auto _ : state) benchmark::DoNotOptimize(db.query_knn(q, 10));
}
BENCHMARK(BM_KnnSerial)->Arg(5000);
BENCHMARK(BM_KnnParallel)->Arg(5000);

struct MapBatch {
  std::vector<PointCloud> scans;
  std::vector<Pose> poses;
  std::vector<FrameId> ids;
};

MapBatch map_batch(std::size_t n) {
  MapBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.scans.push_back(structured_cloud(100 + i));
    b.poses.emplace_back();
    b.ids.push_back(i);
  }
  return b;
}

void BM_BuildMapSerial(benchmark::State& state) {
  const auto batch = map_batch(8);
  const pipeline::Pipeline pipe(PipelineConfig{}, random_codebook(64, 6));
  for (auto _ : state) benchmark::DoNotOptimize(pipeline::serial::build_map(pipe, batch.scans, batch.poses, batch.ids));
}
void BM_BuildMapParallel(benchmark::State& state) {
  const auto batch = map_batch(8);
  const pipeline::Pipeline pipe(PipelineConfig{}, random_codebook(64, 6));
  for (auto _ : state) benchmark::DoNotOptimize(pipe.build_map(batch.scans, batch.poses, batch.ids));
}
BENCHMARK(BM_BuildMapSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BuildMapParallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
