#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "bevrec/errors.hpp"
#include "bevrec/features.hpp"
#include "bevrec/kmeans.hpp"
#include "oracles.hpp"

using namespace bevrec;
using features::Codebook;
using features::LocalFeatureSet;

namespace {

bev::BevImage image_from(std::size_t rows, std::size_t cols, const std::vector<double>& values) {
  bev::BevImage img;
  img.rows = rows;
  img.cols = cols;
  img.cell_size = 0.4;
  img.values = values;
  img.raw_counts.assign(values.size(), 0);
  return img;
}

bev::BevImage random_image(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = u(rng) < 0.7 ? 0.0 : u(rng);
  return image_from(rows, cols, v);
}

LocalFeatureSet random_features(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<double> g(0.0, 1.0);
  LocalFeatureSet set(d);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = g(rng);
    set.add({i, 0}, x);
  }
  return set;
}

Codebook random_codebook(std::mt19937_64& rng, std::size_t k, std::size_t d, double alpha) {
  std::normal_distribution<double> g(0.0, 1.0);
  Codebook cb;
  cb.centers.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < cb.centers.size(); ++i) cb.centers.data()[i] = g(rng);
  cb.alpha = alpha;
  return cb;
}

std::vector<std::vector<double>> rows_of(const LocalFeatureSet& set) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto d = set.descriptor(i);
    out.emplace_back(d.begin(), d.end());
  }
  return out;
}

std::vector<std::vector<double>> rows_of(const RowMatrix& m) {
  std::vector<std::vector<double>> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).data(), m.row(r).data() + m.cols());
  return out;
}

}  // namespace

TEST_CASE("extract_local: empty image has no features") {
  const auto img = image_from(32, 32, std::vector<double>(32 * 32, 0.0));
  CHECK(features::extract_local(img).empty());
  const auto flat = image_from(32, 32, std::vector<double>(32 * 32, 0.6));
  CHECK(features::extract_local(flat).empty());
}

TEST_CASE("extract_local: vertical step edge votes only horizontal orientations") {
  for (bool rising : {true, false}) {
    std::vector<double> v(32 * 32);
    for (std::size_t r = 0; r < 32; ++r)
      for (std::size_t c = 0; c < 32; ++c) v[r * 32 + c] = (c < 13) == rising ? 0.0 : 1.0;
    const auto feats = features::extract_local(image_from(32, 32, v));
    REQUIRE_FALSE(feats.empty());
    for (std::size_t i = 0; i < feats.size(); ++i) {
      const auto d = feats.descriptor(i);
      double horizontal = 0.0, total = 0.0;
      for (std::size_t j = 0; j < d.size(); ++j) {
        total += d[j] * d[j];
        if (j % 8 == 0 || j % 8 == 4) horizontal += d[j] * d[j];
      }
      CHECK(horizontal == doctest::Approx(total).epsilon(1e-15));
    }
  }
}

TEST_CASE("extract_local: grid, dimension and unit norm") {
  std::mt19937_64 rng(2);
  const auto img = random_image(rng, 125, 125);
  const auto feats = features::extract_local(img);
  CHECK(feats.dim() == 32);
  CHECK(feats.size() == 14 * 14);  // origins 0, 8, ..., 104
  for (std::size_t i = 0; i < feats.size(); ++i) {
    double n = 0.0;
    for (double x : feats.descriptor(i)) n += x * x;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-12);
    CHECK(feats.position(i).row % 8 == 0);
  }
  CHECK_THROWS_AS(features::extract_local(img, 1, 8), ConfigError);
  CHECK_THROWS_AS(features::extract_local(img, 126, 8), ConfigError);
  CHECK_THROWS_AS(features::extract_local(img, 16, 0), ConfigError);
}

TEST_CASE("extract_local: half-turn rotation swaps cells and shifts bins by four") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> v(16 * 16), rot(16 * 16);
    for (auto& x : v) x = u(rng);
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c = 0; c < 16; ++c) rot[(15 - r) * 16 + (15 - c)] = v[r * 16 + c];
    const auto a = features::extract_local(image_from(16, 16, v), 16, 8);
    const auto b = features::extract_local(image_from(16, 16, rot), 16, 8);
    REQUIRE(a.size() == 1);
    REQUIRE(b.size() == 1);
    for (std::size_t cell = 0; cell < 4; ++cell)
      for (std::size_t bin = 0; bin < 8; ++bin)
        CHECK(std::abs(a.descriptor(0)[cell * 8 + bin] - b.descriptor(0)[(3 - cell) * 8 + (bin + 4) % 8]) < 1e-12);
  }
}

TEST_CASE("extract_local: parallel equals serial") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const auto img = random_image(rng, 125, 125);
    const auto a = features::extract_local(img, 16, 8);
    const auto b = features::serial::extract_local(img, 16, 8);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.position(i) == b.position(i));
      CHECK(std::equal(a.descriptor(i).begin(), a.descriptor(i).end(), b.descriptor(i).begin()));
    }
  }
}

TEST_CASE("kmeans: hand example and determinism") {
  RowMatrix pts(4, 1);
  pts << 0, 0, 10, 10;
  const auto r = kmeans(pts, 2, 1);
  std::vector<double> c{r.centers(0, 0), r.centers(1, 0)};
  std::sort(c.begin(), c.end());
  CHECK(c == std::vector<double>{0.0, 10.0});
  CHECK(r.converged);
  CHECK(r.assignment[0] == r.assignment[1]);
  CHECK(r.assignment[2] == r.assignment[3]);

  RowMatrix same(5, 2);
  same.setConstant(3.0);
  CHECK_THROWS_AS(kmeans(same, 2, 1), InputError);
  CHECK_THROWS_AS(kmeans(pts, 5, 1), InputError);
}

TEST_CASE("kmeans: objective never increases") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    RowMatrix pts(400, 5);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = g(rng) + (i % 7 == 0 ? 4.0 : 0.0);
    const auto r = kmeans(pts, 8, static_cast<std::uint64_t>(trial));
    REQUIRE_FALSE(r.objective_trace.empty());
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      CHECK(r.objective_trace[i] <= r.objective_trace[i - 1] + 1e-9 * r.objective_trace[i - 1]);
    const auto again = kmeans(pts, 8, static_cast<std::uint64_t>(trial));
    CHECK(again.centers == r.centers);
  }
}

TEST_CASE("train_codebook: hand example, sharpness and errors") {
  LocalFeatureSet set(1);
  for (double x : {0.0, 0.0, 10.0, 10.0}) set.add({0, 0}, std::vector<double>{x});
  const std::vector<LocalFeatureSet> corpus{set};
  const auto cb = features::train_codebook(corpus, 2, 7);
  std::vector<double> c{cb.centers(0, 0), cb.centers(1, 0)};
  std::sort(c.begin(), c.end());
  CHECK(c == std::vector<double>{0.0, 10.0});
  CHECK(std::isinf(cb.alpha));

  LocalFeatureSet spread(1);
  for (double x : {-1.0, 1.0, 9.0, 11.0}) spread.add({0, 0}, std::vector<double>{x});
  const auto cb2 = features::train_codebook(std::vector<LocalFeatureSet>{spread}, 2, 7);
  CHECK(cb2.alpha == doctest::Approx(0.5));  // sigma = 1

  LocalFeatureSet same(1);
  for (int i = 0; i < 4; ++i) same.add({0, 0}, std::vector<double>{2.0});
  CHECK_THROWS_AS(features::train_codebook(std::vector<LocalFeatureSet>{same}, 2, 7), InputError);
  CHECK_THROWS_AS(features::train_codebook(corpus, 5, 7), InputError);

  std::mt19937_64 rng(1);
  const std::vector<LocalFeatureSet> big{random_features(rng, 300, 32), random_features(rng, 200, 32)};
  const auto a = features::train_codebook(big, 16, 99);
  const auto b = features::train_codebook(big, 16, 99);
  CHECK(a.centers == b.centers);
  CHECK(a.alpha == b.alpha);
}

TEST_CASE("soft assignment sums to one") {
  std::mt19937_64 rng(5);
  const auto cb = random_codebook(rng, 16, 8, 0.7);
  const auto feats = random_features(rng, 200, 8);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto w = features::soft_assign(feats.descriptor(i), cb);
    CHECK(std::abs(w.sum() - 1.0) < 1e-12);
    CHECK(w.minCoeff() >= 0.0);
  }
}

TEST_CASE("aggregate: hand example and empty input") {
  Codebook cb;
  cb.centers.resize(2, 1);
  cb.centers << 0.0, 1.0;
  cb.alpha = std::numeric_limits<double>::infinity();
  LocalFeatureSet one(1);
  one.add({0, 0}, std::vector<double>{0.25});
  const auto v = features::aggregate(one, cb);
  REQUIRE(v.size() == 2);
  CHECK(v[0] == 1.0);
  CHECK(v[1] == 0.0);

  const auto z = features::aggregate(LocalFeatureSet(1), cb);
  CHECK(z.size() == 2);
  CHECK(z.isZero(0.0));
  CHECK_THROWS_AS(features::aggregate(LocalFeatureSet(3), cb), InputError);
}

TEST_CASE("aggregate: unit norm on random instances") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto cb = random_codebook(rng, 8, 6, 0.5);
    const auto v = features::aggregate(random_features(rng, 1 + trial % 40, 6), cb);
    CHECK(std::abs(v.norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("aggregate: sharp alpha matches the hard-assignment oracle") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cb = random_codebook(rng, 4, 3, 1e6);
    const auto feats = random_features(rng, 10, 3);
    const auto v = features::aggregate(feats, cb);
    const auto expect = oracle::hard_vlad(rows_of(feats), rows_of(cb.centers));
    CHECK((v - expect).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("aggregate: feature order does not matter") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cb = random_codebook(rng, 8, 5, 0.8);
    const auto feats = random_features(rng, 60, 5);
    std::vector<std::size_t> perm(feats.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    LocalFeatureSet shuffled(5);
    for (std::size_t i : perm) shuffled.add(feats.position(i), feats.descriptor(i));
    const auto a = features::aggregate(feats, cb);
    const auto b = features::aggregate(shuffled, cb);
    CHECK(a == b);
  }
}

TEST_CASE("aggregate: parallel equals serial") {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 5; ++trial) {
    const auto cb = random_codebook(rng, 64, 32, 2.0);
    const auto feats = random_features(rng, 196, 32);
    CHECK(features::aggregate(feats, cb) == features::serial::aggregate(feats, cb));
  }
}

TEST_CASE("codebook validation and persistence") {
  std::mt19937_64 rng(35);
  auto cb = random_codebook(rng, 6, 4, 3.5);
  const auto dir = oracle::scratch_dir("features_codebook");
  features::save_codebook(dir / "cb.bin", cb);
  CHECK(std::filesystem::file_size(dir / "cb.bin") == 4 + 2 + 4 + 4 + 8 + 6 * 4 * 8);
  const auto back = features::load_codebook(dir / "cb.bin");
  CHECK(back.centers == cb.centers);
  CHECK(back.alpha == cb.alpha);

  cb.alpha = std::numeric_limits<double>::infinity();
  features::save_codebook(dir / "inf.bin", cb);
  CHECK(std::isinf(features::load_codebook(dir / "inf.bin").alpha));

  std::filesystem::resize_file(dir / "cb.bin", std::filesystem::file_size(dir / "cb.bin") - 3);
  CHECK_THROWS_AS(features::load_codebook(dir / "cb.bin"), FormatError);
  std::ofstream(dir / "magic.bin", std::ios::binary) << "XXXX0000000000000000";
  CHECK_THROWS_AS(features::load_codebook(dir / "magic.bin"), FormatError);

  Codebook dup = random_codebook(rng, 3, 2, 1.0);
  dup.centers.row(2) = dup.centers.row(0);
  CHECK_THROWS_AS(dup.validate(), InputError);
}
