#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sfmdepth/sfmdepth.hpp"
#include "test_util.hpp"

using namespace sfmdepth;

TEST(Evaluation, ChamferExamples) {
  const PointSet a = oracle::random_points(50, 1);
  const auto same = chamfer(a, a);
  EXPECT_EQ(same.chamfer, 0.0);
  EXPECT_EQ(same.accuracy, 0.0);
  EXPECT_EQ(same.completeness, 0.0);

  const auto one = chamfer({{0, 0, 0}}, {{1, 0, 0}});
  EXPECT_EQ(one.chamfer, 1.0);
  EXPECT_EQ(one.accuracy, 1.0);
  EXPECT_EQ(one.completeness, 1.0);

  const auto two = chamfer({{0, 0, 0}, {2, 0, 0}}, {{1, 0, 0}});
  EXPECT_EQ(two.accuracy, 1.0);
  EXPECT_EQ(two.completeness, 1.0);
  EXPECT_EQ(two.chamfer, 1.0);

  EXPECT_SFM_ERROR(chamfer({}, a), ErrorCode::EmptyPointSet);
  EXPECT_SFM_ERROR(chamfer(a, {}), ErrorCode::EmptyPointSet);
}

TEST(Evaluation, FscoreExamples) {
  const PointSet a = oracle::random_points(50, 2);
  const auto same = fscore(a, a, 1e-9);
  EXPECT_EQ(same.fscore, 1.0);
  EXPECT_EQ(same.precision, 1.0);
  EXPECT_EQ(same.recall, 1.0);

  const auto far = fscore({{10, 0, 0}}, {{0, 0, 0}}, 1.0);
  EXPECT_EQ(far.fscore, 0.0);
  EXPECT_EQ(far.precision, 0.0);
  EXPECT_EQ(far.recall, 0.0);

  const auto hand = fscore({{0, 0, 0}, {10, 0, 0}}, {{0, 0, 0}}, 1.0);
  EXPECT_EQ(hand.precision, 0.5);
  EXPECT_EQ(hand.recall, 1.0);
  EXPECT_NEAR(hand.fscore, 2.0 / 3.0, 1e-15);

  EXPECT_SFM_ERROR(fscore(a, a, 0.0), ErrorCode::InvalidConfig);
  EXPECT_SFM_ERROR(fscore({}, a, 0.1), ErrorCode::EmptyPointSet);
}

TEST(Evaluation, MetricsMatchBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PointSet pred = oracle::random_points(300 + 20 * seed, seed);
    const PointSet gt = oracle::random_points(250 + 10 * seed, seed + 100);
    for (double tau : {0.05, 0.1, 0.3}) {
      const auto g = oracle::geometry(pred, gt, tau);
      const auto c = chamfer(pred, gt);
      const auto f = fscore(pred, gt, tau);
      EXPECT_NEAR(c.accuracy, g.accuracy, 1e-12);
      EXPECT_NEAR(c.completeness, g.completeness, 1e-12);
      EXPECT_NEAR(c.chamfer, g.chamfer, 1e-12);
      EXPECT_EQ(f.precision, g.precision);
      EXPECT_EQ(f.recall, g.recall);
      EXPECT_EQ(f.fscore, g.fscore);

      MetricsReport rep;
      evaluate_geometry(pred, gt, tau, rep);
      EXPECT_EQ(rep.geometry->chamfer, c.chamfer);
      EXPECT_EQ(rep.fscore->fscore, f.fscore);
    }
  }
}

TEST(Evaluation, SymmetryAndTauMonotonicity) {
  const PointSet a = oracle::random_points(200, 3);
  const PointSet b = oracle::random_points(150, 4, 1.2);
  const auto ab = chamfer(a, b);
  const auto ba = chamfer(b, a);
  EXPECT_EQ(ab.accuracy, ba.completeness);
  EXPECT_EQ(ab.completeness, ba.accuracy);
  EXPECT_EQ(ab.chamfer, ba.chamfer);
  double prev = 0.0;
  for (double tau = 0.01; tau < 1.0; tau *= 1.5) {
    const auto fab = fscore(a, b, tau);
    const auto fba = fscore(b, a, tau);
    EXPECT_EQ(fab.precision, fba.recall);
    EXPECT_EQ(fab.recall, fba.precision);
    EXPECT_EQ(fab.fscore, fba.fscore);
    EXPECT_GE(fab.fscore, prev);
    prev = fab.fscore;
  }
}

TEST(Evaluation, KdTreeAgreesWithBruteForce) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 2000;
    PointSet targets = oracle::random_points(n, rng());
    // Duplicates and collinear points stress the splits.
    if (trial % 4 == 0)
      for (std::size_t i = 0; i < n / 3; ++i) targets[i] = targets[n - 1 - i];
    if (trial % 4 == 1)
      for (auto& p : targets) p.y() = p.z() = 0.0;
    const PointSet queries = oracle::random_points(300, rng(), 1.5);
    EXPECT_EQ(nearest_distances(queries, targets), oracle::nearest(queries, targets));
  }
}

TEST(Evaluation, DepthRmseExamples) {
  DenseDepthMap pred(3, 2), ref(3, 2);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      pred.set(r, c, 1.0 + r + c);
      ref.set(r, c, 1.0 + r + c);
    }
  EXPECT_EQ(depth_rmse(pred, ref), 0.0);

  DenseDepthMap shifted = pred;
  for (std::size_t i = 0; i < shifted.depth.size(); ++i) shifted.depth[i] += 2.0;
  EXPECT_NEAR(depth_rmse(shifted, ref), 2.0, 1e-15);

  SparseDepthMap sparse(3, 2);
  sparse.set(0, 0, pred.depth(0, 0) + 3.0, 0);
  sparse.set(1, 2, pred.depth(1, 2) + 4.0, 1);
  const RmseResult two = depth_rmse_detail(pred, sparse);
  EXPECT_NEAR(two.rmse, std::sqrt(12.5), 1e-15);
  EXPECT_EQ(two.pixels, 2u);

  EXPECT_SFM_ERROR(depth_rmse(pred, SparseDepthMap(3, 2)), ErrorCode::NoOverlap);
  EXPECT_SFM_ERROR(depth_rmse(pred, DenseDepthMap(2, 2)), ErrorCode::ShapeMismatch);
}

TEST(Evaluation, DepthRmseIgnoresPixelOrder) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  DenseDepthMap a(16, 16), b(16, 16);
  for (std::size_t i = 0; i < a.depth.size(); ++i) {
    if (rng() % 4) a.depth[i] = u(rng), a.valid[i] = 1;
    if (rng() % 4) b.depth[i] = u(rng), b.valid[i] = 1;
  }
  std::vector<std::size_t> perm(a.depth.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  DenseDepthMap pa(16, 16), pb(16, 16);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    pa.depth[i] = a.depth[perm[i]];
    pa.valid[i] = a.valid[perm[i]];
    pb.depth[i] = b.depth[perm[i]];
    pb.valid[i] = b.valid[perm[i]];
  }
  EXPECT_NEAR(depth_rmse(a, b), depth_rmse(pa, pb), 1e-14);
}

TEST(Evaluation, SampleMeshExamples) {
  TriangleMesh tri;
  tri.vertices = {{0, 0, 1}, {1, 0, 1}, {0, 1, 1}};
  tri.triangles = {{0, 1, 2}};
  for (const auto& p : sample_mesh(tri, 500, 1)) {
    EXPECT_NEAR(p.z(), 1.0, 1e-15);
    EXPECT_GE(p.x(), -1e-15);
    EXPECT_GE(p.y(), -1e-15);
    EXPECT_LE(p.x() + p.y(), 1.0 + 1e-15);
  }
  EXPECT_TRUE(sample_mesh(tri, 0, 1).empty());
  EXPECT_EQ(sample_mesh(tri, 50, 9), sample_mesh(tri, 50, 9));

  // Areas 1 and 3, disjoint in x.
  TriangleMesh two;
  two.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 1, 0}, {10, 0, 0}, {16, 0, 0}, {10, 1, 0}};
  two.triangles = {{0, 1, 2}, {3, 4, 5}};
  const std::size_t n = 20000;
  const auto pts = sample_mesh(two, n, 3);
  const auto first = static_cast<double>(std::count_if(pts.begin(), pts.end(), [](const auto& p) { return p.x() < 5; }));
  const double mean = 0.25 * n;
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  EXPECT_LT(std::abs(first - mean), 3 * sigma);

  EXPECT_SFM_ERROR(sample_mesh(TriangleMesh{}, 10, 0), ErrorCode::EmptyMesh);
}

TEST(Evaluation, ReportFormattingAndBounds) {
  MetricsReport rep;
  evaluate_geometry({{0, 0, 0}, {10, 0, 0}}, {{0, 0, 0}}, 1.0, rep);
  rep.depth_rmse = 0.25;
  rep.per_view.push_back({"a.png", 0.25, 10});
  const Json j = to_json(rep);
  EXPECT_EQ(j["chamfer"].get<double>(), rep.geometry->chamfer);
  EXPECT_NEAR(j["fscore"].get<double>(), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(j["threshold"].get<double>(), 1.0);
  EXPECT_EQ(j["sample_counts"]["pred"].get<std::size_t>(), 2u);
  EXPECT_EQ(j["per_view"][0]["image"].get<std::string>(), "a.png");
  const std::string table = to_table(rep);
  EXPECT_NE(table.find("fscore"), std::string::npos);
  EXPECT_NE(table.find("rmse:a.png"), std::string::npos);

  EXPECT_TRUE(check_bounds(rep, {}).empty());
  EXPECT_TRUE(check_bounds(rep, {10.0, 0.5, 1.0}).empty());
  EXPECT_EQ(check_bounds(rep, {0.1, 0.9, 0.1}).size(), 3u);
  MetricsReport empty;
  EXPECT_EQ(check_bounds(empty, {1.0, std::nullopt, std::nullopt}).size(), 1u);
}

TEST(Evaluation, EmptyReconstructionReport) {
  MetricsReport rep;
  rep.empty_reconstruction = true;
  rep.fscore = FscoreResult{};
  const Json j = to_json(rep);
  EXPECT_TRUE(j.at("empty_reconstruction").get<bool>());
  EXPECT_FALSE(j.contains("chamfer"));
  EXPECT_EQ(j.at("fscore").get<double>(), 0.0);
  EXPECT_NE(to_table(rep).find("empty"), std::string::npos);
  EXPECT_EQ(check_bounds(rep, {1.0, std::nullopt, std::nullopt}).size(), 1u);
  EXPECT_TRUE(check_bounds(rep, {}).empty());
}
