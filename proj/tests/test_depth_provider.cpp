#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sfmdepth/sfmdepth.hpp"
#include "test_util.hpp"

using namespace sfmdepth;
using testutil::TempDir;

namespace {

DenseDepthMap filled(int w, int h, double v, ScaleDomain d = ScaleDomain::Metric) {
  DenseDepthMap m(w, h, d);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) m.set(r, c, v);
  return m;
}

DenseDepthMap random_dense(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 5.0);
  DenseDepthMap m(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (rng() % 5 != 0) m.set(r, c, u(rng));
  return m;
}

ViewContext view(ImageId id, int w, int h) { return {id, "v" + std::to_string(id) + ".png", w, h, std::nullopt}; }

ProviderSpec oracle_spec(double sigma, double a, double b, std::uint64_t seed = 0) {
  ProviderSpec s;
  s.kind = ProviderKind::SyntheticOracle;
  s.noise = {sigma, a, b, seed};
  return s;
}

}  // namespace

TEST(DepthProvider, OracleIdentityIsGroundTruth) {
  const DenseDepthMap gt = random_dense(12, 9, 1);
  const auto p = make_provider(oracle_spec(0, 1, 0), {{4, gt}});
  EXPECT_EQ(p->predict(view(4, 12, 9), {}, 0), gt);
}

TEST(DepthProvider, OracleAffineCorruption) {
  const auto p = make_provider(oracle_spec(0, 2, 0.5), {{1, filled(5, 4, 3.0)}});
  const DenseDepthMap out = p->predict(view(1, 5, 4), {}, 0);
  EXPECT_EQ(out.valid_count(), 20u);
  for (double v : out.depth.values()) EXPECT_EQ(v, 6.5);
}

TEST(DepthProvider, OracleNoiseIsReproducible) {
  const DenseDepthMap gt = random_dense(16, 16, 2);
  const auto p = make_provider(oracle_spec(0.05, 1.5, 0.2, 99), {{1, gt}, {2, gt}});
  const auto a = p->predict(view(1, 16, 16), {}, 0);
  EXPECT_EQ(a, p->predict(view(1, 16, 16), {}, 0));
  EXPECT_NE(a, p->predict(view(1, 16, 16), {}, 1));  // ensemble member
  EXPECT_NE(a, p->predict(view(2, 16, 16), {}, 0));  // view
  const auto other_seed = make_provider(oracle_spec(0.05, 1.5, 0.2, 100), {{1, gt}});
  EXPECT_NE(a, other_seed->predict(view(1, 16, 16), {}, 0));
  // Validity follows the ground truth.
  for (std::size_t i = 0; i < gt.depth.size(); ++i) EXPECT_EQ(a.is_valid(i), gt.is_valid(i));
}

TEST(DepthProvider, OracleWithoutGroundTruth) {
  const auto p = make_provider(oracle_spec(0, 1, 0), {});
  EXPECT_SFM_ERROR(p->predict(view(3, 4, 4), {}, 0), ErrorCode::NoGroundTruth);
}

TEST(DepthProvider, ConstantFillsEverything) {
  ProviderSpec s;
  s.kind = ProviderKind::Constant;
  s.constant = 1.0;
  const DenseDepthMap out = make_provider(s)->predict(view(1, 7, 3), {}, 0);
  EXPECT_EQ(out, filled(7, 3, 1.0));
}

TEST(DepthProvider, FromFilesVerbatimAndMissing) {
  TempDir dir;
  DenseDepthMap stored = random_dense(10, 6, 5);
  stored = quantize_f32(stored);
  io::write_dense(dir.path(), "v1.png", stored);
  DenseDepthMap norm = filled(10, 6, 0.25, ScaleDomain::Normalized);
  io::write_dense(dir.path(), "v2.png", norm);

  ProviderSpec s;
  s.kind = ProviderKind::FromFiles;
  s.prediction_dir = dir.path();
  const auto p = make_provider(s);
  EXPECT_EQ(p->predict(view(1, 10, 6), {}, 0), stored);
  EXPECT_EQ(p->predict(view(2, 10, 6), {}, 0), norm);
  try {
    p->predict(view(3, 10, 6), {}, 0);
    FAIL() << "expected MissingPrediction";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingPrediction);
    EXPECT_NE(std::string(e.what()).find("v3.png"), std::string::npos);
  }
}

TEST(DepthProvider, SpecValidation) {
  EXPECT_SFM_ERROR(make_provider(oracle_spec(-0.1, 1, 0)), ErrorCode::InvalidConfig);
  EXPECT_SFM_ERROR(make_provider(oracle_spec(0, 0, 0)), ErrorCode::InvalidConfig);
  EXPECT_SFM_ERROR(make_provider(oracle_spec(0, -2, 0)), ErrorCode::InvalidConfig);
}

TEST(DepthProvider, ConditioningProviderPassesBundleThrough) {
  const auto sparse = oracle::random_sparse(20, 16, 40, 3, 1.0, 4.0);
  const ConditioningBundle b = build_conditioning(sparse);
  ProviderSpec s;
  s.kind = ProviderKind::Conditioning;
  const DenseDepthMap out = make_provider(s)->predict(view(1, 20, 16), b, 0);
  EXPECT_EQ(out.domain, ScaleDomain::Normalized);
  EXPECT_EQ(out.depth, b.densified_depth);
  EXPECT_EQ(out.valid_count(), 320u);

  s.max_distance = 2.0;
  const DenseDepthMap cut = make_provider(s)->predict(view(1, 20, 16), b, 0);
  for (std::size_t i = 0; i < cut.depth.size(); ++i) EXPECT_EQ(cut.is_valid(i), (*b.distance_map)[i] <= 2.0);

  ConditioningOptions k0;
  k0.k = 0;
  const ConditioningBundle b0 = build_conditioning(sparse, k0);
  s.max_distance = 0.0;
  const DenseDepthMap only_sparse = make_provider(s)->predict(view(1, 20, 16), b0, 0);
  EXPECT_EQ(only_sparse.valid_count(), b0.trimmed.count());
}

TEST(DepthProvider, EnsembleMedianExamples) {
  std::vector<DenseDepthMap> five;
  for (double v : {1.0, 2.0, 100.0, 2.0, 2.0}) five.push_back(filled(1, 1, v));
  EXPECT_EQ(ensemble_median(five).depth(0, 0), 2.0);

  const DenseDepthMap one = random_dense(6, 6, 8);
  EXPECT_EQ(ensemble_median({one}), one);

  EXPECT_EQ(ensemble_median({filled(1, 1, 2.0), filled(1, 1, 4.0)}).depth(0, 0), 3.0);
}

TEST(DepthProvider, EnsembleMedianQuorum) {
  DenseDepthMap a = filled(2, 1, 1.0), b = filled(2, 1, 5.0), c(2, 1), d(2, 1);
  c.set(0, 0, 3.0);
  // Pixel 0 valid in 3 of 4 (quorum 2): median of {1, 3, 5} = 3.
  // Pixel 1 valid in 2 of 4: mean of {1, 5} = 3.
  const DenseDepthMap m = ensemble_median({a, b, c, d});
  EXPECT_EQ(m.depth(0, 0), 3.0);
  EXPECT_EQ(m.depth(0, 1), 3.0);
  // Valid in 1 of 3 (quorum 2): invalid.
  const DenseDepthMap m3 = ensemble_median({c, d, d});
  EXPECT_FALSE(m3.is_valid(0, 0));
}

TEST(DepthProvider, EnsembleMedianErrors) {
  EXPECT_SFM_ERROR(ensemble_median({filled(2, 2, 1), filled(3, 2, 1)}), ErrorCode::ShapeMismatch);
  EXPECT_SFM_ERROR(ensemble_median({filled(2, 2, 1), filled(2, 2, 0.5, ScaleDomain::Normalized)}),
                   ErrorCode::DomainMismatch);
}

TEST(DepthProvider, EnsembleMedianProperties) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    std::vector<DenseDepthMap> maps;
    for (std::size_t i = 0; i < n; ++i) maps.push_back(random_dense(9, 7, rng()));
    const DenseDepthMap med = ensemble_median(maps);
    std::shuffle(maps.begin(), maps.end(), rng);
    EXPECT_EQ(ensemble_median(maps), med);  // permutation invariance

    std::vector<DenseDepthMap> copies(n, maps.front());
    EXPECT_EQ(ensemble_median(copies), maps.front());

    // A strict majority agreeing at a pixel fixes the output there.
    const std::size_t agree = n / 2 + 1;
    std::vector<DenseDepthMap> mixed = maps;
    for (std::size_t i = 0; i < agree; ++i) mixed[i].set(3, 4, 2.75);
    EXPECT_EQ(ensemble_median(mixed).depth(3, 4), 2.75);
  }
}

TEST(DepthProvider, PredictEnsembleUsesMembers) {
  const DenseDepthMap gt = filled(8, 8, 2.0);
  const auto p = make_provider(oracle_spec(0.1, 1, 0, 7), {{1, gt}});
  const DenseDepthMap e5 = predict_ensemble(*p, view(1, 8, 8), {}, 5);
  std::vector<DenseDepthMap> members;
  for (int m = 0; m < 5; ++m) members.push_back(p->predict(view(1, 8, 8), {}, m));
  EXPECT_EQ(e5, ensemble_median(members));
  EXPECT_EQ(predict_ensemble(*p, view(1, 8, 8), {}, 1), members.front());
}
