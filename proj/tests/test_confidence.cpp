#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <random>

#include "rfdeep/confidence.hpp"

using namespace rfdeep;
using big = boost::multiprecision::cpp_bin_float_50;

namespace {

double big_energy(double l0, double l1, double t) {
  const big a = big(l0) / t, b = big(l1) / t;
  return static_cast<double>(-big(t) * boost::multiprecision::log(boost::multiprecision::exp(a) +
                                                                  boost::multiprecision::exp(b)));
}

LogitVolume constant_logits(const Dims3& d, float bg, float tumor) {
  std::vector<float> v(2 * voxel_count(d));
  std::fill(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(voxel_count(d)), bg);
  std::fill(v.begin() + static_cast<std::ptrdiff_t>(voxel_count(d)), v.end(), tumor);
  return LogitVolume(d, {1, 1, 1}, v);
}

MaskVolume some_mask(const Dims3& d, int every) {
  std::vector<std::uint8_t> m(voxel_count(d), 0);
  for (std::size_t i = 0; i < m.size(); i += every) m[i] = 1;
  return MaskVolume(d, {1, 1, 1}, m);
}

}  // namespace

TEST(Softmax, Examples) {
  auto p = voxel_softmax(0, 0);
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], 0.5);
  p = voxel_softmax(1000, 0);
  EXPECT_NEAR(p[0], 1.0, 1e-300);
  EXPECT_NEAR(p[1], 0.0, 1e-300);
  p = voxel_softmax(std::log(3.0), 0);
  EXPECT_NEAR(p[0], 0.75, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
}

TEST(VoxelScores, SymmetricCase) {
  EXPECT_DOUBLE_EQ(voxel_score(0, 0, {ScoreMethod::MaxSoftmax, 1.0}), 0.5);
  EXPECT_DOUBLE_EQ(voxel_score(0, 0, {ScoreMethod::MaxLogit, 1.0}), 0.0);
  EXPECT_NEAR(voxel_score(0, 0, {ScoreMethod::Energy, 1.0}), -std::log(2.0), 1e-15);
  EXPECT_NEAR(voxel_score(0, 0, {ScoreMethod::Entropy, 1.0}), std::log(2.0), 1e-15);
}

TEST(VoxelScores, ShiftedLogSumExp) {
  EXPECT_NEAR(voxel_energy(10, -10, 1.0), -10.0 - std::log1p(std::exp(-20.0)), 1e-14);
  EXPECT_NEAR(voxel_energy(3, 1, 2.0), big_energy(3, 1, 2.0), 1e-14);
}

TEST(VoxelScores, CertainCaseHasZeroEntropy) {
  EXPECT_EQ(voxel_score(1e4, -1e4, {ScoreMethod::Entropy, 1.0}), 0.0);
}

TEST(VoxelScores, NoNonFiniteForHugeLogits) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng), b = u(rng);
    const auto p = voxel_softmax(a, b);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
    for (auto m : kAllScoreMethods) ASSERT_TRUE(std::isfinite(voxel_score(a, b, {m, 1.0})));
  }
}

TEST(VoxelScores, EnergyMatchesHighPrecision) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-30, 30);
  for (int i = 0; i < 2000; ++i) {
    const double a = u(rng), b = u(rng);
    EXPECT_NEAR(voxel_energy(a, b, 1.0), big_energy(a, b, 1.0), 1e-12);
  }
}

TEST(VoxelScores, ChannelSymmetry) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int i = 0; i < 500; ++i) {
    const double a = u(rng), b = u(rng);
    for (auto m : kAllScoreMethods) {
      EXPECT_NEAR(voxel_score(a, b, {m, 1.0}), voxel_score(b, a, {m, 1.0}), 1e-15);
    }
  }
}

TEST(ScanScore, ConstantField) {
  const Dims3 d{4, 4, 4};
  const auto l = constant_logits(d, 0, 0);
  const auto m = some_mask(d, 3);
  const auto s = scan_score("x", l, m, {ScoreMethod::MaxSoftmax, 1.0});
  EXPECT_DOUBLE_EQ(s.value, 0.5);
  EXPECT_FALSE(s.fallback_used);
  EXPECT_NEAR(scan_score("x", l, m, {ScoreMethod::Entropy, 1.0}).value, std::log(2.0), 1e-15);
  for (auto meth : kAllScoreMethods) {
    const double a = scan_score("x", constant_logits(d, 1.5f, -0.5f), some_mask(d, 2), {meth, 1.0}).value;
    const double b = scan_score("x", constant_logits(d, 1.5f, -0.5f), some_mask(d, 7), {meth, 1.0}).value;
    EXPECT_NEAR(a, b, 1e-14);
  }
}

TEST(ScanScore, ConfidentTumorIsMostIdLike) {
  const Dims3 d{3, 3, 3};
  const auto s = scan_score("x", constant_logits(d, -10, 10), some_mask(d, 1), {ScoreMethod::MaxSoftmax, 1.0});
  EXPECT_NEAR(s.value, 1.0 - 1.0 / (1.0 + std::exp(-20.0)), 1e-15);
  const auto e = scan_score("x", constant_logits(d, -10, 10), some_mask(d, 1), {ScoreMethod::MaxLogit, 1.0});
  EXPECT_DOUBLE_EQ(e.value, -10.0);
}

TEST(ScanScore, EmptyMaskFallsBack) {
  const Dims3 d{6, 6, 6};
  std::vector<float> v(2 * 216);
  for (int i = 0; i < 216; ++i) {
    v[i] = 0.0f;
    v[216 + i] = static_cast<float>(i);  // highest 100 tumor logits: 116..215
  }
  const LogitVolume l(d, {1, 1, 1}, v);
  const MaskVolume empty(d, {1, 1, 1}, std::vector<std::uint8_t>(216, 0));
  const auto s = scan_score("x", l, empty, {ScoreMethod::MaxLogit, 1.0});
  EXPECT_TRUE(s.fallback_used);
  EXPECT_DOUBLE_EQ(s.value, -(116.0 + 215.0) / 2.0);
  for (auto m : kAllScoreMethods) EXPECT_TRUE(std::isfinite(scan_score("x", l, empty, {m, 1.0}).value));
}

TEST(ScanScore, RaisingTumorLogitLowersMaxSoftmaxValue) {
  const Dims3 d{3, 3, 3};
  const auto m = some_mask(d, 2);
  double prev = 2.0;
  for (float t : {0.5f, 1.0f, 2.0f, 4.0f, 8.0f}) {
    const double v = scan_score("x", constant_logits(d, 0, t), m, {ScoreMethod::MaxSoftmax, 1.0}).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(ScoreMethodNames, RoundTrip) {
  for (auto m : kAllScoreMethods) EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_EQ(method_display_name(ScoreMethod::MaxLogit), "MaxLogits");
}
