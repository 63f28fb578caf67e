#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "wavetomo/metrics.hpp"

using namespace wavetomo;

namespace {

RealField random_real(std::size_t n, unsigned seed, double lo = 1400, double hi = 1700) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  RealField f(Grid2D{n, n, 1e-3});
  for (auto& v : f) v = d(rng);
  return f;
}

ComplexField random_complex(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  ComplexField f(Grid2D{n, n, 1e-3});
  for (auto& v : f) v = {d(rng), d(rng)};
  return f;
}

}  // namespace

TEST(Rrmse, IdentityZeroAndDouble) {
  const auto u = random_complex(16, 1);
  ComplexField zero(u.grid());
  EXPECT_DOUBLE_EQ(rrmse_item(u, u), 0.0);
  EXPECT_NEAR(rrmse_item(u, zero), 1.0, 1e-14);
  EXPECT_NEAR(rrmse_item(u, u * 2.0), 1.0, 1e-14);
}

TEST(Rrmse, ScaleLaw) {
  const auto u = random_complex(12, 2);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    const double a = d(rng);
    EXPECT_NEAR(rrmse_item(u, u * a), std::abs(1.0 - a), 1e-12) << a;
  }
}

TEST(Rrmse, ReportStatistics) {
  const auto u = random_complex(8, 3);
  std::vector<ComplexField> truth{u, u, u}, pred{u, u * 2.0, u * 0.5};
  const auto r = rrmse(truth, pred);
  ASSERT_EQ(r.count(), 3u);
  EXPECT_NEAR(r.mean, 0.5, 1e-14);
  EXPECT_NEAR(r.stddev, std::sqrt((0.25 + 0.25 + 0.0) / 3.0), 1e-14);
  EXPECT_TRUE(r.excluded.empty());
  for (double v : r.values) EXPECT_GE(v, 0.0);
}

TEST(Rrmse, ZeroNormItemExcluded) {
  const auto u = random_complex(8, 4);
  ComplexField zero(u.grid());
  std::vector<ComplexField> truth{u, zero, u}, pred{u, u, u * 3.0};
  const auto r = rrmse(truth, pred);
  ASSERT_EQ(r.count(), 2u);
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_EQ(r.excluded[0], 1u);
  EXPECT_NEAR(r.mean, 1.0, 1e-14);
  EXPECT_THROW(rrmse_item(zero, u), StructuralError);
}

TEST(Rrmse, ShapeMismatchThrows) {
  std::vector<ComplexField> a{random_complex(8, 1)}, b{random_complex(9, 1)};
  EXPECT_THROW(rrmse(a, b), StructuralError);
  std::vector<ComplexField> c{};
  EXPECT_THROW(rrmse(a, c), StructuralError);
}

TEST(Ssim, Identity) {
  const auto c = random_real(20, 7);
  EXPECT_NEAR(ssim(c, c), 1.0, 1e-14);
  EXPECT_NEAR(ssim(c, c, {.windowed = true}), 1.0, 1e-12);
}

TEST(Ssim, HandComputedTwoByTwo) {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0}, y{2.0, 2.0, 4.0, 3.0};
  // L = 3, C1 = 0.0009, C2 = 0.0081
  // mx = 2.5, my = 2.75, vx = 1.25, vy = 0.6875, cov = 0.625
  const double c1 = 0.0009, c2 = 0.0081;
  const double expected = ((2 * 2.5 * 2.75 + c1) * (2 * 0.625 + c2)) /
                          ((2.5 * 2.5 + 2.75 * 2.75 + c1) * (1.25 + 0.6875 + c2));
  EXPECT_NEAR(ssim_global(x, y), expected, 1e-12);
  const double expected_l10 = ((2 * 2.5 * 2.75 + 0.01) * (2 * 0.625 + 0.09)) /
                              ((2.5 * 2.5 + 2.75 * 2.75 + 0.01) * (1.25 + 0.6875 + 0.09));
  EXPECT_NEAR(ssim_global(x, y, 10.0), expected_l10, 1e-12);
}

TEST(Ssim, FieldMatchesSpanForm) {
  const auto a = random_real(9, 41), b = random_real(9, 42);
  EXPECT_DOUBLE_EQ(ssim(a, b), ssim_global(a.values(), b.values()));
}

TEST(Ssim, AntiCorrelatedIsNegative) {
  const auto c = random_real(24, 9);
  double mean = 0;
  for (double v : c) mean += v;
  mean /= static_cast<double>(c.size());
  RealField flipped(c.grid());
  for (std::size_t i = 0; i < c.size(); ++i) flipped[i] = -c[i] + 2 * mean;
  EXPECT_LT(ssim(c, flipped), 0.0);
}

TEST(Ssim, Symmetric) {
  const auto a = random_real(16, 11), b = random_real(16, 12);
  const SsimOptions opt{.dynamic_range = 300.0};
  EXPECT_NEAR(ssim(a, b, opt), ssim(b, a, opt), 1e-15);
  SsimOptions w = opt;
  w.windowed = true;
  EXPECT_NEAR(ssim(a, b, w), ssim(b, a, w), 1e-14);
}

TEST(Ssim, BoundedRange) {
  for (unsigned s = 0; s < 20; ++s) {
    const auto a = random_real(10, s), b = random_real(10, 100 + s, -500, 500);
    const double v = ssim(a, b);
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Ssim, ConstantShiftAffectsOnlyMeanTerm) {
  const auto a = random_real(16, 21), b = random_real(16, 22);
  const double L = 300.0, c1 = (0.01 * L) * (0.01 * L);
  auto shifted = [](RealField f, double k) {
    for (auto& v : f) v += k;
    return f;
  };
  auto mean = [](const RealField& f) {
    double m = 0;
    for (double v : f) m += v;
    return m / static_cast<double>(f.size());
  };
  auto mean_term = [&](double mx, double my) { return (2 * mx * my + c1) / (mx * mx + my * my + c1); };
  const double s0 = ssim(a, b, {.dynamic_range = L});
  const double structure = s0 / mean_term(mean(a), mean(b));
  for (double k : {-500.0, 10.0, 2000.0}) {
    const auto a2 = shifted(a, k), b2 = shifted(b, k);
    const double s1 = ssim(a2, b2, {.dynamic_range = L});
    EXPECT_NEAR(s1 / mean_term(mean(a2), mean(b2)), structure, 1e-10) << k;
  }
}

TEST(Ssim, ReportAndFormatting) {
  const auto a = random_real(12, 31);
  std::vector<RealField> t{a, a}, p{a, random_real(12, 32)};
  const auto r = ssim(t, p);
  ASSERT_EQ(r.count(), 2u);
  EXPECT_NEAR(r.values[0], 1.0, 1e-14);
  const auto j = to_json(r);
  EXPECT_EQ(j["metric"], "ssim");
  EXPECT_EQ(j["count"], 2);
  EXPECT_NE(j["summary"].get<std::string>().find("±"), std::string::npos);
}

TEST(Ssim, NegativeDynamicRangeThrows) {
  const auto a = random_real(8, 1);
  EXPECT_THROW(ssim(a, a, {.dynamic_range = -1.0}), StructuralError);
}
