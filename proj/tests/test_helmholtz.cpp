#include <gtest/gtest.h>

#include "oracles/dense_helmholtz.hpp"
#include "wavetomo/helmholtz.hpp"
#include "wavetomo/random.hpp"

using namespace wavetomo;

namespace {

constexpr double kDx = 0.5e-3;
constexpr std::size_t kPad = 8;

// 48x48 computational grid: 32x32 medium plus an 8-cell absorbing border.
SolverConfig small_config() {
  SolverConfig cfg;
  cfg.pad = kPad;
  return cfg;
}

RealField water(std::size_t n = 32) { return RealField(Grid2D::centered(n, n, kDx), 1500.0); }

RealField bone_disc(std::size_t n = 32) {
  RealField c = water(n);
  const double m = 0.5 * static_cast<double>(n - 1);
  for (std::size_t iy = 0; iy < n; ++iy)
    for (std::size_t ix = 0; ix < n; ++ix) {
      const double r = std::hypot(static_cast<double>(ix) - m, static_cast<double>(iy) - m);
      if (r < 4.0) c(ix, iy) = 1450.0;
      else if (r < 9.5) c(ix, iy) = 2800.0;
    }
  return c;
}

RealField weak_random(std::uint64_t seed, double amplitude, std::size_t n = 32) {
  Rng rng(seed);
  RealField c = water(n);
  const double a = rng.uniform(0.2, 0.5), b = rng.uniform(0.2, 0.5), ph = rng.uniform(0.0, 6.28);
  for (std::size_t iy = 0; iy < n; ++iy)
    for (std::size_t ix = 0; ix < n; ++ix)
      c(ix, iy) = 1500.0 * (1.0 + amplitude * std::sin(a * static_cast<double>(ix) + ph) *
                                      std::cos(b * static_cast<double>(iy)));
  return c;
}

ComplexField point_source(const Grid2D& g, std::size_t ix, std::size_t iy) {
  ComplexField rho(g);
  rho(ix, iy) = 1.0 / (g.dx * g.dx);
  return rho;
}

HelmholtzProblem padded_problem(const RealField& c, double freq, std::size_t sx = 20, std::size_t sy = 12,
                                SolverConfig cfg = small_config()) {
  const RealField cp = pad_extend(c, kPad);
  return make_problem(cp, point_source(cp.grid(), sx, sy), 2.0 * M_PI * freq, cfg);
}

// A boundary layer much stronger than the medium contrast inflates eps enough for the plain
// Born series to contract as well; the Born/CBS comparisons keep the layer below the contrast.
HelmholtzProblem bone_problem(double freq) {
  SolverConfig cfg = small_config();
  cfg.absorption = 0.25;
  return padded_problem(bone_disc(), freq, 20, 12, cfg);
}

}  // namespace

TEST(ScatteringPotential, HomogeneousCancellation) {
  const double omega = 2.0 * M_PI * 0.5e6;
  const double k2 = std::pow(omega / 1500.0, 2);
  const ComplexField v = scattering_potential(water(), omega, k2, 0.37 * k2);
  for (const auto& z : v) {
    EXPECT_NEAR(z.real(), 0.0, 1e-9 * k2);
    EXPECT_EQ(z.imag(), -0.37 * k2);
  }
}

TEST(ScatteringPotential, TwoSpeedHandEvaluation) {
  RealField c = water(8);
  c(3, 4) = 3000.0;
  const double omega = 2.0 * M_PI * 0.3e6, k2 = 5.0e6, eps = 1.25e6;
  const ComplexField v = scattering_potential(c, omega, k2, eps);
  const double w = omega / 1500.0, b = omega / 3000.0;
  EXPECT_NEAR(v(0, 0).real(), w * w - k2, 1e-9 * w * w);
  EXPECT_NEAR(v(3, 4).real(), b * b - k2, 1e-9 * w * w);
  EXPECT_EQ(v(3, 4).imag(), -eps);
}

TEST(ScatteringPotential, ImaginaryPartAndPreconditionerAreExact) {
  const RealField c = bone_disc();
  const double omega = 2.0 * M_PI * 0.4e6;
  const KappaEps ke = choose_kappa_eps(c, omega);
  const ComplexField v = scattering_potential(c, omega, ke.kappa2, ke.eps);
  const ComplexField q = cbs_preconditioner(v, ke.eps);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(v[i].imag(), -ke.eps);
    EXPECT_EQ(q[i], 1.0 - complex(0.0, 1.0 / ke.eps) * v[i]);
    EXPECT_LE(std::abs(v[i]), ke.eps * std::sqrt(2.0));
  }
}

TEST(ScatteringPotential, RejectsNonPositiveSpeed) {
  RealField c = water(8);
  c(2, 2) = 0.0;
  EXPECT_THROW(scattering_potential(c, 1e6, 1.0, 1.0), StructuralError);
  EXPECT_THROW(scattering_potential(water(8), 1e6, 1.0, 0.0), StructuralError);
}

TEST(ChooseKappaEps, HomogeneousUsesFloor) {
  const double omega = 2.0 * M_PI * 0.25e6;
  const KappaEps ke = choose_kappa_eps(water(), omega);
  EXPECT_DOUBLE_EQ(ke.kappa2, std::pow(omega / 1500.0, 2));
  EXPECT_DOUBLE_EQ(ke.eps, 1e-3 * ke.kappa2);
}

TEST(ChooseKappaEps, TwoSpeedClosedForm) {
  RealField c(Grid2D(8, 8, 1e-3), 1400.0);
  c(5, 5) = 1600.0;
  const double omega = 2.0 * M_PI * 0.3e6;
  const double hi = std::pow(omega / 1400.0, 2), lo = std::pow(omega / 1600.0, 2);
  const KappaEps ke = choose_kappa_eps(c, omega, 1.05);
  EXPECT_NEAR(ke.kappa2, 0.5 * (hi + lo), 1e-12 * hi);
  EXPECT_NEAR(ke.eps, 1.05 * 0.5 * (hi - lo), 1e-9 * hi);
  EXPECT_THROW(choose_kappa_eps(c, omega, 0.9), StructuralError);
}

TEST(ChooseKappaEps, BoneMapBoundsRealPotential) {
  RealField c = bone_disc();
  for (auto& x : c) x = std::max(x, 1450.0);
  const double omega = 2.0 * M_PI * 0.6e6;
  const KappaEps ke = choose_kappa_eps(c, omega, 1.05);
  const ComplexField v = scattering_potential(c, omega, ke.kappa2, ke.eps);
  for (const auto& z : v) EXPECT_LE(std::abs(z.real()), ke.eps / 1.05 * (1 + 1e-12));
}

TEST(GreenOperator, ZeroMapsToZero) {
  const ComplexField f(Grid2D(16, 16, kDx));
  for (const auto& z : green_apply(f, 1e6, 1e5)) EXPECT_EQ(z, complex(0.0));
  EXPECT_THROW(green_apply(f, 1e6, 0.0), StructuralError);
}

TEST(GreenOperator, PlaneWaveIsScaledBySymbol) {
  const Grid2D g(32, 32, kDx);
  const double px = fft_wavenumber(5, 32, kDx), py = fft_wavenumber(30, 32, kDx);
  ComplexField f(g);
  for (std::size_t iy = 0; iy < 32; ++iy)
    for (std::size_t ix = 0; ix < 32; ++ix) f(ix, iy) = std::exp(complex(0.0, px * g.x(ix) + py * g.y(iy)));
  const double k2 = 3.0e7, eps = 2.0e6;
  const complex scale = 1.0 / complex(px * px + py * py - k2, -eps);
  EXPECT_LT(relative_l2(green_apply(f, k2, eps), f * scale), 1e-12);
}

TEST(GreenOperator, DeltaMatchesDenseDampedOperator) {
  const Grid2D g(48, 48, kDx);
  const ComplexField rho = point_source(g, 24, 24);
  const double k2 = std::pow(2.0 * M_PI * 0.5e6 / 1500.0, 2), eps = 0.3 * k2;
  const ComplexField u = green_apply(rho, k2, eps);
  const ComplexField ref = oracle::dense_green(rho, k2, eps);
  // compare on the interior half of the domain
  double num = 0.0, den = 0.0;
  for (std::size_t iy = 12; iy < 36; ++iy)
    for (std::size_t ix = 12; ix < 36; ++ix) {
      num += std::norm(u(ix, iy) - ref(ix, iy));
      den += std::norm(ref(ix, iy));
    }
  EXPECT_LT(std::sqrt(num / den), 0.02);
  EXPECT_LT(relative_l2(u, ref), 1e-10);
}

TEST(BornSolve, EpsilonOnlyPotentialStaysNearFirstTerm) {
  // Homogeneous periodic medium, no absorbing layer, small eps: v = -i eps. The frequency is
  // chosen off the grid's periodic resonances.
  const RealField c(Grid2D(48, 48, kDx), 1500.0);
  HelmholtzProblem p;
  p.c = c;
  p.rho = point_source(c.grid(), 24, 10);
  p.omega = 2.0 * M_PI * 0.47e6;
  const KappaEps ke = choose_kappa_eps(c, p.omega);
  p.kappa2 = ke.kappa2;
  p.eps = ke.eps;
  const ComplexField u0 = green_apply(p.rho, p.kappa2, p.eps);
  const auto [u, report] = born_solve(p, 3);
  EXPECT_EQ(report.iterations, 3);
  EXPECT_LT(relative_l2(u, u0), 0.05);
}

TEST(BornSolve, WeakContrastMatchesDenseSolve) {
  const HelmholtzProblem p = padded_problem(weak_random(11, 0.01), 0.4e6);
  const auto [u, report] = born_solve(p, 400, 1e-10);
  EXPECT_TRUE(report.converged);
  const ComplexField ref = oracle::DenseHelmholtz(p.c, p.omega, p.absorption_ptr()).solve(p.rho);
  EXPECT_LT(relative_l2(u, ref), 1e-3);
}

TEST(BornSolve, BoneContrastDiverges) {
  const HelmholtzProblem p = bone_problem(0.5e6);
  try {
    born_solve(p, 50);
    FAIL() << "expected divergence";
  } catch (const DivergedError& e) {
    const auto& n = e.report().abs_update_norms;
    ASSERT_EQ(n.size(), 50u);
    EXPECT_GT(n.back(), 10.0 * n.front());
  }
}

TEST(CbsSolve, ZeroSourceGivesZeroInOneIteration) {
  HelmholtzProblem p = padded_problem(water(), 0.3e6);
  p.rho = ComplexField(p.rho.grid());
  const auto [u, report] = cbs_solve(p, 1e-6, 100);
  EXPECT_EQ(report.iterations, 1);
  EXPECT_TRUE(report.converged);
  EXPECT_EQ(norm2(u), 0.0);
}

TEST(CbsSolve, HomogeneousPointSourceMatchesDenseSolve) {
  const HelmholtzProblem p = padded_problem(water(), 0.5e6);
  const auto [u, report] = cbs_solve(p, 1e-6, 1000);
  ASSERT_TRUE(report.converged);
  const ComplexField ref = oracle::DenseHelmholtz(p.c, p.omega, p.absorption_ptr()).solve(p.rho);
  EXPECT_LT(relative_l2(u, ref), 1e-4);
  EXPECT_LT(residual(p, ref), 1e-8);
}

TEST(CbsSolve, ConvergesWhereBornDiverges) {
  const HelmholtzProblem p = bone_problem(0.5e6);
  EXPECT_THROW(born_solve(p, 50), DivergedError);
  const auto [u, report] = cbs_solve(p, 1e-6, 1000);
  ASSERT_TRUE(report.converged);
  const auto& n = report.abs_update_norms;
  const std::size_t burn_in = n.size() / 4;
  for (std::size_t i = burn_in + 1; i < n.size(); ++i) EXPECT_LT(n[i], n[i - 1] * (1.0 + 1e-9)) << i;
  EXPECT_LE(residual(p, u), 1e-5);
  const ComplexField ref = oracle::DenseHelmholtz(p.c, p.omega, p.absorption_ptr()).solve(p.rho);
  EXPECT_LT(relative_l2(u, ref), 1e-4);
}

TEST(CbsSolve, WarmStartReachesSameSolution) {
  const HelmholtzProblem p = padded_problem(weak_random(3, 0.05), 0.45e6);
  const auto [u, cold] = cbs_solve(p, 1e-8, 1000);
  const HelmholtzProblem p2 = padded_problem(weak_random(3, 0.051), 0.45e6);
  const auto [u2, warm] = cbs_solve(p2, 1e-8, 1000, &u);
  const auto [u3, cold2] = cbs_solve(p2, 1e-8, 1000);
  EXPECT_LT(warm.iterations, cold2.iterations);
  EXPECT_LT(relative_l2(u2, u3), 1e-6);
}

TEST(CbsSolve, ReportsNonConvergence) {
  const HelmholtzProblem p = padded_problem(bone_disc(), 0.5e6);
  try {
    cbs_solve(p, 1e-6, 5);
    FAIL() << "expected DivergedError";
  } catch (const DivergedError& e) {
    EXPECT_EQ(e.report().iterations, 5);
    EXPECT_FALSE(e.report().converged);
  }
}

TEST(CbsSolve, IsLinearInTheSource) {
  HelmholtzProblem p = padded_problem(weak_random(5, 0.08), 0.35e6, 15, 20);
  const ComplexField r1 = p.rho;
  const ComplexField r2 = point_source(p.rho.grid(), 30, 25);
  const complex a(0.7, -1.3), b(-2.0, 0.4);
  auto solve = [&](const ComplexField& rho) {
    p.rho = rho;
    return cbs_solve(p, 1e-12, 3000).first;
  };
  const ComplexField lhs = solve(r1 * a + r2 * b);
  const ComplexField rhs = solve(r1) * a + solve(r2) * b;
  EXPECT_LT(relative_l2(lhs, rhs), 1e-8);
}

TEST(CbsSolve, Reciprocity) {
  const RealField cp = pad_extend(bone_disc(), kPad);
  const double omega = 2.0 * M_PI * 0.45e6;
  const SolverConfig cfg = small_config();
  const auto solve_from = [&](std::size_t ix, std::size_t iy) {
    return cbs_solve(make_problem(cp, point_source(cp.grid(), ix, iy), omega, cfg), 1e-10, 3000).first;
  };
  const ComplexField ua = solve_from(12, 14), ub = solve_from(33, 30);
  EXPECT_NEAR(std::abs(ua(33, 30) - ub(12, 14)) / std::abs(ua(33, 30)), 0.0, 1e-6);
}

TEST(Residual, NormalizationAndOracle) {
  const HelmholtzProblem p = padded_problem(weak_random(2, 0.05), 0.3e6);
  EXPECT_DOUBLE_EQ(residual(p, ComplexField(p.rho.grid())), 1.0);
  const ComplexField ref = oracle::DenseHelmholtz(p.c, p.omega, p.absorption_ptr()).solve(p.rho);
  EXPECT_LT(residual(p, ref), 1e-8);
  const auto [u, report] = cbs_solve(p, 1e-6, 1000);
  EXPECT_LE(residual(p, u), 1e-5);
}
