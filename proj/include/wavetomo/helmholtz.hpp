/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The wavetomo Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavetomo/fft.hpp"
#include "wavetomo/field.hpp"

namespace wavetomo {

/// Convergence record of an iterative Helmholtz solve.
struct SolveReport {
  int iterations = 0;
  double final_update = 0.0;              // ||u_{n+1} - u_n|| / ||u_{n+1}||
  double final_residual = -1.0;           // Helmholtz residual at exit, when it was evaluated
  bool converged = false;
  std::vector<double> update_norms;       // relative, one per iteration
  std::vector<double> abs_update_norms;   // ||u_{n+1} - u_n||
};

class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& what, SolveReport report, int iteration)
      : std::runtime_error(what), report_(std::move(report)), iteration_(iteration) {}
  const SolveReport& report() const { return report_; }
  int iteration() const { return iteration_; }

 private:
  SolveReport report_;
  int iteration_;
};

struct KappaEps {
  double kappa2 = 0.0;
  double eps = 0.0;
};

/// Numerical parameters of a single forward solve. Lengths are in grid cells.
struct SolverConfig {
  double tol = 1e-6;
  int n_max = 1000;
  double margin = 1.05;
  std::size_t pad = 16;
  double absorption = 1.0;     // peak boundary-layer loss as a fraction of (omega/c_ref)^2
  double c_ref = 1500.0;       // reference speed setting the boundary-layer scale
  double eps_floor = 1e-3;     // eps >= eps_floor * kappa2
};

inline nlohmann::json to_json(const SolverConfig& c) {
  return {{"tol", c.tol},           {"n_max", c.n_max},           {"margin", c.margin},
          {"pad", c.pad},           {"absorption", c.absorption}, {"c_ref", c.c_ref},
          {"eps_floor", c.eps_floor}};
}

/// Missing keys keep their defaults; unknown keys and out-of-range values are rejected.
inline SolverConfig solver_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw StructuralError("solver: expected a JSON object");
  SolverConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "tol") c.tol = v.get<double>();
      else if (key == "n_max") c.n_max = v.get<int>();
      else if (key == "margin") c.margin = v.get<double>();
      else if (key == "pad") c.pad = v.get<std::size_t>();
      else if (key == "absorption") c.absorption = v.get<double>();
      else if (key == "c_ref") c.c_ref = v.get<double>();
      else if (key == "eps_floor") c.eps_floor = v.get<double>();
      else throw StructuralError("solver: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw StructuralError("solver." + key + ": " + e.what());
    }
  }
  if (!(c.tol > 0 && c.tol < 1)) throw StructuralError("solver.tol must lie in (0, 1)");
  if (c.n_max < 1) throw StructuralError("solver.n_max must be >= 1");
  if (!(c.margin >= 1)) throw StructuralError("solver.margin must be >= 1");
  if (!(c.absorption >= 0)) throw StructuralError("solver.absorption must be >= 0");
  if (!(c.c_ref > 0)) throw StructuralError("solver.c_ref must be positive");
  if (!(c.eps_floor > 0)) throw StructuralError("solver.eps_floor must be positive");
  return c;
}

namespace detail {
inline void check_speed(const RealField& c) {
  for (double v : c)
    if (!(v > 0.0) || !std::isfinite(v)) throw StructuralError("sound speed must be positive and finite");
}
inline void check_omega(double omega) {
  if (!(omega > 0.0) || !std::isfinite(omega)) throw StructuralError("angular frequency must be positive");
}
}  // namespace detail

/// Loss profile of the absorbing layer on a padded grid: zero on the interior,
/// rising quadratically to `peak` at the outer edge of the `pad`-cell border.
inline RealField absorbing_layer(const Grid2D& padded, std::size_t pad, double peak) {
  RealField a(padded, 0.0);
  if (pad == 0 || peak == 0.0) return a;
  const auto depth = [pad](std::size_t i, std::size_t n) {
    if (i < pad) return static_cast<double>(pad - i);
    if (i >= n - pad) return static_cast<double>(i - (n - pad - 1));
    return 0.0;
  };
  const double p = static_cast<double>(pad);
  for (std::size_t iy = 0; iy < padded.ny; ++iy)
    for (std::size_t ix = 0; ix < padded.nx; ++ix) {
      const double d = std::max(depth(ix, padded.nx), depth(iy, padded.ny)) / p;
      a(ix, iy) = peak * d * d;
    }
  return a;
}

/// Medium squared wavenumber k^2 = (omega/c)^2 + i*a.
inline ComplexField squared_wavenumber(const RealField& c, double omega, const RealField* absorption = nullptr) {
  detail::check_speed(c);
  detail::check_omega(omega);
  if (absorption) c.check_same(*absorption);
  ComplexField k2(c.grid());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double kr = omega / c[i];
    k2[i] = complex(kr * kr, absorption ? (*absorption)[i] : 0.0);
  }
  return k2;
}

/// v = (omega/c)^2 - kappa^2 - i*eps, plus i*a when an absorbing layer is supplied.
inline ComplexField scattering_potential(const RealField& c, double omega, double kappa2, double eps,
                                         const RealField* absorption = nullptr) {
  if (!(eps > 0.0)) throw StructuralError("scattering_potential: eps must be > 0");
  if (!(kappa2 > 0.0)) throw StructuralError("scattering_potential: kappa2 must be > 0");
  ComplexField v = squared_wavenumber(c, omega, absorption);
  for (auto& x : v) x -= complex(kappa2, eps);
  return v;
}

/// q = 1 - i v / eps.
inline ComplexField cbs_preconditioner(const ComplexField& v, double eps) {
  if (!(eps > 0.0)) throw StructuralError("cbs_preconditioner: eps must be > 0");
  ComplexField q(v.grid());
  const complex i_over_eps(0.0, 1.0 / eps);
  for (std::size_t i = 0; i < v.size(); ++i) q[i] = 1.0 - i_over_eps * v[i];
  return q;
}

/// Midpoint background wavenumber and the smallest damping (times margin) that bounds
/// |k^2 - kappa^2| over the medium, which keeps the CBS operator contractive.
inline KappaEps choose_kappa_eps(const RealField& c, double omega, double margin = 1.05,
                                 const RealField* absorption = nullptr, double eps_floor = 1e-3) {
  if (margin < 1.0) throw StructuralError("choose_kappa_eps: margin must be >= 1");
  const ComplexField k2 = squared_wavenumber(c, omega, absorption);
  double lo = k2[0].real(), hi = k2[0].real();
  for (const auto& k : k2) {
    lo = std::min(lo, k.real());
    hi = std::max(hi, k.real());
  }
  KappaEps out;
  out.kappa2 = 0.5 * (lo + hi);
  double spread = 0.0;
  for (const auto& k : k2) spread = std::max(spread, std::abs(k - out.kappa2));
  out.eps = std::max(margin * spread, eps_floor * out.kappa2);
  return out;
}

/// Spectral Green operator of (laplacian + kappa^2 + i eps): F^-1 (p^2 - kappa^2 - i eps)^-1 F.
class GreenOperator {
 public:
  GreenOperator(const Grid2D& grid, double kappa2, double eps) : grid_(grid), symbol_(grid) {
    if (!(eps > 0.0)) throw StructuralError("GreenOperator: eps must be > 0 (symbol is singular otherwise)");
    const SpectralCoords coords(grid);
    for (std::size_t i = 0; i < symbol_.size(); ++i) symbol_[i] = 1.0 / complex(coords.p2[i] - kappa2, -eps);
  }

  void apply_inplace(ComplexField& f) const {
    if (!same_shape(f.grid(), grid_)) throw StructuralError("GreenOperator: grid mismatch");
    fft2_inplace(f);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] *= symbol_[i];
    ifft2_inplace(f);
  }

  ComplexField apply(ComplexField f) const {
    apply_inplace(f);
    return f;
  }

  const ComplexField& symbol() const { return symbol_; }

 private:
  Grid2D grid_;
  ComplexField symbol_;
};

inline ComplexField green_apply(const ComplexField& f, double kappa2, double eps) {
  return GreenOperator(f.grid(), kappa2, eps).apply(f);
}

/// Everything a Helmholtz solve needs: [lap + (omega/c)^2 + i a] u = -rho on a periodic grid.
struct HelmholtzProblem {
  RealField c;
  ComplexField rho;
  double omega = 0.0;
  double kappa2 = 0.0;
  double eps = 0.0;
  std::optional<RealField> absorption;

  void validate() const {
    detail::check_speed(c);
    detail::check_omega(omega);
    c.check_same(RealField(rho.grid()));
    if (absorption) c.check_same(*absorption);
    if (!(eps > 0.0)) throw StructuralError("HelmholtzProblem: eps must be > 0");
    if (!(kappa2 > 0.0)) throw StructuralError("HelmholtzProblem: kappa2 must be > 0");
  }

  const RealField* absorption_ptr() const { return absorption ? &*absorption : nullptr; }
};

/// Builds a problem on an already padded grid, with the boundary layer occupying the
/// outer `cfg.pad` cells, and kappa/eps from choose_kappa_eps.
inline HelmholtzProblem make_problem(RealField c, ComplexField rho, double omega, const SolverConfig& cfg) {
  HelmholtzProblem p;
  const double kref = omega / cfg.c_ref;
  p.absorption = absorbing_layer(c.grid(), cfg.pad, cfg.absorption * kref * kref);
  const KappaEps ke = choose_kappa_eps(c, omega, cfg.margin, &*p.absorption, cfg.eps_floor);
  p.c = std::move(c);
  p.rho = std::move(rho);
  p.omega = omega;
  p.kappa2 = ke.kappa2;
  p.eps = ke.eps;
  p.validate();
  return p;
}

namespace detail {
inline bool finite(const complex& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }
}  // namespace detail

/// Plain Born iteration u_{n+1} = G rho + G v u_n. Runs n_max iterations (or stops once the
/// relative update drops below tol). Throws DivergedError on non-finite values, or when the
/// last update is no smaller than the first one (the series is not contracting).
inline std::pair<ComplexField, SolveReport> born_solve(const HelmholtzProblem& problem, int n_max, double tol = 0.0) {
  problem.validate();
  if (n_max < 1) throw StructuralError("born_solve: n_max must be >= 1");
  const ComplexField v = scattering_potential(problem.c, problem.omega, problem.kappa2, problem.eps,
                                              problem.absorption_ptr());
  const GreenOperator green(problem.c.grid(), problem.kappa2, problem.eps);
  const ComplexField u0 = green.apply(problem.rho);
  ComplexField u = u0, work(u.grid());
  SolveReport report;
  for (int n = 1; n <= n_max; ++n) {
    for (std::size_t i = 0; i < u.size(); ++i) work[i] = v[i] * u[i];
    green.apply_inplace(work);
    double diff = 0.0, mag = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const complex next = u0[i] + work[i];
      ok = ok && detail::finite(next);
      diff += std::norm(next - u[i]);
      mag += std::norm(next);
      u[i] = next;
    }
    report.iterations = n;
    if (!ok || !std::isfinite(diff)) throw DivergedError("born_solve: non-finite wavefield", report, n);
    const double abs_update = std::sqrt(diff);
    report.abs_update_norms.push_back(abs_update);
    report.final_update = mag > 0.0 ? abs_update / std::sqrt(mag) : 0.0;
    report.update_norms.push_back(report.final_update);
    if (report.final_update <= tol) {
      report.converged = true;
      break;
    }
  }
  if (!report.converged && report.abs_update_norms.size() > 1 &&
      report.abs_update_norms.back() >= report.abs_update_norms.front())
    throw DivergedError("born_solve: update norms are growing", report, report.iterations);
  report.converged = report.converged || report.final_update <= tol;
  return {std::move(u), std::move(report)};
}

/// Convergent Born series: u_{n+1} = u_n + gamma [G(rho + v u_n) - u_n], gamma = 1 - q = i v / eps,
/// which is u_{n+1} = (1-q) G rho + M u_n with M = (1-q) G v + q. Starting from zero, the first
/// iterate is (1-q) G rho. An optional initial guess warm-starts the iteration.
///
/// Converged means the relative update is <= tol and the Helmholtz residual (see residual())
/// is <= 10 tol. The residual costs one extra transform pair, so it is only evaluated once the
/// update criterion holds and then every few iterations.
inline std::pair<ComplexField, SolveReport> cbs_solve(const HelmholtzProblem& problem, double tol, int n_max,
                                                      const ComplexField* initial = nullptr) {
  problem.validate();
  if (!(tol > 0.0)) throw StructuralError("cbs_solve: tol must be > 0");
  if (n_max < 1) throw StructuralError("cbs_solve: n_max must be >= 1");
  const Grid2D& g = problem.c.grid();
  SolveReport report;
  const double rho_norm = norm2(problem.rho);
  if (rho_norm == 0.0) {
    report.iterations = 1;
    report.converged = true;
    report.final_residual = 0.0;
    report.update_norms.push_back(0.0);
    report.abs_update_norms.push_back(0.0);
    return {ComplexField(g), std::move(report)};
  }
  const ComplexField v = scattering_potential(problem.c, problem.omega, problem.kappa2, problem.eps,
                                              problem.absorption_ptr());
  ComplexField gamma(g);
  const complex i_over_eps(0.0, 1.0 / problem.eps);
  for (std::size_t i = 0; i < v.size(); ++i) gamma[i] = i_over_eps * v[i];
  const GreenOperator green(g, problem.kappa2, problem.eps);
  // Fourier multiplier of (lap + kappa^2 + i eps); with k^2 = v + kappa^2 + i eps the residual is
  // rho + v u + F^-1[ref * F u].
  ComplexField ref_symbol(g);
  for (std::size_t i = 0; i < g.size(); ++i) ref_symbol[i] = 1.0 / green.symbol()[i] * -1.0;
  const double residual_tol = 10.0 * tol;
  constexpr int kResidualEvery = 4;

  ComplexField u = initial ? *initial : ComplexField(g);
  u.check_same(ComplexField(g));
  ComplexField work(g), spec(g);
  int next_residual_check = 0;
  for (int n = 1; n <= n_max; ++n) {
    for (std::size_t i = 0; i < u.size(); ++i) work[i] = problem.rho[i] + v[i] * u[i];
    green.apply_inplace(work);
    double diff = 0.0, mag = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const complex du = gamma[i] * (work[i] - u[i]);
      u[i] += du;
      diff += std::norm(du);
      mag += std::norm(u[i]);
    }
    report.iterations = n;
    if (!std::isfinite(diff) || !std::isfinite(mag))
      throw DivergedError("cbs_solve: non-finite wavefield", report, n);
    const double abs_update = std::sqrt(diff);
    report.abs_update_norms.push_back(abs_update);
    report.final_update = mag > 0.0 ? abs_update / std::sqrt(mag) : 0.0;
    report.update_norms.push_back(report.final_update);
    if (report.final_update <= tol && n >= next_residual_check) {
      spec = u;
      fft2_inplace(spec);
      for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= ref_symbol[i];
      ifft2_inplace(spec);
      double rr = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) rr += std::norm(spec[i] + problem.rho[i] + v[i] * u[i]);
      report.final_residual = std::sqrt(rr) / rho_norm;
      if (report.final_residual <= residual_tol) {
        report.converged = true;
        return {std::move(u), std::move(report)};
      }
      next_residual_check = n + kResidualEvery;
    }
  }
  throw DivergedError("cbs_solve: no convergence within " + std::to_string(n_max) + " iterations", report,
                      report.iterations);
}

/// ||[lap + (omega/c)^2 + i a] u + rho|| / ||rho|| with a spectral Laplacian.
inline double residual(const RealField& c, const ComplexField& u, const ComplexField& rho, double omega,
                       const RealField* absorption = nullptr) {
  c.check_same(RealField(u.grid()));
  u.check_same(rho);
  const ComplexField k2 = squared_wavenumber(c, omega, absorption);
  ComplexField r = spectral_laplacian(u, SpectralCoords(u.grid()));
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += k2[i] * u[i] + rho[i];
  const double den = norm2(rho);
  return den > 0.0 ? norm2(r) / den : norm2(r);
}

inline double residual(const HelmholtzProblem& p, const ComplexField& u) {
  return residual(p.c, u, p.rho, p.omega, p.absorption_ptr());
}

}  // namespace wavetomo
