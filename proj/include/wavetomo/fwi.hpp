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

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wavetomo/acquisition.hpp"
#include "wavetomo/filters.hpp"
#include "wavetomo/forward.hpp"
#include "wavetomo/json_reader.hpp"
#include "wavetomo/parallel.hpp"

namespace wavetomo {

// --- data terms ------------------------------------------------------------------------------

/// Sum of squared moduli of (sim - obs).
inline double misfit(std::span<const complex> sim, std::span<const complex> obs) {
  if (sim.size() != obs.size()) throw StructuralError("misfit: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < sim.size(); ++i) s += std::norm(sim[i] - obs[i]);
  return s;
}

inline double misfit(const MeasurementSet& sim, const MeasurementSet& obs) {
  if (sim.n_freq() != obs.n_freq() || sim.n_src() != obs.n_src() || sim.n_rcv() != obs.n_rcv())
    throw StructuralError("misfit: measurement shapes differ");
  return misfit(std::span<const complex>(sim.data), std::span<const complex>(obs.data));
}

/// Least-squares complex scale s minimizing ||y - s u||^2.
inline complex estimate_source_scale(std::span<const complex> u, std::span<const complex> y) {
  if (u.size() != y.size()) throw StructuralError("estimate_source_scale: shape mismatch");
  complex num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    num += y[i] * std::conj(u[i]);
    den += std::norm(u[i]);
  }
  if (!(den > 0.0)) throw StructuralError("estimate_source_scale: simulated receiver data are zero");
  return num / den;
}

/// 2 * sum_i conj(r_i) * delta(x - x_i), with r = sim - obs and the same delta discretization
/// as the point sources.
inline ComplexField adjoint_source(std::span<const complex> residual, const ArrayGeometry& geom, const Grid2D& grid,
                                   SourceStencil stencil = SourceStencil::bilinear) {
  if (residual.size() != geom.n_elements) throw StructuralError("adjoint_source: one residual per element expected");
  ComplexField rho(grid);
  const double amp = 2.0 / (grid.dx * grid.dx);
  for (std::size_t i = 0; i < residual.size(); ++i) {
    if (residual[i] == complex{}) continue;
    for (const auto& t : point_stencil(grid, geom.positions[i], receiver_stencil(stencil)))
      rho(t.ix, t.iy) += amp * t.weight * std::conj(residual[i]);
  }
  return rho;
}

/// Adjoint fields from forward fields: lambda_k = 2 * sum_i conj(R[k][i]) * U_i, where U_i is
/// the field radiated by element i. Requires every element to transmit.
inline std::vector<ComplexField> adjoint_via_reciprocity(const std::vector<ComplexField>& fields,
                                                         std::span<const complex> residuals,
                                                         const ArrayGeometry& geom) {
  const std::size_t n = geom.n_elements;
  if (!geom.all_elements_transmit() || fields.size() != n)
    throw StructuralError("adjoint_via_reciprocity: forward fields for every element are required");
  for (std::size_t i = 0; i < n; ++i)
    if (geom.sources[i] != i) throw StructuralError("adjoint_via_reciprocity: sources must be elements 0..n-1");
  if (residuals.size() != n * n) throw StructuralError("adjoint_via_reciprocity: residual matrix must be n x n");
  std::vector<ComplexField> lambda;
  lambda.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    ComplexField l(fields[0].grid());
    for (std::size_t i = 0; i < n; ++i) {
      const complex w = 2.0 * std::conj(residuals[k * n + i]);
      if (w == complex{}) continue;
      const complex* u = fields[i].data();
      complex* out = l.data();
      for (std::size_t j = 0; j < l.size(); ++j) out[j] += w * u[j];
    }
    lambda.push_back(std::move(l));
  }
  return lambda;
}

/// Pointwise -2 omega^2 Re(lambda * u) / c^3, the L2 derivative of the misfit with respect to c.
inline RealField gradient(const RealField& c, const ComplexField& u, const ComplexField& lambda, double omega) {
  if (!same_shape(c.grid(), u.grid()) || !same_shape(c.grid(), lambda.grid()))
    throw StructuralError("gradient: grids differ");
  RealField g(c.grid());
  const double w2 = omega * omega;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(c[i] > 0.0)) throw StructuralError("gradient: sound speed must be positive");
    g[i] = -2.0 * w2 * (lambda[i] * u[i]).real() / (c[i] * c[i] * c[i]);
  }
  return g;
}

// --- objective at one frequency ---------------------------------------------------------------

struct Evaluation {
  double misfit = 0.0;                 // sum over sources of ||s_k P u_k - y_k||^2
  double data_norm2 = 0.0;             // ||y||^2 at this frequency
  std::vector<complex> scales;         // per source
  std::vector<ComplexField> fields;    // unscaled forward fields on the padded grid
  std::vector<complex> residuals;      // n_src x n_rcv, s_k P u_k - y_k
  std::optional<RealField> gradient;   // on the model grid

  double relative_misfit() const { return data_norm2 > 0 ? misfit / data_norm2 : misfit; }
};

struct ObjectiveOptions {
  bool estimate_source = true;
  std::size_t workers = 1;
  bool allow_reciprocity = true;
};

class FrequencyObjective {
 public:
  FrequencyObjective(const ForwardOperator& fwd, const MeasurementSet& obs, std::size_t f_index,
                     ObjectiveOptions opt = {})
      : fwd_(fwd), obs_(obs), f_(f_index), opt_(opt) {
    obs.validate();
    if (f_index >= obs.n_freq()) throw StructuralError("objective: frequency index out of range");
  }

  double omega() const { return 2.0 * M_PI * obs_.frequencies[f_]; }
  double frequency() const { return obs_.frequencies[f_]; }
  const MeasurementSet& observations() const { return obs_; }

  /// Forward solves for every source, optional source-scale fit, misfit and (optionally) the
  /// gradient. `warm` holds previous fields used as initial guesses.
  Evaluation evaluate(const RealField& c, bool with_gradient, const std::vector<ComplexField>* warm = nullptr) const {
    const ArrayGeometry& geom = obs_.geometry;
    const std::size_t pad = fwd_.padding();
    const RealField c_pad = pad_extend(c, pad, PadMode::edge);
    const Grid2D& pg = c_pad.grid();
    check_geometry_fits(geom, c.grid(), 0.0);
    const std::size_t ns = obs_.n_src(), nr = obs_.n_rcv();
    const double w = omega();

    Evaluation ev;
    ev.fields.resize(ns);
    ev.scales.assign(ns, complex(1.0));
    ev.residuals.assign(ns * nr, complex{});
    std::vector<double> per_source(ns, 0.0), per_norm(ns, 0.0);
    parallel_for(ns, opt_.workers, [&](std::size_t k) {
      const ComplexField rho = point_source_field(geom, geom.sources[k], pg, obs_.stencil);
      const ComplexField* guess = warm && warm->size() == ns ? &(*warm)[k] : nullptr;
      ev.fields[k] = fwd_.solve(c_pad, rho, w, guess);
      const auto sim = sample_at_elements(ev.fields[k], geom, obs_.stencil);
      const auto y = obs_.receivers(f_, k);
      if (opt_.estimate_source) ev.scales[k] = estimate_source_scale(sim, y);
      for (std::size_t i = 0; i < nr; ++i) {
        const complex r = ev.scales[k] * sim[i] - y[i];
        ev.residuals[k * nr + i] = r;
        per_source[k] += std::norm(r);
        per_norm[k] += std::norm(y[i]);
      }
    });
    for (std::size_t k = 0; k < ns; ++k) {
      ev.misfit += per_source[k];
      ev.data_norm2 += per_norm[k];
    }
    if (!with_gradient) return ev;

    std::vector<ComplexField> lambda;
    if (opt_.allow_reciprocity && geom.all_elements_transmit()) {
      lambda = adjoint_via_reciprocity(ev.fields, ev.residuals, geom);
    } else {
      lambda.resize(ns);
      parallel_for(ns, opt_.workers, [&](std::size_t k) {
        const auto r = std::span<const complex>(ev.residuals).subspan(k * nr, nr);
        lambda[k] = fwd_.solve(c_pad, adjoint_source(r, geom, pg, obs_.stencil), w);
      });
    }
    RealField g(pg);
    const double w2 = w * w;
    for (std::size_t k = 0; k < ns; ++k) {
      const complex s = ev.scales[k];
      const complex* u = ev.fields[k].data();
      const complex* l = lambda[k].data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += (l[i] * (s * u[i])).real();
    }
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= -2.0 * w2 / (c_pad[i] * c_pad[i] * c_pad[i]);
    ev.gradient = fold_edge_padding(g, pad);
    return ev;
  }

 private:
  const ForwardOperator& fwd_;
  const MeasurementSet& obs_;
  std::size_t f_;
  ObjectiveOptions opt_;
};

// --- nonlinear conjugate gradient ---------------------------------------------------------------

struct LineSearchConfig {
  double c1 = 1e-4;          // Armijo sufficient-decrease constant
  int max_backtracks = 6;
  double min_shrink = 0.1;   // bounds on the backtracking factor from quadratic interpolation
  double max_shrink = 0.5;
  int max_refinements = 2;   // extra evaluations toward the quadratic-model minimizer after acceptance
  double max_growth = 4.0;   // cap on step growth, per iteration and per refinement
};

/// Polak-Ribiere+ coefficient; 0 without history.
inline double pr_plus_beta(std::span<const double> g, std::span<const double> g_prev) {
  if (g_prev.empty()) return 0.0;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    num += g[i] * (g[i] - g_prev[i]);
    den += g_prev[i] * g_prev[i];
  }
  return den > 0.0 ? std::max(0.0, num / den) : 0.0;
}

/// Optimizer state for the normalized problem f(x)/f0 with gradient scaled by 1/||g0||_inf.
/// Memory and normalization are reset at each stage boundary.
struct NcgState {
  std::vector<double> x;
  double f = 0.0;                 // raw objective at x
  std::vector<double> g;          // raw gradient at x
  std::vector<double> g_prev;     // normalized gradient of the previous iteration
  std::vector<double> d_prev;     // previous direction
  double f0 = 1.0;
  double g0 = 1.0;
  double last_alpha = 1.0;
  double last_slope = 0.0;        // <g_hat, d> of the previous accepted step
  bool initialized = false;

  void reset_memory() {
    g_prev.clear();
    d_prev.clear();
    last_alpha = 1.0;
    last_slope = 0.0;
  }
};

struct NcgOptions {
  LineSearchConfig line_search;
  double step_scale = 1.0;   // x units moved by a unit normalized step along a unit max-norm direction
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  double weight = 1.0;       // inner-product weight (cell area for fields)
};

struct StepReport {
  bool accepted = false;
  double alpha = 0.0;
  int evaluations = 0;
  double f_before = 0.0;
  double f_after = 0.0;
  double beta = 0.0;
};

/// Evaluation callback result: raw objective and gradient, plus an opaque payload kept with the state.
template <typename Payload>
struct Trial {
  double f = 0.0;
  std::vector<double> g;
  Payload payload{};
};

/// Sets up normalization from an evaluation at the starting point.
inline void ncg_begin(NcgState& st, double f, std::vector<double> g) {
  st.f = f;
  st.g = std::move(g);
  st.f0 = f > 0.0 ? f : 1.0;
  double gmax = 0.0;
  for (double v : st.g) gmax = std::max(gmax, std::abs(v));
  st.g0 = gmax > 0.0 ? gmax : 1.0;
  st.reset_memory();
  st.initialized = true;
}

/// One NCG iteration with Armijo backtracking on the normalized objective. `eval(x)` returns
/// Trial<Payload> with gradient; `keep(payload)` is called for the accepted point.
template <typename Eval, typename Keep>
StepReport ncg_step(NcgState& st, const NcgOptions& opt, Eval&& eval, Keep&& keep) {
  if (!st.initialized) throw StructuralError("ncg_step: state not initialized");
  const std::size_t n = st.x.size();
  const auto& ls = opt.line_search;
  StepReport rep;
  rep.f_before = st.f;

  std::vector<double> gh(n);
  for (std::size_t i = 0; i < n; ++i) {
    gh[i] = st.g[i] / st.g0;
    if (!std::isfinite(gh[i])) throw StructuralError("ncg_step: gradient is not finite");
  }
  rep.beta = st.d_prev.empty() ? 0.0 : pr_plus_beta(gh, st.g_prev);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = -gh[i] + (rep.beta > 0.0 ? rep.beta * st.d_prev[i] : 0.0);

  // Slope of the normalized objective along d, per unit alpha.
  const auto slope_of = [&](const std::vector<double>& dir) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += st.g[i] * dir[i];
    return s * opt.weight * opt.step_scale / st.f0;
  };
  double slope = slope_of(d);
  if (!(slope < 0.0)) {
    for (std::size_t i = 0; i < n; ++i) d[i] = -gh[i];
    rep.beta = 0.0;
    slope = slope_of(d);
  }
  if (!(slope < 0.0)) return rep;  // stationary

  double alpha = 1.0;
  if (!st.d_prev.empty() && st.last_slope < 0.0)
    alpha = std::clamp(st.last_alpha * st.last_slope / slope, 1.0 / ls.max_growth, ls.max_growth);
  alpha = std::min(alpha, ls.max_growth * st.last_alpha);

  const auto point = [&](double a) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::clamp(st.x[i] + a * opt.step_scale * d[i], opt.lower, opt.upper);
    return x;
  };
  const double phi0 = st.f / st.f0;

  for (int attempt = 0; attempt <= ls.max_backtracks; ++attempt) {
    std::vector<double> x = point(alpha);
    auto trial = eval(x);
    ++rep.evaluations;
    const double phi = trial.f / st.f0;
    const bool finite = std::isfinite(phi);
    const double denom = phi - phi0 - slope * alpha;
    const double a_q = finite && denom > 0.0 ? -slope * alpha * alpha / (2.0 * denom) : ls.max_growth * alpha;
    if (finite && phi <= phi0 + ls.c1 * alpha * slope) {
      // Accepted; optionally move toward the minimizer of the quadratic through (0, phi0, slope) and
      // the best point so far.
      double accepted_alpha = alpha, best_phi = phi, model_min = a_q;
      for (int r = 0; r < ls.max_refinements && std::abs(model_min - accepted_alpha) > 0.25 * accepted_alpha; ++r) {
        const double a_r = std::clamp(model_min, ls.min_shrink * accepted_alpha, ls.max_growth * accepted_alpha);
        std::vector<double> xr = point(a_r);
        auto refined = eval(xr);
        ++rep.evaluations;
        const double phi_r = refined.f / st.f0;
        if (!(std::isfinite(phi_r) && phi_r < best_phi)) break;
        trial = std::move(refined);
        x = std::move(xr);
        accepted_alpha = a_r;
        best_phi = phi_r;
        const double den_r = phi_r - phi0 - slope * a_r;
        model_min = den_r > 0.0 ? -slope * a_r * a_r / (2.0 * den_r) : ls.max_growth * a_r;
      }
      st.g_prev = std::move(gh);
      st.d_prev = std::move(d);
      st.x = std::move(x);
      st.f = trial.f;
      st.g = std::move(trial.g);
      st.last_alpha = accepted_alpha;
      st.last_slope = slope;
      keep(std::move(trial.payload));
      rep.accepted = true;
      rep.alpha = accepted_alpha;
      rep.f_after = st.f;
      return rep;
    }
    alpha = finite ? std::clamp(a_q, ls.min_shrink * alpha, ls.max_shrink * alpha) : ls.min_shrink * alpha;
  }
  // Exhausted: reject the step and restart from steepest descent.
  st.reset_memory();
  rep.f_after = st.f;
  return rep;
}

// --- frequency marching --------------------------------------------------------------------------

struct FwiConfig {
  std::vector<double> frequencies;   // ascending ladder, Hz
  int rounds = 1;                    // passes over the ladder
  int iterations_per_stage = 20;
  double blur_sigma = 2.0;           // grid cells, applied between stages
  double c_min = 1300.0;
  double c_max = 3500.0;
  double max_update = 30.0;          // m/s moved by the first unit step of a stage
  double mask_margin = 2.0;          // cells; gradient kept only inside the ring minus this margin (< 0 disables)
  double misfit_floor = 1e-12;       // relative misfit treated as already fitted
  bool estimate_source = true;
  std::size_t workers = 1;
  LineSearchConfig line_search;

  void validate() const {
    if (frequencies.empty()) throw StructuralError("fwi: frequency schedule is empty");
    for (std::size_t i = 0; i < frequencies.size(); ++i) {
      if (!(frequencies[i] > 0)) throw StructuralError("fwi: frequencies must be positive");
      if (i > 0 && !(frequencies[i] > frequencies[i - 1]))
        throw StructuralError("fwi: frequency schedule must be strictly ascending");
    }
    if (rounds < 1) throw StructuralError("fwi: rounds must be >= 1");
    if (iterations_per_stage < 0) throw StructuralError("fwi: iterations per stage must be >= 0");
    if (!(blur_sigma >= 0)) throw StructuralError("fwi: blur sigma must be >= 0");
    if (!(c_min > 0 && c_max > c_min)) throw StructuralError("fwi: model bounds must satisfy 0 < c_min < c_max");
    if (!(max_update > 0)) throw StructuralError("fwi: max_update must be positive");
    if (line_search.max_backtracks < 0 || !(line_search.c1 > 0 && line_search.c1 < 1))
      throw StructuralError("fwi: invalid line-search parameters");
    if (!(line_search.min_shrink > 0 && line_search.min_shrink <= line_search.max_shrink &&
          line_search.max_shrink < 1 && line_search.max_growth >= 1))
      throw StructuralError("fwi: invalid line-search step factors");
  }
};

inline nlohmann::json to_json(const LineSearchConfig& l) {
  return {{"c1", l.c1},
          {"max_backtracks", l.max_backtracks},
          {"min_shrink", l.min_shrink},
          {"max_shrink", l.max_shrink},
          {"max_refinements", l.max_refinements},
          {"max_growth", l.max_growth}};
}

inline LineSearchConfig line_search_from_json(const nlohmann::json& j, const std::string& where) {
  LineSearchConfig l;
  JsonReader r(j, where);
  r.get("c1", l.c1);
  r.get("max_backtracks", l.max_backtracks);
  r.get("min_shrink", l.min_shrink);
  r.get("max_shrink", l.max_shrink);
  r.get("max_refinements", l.max_refinements);
  r.get("max_growth", l.max_growth);
  r.finish();
  return l;
}

/// Worker count is deliberately left out: it never changes results.
inline nlohmann::json to_json(const FwiConfig& c) {
  return {{"frequencies_hz", c.frequencies},
          {"rounds", c.rounds},
          {"iterations_per_stage", c.iterations_per_stage},
          {"blur_sigma", c.blur_sigma},
          {"c_min", c.c_min},
          {"c_max", c.c_max},
          {"max_update", c.max_update},
          {"mask_margin", c.mask_margin},
          {"misfit_floor", c.misfit_floor},
          {"estimate_source", c.estimate_source},
          {"line_search", to_json(c.line_search)}};
}

/// Missing keys keep `base` values; unknown keys are rejected. The result is validated.
inline FwiConfig fwi_config_from_json(const nlohmann::json& j, FwiConfig base = {}) {
  JsonReader r(j, "fwi");
  r.get("frequencies_hz", base.frequencies);
  r.get("rounds", base.rounds);
  r.get("iterations_per_stage", base.iterations_per_stage);
  r.get("blur_sigma", base.blur_sigma);
  r.get("c_min", base.c_min);
  r.get("c_max", base.c_max);
  r.get("max_update", base.max_update);
  r.get("mask_margin", base.mask_margin);
  r.get("misfit_floor", base.misfit_floor);
  r.get("estimate_source", base.estimate_source);
  if (const auto* ls = r.object("line_search")) base.line_search = line_search_from_json(*ls, "fwi.line_search");
  r.finish();
  base.validate();
  return base;
}

struct StageReport {
  int round = 0;
  double frequency = 0.0;
  std::vector<double> misfit;        // relative misfit, start of stage then after each iteration
  std::vector<double> step;          // accepted alpha, 0 for rejected steps
  int evaluations = 0;
  int rejected_steps = 0;
  bool aborted = false;
  std::string diagnostic;
  double seconds = 0.0;

  double final_misfit() const { return misfit.empty() ? 0.0 : misfit.back(); }
};

struct FwiResult {
  RealField model;
  std::vector<StageReport> stages;
  bool aborted = false;
  std::string diagnostic;
};

inline nlohmann::json to_json(const StageReport& s, bool with_timing) {
  nlohmann::json j = {{"round", s.round},           {"frequency_hz", s.frequency},
                      {"misfit", s.misfit},         {"step", s.step},
                      {"evaluations", s.evaluations}, {"rejected_steps", s.rejected_steps},
                      {"aborted", s.aborted}};
  if (!s.diagnostic.empty()) j["diagnostic"] = s.diagnostic;
  if (with_timing) j["seconds"] = s.seconds;
  return j;
}

inline nlohmann::json to_json(const FwiResult& r, bool with_timing) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages) stages.push_back(to_json(s, with_timing));
  nlohmann::json j = {{"stages", stages}, {"aborted", r.aborted}};
  if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
  return j;
}

/// Cells that may be updated: inside the ring, `margin` cells away from the elements.
inline std::vector<double> update_mask(const Grid2D& grid, const ArrayGeometry& geom, double margin) {
  std::vector<double> mask(grid.size(), 1.0);
  if (margin < 0.0) return mask;
  const double radius = 0.5 * geom.diameter - margin * grid.dx;
  for (std::size_t iy = 0; iy < grid.ny; ++iy)
    for (std::size_t ix = 0; ix < grid.nx; ++ix)
      if (std::hypot(grid.x(ix) - geom.center.x, grid.y(iy) - geom.center.y) > radius) mask[grid.index(ix, iy)] = 0.0;
  return mask;
}

/// Multi-stage inversion: for each round and each frequency of the ladder, fresh NCG memory and
/// normalization, `iterations_per_stage` iterations, then a Gaussian blur to seed the next stage.
/// Returns the final model before blurring. A diverging forward solve aborts the march and
/// returns the model reached at the end of the previous stage.
inline FwiResult frequency_march(const MeasurementSet& obs, const RealField& c_init, const FwiConfig& cfg,
                                 const ForwardOperator& fwd) {
  cfg.validate();
  for (double f : cfg.frequencies) obs.frequency_index(f);
  for (double v : c_init)
    if (!(v > 0) || !std::isfinite(v)) throw StructuralError("fwi: initial model must be positive and finite");

  const Grid2D& grid = c_init.grid();
  const std::vector<double> mask = update_mask(grid, obs.geometry, cfg.mask_margin);
  NcgOptions opt;
  opt.line_search = cfg.line_search;
  opt.step_scale = cfg.max_update;
  opt.lower = cfg.c_min;
  opt.upper = cfg.c_max;
  opt.weight = grid.dx * grid.dx;

  ObjectiveOptions oo;
  oo.estimate_source = cfg.estimate_source;
  oo.workers = cfg.workers;

  FwiResult result;
  RealField start = c_init;
  for (auto& v : start) v = std::clamp(v, cfg.c_min, cfg.c_max);
  RealField finished = start;  // model at the end of the last completed stage, unblurred

  const auto masked = [&](const RealField& g) {
    std::vector<double> out(g.begin(), g.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return out;
  };

  for (int round = 0; round < cfg.rounds && !result.aborted; ++round) {
    for (std::size_t s = 0; s < cfg.frequencies.size(); ++s) {
      const auto t0 = std::chrono::steady_clock::now();
      StageReport rep;
      rep.round = round + 1;
      rep.frequency = cfg.frequencies[s];
      const FrequencyObjective objective(fwd, obs, obs.frequency_index(cfg.frequencies[s]), oo);
      try {
        Evaluation ev = objective.evaluate(start, true);
        ++rep.evaluations;
        const double norm2 = ev.data_norm2 > 0 ? ev.data_norm2 : 1.0;
        rep.misfit.push_back(ev.misfit / norm2);
        NcgState st;
        st.x.assign(start.begin(), start.end());
        ncg_begin(st, ev.misfit, masked(*ev.gradient));
        std::vector<ComplexField> warm = std::move(ev.fields);
        int consecutive_rejections = 0;
        for (int it = 0; it < cfg.iterations_per_stage; ++it) {
          if (st.f / norm2 <= cfg.misfit_floor) break;
          const auto eval = [&](const std::vector<double>& x) {
            Trial<std::vector<ComplexField>> t;
            Evaluation e = objective.evaluate(RealField(grid, x), true, &warm);
            t.f = e.misfit;
            t.g = masked(*e.gradient);
            t.payload = std::move(e.fields);
            return t;
          };
          const StepReport step = ncg_step(st, opt, eval, [&](std::vector<ComplexField> f) { warm = std::move(f); });
          rep.evaluations += step.evaluations;
          rep.misfit.push_back(st.f / norm2);
          rep.step.push_back(step.accepted ? step.alpha : 0.0);
          if (!step.accepted) {
            ++rep.rejected_steps;
            if (++consecutive_rejections >= 2) break;
          } else {
            consecutive_rejections = 0;
          }
        }
        finished = RealField(grid, st.x);
      } catch (const DivergedError& e) {
        rep.aborted = true;
        rep.diagnostic = "forward solve diverged at " + std::to_string(cfg.frequencies[s]) + " Hz: " + e.what();
        result.aborted = true;
        result.diagnostic = rep.diagnostic;
      }
      rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.stages.push_back(std::move(rep));
      if (result.aborted) break;
      start = gaussian_blur(finished, cfg.blur_sigma);
      for (auto& v : start) v = std::clamp(v, cfg.c_min, cfg.c_max);
    }
  }
  result.model = finished;
  return result;
}

}  // namespace wavetomo
