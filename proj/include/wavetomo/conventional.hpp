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
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wavetomo/acquisition.hpp"
#include "wavetomo/field.hpp"
#include "wavetomo/filters.hpp"
#include "wavetomo/fwi.hpp"
#include "wavetomo/parallel.hpp"
#include "wavetomo/wtm1.hpp"

namespace wavetomo {

// --- eikonal ------------------------------------------------------------------------------------

/// First-arrival traveltime (seconds) from one source point.
struct TraveltimeMap {
  RealField T;
  Point source;
  std::size_t source_element = 0;
};

struct EikonalOptions {
  double tolerance = 1e-12;     // seconds; sweeping stops once a full cycle changes T by less
  int max_cycles = 500;         // cycles of 4 sweeps
  double init_radius = 8.0;     // cells around the source seeded with straight-ray times
};

/// Godunov upwind fast sweeping on the nodes of c's grid. Nodes within init_radius cells of the
/// source are fixed at distance times the mean slowness of node and source.
inline TraveltimeMap eikonal_solve(const RealField& c, Point source, const EikonalOptions& opt = {},
                                   std::size_t source_element = 0) {
  const Grid2D& g = c.grid();
  for (double v : c)
    if (!(v > 0.0) || !std::isfinite(v)) throw StructuralError("eikonal: sound speed must be positive");
  const auto [sx, sy] = g.to_index(source.x, source.y);
  if (sx < 0 || sy < 0 || sx > static_cast<double>(g.nx - 1) || sy > static_cast<double>(g.ny - 1))
    throw StructuralError("eikonal: source outside the grid");

  constexpr double inf = std::numeric_limits<double>::infinity();
  RealField T(g, inf);
  std::vector<char> fixed(g.size(), 0);
  const double s_src = 1.0 / sample_bilinear(c, sx, sy);
  const double r = std::max(opt.init_radius, 1.0);
  bool any = false;
  for (std::size_t iy = 0; iy < g.ny; ++iy)
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const double d = std::hypot(static_cast<double>(ix) - sx, static_cast<double>(iy) - sy);
      if (d <= r + 1e-12) {
        T(ix, iy) = d * g.dx * 0.5 * (1.0 / c(ix, iy) + s_src);
        fixed[g.index(ix, iy)] = 1;
        any = true;
      }
    }
  if (!any) throw StructuralError("eikonal: no grid node near the source");

  const auto nx = static_cast<long>(g.nx), ny = static_cast<long>(g.ny);
  const auto update = [&](long ix, long iy) -> double {
    const std::size_t k = g.index(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy));
    if (fixed[k]) return 0.0;
    const double a = std::min(ix > 0 ? T[k - 1] : inf, ix < nx - 1 ? T[k + 1] : inf);
    const double b = std::min(iy > 0 ? T[k - g.nx] : inf, iy < ny - 1 ? T[k + g.nx] : inf);
    if (a == inf && b == inf) return 0.0;
    const double f = g.dx / c[k];
    double t;
    if (std::abs(a - b) >= f || a == inf || b == inf)
      t = std::min(a, b) + f;
    else
      t = 0.5 * (a + b + std::sqrt(2.0 * f * f - (a - b) * (a - b)));
    if (t < T[k]) {
      const double change = T[k] == inf ? inf : T[k] - t;
      T[k] = t;
      return change;
    }
    return 0.0;
  };

  for (int cycle = 0; cycle < opt.max_cycles; ++cycle) {
    double change = 0.0;
    for (int dir = 0; dir < 4; ++dir) {
      const bool fx = dir & 1, fy = dir & 2;
      for (long jy = 0; jy < ny; ++jy) {
        const long iy = fy ? ny - 1 - jy : jy;
        for (long jx = 0; jx < nx; ++jx) change = std::max(change, update(fx ? nx - 1 - jx : jx, iy));
      }
    }
    if (change < opt.tolerance) break;
  }
  return {std::move(T), source, source_element};
}

/// Traveltime at a physical point by bilinear interpolation.
inline double traveltime_at(const TraveltimeMap& tm, Point p) {
  const auto [fx, fy] = tm.T.grid().to_index(p.x, p.y);
  return sample_bilinear(tm.T, fx, fy);
}

// --- ray tracing --------------------------------------------------------------------------------

class TrappedRayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Polyline from receiver to source with per-node path lengths (bilinear deposition of each
/// segment at its midpoint).
struct RayPath {
  std::vector<Point> points;
  std::vector<std::pair<std::size_t, double>> lengths;  // (node index, metres); indices may repeat

  double total_length() const {
    double s = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
      s += std::hypot(points[i].x - points[i - 1].x, points[i].y - points[i - 1].y);
    return s;
  }

  /// Sum of length / c along the deposited lengths.
  double time_through(const RealField& c) const {
    double t = 0.0;
    for (const auto& [k, w] : lengths) t += w / c[k];
    return t;
  }
};

namespace detail {

inline std::pair<double, double> node_gradient(const RealField& T, std::size_t ix, std::size_t iy) {
  const std::size_t nx = T.nx(), ny = T.ny();
  const std::size_t xl = ix > 0 ? ix - 1 : ix, xr = ix + 1 < nx ? ix + 1 : ix;
  const std::size_t yl = iy > 0 ? iy - 1 : iy, yr = iy + 1 < ny ? iy + 1 : iy;
  return {(T(xr, iy) - T(xl, iy)) / static_cast<double>(xr - xl),
          (T(ix, yr) - T(ix, yl)) / static_cast<double>(yr - yl)};
}

/// Bilinear corner indices and weights at fractional index coordinates (clamped to the grid).
inline std::array<std::pair<std::size_t, double>, 4> bilinear_taps(const Grid2D& g, double fx, double fy) {
  fx = std::clamp(fx, 0.0, static_cast<double>(g.nx - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(g.ny - 1));
  const std::size_t ix = std::min(static_cast<std::size_t>(fx), g.nx - 2);
  const std::size_t iy = std::min(static_cast<std::size_t>(fy), g.ny - 2);
  const double tx = fx - static_cast<double>(ix), ty = fy - static_cast<double>(iy);
  return {{{g.index(ix, iy), (1 - tx) * (1 - ty)},
           {g.index(ix + 1, iy), tx * (1 - ty)},
           {g.index(ix, iy + 1), (1 - tx) * ty},
           {g.index(ix + 1, iy + 1), tx * ty}}};
}

}  // namespace detail

/// Steepest descent on T from the receiver in steps of dx/2 until within dx of the source.
inline RayPath trace_ray(const TraveltimeMap& tm, Point receiver) {
  const RealField& T = tm.T;
  const Grid2D& g = T.grid();
  {
    const auto [fx, fy] = g.to_index(receiver.x, receiver.y);
    if (fx < 0 || fy < 0 || fx > static_cast<double>(g.nx - 1) || fy > static_cast<double>(g.ny - 1))
      throw StructuralError("trace_ray: receiver outside the grid");
  }
  RayPath ray;
  ray.points.push_back(receiver);
  const auto deposit = [&](Point a, Point b) {
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (len == 0.0) return;
    const auto [fx, fy] = g.to_index(0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
    for (const auto& [k, w] : detail::bilinear_taps(g, fx, fy))
      if (w > 0.0) ray.lengths.emplace_back(k, w * len);
  };

  const std::size_t max_steps = 10 * (g.nx + g.ny);
  const double step = 0.5 * g.dx;
  Point p = receiver;
  for (std::size_t n = 0;; ++n) {
    if (std::hypot(p.x - tm.source.x, p.y - tm.source.y) <= g.dx) {
      deposit(p, tm.source);
      ray.points.push_back(tm.source);
      return ray;
    }
    if (n >= max_steps) throw TrappedRayError("trace_ray: step limit exceeded before reaching the source");
    const auto [fx, fy] = g.to_index(p.x, p.y);
    double gx = 0.0, gy = 0.0;
    for (const auto& [k, w] : detail::bilinear_taps(g, fx, fy)) {
      const auto [ex, ey] = detail::node_gradient(T, k % g.nx, k / g.nx);
      gx += w * ex;
      gy += w * ey;
    }
    const double gn = std::hypot(gx, gy);
    if (!(gn > 0.0) || !std::isfinite(gn)) throw TrappedRayError("trace_ray: vanishing traveltime gradient");
    Point q{p.x - step * gx / gn, p.y - step * gy / gn};
    q.x = std::clamp(q.x, g.x(0), g.x(g.nx - 1));
    q.y = std::clamp(q.y, g.y(0), g.y(g.ny - 1));
    deposit(p, q);
    ray.points.push_back(q);
    p = q;
  }
}

// --- time-of-flight tomography ------------------------------------------------------------------

/// First-arrival times t[s][r] for the geometry's sources and all elements. Entries with
/// r equal to the transmitting element are NaN.
struct ObservedTimes {
  std::size_t n_src = 0;
  std::size_t n_rcv = 0;
  std::vector<double> t;

  double& at(std::size_t s, std::size_t r) { return t[s * n_rcv + r]; }
  double at(std::size_t s, std::size_t r) const { return t[s * n_rcv + r]; }
};

inline bool toft_pair_used(const ArrayGeometry& geom, std::size_t s, std::size_t r) { return geom.sources[s] != r; }

/// Eikonal traveltimes from every source to every other element.
inline ObservedTimes compute_traveltimes(const RealField& c, const ArrayGeometry& geom, std::size_t workers = 1,
                                         const EikonalOptions& opt = {}) {
  ObservedTimes out{geom.n_sources(), geom.n_elements,
                    std::vector<double>(geom.n_sources() * geom.n_elements, std::numeric_limits<double>::quiet_NaN())};
  parallel_for(geom.n_sources(), workers, [&](std::size_t s) {
    const auto tm = eikonal_solve(c, geom.positions[geom.sources[s]], opt, geom.sources[s]);
    for (std::size_t r = 0; r < geom.n_elements; ++r)
      if (toft_pair_used(geom, s, r)) out.at(s, r) = traveltime_at(tm, geom.positions[r]);
  });
  return out;
}

struct ToftEvaluation {
  double misfit = 0.0;          // 0.5 * sum of squared residuals over used pairs (s^2)
  std::size_t pairs = 0;
  std::size_t dropped = 0;      // pairs whose ray was trapped
  RealField gradient;           // d misfit / d c per node (ray approximation)
  double rms() const { return pairs ? std::sqrt(2.0 * misfit / static_cast<double>(pairs)) : 0.0; }
};

/// Misfit and ray-based gradient; trapped rays drop their pair from misfit and gradient.
inline ToftEvaluation toft_objective(const RealField& c, const ObservedTimes& obs, const ArrayGeometry& geom,
                                     std::size_t workers = 1, const EikonalOptions& opt = {}) {
  if (obs.n_src != geom.n_sources() || obs.n_rcv != geom.n_elements || obs.t.size() != obs.n_src * obs.n_rcv)
    throw StructuralError("toft: observed times do not match the geometry");
  struct PerSource {
    double misfit = 0.0;
    std::size_t pairs = 0, dropped = 0;
    std::vector<std::pair<std::size_t, double>> grad;
  };
  std::vector<PerSource> per(geom.n_sources());
  parallel_for(geom.n_sources(), workers, [&](std::size_t s) {
    const auto tm = eikonal_solve(c, geom.positions[geom.sources[s]], opt, geom.sources[s]);
    auto& ps = per[s];
    for (std::size_t r = 0; r < geom.n_elements; ++r) {
      if (!toft_pair_used(geom, s, r)) continue;
      const double t_obs = obs.at(s, r);
      if (!std::isfinite(t_obs)) throw StructuralError("toft: observed time missing for a used pair");
      RayPath ray;
      try {
        ray = trace_ray(tm, geom.positions[r]);
      } catch (const TrappedRayError&) {
        ++ps.dropped;
        continue;
      }
      const double res = traveltime_at(tm, geom.positions[r]) - t_obs;
      ps.misfit += 0.5 * res * res;
      ++ps.pairs;
      for (const auto& [k, len] : ray.lengths) ps.grad.emplace_back(k, -res * len / (c[k] * c[k]));
    }
  });
  ToftEvaluation ev;
  ev.gradient = RealField(c.grid());
  for (const auto& ps : per) {
    ev.misfit += ps.misfit;
    ev.pairs += ps.pairs;
    ev.dropped += ps.dropped;
    for (const auto& [k, v] : ps.grad) ev.gradient[k] += v;
  }
  return ev;
}

struct ToftConfig {
  int iterations = 30;
  double smoothing_sigma = 2.0;   // cells, applied to the gradient
  double c_min = 1300.0;
  double c_max = 3500.0;
  double max_update = 20.0;       // m/s moved by the first unit step
  double mask_margin = 2.0;       // cells inside the ring
  double rms_tolerance = 20e-9;   // seconds; converged when the rms residual falls below
  std::size_t workers = 1;
  LineSearchConfig line_search;
  EikonalOptions eikonal;

  void validate() const {
    if (iterations < 0) throw StructuralError("toft: iterations must be >= 0");
    if (!(smoothing_sigma >= 0)) throw StructuralError("toft: smoothing sigma must be >= 0");
    if (!(c_min > 0 && c_max > c_min)) throw StructuralError("toft: model bounds must satisfy 0 < c_min < c_max");
    if (!(max_update > 0)) throw StructuralError("toft: max_update must be positive");
    if (!(rms_tolerance > 0)) throw StructuralError("toft: rms tolerance must be positive");
  }
};

inline nlohmann::json to_json(const ToftConfig& c) {
  return {{"iterations", c.iterations},       {"smoothing_sigma", c.smoothing_sigma},
          {"c_min", c.c_min},                 {"c_max", c.c_max},
          {"max_update", c.max_update},       {"mask_margin", c.mask_margin},
          {"rms_tolerance", c.rms_tolerance}, {"line_search", to_json(c.line_search)},
          {"eikonal", {{"tolerance", c.eikonal.tolerance}, {"max_cycles", c.eikonal.max_cycles},
                       {"init_radius", c.eikonal.init_radius}}}};
}

/// Missing keys keep `base` values; unknown keys are rejected. The result is validated.
inline ToftConfig toft_config_from_json(const nlohmann::json& j, ToftConfig base = {}) {
  JsonReader r(j, "toft");
  r.get("iterations", base.iterations);
  r.get("smoothing_sigma", base.smoothing_sigma);
  r.get("c_min", base.c_min);
  r.get("c_max", base.c_max);
  r.get("max_update", base.max_update);
  r.get("mask_margin", base.mask_margin);
  r.get("rms_tolerance", base.rms_tolerance);
  if (const auto* ls = r.object("line_search")) base.line_search = line_search_from_json(*ls, "toft.line_search");
  if (const auto* e = r.object("eikonal")) {
    JsonReader er(*e, "toft.eikonal");
    er.get("tolerance", base.eikonal.tolerance);
    er.get("max_cycles", base.eikonal.max_cycles);
    er.get("init_radius", base.eikonal.init_radius);
    er.finish();
    er.require(base.eikonal.tolerance > 0, "tolerance", "must be positive");
    er.require(base.eikonal.max_cycles >= 1, "max_cycles", "must be >= 1");
    er.require(base.eikonal.init_radius >= 1, "init_radius", "must be >= 1");
  }
  r.finish();
  base.validate();
  return base;
}

struct ToftResult {
  RealField model;
  std::vector<double> rms;          // rms residual (s) at the start and after each iteration
  std::vector<std::size_t> dropped; // trapped-ray pairs per accepted evaluation
  int evaluations = 0;
  bool converged = false;
};

inline nlohmann::json to_json(const ToftResult& r) {
  return {{"kind", "toft_report"}, {"rms_residual_s", r.rms}, {"dropped_pairs", r.dropped},
          {"evaluations", r.evaluations}, {"converged", r.converged}};
}

/// Nonlinear conjugate gradients on the traveltime misfit with per-evaluation eikonal solves,
/// ray-traced gradients smoothed by a Gaussian and masked to the ring interior.
inline ToftResult toft_invert(const ObservedTimes& obs, const ArrayGeometry& geom, const RealField& c_init,
                              const ToftConfig& cfg) {
  cfg.validate();
  const Grid2D& grid = c_init.grid();
  check_geometry_fits(geom, grid);
  const std::vector<double> mask = update_mask(grid, geom, cfg.mask_margin);
  const auto evaluate = [&](const std::vector<double>& x) {
    ToftEvaluation ev = toft_objective(RealField(grid, x), obs, geom, cfg.workers, cfg.eikonal);
    RealField g = gaussian_blur(ev.gradient, cfg.smoothing_sigma);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
    return std::pair{std::move(ev), std::move(g.vec())};
  };

  NcgOptions opt;
  opt.line_search = cfg.line_search;
  opt.step_scale = cfg.max_update;
  opt.lower = cfg.c_min;
  opt.upper = cfg.c_max;
  opt.weight = grid.dx * grid.dx;

  ToftResult res;
  NcgState st;
  st.x = c_init.vec();
  for (auto& v : st.x) v = std::clamp(v, cfg.c_min, cfg.c_max);
  auto [ev0, g0] = evaluate(st.x);
  ++res.evaluations;
  res.rms.push_back(ev0.rms());
  res.dropped.push_back(ev0.dropped);
  ncg_begin(st, ev0.misfit, std::move(g0));
  struct Info {
    double rms = 0.0;
    std::size_t dropped = 0;
  };
  Info current{ev0.rms(), ev0.dropped};
  int consecutive_rejections = 0;
  for (int it = 0; it < cfg.iterations && current.rms > cfg.rms_tolerance; ++it) {
    const auto eval = [&](const std::vector<double>& x) {
      auto [ev, g] = evaluate(x);
      return Trial<Info>{ev.misfit, std::move(g), Info{ev.rms(), ev.dropped}};
    };
    const StepReport step = ncg_step(st, opt, eval, [&](Info i) { current = i; });
    res.evaluations += step.evaluations;
    res.rms.push_back(current.rms);
    res.dropped.push_back(current.dropped);
    if (!step.accepted) {
      if (++consecutive_rejections >= 2) break;
    } else {
      consecutive_rejections = 0;
    }
  }
  res.model = RealField(grid, st.x);
  res.converged = current.rms <= cfg.rms_tolerance;
  return res;
}

inline void write_times(const std::filesystem::path& path, const ObservedTimes& t, const ArrayGeometry& geom) {
  io::Tensor tensor;
  tensor.dtype = io::DType::f32;
  tensor.dims = {t.n_src, t.n_rcv};
  tensor.real.assign(t.t.begin(), t.t.end());
  nlohmann::json side{{"kind", "traveltimes"}, {"unit", "s"}, {"geometry", geometry_to_json(geom)}};
  io::write_bytes(sidecar_path(path), side.dump(2) + "\n");
  io::write(path, tensor);
}

/// Reads times and the geometry stored in the sidecar. Values are stored as f32.
inline std::pair<ObservedTimes, ArrayGeometry> read_times(const std::filesystem::path& path) {
  const io::Tensor tensor = io::read(path);
  const auto side = nlohmann::json::parse(io::read_bytes(sidecar_path(path)));
  ArrayGeometry geom = geometry_from_json(side.at("geometry"));
  if (tensor.dtype != io::DType::f32 || tensor.dims.size() != 2 || tensor.dims[0] != geom.n_sources() ||
      tensor.dims[1] != geom.n_elements)
    throw io::FormatError("traveltime tensor shape does not match its sidecar");
  ObservedTimes t{geom.n_sources(), geom.n_elements, std::vector<double>(tensor.real.begin(), tensor.real.end())};
  return {std::move(t), std::move(geom)};
}

// --- delay-and-sum ------------------------------------------------------------------------------

/// Gaussian-windowed cosine: cos(2 pi f0 t) exp(-t^2 / (2 sigma^2)), sigma = sigma_cycles / f0.
struct Pulse {
  double center_frequency = 1.0e6;
  double sigma_cycles = 0.5;

  double sigma() const { return sigma_cycles / center_frequency; }
  double operator()(double t) const {
    const double s = sigma();
    if (std::abs(t) > 6.0 * s) return 0.0;
    return std::cos(2.0 * M_PI * center_frequency * t) * std::exp(-0.5 * t * t / (s * s));
  }
};

struct PointScatterer {
  double x = 0.0;
  double y = 0.0;
  double amplitude = 1.0;
};

/// Full-matrix-capture traces d[s][r][k] at times k / rate, for the geometry's sources and
/// all elements.
struct FmcTraces {
  ArrayGeometry geometry;
  double rate = 0.0;
  Pulse pulse;
  std::size_t n_t = 0;
  std::vector<double> data;

  std::size_t n_src() const { return geometry.n_sources(); }
  std::size_t n_rcv() const { return geometry.n_elements; }
  double duration() const { return static_cast<double>(n_t) / rate; }
  const double* trace(std::size_t s, std::size_t r) const { return data.data() + (s * n_rcv() + r) * n_t; }
  double* trace(std::size_t s, std::size_t r) { return data.data() + (s * n_rcv() + r) * n_t; }

  void validate() const {
    if (!(rate > 2.0 * pulse.center_frequency)) throw StructuralError("fmc: sample rate must exceed twice the pulse frequency");
    if (data.size() != n_src() * n_rcv() * n_t) throw StructuralError("fmc: data size does not match its shape");
  }
};

inline double straight_delay(Point s, Point r, double x, double y, double c0) {
  return (std::hypot(s.x - x, s.y - y) + std::hypot(r.x - x, r.y - y)) / c0;
}

/// Single-scattering straight-ray synthesis in a medium of constant speed c0.
inline FmcTraces synth_fmc_traces(const std::vector<PointScatterer>& scatterers, const ArrayGeometry& geom,
                                  const Pulse& pulse, double c0, double duration, double rate) {
  if (!(c0 > 0.0)) throw StructuralError("fmc: c0 must be positive");
  FmcTraces tr;
  tr.geometry = geom;
  tr.rate = rate;
  tr.pulse = pulse;
  tr.n_t = static_cast<std::size_t>(std::ceil(duration * rate));
  tr.data.assign(tr.n_src() * tr.n_rcv() * tr.n_t, 0.0);
  tr.validate();
  const double tail = 6.0 * pulse.sigma();
  for (std::size_t s = 0; s < tr.n_src(); ++s)
    for (std::size_t r = 0; r < tr.n_rcv(); ++r) {
      double* d = tr.trace(s, r);
      for (const auto& sc : scatterers) {
        const double tau = straight_delay(geom.positions[geom.sources[s]], geom.positions[r], sc.x, sc.y, c0);
        if (tau + tail > tr.duration()) throw StructuralError("fmc: duration does not cover the echo");
        const auto k0 = static_cast<std::size_t>(std::max(0.0, std::floor((tau - tail) * rate)));
        const auto k1 = std::min(tr.n_t, static_cast<std::size_t>(std::ceil((tau + tail) * rate)) + 1);
        for (std::size_t k = k0; k < k1; ++k) d[k] += sc.amplitude * pulse(static_cast<double>(k) / rate - tau);
      }
    }
  return tr;
}

struct DasOptions {
  bool envelope = true;
  std::size_t workers = 1;
};

namespace detail {
inline double sample_trace(const double* d, std::size_t n, double t, double rate) {
  const double f = t * rate;
  if (!(f >= 0.0) || f > static_cast<double>(n - 1)) return 0.0;
  const auto k = std::min(static_cast<std::size_t>(f), n - 2);
  const double w = f - static_cast<double>(k);
  return (1.0 - w) * d[k] + w * d[k + 1];
}
}  // namespace detail

/// I(x) = sum over pairs of d_sr(tau_sr(x)) with linear interpolation; with `envelope` the
/// magnitude of the pair formed with the quarter-period-delayed sum.
inline RealField das_beamform(const FmcTraces& tr, double c0, const Grid2D& grid, const DasOptions& opt = {}) {
  tr.validate();
  if (!(c0 > 0.0)) throw StructuralError("das: c0 must be positive");
  const double quarter = 0.25 / tr.pulse.center_frequency;
  const auto& geom = tr.geometry;
  RealField img(grid);
  parallel_for(grid.ny, opt.workers, [&](std::size_t iy) {
    for (std::size_t ix = 0; ix < grid.nx; ++ix) {
      double in_phase = 0.0, quad = 0.0;
      const double x = grid.x(ix), y = grid.y(iy);
      for (std::size_t s = 0; s < tr.n_src(); ++s)
        for (std::size_t r = 0; r < tr.n_rcv(); ++r) {
          const double tau = straight_delay(geom.positions[geom.sources[s]], geom.positions[r], x, y, c0);
          const double* d = tr.trace(s, r);
          in_phase += detail::sample_trace(d, tr.n_t, tau, tr.rate);
          if (opt.envelope) quad += detail::sample_trace(d, tr.n_t, tau + quarter, tr.rate);
        }
      img(ix, iy) = opt.envelope ? std::hypot(in_phase, quad) : in_phase;
    }
  });
  return img;
}

inline void write_traces(const std::filesystem::path& path, const FmcTraces& tr) {
  tr.validate();
  io::Tensor t;
  t.dtype = io::DType::f32;
  t.dims = {tr.n_src(), tr.n_rcv(), tr.n_t};
  t.real.assign(tr.data.begin(), tr.data.end());
  nlohmann::json side{{"kind", "fmc_traces"},
                      {"sample_rate_hz", tr.rate},
                      {"pulse", {{"center_frequency_hz", tr.pulse.center_frequency}, {"sigma_cycles", tr.pulse.sigma_cycles}}},
                      {"geometry", geometry_to_json(tr.geometry)}};
  io::write_bytes(sidecar_path(path), side.dump(2) + "\n");
  io::write(path, t);
}

inline FmcTraces read_traces(const std::filesystem::path& path) {
  const io::Tensor t = io::read(path);
  const auto side = nlohmann::json::parse(io::read_bytes(sidecar_path(path)));
  FmcTraces tr;
  tr.geometry = geometry_from_json(side.at("geometry"));
  tr.rate = side.at("sample_rate_hz").get<double>();
  tr.pulse.center_frequency = side.at("pulse").at("center_frequency_hz").get<double>();
  tr.pulse.sigma_cycles = side.at("pulse").at("sigma_cycles").get<double>();
  if (t.dtype != io::DType::f32 || t.dims.size() != 3 || t.dims[0] != tr.n_src() || t.dims[1] != tr.n_rcv())
    throw io::FormatError("trace tensor shape does not match its sidecar");
  tr.n_t = static_cast<std::size_t>(t.dims[2]);
  tr.data.assign(t.real.begin(), t.real.end());
  tr.validate();
  return tr;
}

}  // namespace wavetomo
