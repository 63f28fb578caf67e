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

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "wavetomo/field.hpp"
#include "wavetomo/forward.hpp"
#include "wavetomo/parallel.hpp"
#include "wavetomo/wtm1.hpp"

namespace wavetomo {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Transducer ring: uniformly spaced elements, a subset of which transmit.
struct ArrayGeometry {
  std::size_t n_elements = 0;
  double diameter = 0.0;
  Point center;
  std::vector<Point> positions;
  std::vector<std::size_t> sources;

  std::size_t n_sources() const { return sources.size(); }

  /// True when every element also transmits, so receiver and source sets coincide.
  bool all_elements_transmit() const { return sources.size() == n_elements; }
};

/// Element j sits at angle 2*pi*j/n; sources are elements 0, stride, 2*stride, ...
inline ArrayGeometry ring_array(std::size_t n_elements, double diameter, Point center, std::size_t source_stride) {
  if (n_elements < 3) throw StructuralError("ring_array: need at least 3 elements");
  if (source_stride < 1) throw StructuralError("ring_array: source stride must be >= 1");
  if (!(diameter > 0.0)) throw StructuralError("ring_array: diameter must be positive");
  ArrayGeometry g;
  g.n_elements = n_elements;
  g.diameter = diameter;
  g.center = center;
  const double r = 0.5 * diameter;
  for (std::size_t j = 0; j < n_elements; ++j) {
    const double th = 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(n_elements);
    g.positions.push_back({center.x + r * std::cos(th), center.y + r * std::sin(th)});
  }
  for (std::size_t j = 0; j < n_elements; j += source_stride) g.sources.push_back(j);
  return g;
}

/// Throws unless every element lies at least `margin` cells inside the grid.
inline void check_geometry_fits(const ArrayGeometry& geom, const Grid2D& grid, double margin = 1.0) {
  for (std::size_t j = 0; j < geom.positions.size(); ++j) {
    const auto [fx, fy] = grid.to_index(geom.positions[j].x, geom.positions[j].y);
    if (fx < margin || fy < margin || fx > static_cast<double>(grid.nx - 1) - margin ||
        fy > static_cast<double>(grid.ny - 1) - margin)
      throw StructuralError("element " + std::to_string(j) + " lies outside the grid margin");
  }
  for (auto s : geom.sources)
    if (s >= geom.n_elements) throw StructuralError("source index out of range");
}

/// Discretization of a unit point source.
enum class SourceStencil {
  nearest,      // all mass on the nearest node
  bilinear,     // mass split with bilinear weights; transpose of bilinear receiver sampling
  kaiser_sinc,  // Kaiser-windowed sinc over 10x10 nodes for off-grid accuracy on the spectral grid
};

inline std::string stencil_name(SourceStencil s) {
  switch (s) {
    case SourceStencil::nearest: return "nearest";
    case SourceStencil::bilinear: return "bilinear";
    case SourceStencil::kaiser_sinc: return "kaiser_sinc";
  }
  return "unknown";
}

inline SourceStencil stencil_from_name(const std::string& s) {
  for (auto v : {SourceStencil::nearest, SourceStencil::bilinear, SourceStencil::kaiser_sinc})
    if (stencil_name(v) == s) return v;
  throw StructuralError("unknown stencil '" + s + "'");
}

/// Receivers never use nearest-node sampling; a nearest source pairs with bilinear receivers.
inline SourceStencil receiver_stencil(SourceStencil s) {
  return s == SourceStencil::nearest ? SourceStencil::bilinear : s;
}

struct StencilTap {
  std::size_t ix = 0, iy = 0;
  double weight = 0.0;
};

inline std::vector<StencilTap> point_stencil(const Grid2D& grid, Point p, SourceStencil stencil) {
  const auto [fx, fy] = grid.to_index(p.x, p.y);
  const double mx = static_cast<double>(grid.nx - 1), my = static_cast<double>(grid.ny - 1);
  if (!(fx >= 0.0 && fy >= 0.0 && fx <= mx && fy <= my))
    throw StructuralError("point lies outside the grid");
  if (stencil == SourceStencil::nearest) {
    return {{static_cast<std::size_t>(std::lround(fx)), static_cast<std::size_t>(std::lround(fy)), 1.0}};
  }
  if (stencil == SourceStencil::kaiser_sinc) {
    constexpr int kRadius = 5;
    constexpr double kBeta = 10.0;
    const auto weights = [&](double f, std::size_t n, std::size_t& first) {
      const double base = std::floor(f);
      if (base - (kRadius - 1) < 0 || base + kRadius > static_cast<double>(n - 1))
        throw StructuralError("point too close to the grid edge for the windowed-sinc stencil");
      first = static_cast<std::size_t>(base) - (kRadius - 1);
      std::array<double, 2 * kRadius> w{};
      double sum = 0.0;
      for (int j = 0; j < 2 * kRadius; ++j) {
        const double x = static_cast<double>(first) + j - f;
        const double t = x / kRadius;
        const double window = t * t < 1.0 ? std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - t * t)) /
                                                std::cyl_bessel_i(0.0, kBeta)
                                          : 0.0;
        const double sinc = x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
        w[j] = sinc * window;
        sum += w[j];
      }
      for (auto& v : w) v /= sum;
      return w;
    };
    std::size_t x0 = 0, y0 = 0;
    const auto wx = weights(fx, grid.nx, x0);
    const auto wy = weights(fy, grid.ny, y0);
    std::vector<StencilTap> taps;
    for (int j = 0; j < 2 * kRadius; ++j)
      for (int i = 0; i < 2 * kRadius; ++i)
        if (wx[i] * wy[j] != 0.0) taps.push_back({x0 + i, y0 + j, wx[i] * wy[j]});
    return taps;
  }
  auto ix = std::min(static_cast<std::size_t>(std::floor(fx)), grid.nx - 2);
  auto iy = std::min(static_cast<std::size_t>(std::floor(fy)), grid.ny - 2);
  const double tx = fx - static_cast<double>(ix), ty = fy - static_cast<double>(iy);
  std::vector<StencilTap> taps;
  const std::array<StencilTap, 4> all{{{ix, iy, (1 - tx) * (1 - ty)},
                                       {ix + 1, iy, tx * (1 - ty)},
                                       {ix, iy + 1, (1 - tx) * ty},
                                       {ix + 1, iy + 1, tx * ty}}};
  for (const auto& t : all)
    if (t.weight != 0.0) taps.push_back(t);
  return taps;
}

/// Unit-intensity point source at an element: integral (sum * dx^2) equals one.
inline ComplexField point_source_field(const ArrayGeometry& geom, std::size_t element, const Grid2D& grid,
                                       SourceStencil stencil = SourceStencil::bilinear) {
  if (element >= geom.n_elements) throw StructuralError("point_source_field: element index out of range");
  ComplexField rho(grid);
  const double amp = 1.0 / (grid.dx * grid.dx);
  for (const auto& t : point_stencil(grid, geom.positions[element], stencil)) rho(t.ix, t.iy) += amp * t.weight;
  return rho;
}

/// Samples of a field at every element position, bilinear unless another stencil is given.
inline std::vector<complex> sample_at_elements(const ComplexField& u, const ArrayGeometry& geom,
                                               SourceStencil stencil = SourceStencil::bilinear) {
  std::vector<complex> out;
  out.reserve(geom.n_elements);
  for (const auto& p : geom.positions) {
    complex acc = 0.0;
    for (const auto& t : point_stencil(u.grid(), p, receiver_stencil(stencil))) acc += t.weight * u(t.ix, t.iy);
    out.push_back(acc);
  }
  return out;
}

/// Complex observations y[f][k][i] for frequency f, transmitting source k, receiver element i.
struct MeasurementSet {
  std::vector<double> frequencies;  // Hz
  ArrayGeometry geometry;
  std::vector<complex> data;        // frequency-major, then source, then receiver
  SourceStencil stencil = SourceStencil::bilinear;

  std::size_t n_freq() const { return frequencies.size(); }
  std::size_t n_src() const { return geometry.sources.size(); }
  std::size_t n_rcv() const { return geometry.n_elements; }

  std::size_t offset(std::size_t f, std::size_t k) const { return (f * n_src() + k) * n_rcv(); }
  complex& at(std::size_t f, std::size_t k, std::size_t i) { return data[offset(f, k) + i]; }
  const complex& at(std::size_t f, std::size_t k, std::size_t i) const { return data[offset(f, k) + i]; }
  std::span<const complex> receivers(std::size_t f, std::size_t k) const {
    return std::span<const complex>(data).subspan(offset(f, k), n_rcv());
  }

  void validate() const {
    if (data.size() != n_freq() * n_src() * n_rcv()) throw StructuralError("MeasurementSet: shape mismatch");
    for (const auto& z : data)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw StructuralError("MeasurementSet: non-finite entry");
  }

  /// Index of a frequency within this set, or throws.
  std::size_t frequency_index(double hz) const {
    for (std::size_t f = 0; f < frequencies.size(); ++f)
      if (std::abs(frequencies[f] - hz) <= 1e-9 * std::max(1.0, hz)) return f;
    throw StructuralError("frequency " + std::to_string(hz) + " Hz not present in measurements");
  }
};

/// Runs one forward solve on the padded grid for a source on the model grid.
/// c is edge-padded, rho zero-padded; the returned field stays on the padded grid.
inline ComplexField solve_padded(const ForwardOperator& fwd, const RealField& c_padded, const ComplexField& rho_model,
                                 std::size_t pad, double omega, const ComplexField* guess = nullptr) {
  return fwd.solve(c_padded, pad_extend(rho_model, pad, PadMode::zero), omega, guess);
}

struct SimulationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Forward-models every (frequency, source) pair and samples the field at all elements.
/// Sources and receivers are discretized on the padded grid with `stencil` (see receiver_stencil).
/// Ordering is frequency-major, then ascending source index; tasks run on `workers` threads.
inline MeasurementSet simulate_measurements(const RealField& c, const ArrayGeometry& geom,
                                            const std::vector<double>& frequencies, const SolverConfig& cfg,
                                            std::size_t workers = 1,
                                            SourceStencil stencil = SourceStencil::bilinear) {
  check_geometry_fits(geom, c.grid());
  for (double f : frequencies)
    if (!(f > 0.0)) throw StructuralError("simulate_measurements: frequencies must be positive");
  MeasurementSet m;
  m.frequencies = frequencies;
  m.geometry = geom;
  m.stencil = stencil;
  m.data.assign(frequencies.size() * geom.sources.size() * geom.n_elements, complex{});
  const CbsForwardOperator fwd(cfg);
  const RealField c_pad = pad_extend(c, cfg.pad, PadMode::edge);
  const std::size_t n_src = geom.sources.size();
  parallel_for(frequencies.size() * n_src, workers, [&](std::size_t task) {
    const std::size_t f = task / n_src, k = task % n_src;
    const double omega = 2.0 * M_PI * frequencies[f];
    ComplexField u;
    try {
      u = fwd.solve(c_pad, point_source_field(geom, geom.sources[k], c_pad.grid(), stencil), omega);
    } catch (const DivergedError& e) {
      throw SimulationError("solver diverged at frequency " + std::to_string(frequencies[f]) + " Hz, source " +
                            std::to_string(geom.sources[k]) + ": " + e.what());
    }
    const auto y = sample_at_elements(u, geom, stencil);
    std::copy(y.begin(), y.end(), m.data.begin() + static_cast<std::ptrdiff_t>(m.offset(f, k)));
  });
  return m;
}

// --- serialization -------------------------------------------------------------------------

inline nlohmann::json geometry_to_json(const ArrayGeometry& g) {
  return {{"n_elements", g.n_elements},
          {"diameter", g.diameter},
          {"center", {g.center.x, g.center.y}},
          {"sources", g.sources}};
}

inline ArrayGeometry geometry_from_json(const nlohmann::json& j) {
  const auto center = j.at("center").get<std::array<double, 2>>();
  ArrayGeometry g = ring_array(j.at("n_elements").get<std::size_t>(), j.at("diameter").get<double>(),
                               {center[0], center[1]}, 1);
  g.sources = j.at("sources").get<std::vector<std::size_t>>();
  for (auto s : g.sources)
    if (s >= g.n_elements) throw StructuralError("geometry: source index out of range");
  return g;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  auto s = p;
  s += ".json";
  return s;
}

/// Writes the complex tensor (n_freq x n_src x n_rcv) plus a JSON sidecar. `extra` is merged
/// into the sidecar (solver config, phantom checksum, ...).
inline void write_measurements(const std::filesystem::path& path, const MeasurementSet& m,
                               const nlohmann::json& extra = nlohmann::json::object(), double dx = 0.0) {
  m.validate();
  io::Tensor t;
  t.dtype = io::DType::c64;
  t.dims = {m.n_freq(), m.n_src(), m.n_rcv()};
  t.dx = dx;
  t.cplx.resize(m.data.size());
  for (std::size_t i = 0; i < m.data.size(); ++i) t.cplx[i] = std::complex<float>(m.data[i]);
  nlohmann::json side = extra;
  side["kind"] = "measurements";
  side["frequencies_hz"] = m.frequencies;
  side["geometry"] = geometry_to_json(m.geometry);
  side["stencil"] = stencil_name(m.stencil);
  io::write_bytes(sidecar_path(path), side.dump(2) + "\n");
  io::write(path, t);
}

inline MeasurementSet read_measurements(const std::filesystem::path& path) {
  const io::Tensor t = io::read(path);
  const auto side = nlohmann::json::parse(io::read_bytes(sidecar_path(path)));
  MeasurementSet m;
  m.frequencies = side.at("frequencies_hz").get<std::vector<double>>();
  m.geometry = geometry_from_json(side.at("geometry"));
  m.stencil = stencil_from_name(side.value("stencil", "bilinear"));
  if (t.dtype != io::DType::c64 || t.dims.size() != 3 || t.dims[0] != m.n_freq() || t.dims[1] != m.n_src() ||
      t.dims[2] != m.n_rcv())
    throw io::FormatError("measurement tensor shape does not match its sidecar");
  m.data.resize(t.cplx.size());
  for (std::size_t i = 0; i < t.cplx.size(); ++i) m.data[i] = complex(t.cplx[i]);
  return m;
}

}  // namespace wavetomo
