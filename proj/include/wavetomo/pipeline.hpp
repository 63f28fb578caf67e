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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "wavetomo/acquisition.hpp"
#include "wavetomo/checksum.hpp"
#include "wavetomo/conventional.hpp"
#include "wavetomo/fwi.hpp"
#include "wavetomo/helmholtz.hpp"
#include "wavetomo/json_reader.hpp"
#include "wavetomo/metrics.hpp"
#include "wavetomo/phantom.hpp"
#include "wavetomo/wtm1.hpp"

#ifndef WAVETOMO_VERSION
#define WAVETOMO_VERSION "0.1.0"
#endif

namespace wavetomo {

inline constexpr const char* kToolkitVersion = WAVETOMO_VERSION;

/// Process exit statuses shared by the CLI and the pipeline.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitDiverged = 3 };

// --- run configuration --------------------------------------------------------------------------

struct GeometryConfig {
  std::size_t elements = 64;
  double diameter = 0.0;        // metres; 0 leaves two cells between the ring and the grid edge
  std::size_t source_stride = 1;
  SourceStencil stencil = SourceStencil::bilinear;

  ArrayGeometry build(const Grid2D& g) const {
    const double d = diameter > 0.0 ? diameter : static_cast<double>(std::min(g.nx, g.ny) - 5) * g.dx;
    const double cx = g.x0 + 0.5 * static_cast<double>(g.nx - 1) * g.dx;
    const double cy = g.y0 + 0.5 * static_cast<double>(g.ny - 1) * g.dx;
    ArrayGeometry geom = ring_array(elements, d, {cx, cy}, source_stride);
    check_geometry_fits(geom, g);
    return geom;
  }
};

struct FwiStageConfig {
  bool enabled = true;
  double initial_speed = 1500.0;
  FwiConfig march;              // empty frequency list selects the acquisition frequencies
  SolverConfig solver;          // forward solver used inside the inversion
};

struct ToftStageConfig {
  bool enabled = false;
  double initial_speed = 1500.0;
  ToftConfig cfg;
};

struct DasStageConfig {
  bool enabled = false;
  double c0 = 1500.0;
  Pulse pulse{1.0e6, 0.5};
  double sample_rate = 20e6;
  double reflectivity_threshold = 1e-3;   // cells with |grad c| dx / (2c) above become scatterers
  bool envelope = true;
};

struct MetricsStageConfig {
  double dynamic_range = 0.0;   // 0 selects max - min of the true model
  bool windowed_ssim = false;
  bool data_rrmse = false;      // re-simulate the FWI model and compare with the observations
};

struct RunConfig {
  std::size_t n = 96;
  double dx = 5e-4;
  PhantomSpec phantom;
  bool phantom_seed_set = false;
  TissueTable tissues = TissueTable::defaults();
  double pixel_noise = 0.0;
  GeometryConfig geometry;
  std::vector<double> frequencies;
  SolverConfig solver;          // forward solver used to simulate observations
  FwiStageConfig fwi;
  ToftStageConfig toft;
  DasStageConfig das;
  MetricsStageConfig metrics;
  std::uint64_t seed = 1;
  std::size_t workers = 1;

  Grid2D grid() const { return Grid2D::centered(n, n, dx); }
  std::uint64_t phantom_seed() const { return phantom_seed_set ? phantom.seed : seed; }
};

/// Fully resolved configuration. `workers` is excluded because it never changes results.
inline nlohmann::json to_json(const RunConfig& c) {
  PhantomSpec ph = c.phantom;
  ph.seed = c.phantom_seed();
  nlohmann::json fwi = to_json(c.fwi.march);
  fwi["enabled"] = c.fwi.enabled;
  fwi["initial_speed"] = c.fwi.initial_speed;
  fwi["solver"] = to_json(c.fwi.solver);
  nlohmann::json toft = to_json(c.toft.cfg);
  toft["enabled"] = c.toft.enabled;
  toft["initial_speed"] = c.toft.initial_speed;
  return {{"grid", {{"n", c.n}, {"dx", c.dx}}},
          {"phantom", to_json(ph)},
          {"tissues", to_json(c.tissues)},
          {"pixel_noise", c.pixel_noise},
          {"geometry",
           {{"elements", c.geometry.elements},
            {"diameter", c.geometry.diameter},
            {"source_stride", c.geometry.source_stride},
            {"stencil", stencil_name(c.geometry.stencil)}}},
          {"frequencies_hz", c.frequencies},
          {"solver", to_json(c.solver)},
          {"fwi", fwi},
          {"toft", toft},
          {"das",
           {{"enabled", c.das.enabled},
            {"c0", c.das.c0},
            {"center_frequency_hz", c.das.pulse.center_frequency},
            {"sigma_cycles", c.das.pulse.sigma_cycles},
            {"sample_rate_hz", c.das.sample_rate},
            {"reflectivity_threshold", c.das.reflectivity_threshold},
            {"envelope", c.das.envelope}}},
          {"metrics",
           {{"dynamic_range", c.metrics.dynamic_range},
            {"windowed_ssim", c.metrics.windowed_ssim},
            {"data_rrmse", c.metrics.data_rrmse}}},
          {"seed", c.seed}};
}

/// Parses and validates a run configuration; every object rejects unknown keys. Physical
/// feasibility (phantom fits the grid, ring fits the grid) is checked by validate_run_config.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  JsonReader r(j, "config");
  if (const auto* g = r.object("grid")) {
    JsonReader gr(*g, "config.grid");
    gr.get("n", c.n);
    gr.get("dx", c.dx);
    gr.finish();
    gr.require(c.n >= 16 && c.n <= 4096, "n", "must lie in [16, 4096]");
    gr.require(c.dx > 0 && std::isfinite(c.dx), "dx", "must be positive");
  }
  if (const auto* p = r.object("phantom")) {
    c.phantom = phantom_spec_from_json(*p, c.grid());
    c.phantom_seed_set = p->contains("seed");
  } else {
    c.phantom.grid = c.grid();
  }
  if (const auto* t = r.object("tissues")) c.tissues = tissue_table_from_json(*t);
  r.get("pixel_noise", c.pixel_noise);
  r.require(c.pixel_noise >= 0, "pixel_noise", "must be >= 0");
  if (const auto* g = r.object("geometry")) {
    JsonReader gr(*g, "config.geometry");
    gr.get("elements", c.geometry.elements);
    gr.get("diameter", c.geometry.diameter);
    gr.get("source_stride", c.geometry.source_stride);
    std::string st = stencil_name(c.geometry.stencil);
    gr.get("stencil", st);
    gr.finish();
    c.geometry.stencil = stencil_from_name(st);
    gr.require(c.geometry.elements >= 3, "elements", "must be >= 3");
    gr.require(c.geometry.diameter >= 0, "diameter", "must be >= 0");
    gr.require(c.geometry.source_stride >= 1, "source_stride", "must be >= 1");
  }
  r.get("frequencies_hz", c.frequencies);
  r.require(!c.frequencies.empty(), "frequencies_hz", "must list at least one frequency");
  for (std::size_t i = 0; i < c.frequencies.size(); ++i) {
    r.require(c.frequencies[i] > 0, "frequencies_hz", "must be positive");
    r.require(i == 0 || c.frequencies[i] > c.frequencies[i - 1], "frequencies_hz", "must be strictly ascending");
  }
  if (const auto* s = r.object("solver")) c.solver = solver_config_from_json(*s);
  c.fwi.solver = c.solver;
  if (const auto* f = r.object("fwi")) {
    nlohmann::json rest = *f;
    JsonReader fr(*f, "config.fwi");
    fr.get("enabled", c.fwi.enabled);
    fr.get("initial_speed", c.fwi.initial_speed);
    if (const auto* s = fr.object("solver")) c.fwi.solver = solver_config_from_json(*s);
    fr.require(c.fwi.initial_speed > 0, "initial_speed", "must be positive");
    rest.erase("enabled");
    rest.erase("initial_speed");
    rest.erase("solver");
    FwiConfig base;
    base.frequencies = c.frequencies;
    c.fwi.march = fwi_config_from_json(rest, base);
  } else {
    c.fwi.march.frequencies = c.frequencies;
  }
  for (double f : c.fwi.march.frequencies) {
    bool found = false;
    for (double g : c.frequencies) found = found || std::abs(f - g) <= 1e-9 * g;
    r.require(found, "fwi", "frequencies must be a subset of frequencies_hz");
  }
  if (const auto* t = r.object("toft")) {
    nlohmann::json rest = *t;
    JsonReader tr(*t, "config.toft");
    tr.get("enabled", c.toft.enabled);
    tr.get("initial_speed", c.toft.initial_speed);
    tr.require(c.toft.initial_speed > 0, "initial_speed", "must be positive");
    rest.erase("enabled");
    rest.erase("initial_speed");
    c.toft.cfg = toft_config_from_json(rest);
  }
  if (const auto* d = r.object("das")) {
    JsonReader dr(*d, "config.das");
    dr.get("enabled", c.das.enabled);
    dr.get("c0", c.das.c0);
    dr.get("center_frequency_hz", c.das.pulse.center_frequency);
    dr.get("sigma_cycles", c.das.pulse.sigma_cycles);
    dr.get("sample_rate_hz", c.das.sample_rate);
    dr.get("reflectivity_threshold", c.das.reflectivity_threshold);
    dr.get("envelope", c.das.envelope);
    dr.finish();
    dr.require(c.das.c0 > 0, "c0", "must be positive");
    dr.require(c.das.pulse.center_frequency > 0, "center_frequency_hz", "must be positive");
    dr.require(c.das.pulse.sigma_cycles > 0, "sigma_cycles", "must be positive");
    dr.require(c.das.sample_rate > 2 * c.das.pulse.center_frequency, "sample_rate_hz",
               "must exceed twice the pulse frequency");
    dr.require(c.das.reflectivity_threshold >= 0, "reflectivity_threshold", "must be >= 0");
  }
  if (const auto* m = r.object("metrics")) {
    JsonReader mr(*m, "config.metrics");
    mr.get("dynamic_range", c.metrics.dynamic_range);
    mr.get("windowed_ssim", c.metrics.windowed_ssim);
    mr.get("data_rrmse", c.metrics.data_rrmse);
    mr.finish();
    mr.require(c.metrics.dynamic_range >= 0, "dynamic_range", "must be >= 0");
  }
  r.get("seed", c.seed);
  r.get("workers", c.workers);
  r.require(c.workers >= 1, "workers", "must be >= 1");
  r.finish();
  return c;
}

// --- artifacts ----------------------------------------------------------------------------------

/// Writes a real field with a JSON sidecar carrying `kind` and any extra members.
inline void write_field_artifact(const std::filesystem::path& path, const RealField& f, const std::string& kind,
                                 nlohmann::json extra = nlohmann::json::object()) {
  extra["kind"] = kind;
  io::write_bytes(sidecar_path(path), extra.dump(2) + "\n");
  io::write_field(path, f);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  io::write_bytes(path, j.dump(2) + "\n");
}

/// Point scatterers at cells whose reflectivity |grad c| dx / (2 c) exceeds `threshold`.
inline std::vector<PointScatterer> reflectivity_scatterers(const RealField& c, double threshold) {
  const Grid2D& g = c.grid();
  std::vector<PointScatterer> out;
  for (std::size_t iy = 1; iy + 1 < g.ny; ++iy)
    for (std::size_t ix = 1; ix + 1 < g.nx; ++ix) {
      const double gx = 0.5 * (c(ix + 1, iy) - c(ix - 1, iy));
      const double gy = 0.5 * (c(ix, iy + 1) - c(ix, iy - 1));
      const double r = std::hypot(gx, gy) / (2.0 * c(ix, iy));
      if (r > threshold) out.push_back({g.x(ix), g.y(iy), r});
    }
  return out;
}

/// Sorted relative path -> sha256 of every regular file under `root`, except provenance.json.
inline std::map<std::string, std::string> artifact_checksums(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = std::filesystem::relative(e.path(), root).generic_string();
    if (rel == "provenance.json") continue;
    out[rel] = sha256_file(e.path());
  }
  return out;
}

// --- pipeline -----------------------------------------------------------------------------------

struct PipelineResult {
  int exit_code = kExitOk;
  std::string message;
  nlohmann::json metrics = nlohmann::json::object();
};

/// Phantom and geometry derived from a configuration; throws StructuralError when infeasible.
struct PreparedRun {
  TissuePhantom phantom;
  RealField truth;
  ArrayGeometry geometry;
};

inline PreparedRun prepare_run(const RunConfig& cfg) {
  PhantomSpec spec = cfg.phantom;
  spec.grid = cfg.grid();
  spec.seed = cfg.phantom_seed();
  PreparedRun p;
  p.phantom = generate_phantom(spec);
  p.truth = assign_sound_speed(p.phantom, cfg.tissues, cfg.seed, SpeedOptions{cfg.pixel_noise});
  p.geometry = cfg.geometry.build(spec.grid);
  return p;
}

/// phantom -> simulate -> FWI (and optional ToFT, DAS) -> metrics, writing a deterministic
/// artifact tree under `out`. Configuration problems are reported before anything is written.
inline PipelineResult run_pipeline(const RunConfig& cfg, const std::filesystem::path& out, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  PipelineResult res;
  const auto note = [&](const std::string& s) {
    if (log) *log << s << '\n';
  };
  PreparedRun prep;
  try {
    prep = prepare_run(cfg);
  } catch (const StructuralError& e) {
    return {kExitConfig, e.what(), {}};
  }
  fs::create_directories(out);
  const nlohmann::json resolved = to_json(cfg);
  const std::string config_hash = sha256_hex(resolved.dump());

  const nlohmann::json grid_meta = {{"n", cfg.n}, {"dx", cfg.dx}};
  write_field_artifact(out / "phantom_labels.wtm", labels_as_field(prep.phantom), "labels",
                       {{"phantom", to_json(cfg.phantom)}, {"grid", grid_meta}});
  write_field_artifact(out / "true_speed.wtm", prep.truth, "sound_speed", {{"grid", grid_meta}});
  note("phantom written");

  const auto finish = [&](int code, const std::string& msg) {
    res.exit_code = code;
    res.message = msg;
    write_json(out / "metrics.json", res.metrics);
    nlohmann::json prov = {{"toolkit", "wavetomo"},
                           {"version", kToolkitVersion},
                           {"config_sha256", config_hash},
                           {"config", resolved},
                           {"seeds", {{"run", cfg.seed}, {"phantom", cfg.phantom_seed()}}},
                           {"exit_code", code},
                           {"artifacts", artifact_checksums(out)}};
    if (!msg.empty()) prov["message"] = msg;
    write_json(out / "provenance.json", prov);
    return res;
  };

  SsimOptions so;
  so.dynamic_range = cfg.metrics.dynamic_range;
  so.windowed = cfg.metrics.windowed_ssim;

  if (cfg.fwi.enabled) {
    MeasurementSet obs;
    try {
      obs = simulate_measurements(prep.truth, prep.geometry, cfg.frequencies, cfg.solver, cfg.workers,
                                  cfg.geometry.stencil);
    } catch (const SimulationError& e) {
      return finish(kExitDiverged, e.what());
    }
    write_measurements(out / "measurements.wtm", obs, {{"solver", to_json(cfg.solver)}}, cfg.dx);
    note("measurements written");

    FwiConfig march = cfg.fwi.march;
    march.workers = cfg.workers;
    const FwiResult fr =
        frequency_march(obs, RealField(prep.truth.grid(), cfg.fwi.initial_speed), march, CbsForwardOperator(cfg.fwi.solver));
    write_field_artifact(out / "fwi_model.wtm", fr.model, "sound_speed", {{"grid", grid_meta}});
    nlohmann::json rep = to_json(fr, false);
    rep["kind"] = "fwi_report";
    write_json(out / "fwi_report.json", rep);
    res.metrics["fwi_ssim"] = ssim(prep.truth, fr.model, so);
    note("fwi finished, ssim " + std::to_string(res.metrics["fwi_ssim"].get<double>()));
    if (fr.aborted) return finish(kExitDiverged, fr.diagnostic);

    if (cfg.metrics.data_rrmse) {
      try {
        const MeasurementSet pred = simulate_measurements(fr.model, prep.geometry, cfg.frequencies, cfg.solver,
                                                          cfg.workers, cfg.geometry.stencil);
        MetricReport rr;
        rr.metric = "rrmse";
        for (std::size_t f = 0; f < obs.n_freq(); ++f)
          for (std::size_t k = 0; k < obs.n_src(); ++k) rr.values.push_back(rrmse_item(obs.receivers(f, k), pred.receivers(f, k)));
        rr.summarize();
        res.metrics["fwi_data_rrmse"] = to_json(rr);
      } catch (const SimulationError& e) {
        return finish(kExitDiverged, e.what());
      }
    }
  }

  if (cfg.toft.enabled) {
    ToftConfig tc = cfg.toft.cfg;
    tc.workers = cfg.workers;
    write_times(out / "traveltimes.wtm", compute_traveltimes(prep.truth, prep.geometry, cfg.workers, tc.eikonal),
                prep.geometry);
    // The stored (f32) times are inverted, so the artifact alone reproduces the model.
    const ObservedTimes times = read_times(out / "traveltimes.wtm").first;
    const ToftResult tr = toft_invert(times, prep.geometry, RealField(prep.truth.grid(), cfg.toft.initial_speed), tc);
    write_field_artifact(out / "toft_model.wtm", tr.model, "sound_speed", {{"grid", grid_meta}});
    write_json(out / "toft_report.json", to_json(tr));
    res.metrics["toft_ssim"] = ssim(prep.truth, tr.model, so);
    res.metrics["toft_converged"] = tr.converged;
    note("toft finished");
  }

  if (cfg.das.enabled) {
    const auto scatterers = reflectivity_scatterers(prep.truth, cfg.das.reflectivity_threshold);
    const double span = 2.0 * prep.geometry.diameter / cfg.das.c0 + 12.0 * cfg.das.pulse.sigma();
    const FmcTraces traces =
        synth_fmc_traces(scatterers, prep.geometry, cfg.das.pulse, cfg.das.c0, span, cfg.das.sample_rate);
    write_traces(out / "traces.wtm", traces);
    const RealField img = das_beamform(traces, cfg.das.c0, prep.truth.grid(), {cfg.das.envelope, cfg.workers});
    write_field_artifact(out / "das_image.wtm", img, "das_image", {{"grid", grid_meta}});
    res.metrics["das_scatterers"] = scatterers.size();
    note("das finished");
  }
  return finish(kExitOk, "");
}

/// Reads, validates and runs a configuration file. Returns the exit status.
inline PipelineResult run_pipeline_file(const std::filesystem::path& config_path, const std::filesystem::path& out,
                                        std::optional<std::uint64_t> seed = std::nullopt,
                                        std::optional<std::size_t> workers = std::nullopt, std::ostream* log = nullptr) {
  RunConfig cfg;
  try {
    cfg = run_config_from_json(nlohmann::json::parse(io::read_bytes(config_path)));
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = std::max<std::size_t>(1, *workers);
  } catch (const nlohmann::json::exception& e) {
    return {kExitConfig, std::string("config: ") + e.what(), {}};
  } catch (const StructuralError& e) {
    return {kExitConfig, e.what(), {}};
  } catch (const io::FormatError& e) {
    return {kExitConfig, e.what(), {}};
  }
  return run_pipeline(cfg, out, log);
}

// --- slice stacking -----------------------------------------------------------------------------

struct VolumeStack {
  std::vector<RealField> slices;
  double spacing = 0.0;   // metres between slices
};

/// Writes a (slices x ny x nx) WTM1 tensor with the spacing in its sidecar.
inline void write_volume(const std::filesystem::path& path, const VolumeStack& v) {
  if (v.slices.empty()) throw StructuralError("stack: at least one slice is required");
  if (!(v.spacing > 0)) throw StructuralError("stack: slice spacing must be positive");
  const Grid2D& g = v.slices.front().grid();
  io::Tensor t;
  t.dtype = io::DType::f32;
  t.dims = {v.slices.size(), g.ny, g.nx};
  t.dx = g.dx;
  t.origin = {g.x0, g.y0};
  for (const auto& s : v.slices) {
    if (!(s.grid() == g)) throw StructuralError("stack: slice grids differ");
    t.real.insert(t.real.end(), s.begin(), s.end());
  }
  write_json(sidecar_path(path), {{"kind", "volume"}, {"slice_spacing_m", v.spacing}, {"slices", v.slices.size()}});
  io::write(path, t);
}

inline VolumeStack read_volume(const std::filesystem::path& path) {
  const io::Tensor t = io::read(path);
  const auto side = nlohmann::json::parse(io::read_bytes(sidecar_path(path)));
  if (t.dtype != io::DType::f32 || t.dims.size() != 3) throw io::FormatError("volume: expected a real 3-tensor");
  const Grid2D g(static_cast<std::size_t>(t.dims[2]), static_cast<std::size_t>(t.dims[1]), t.dx, t.origin[0], t.origin[1]);
  VolumeStack v;
  v.spacing = side.at("slice_spacing_m").get<double>();
  for (std::size_t k = 0; k < t.dims[0]; ++k) {
    const auto first = t.real.begin() + static_cast<std::ptrdiff_t>(k * g.size());
    v.slices.emplace_back(g, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(g.size())));
  }
  return v;
}

/// Stacks 2D slice files, in the given order, into one volume file.
inline VolumeStack stack_slices(const std::vector<std::filesystem::path>& files, double spacing,
                                const std::filesystem::path& out) {
  VolumeStack v;
  v.spacing = spacing;
  for (const auto& f : files) v.slices.push_back(io::read_real_field(f));
  write_volume(out, v);
  return v;
}

}  // namespace wavetomo
