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

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "wavetomo/acquisition.hpp"
#include "wavetomo/conventional.hpp"
#include "wavetomo/dataset.hpp"
#include "wavetomo/fwi.hpp"
#include "wavetomo/metrics.hpp"
#include "wavetomo/phantom.hpp"
#include "wavetomo/pipeline.hpp"

namespace fs = std::filesystem;
using namespace wavetomo;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  fs::path out = ".";
  bool seed_given = false;
  bool workers_given = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Random seed")->each([&c](const std::string&) { c.seed_given = true; });
  app->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber)->each([&c](const std::string&) {
    c.workers_given = true;
  });
  app->add_option("--out", c.out, "Output directory");
}

nlohmann::json read_json_file(const fs::path& p) {
  try {
    return nlohmann::json::parse(io::read_bytes(p));
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError(p.string() + ": " + e.what());
  }
}

Grid2D grid_from(const std::string& like, std::size_t n, double dx) {
  if (!like.empty()) return io::read_real_field(like).grid();
  if (n == 0 || !(dx > 0)) throw StructuralError("a grid is required: pass a reference field or --n and --dx");
  return Grid2D::centered(n, n, dx);
}

struct GeometryArgs {
  std::size_t elements = 64;
  double diameter = 0.0;
  std::size_t stride = 1;
  std::string stencil = "bilinear";

  void add(CLI::App* app) {
    app->add_option("--elements", elements, "Ring elements")->check(CLI::Range(3, 100000));
    app->add_option("--diameter", diameter, "Ring diameter in metres (0: two cells inside the grid)");
    app->add_option("--stride", stride, "Every stride-th element transmits")->check(CLI::PositiveNumber);
    app->add_option("--stencil", stencil, "Point-source stencil")->check(CLI::IsMember({"nearest", "bilinear", "kaiser_sinc"}));
  }
  ArrayGeometry build(const Grid2D& g) const {
    GeometryConfig c{elements, diameter, stride, stencil_from_name(stencil)};
    return c.build(g);
  }
};

// --- subcommands --------------------------------------------------------------------------------

struct PhantomArgs {
  std::string kind = "breast", config, tissues;
  std::size_t n = 96;
  double dx = 5e-4, body_radius = 0.0, pixel_noise = 0.0;
  int lesions = -1;
  std::vector<double> bone_radii;
};

int cmd_phantom(const PhantomArgs& a, const Common& c) {
  const Grid2D grid = Grid2D::centered(a.n, a.n, a.dx);
  PhantomSpec spec = a.config.empty() ? PhantomSpec{} : phantom_spec_from_json(read_json_file(a.config), grid);
  spec.grid = grid;
  if (a.config.empty()) spec.kind = organ_from_name(a.kind);
  if (a.body_radius > 0) spec.body_radius = a.body_radius;
  if (a.lesions >= 0) spec.lesion_count = a.lesions;
  if (!a.bone_radii.empty()) spec.bone_radii = a.bone_radii;
  if (a.config.empty() || c.seed_given) spec.seed = c.seed;
  const TissueTable table = a.tissues.empty() ? TissueTable::defaults() : tissue_table_from_json(read_json_file(a.tissues));
  const TissuePhantom ph = generate_phantom(spec);
  const RealField speed = assign_sound_speed(ph, table, spec.seed, SpeedOptions{a.pixel_noise});
  fs::create_directories(c.out);
  const nlohmann::json meta = {{"phantom", to_json(spec)}, {"tissues", to_json(table)}, {"pixel_noise", a.pixel_noise}};
  write_field_artifact(c.out / "labels.wtm", labels_as_field(ph), "labels", meta);
  write_field_artifact(c.out / "speed.wtm", speed, "sound_speed", meta);
  std::cout << nlohmann::json{{"labels", (c.out / "labels.wtm").string()}, {"speed", (c.out / "speed.wtm").string()}}.dump(2)
            << '\n';
  return kExitOk;
}

struct SimulateArgs {
  std::string speed, solver;
  std::vector<double> freqs;
  GeometryArgs geom;
};

int cmd_simulate(const SimulateArgs& a, const Common& c) {
  const SolverConfig sc = a.solver.empty() ? SolverConfig{} : solver_config_from_json(read_json_file(a.solver));
  if (fs::is_directory(a.speed)) {
    const auto files = list_phantom_files(a.speed);
    if (files.empty()) throw StructuralError("no sound-speed files in " + a.speed);
    const ArrayGeometry geom = a.geom.build(io::read_real_field(files.front()).grid());
    const HarnessResult r =
        dataset_harness(files, geom, a.freqs, c.out, sc, c.workers, &std::cerr, stencil_from_name(a.geom.stencil));
    std::cout << to_json(r).dump(2) << '\n';
    return r.errors.empty() ? kExitOk : kExitFailure;
  }
  const RealField speed = io::read_real_field(a.speed);
  const ArrayGeometry geom = a.geom.build(speed.grid());
  const MeasurementSet m = simulate_measurements(speed, geom, a.freqs, sc, c.workers, stencil_from_name(a.geom.stencil));
  fs::create_directories(c.out);
  write_measurements(c.out / "measurements.wtm", m,
                     {{"solver", to_json(sc)}, {"speed_sha256", sha256_file(a.speed)}}, speed.grid().dx);
  std::cout << (c.out / "measurements.wtm").string() << '\n';
  return kExitOk;
}

struct FwiArgs {
  std::string data, init, config, solver, truth;
  std::size_t n = 0;
  double dx = 0.0, c0 = 1500.0;
};

int cmd_fwi(const FwiArgs& a, const Common& c) {
  const MeasurementSet obs = read_measurements(a.data);
  FwiConfig base;
  base.frequencies = obs.frequencies;
  FwiConfig cfg = a.config.empty() ? base : fwi_config_from_json(read_json_file(a.config), base);
  cfg.validate();
  cfg.workers = c.workers;
  const SolverConfig sc = a.solver.empty() ? SolverConfig{} : solver_config_from_json(read_json_file(a.solver));
  const RealField init = !a.init.empty() ? io::read_real_field(a.init) : RealField(grid_from("", a.n, a.dx), a.c0);
  check_geometry_fits(obs.geometry, init.grid());
  const FwiResult r = frequency_march(obs, init, cfg, CbsForwardOperator(sc));
  fs::create_directories(c.out);
  write_field_artifact(c.out / "fwi_model.wtm", r.model, "sound_speed");
  nlohmann::json rep = to_json(r, false);
  rep["kind"] = "fwi_report";
  rep["config"] = to_json(cfg);
  rep["solver"] = to_json(sc);
  if (!a.truth.empty()) rep["ssim"] = ssim(io::read_real_field(a.truth), r.model);
  write_json(c.out / "fwi_report.json", rep);
  std::cout << rep.dump(2) << '\n';
  if (r.aborted) {
    std::cerr << "solver diverged: " << r.diagnostic << '\n';
    return kExitDiverged;
  }
  return kExitOk;
}

struct ToftArgs {
  std::string times, speed, config, like;
  std::size_t n = 0;
  double dx = 0.0, c0 = 1500.0;
  GeometryArgs geom;
};

int cmd_toft(const ToftArgs& a, const Common& c) {
  if (a.times.empty() == a.speed.empty()) throw StructuralError("toft: pass exactly one of --times or --speed");
  ToftConfig cfg = a.config.empty() ? ToftConfig{} : toft_config_from_json(read_json_file(a.config));
  cfg.workers = c.workers;
  fs::create_directories(c.out);
  ObservedTimes times;
  ArrayGeometry geom;
  Grid2D grid;
  if (!a.speed.empty()) {
    const RealField truth = io::read_real_field(a.speed);
    grid = truth.grid();
    geom = a.geom.build(grid);
    write_times(c.out / "traveltimes.wtm", compute_traveltimes(truth, geom, c.workers, cfg.eikonal), geom);
    // Invert the stored (f32) times so both entry points see identical input.
    std::tie(times, geom) = read_times(c.out / "traveltimes.wtm");
  } else {
    std::tie(times, geom) = read_times(a.times);
    grid = grid_from(a.like, a.n, a.dx);
  }
  const ToftResult r = toft_invert(times, geom, RealField(grid, a.c0), cfg);
  write_field_artifact(c.out / "toft_model.wtm", r.model, "sound_speed");
  nlohmann::json rep = to_json(r);
  rep["config"] = to_json(cfg);
  if (!a.speed.empty()) rep["ssim"] = ssim(io::read_real_field(a.speed), r.model);
  write_json(c.out / "toft_report.json", rep);
  std::cout << rep.dump(2) << '\n';
  return kExitOk;
}

struct DasArgs {
  std::string traces, speed, like;
  std::size_t n = 0;
  double dx = 0.0, c0 = 1500.0, f0 = 1.0e6, sigma_cycles = 0.5, rate = 20e6, threshold = 1e-3;
  bool raw = false;
  GeometryArgs geom;
};

int cmd_das(const DasArgs& a, const Common& c) {
  if (a.traces.empty() == a.speed.empty()) throw StructuralError("das: pass exactly one of --traces or --speed");
  fs::create_directories(c.out);
  FmcTraces tr;
  Grid2D grid;
  if (!a.speed.empty()) {
    const RealField speed = io::read_real_field(a.speed);
    grid = speed.grid();
    const ArrayGeometry geom = a.geom.build(grid);
    const Pulse pulse{a.f0, a.sigma_cycles};
    const double span = 2.0 * geom.diameter / a.c0 + 12.0 * pulse.sigma();
    tr = synth_fmc_traces(reflectivity_scatterers(speed, a.threshold), geom, pulse, a.c0, span, a.rate);
    write_traces(c.out / "traces.wtm", tr);
  } else {
    tr = read_traces(a.traces);
    grid = grid_from(a.like, a.n, a.dx);
  }
  const RealField img = das_beamform(tr, a.c0, grid, {!a.raw, c.workers});
  write_field_artifact(c.out / "das_image.wtm", img, "das_image", {{"c0", a.c0}, {"envelope", !a.raw}});
  std::cout << (c.out / "das_image.wtm").string() << '\n';
  return kExitOk;
}

struct MetricsArgs {
  std::string truth, pred, metric = "ssim";
  double dynamic_range = 0.0;
  bool windowed = false;
};

int cmd_metrics(const MetricsArgs& a, const Common& c) {
  const io::Tensor t = io::read(a.truth), p = io::read(a.pred);
  if (t.dims != p.dims || t.dtype != p.dtype) throw StructuralError("metrics: truth and prediction shapes differ");
  MetricReport rep;
  if (a.metric == "ssim") {
    if (t.dtype != io::DType::f32 || t.dims.size() < 2) throw StructuralError("metrics: ssim needs real 2D fields");
    const std::size_t ny = t.dims[t.dims.size() - 2], nx = t.dims.back(), plane = nx * ny;
    const Grid2D g(nx, ny, t.dx > 0 ? t.dx : 1.0);
    std::vector<RealField> tv, pv;
    for (std::size_t k = 0; k < t.count() / plane; ++k) {
      const auto at = [&](const io::Tensor& x) {
        const auto first = x.real.begin() + static_cast<std::ptrdiff_t>(k * plane);
        return RealField(g, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(plane)));
      };
      tv.push_back(at(t));
      pv.push_back(at(p));
    }
    SsimOptions so;
    so.dynamic_range = a.dynamic_range;
    so.windowed = a.windowed;
    rep = ssim(tv, pv, so);
  } else {
    // Items are the innermost rows: one item for a field, one receiver vector per (frequency, source)
    // for a measurement tensor.
    const std::size_t len = t.dims.size() >= 3 ? t.dims.back() : t.count();
    rep.metric = "rrmse";
    for (std::size_t k = 0; k < t.count() / len; ++k) {
      std::vector<complex> u(len), v(len);
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t j = k * len + i;
        u[i] = t.dtype == io::DType::c64 ? complex(t.cplx[j]) : complex(t.real[j]);
        v[i] = p.dtype == io::DType::c64 ? complex(p.cplx[j]) : complex(p.real[j]);
      }
      if (norm2(std::span<const complex>(u)) == 0.0) {
        rep.excluded.push_back(k);
        continue;
      }
      rep.values.push_back(rrmse_item<complex>(u, v));
    }
    rep.summarize();
  }
  const nlohmann::json j = to_json(rep);
  fs::create_directories(c.out);
  write_json(c.out / "metrics.json", j);
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

struct StackArgs {
  std::vector<std::string> slices;
  double spacing = 1e-3;
};

int cmd_stack(const StackArgs& a, const Common& c) {
  fs::create_directories(c.out);
  std::vector<fs::path> files(a.slices.begin(), a.slices.end());
  const VolumeStack v = stack_slices(files, a.spacing, c.out / "volume.wtm");
  std::cout << nlohmann::json{{"volume", (c.out / "volume.wtm").string()}, {"slices", v.slices.size()}}.dump(2) << '\n';
  return kExitOk;
}

int cmd_run(const std::string& config, const Common& c) {
  const PipelineResult r = run_pipeline_file(config, c.out, c.seed_given ? std::optional(c.seed) : std::nullopt,
                                             c.workers_given ? std::optional(c.workers) : std::nullopt, &std::cerr);
  if (r.exit_code != kExitOk) std::cerr << r.message << '\n';
  if (!r.metrics.is_null()) std::cout << r.metrics.dump(2) << '\n';
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wavetomo: ultrasound computed tomography toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolkitVersion));

  Common common;
  PhantomArgs pa;
  auto* phantom = app.add_subcommand("phantom", "Generate a labelled phantom and its sound-speed map");
  add_common(phantom, common);
  phantom->add_option("--kind", pa.kind, "Organ kind")->check(CLI::IsMember({"breast", "arm", "leg", "disc"}));
  phantom->add_option("--n", pa.n, "Grid size (cells per side)")->check(CLI::Range(8, 8192));
  phantom->add_option("--dx", pa.dx, "Cell size in metres")->check(CLI::PositiveNumber);
  phantom->add_option("--body-radius", pa.body_radius, "Body radius in metres");
  phantom->add_option("--lesions", pa.lesions, "Lesion count (breast)");
  phantom->add_option("--bone-radius", pa.bone_radii, "Bone radii in metres (arm, leg)");
  phantom->add_option("--config", pa.config, "Phantom JSON")->check(CLI::ExistingFile);
  phantom->add_option("--tissues", pa.tissues, "Tissue table JSON overrides")->check(CLI::ExistingFile);
  phantom->add_option("--pixel-noise", pa.pixel_noise, "Per-pixel perturbation (m/s)");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Simulate ring measurements for one map or a directory of maps");
  add_common(simulate, common);
  simulate->add_option("--speed", sa.speed, "Sound-speed WTM1 file or directory")->required()->check(CLI::ExistingPath);
  simulate->add_option("--freqs", sa.freqs, "Frequencies in Hz")->required();
  simulate->add_option("--solver", sa.solver, "Solver JSON")->check(CLI::ExistingFile);
  sa.geom.add(simulate);

  FwiArgs fa;
  auto* fwi = app.add_subcommand("fwi", "Full waveform inversion by frequency marching");
  add_common(fwi, common);
  fwi->add_option("--data", fa.data, "Measurement WTM1 file")->required()->check(CLI::ExistingFile);
  fwi->add_option("--init", fa.init, "Initial model WTM1 file")->check(CLI::ExistingFile);
  fwi->add_option("--n", fa.n, "Grid size when no initial model is given");
  fwi->add_option("--dx", fa.dx, "Cell size when no initial model is given");
  fwi->add_option("--c0", fa.c0, "Homogeneous initial speed")->check(CLI::PositiveNumber);
  fwi->add_option("--config", fa.config, "FWI JSON")->check(CLI::ExistingFile);
  fwi->add_option("--solver", fa.solver, "Solver JSON")->check(CLI::ExistingFile);
  fwi->add_option("--truth", fa.truth, "True model, for an SSIM report")->check(CLI::ExistingFile);

  ToftArgs ta;
  auto* toft = app.add_subcommand("toft", "Time-of-flight tomography");
  add_common(toft, common);
  toft->add_option("--times", ta.times, "Traveltime WTM1 file")->check(CLI::ExistingFile);
  toft->add_option("--speed", ta.speed, "Synthesize traveltimes from this model")->check(CLI::ExistingFile);
  toft->add_option("--like", ta.like, "Field whose grid the model uses")->check(CLI::ExistingFile);
  toft->add_option("--n", ta.n, "Grid size");
  toft->add_option("--dx", ta.dx, "Cell size");
  toft->add_option("--c0", ta.c0, "Homogeneous initial speed")->check(CLI::PositiveNumber);
  toft->add_option("--config", ta.config, "ToFT JSON")->check(CLI::ExistingFile);
  ta.geom.add(toft);

  DasArgs da;
  auto* das = app.add_subcommand("das", "Delay-and-sum beamforming of full-matrix-capture traces");
  add_common(das, common);
  das->add_option("--traces", da.traces, "Trace WTM1 file")->check(CLI::ExistingFile);
  das->add_option("--speed", da.speed, "Synthesize traces from this model's reflectivity")->check(CLI::ExistingFile);
  das->add_option("--like", da.like, "Field whose grid the image uses")->check(CLI::ExistingFile);
  das->add_option("--n", da.n, "Grid size");
  das->add_option("--dx", da.dx, "Cell size");
  das->add_option("--c0", da.c0, "Beamforming speed")->check(CLI::PositiveNumber);
  das->add_option("--f0", da.f0, "Pulse centre frequency (Hz)")->check(CLI::PositiveNumber);
  das->add_option("--sigma-cycles", da.sigma_cycles, "Pulse width in cycles")->check(CLI::PositiveNumber);
  das->add_option("--rate", da.rate, "Sample rate (Hz)")->check(CLI::PositiveNumber);
  das->add_option("--threshold", da.threshold, "Reflectivity threshold for synthesis");
  das->add_flag("--raw", da.raw, "Skip the envelope step");
  da.geom.add(das);

  MetricsArgs ma;
  auto* metrics = app.add_subcommand("metrics", "Compare a prediction with the truth");
  add_common(metrics, common);
  metrics->add_option("--truth", ma.truth, "True WTM1 file")->required()->check(CLI::ExistingFile);
  metrics->add_option("--pred", ma.pred, "Predicted WTM1 file")->required()->check(CLI::ExistingFile);
  metrics->add_option("--metric", ma.metric, "ssim or rrmse")->check(CLI::IsMember({"ssim", "rrmse"}));
  metrics->add_option("--dynamic-range", ma.dynamic_range, "SSIM dynamic range (0: from the truth)");
  metrics->add_flag("--windowed", ma.windowed, "Gaussian-windowed SSIM");

  StackArgs ka;
  auto* stack = app.add_subcommand("stack", "Stack 2D slices into a volume");
  add_common(stack, common);
  stack->add_option("--slices", ka.slices, "Slice WTM1 files, in order")->required()->check(CLI::ExistingFile);
  stack->add_option("--spacing", ka.spacing, "Slice spacing in metres")->check(CLI::PositiveNumber);

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run the configured pipeline");
  add_common(run, common);
  run->add_option("--config", run_config, "Run configuration JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*phantom) return cmd_phantom(pa, common);
    if (*simulate) return cmd_simulate(sa, common);
    if (*fwi) return cmd_fwi(fa, common);
    if (*toft) return cmd_toft(ta, common);
    if (*das) return cmd_das(da, common);
    if (*metrics) return cmd_metrics(ma, common);
    if (*stack) return cmd_stack(ka, common);
    if (*run) return cmd_run(run_config, common);
  } catch (const StructuralError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const io::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SimulationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const DivergedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
