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
#include <filesystem>
#include <map>
#include <set>
#include <ostream>
#include <string>
#include <vector>

#include "wavetomo/acquisition.hpp"
#include "wavetomo/checksum.hpp"

namespace wavetomo {

struct HarnessEntry {
  std::string name;
  std::string phantom_sha256;
  std::string request_sha256;
  std::string output;
  std::string output_sha256;
};

struct HarnessResult {
  std::vector<HarnessEntry> entries;     // sorted by name
  std::vector<std::string> errors;       // phantoms skipped, with reason
  std::size_t simulated = 0;             // phantoms simulated in this call
  std::size_t reused = 0;                // phantoms whose complete output was kept
  std::size_t solves = 0;                // forward solves performed
};

inline nlohmann::json to_json(const HarnessResult& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"name", e.name},
                       {"phantom_sha256", e.phantom_sha256},
                       {"request_sha256", e.request_sha256},
                       {"output", e.output},
                       {"output_sha256", e.output_sha256}});
  return {{"kind", "dataset_manifest"}, {"entries", entries}, {"errors", r.errors}};
}

/// Sound-speed files in a directory: WTM1 files whose sidecar, if any, has kind "sound_speed".
inline std::vector<std::filesystem::path> list_phantom_files(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw StructuralError("phantom directory '" + dir.string() + "' not found");
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".wtm") continue;
    const fs::path side = sidecar_path(e.path());
    if (fs::exists(side)) {
      try {
        const auto j = nlohmann::json::parse(io::read_bytes(side));
        if (j.value("kind", "sound_speed") != "sound_speed") continue;
      } catch (const std::exception&) {
        // Unreadable sidecar: let the harness report the file.
      }
    }
    out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Simulates one MeasurementSet per phantom into out_dir and writes out_dir/manifest.json.
/// Outputs already listed in the manifest with matching phantom, request and file checksums
/// are kept without new solves; anything else (missing, partial, stale) is re-simulated.
/// Unreadable phantoms are skipped and reported in `errors`.
inline HarnessResult dataset_harness(const std::vector<std::filesystem::path>& phantoms, const ArrayGeometry& geom,
                                     const std::vector<double>& frequencies, const std::filesystem::path& out_dir,
                                     const SolverConfig& cfg, std::size_t workers = 1,
                                     std::ostream* log = nullptr,
                                     SourceStencil stencil = SourceStencil::bilinear) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path manifest_path = out_dir / "manifest.json";

  nlohmann::json request = {{"frequencies_hz", frequencies}, {"geometry", geometry_to_json(geom)},
                            {"solver", to_json(cfg)}, {"stencil", stencil_name(stencil)}};
  const std::string request_sha = sha256_hex(request.dump());

  std::map<std::string, HarnessEntry> previous;
  if (fs::exists(manifest_path)) {
    try {
      const auto j = nlohmann::json::parse(io::read_bytes(manifest_path));
      for (const auto& e : j.at("entries"))
        previous[e.at("name").get<std::string>()] =
            HarnessEntry{e.at("name"), e.at("phantom_sha256"), e.at("request_sha256"), e.at("output"),
                         e.at("output_sha256")};
    } catch (const std::exception& e) {
      if (log) *log << "manifest unreadable, rebuilding: " << e.what() << "\n";
    }
  }

  struct Job {
    std::string name;
    std::string phantom_sha;
    RealField c_pad;
    Grid2D grid;
    MeasurementSet m;
  };
  HarnessResult result;
  std::vector<Job> jobs;
  std::set<std::string> names;
  for (const auto& path : phantoms) {
    const std::string name = path.stem().string();
    if (!names.insert(name).second) {
      result.errors.push_back(path.string() + ": duplicate phantom name");
      continue;
    }
    std::string bytes, sha;
    RealField c;
    try {
      bytes = io::read_bytes(path);
      sha = sha256_hex(bytes);
      c = io::to_real_field(io::decode(bytes));
      check_geometry_fits(geom, c.grid());
      for (double v : c)
        if (!(v > 0) || !std::isfinite(v)) throw StructuralError("non-positive or non-finite sound speed");
    } catch (const std::exception& e) {
      result.errors.push_back(path.string() + ": " + e.what());
      if (log) *log << "skipping phantom " << path.string() << ": " << e.what() << "\n";
      continue;
    }
    const fs::path out = out_dir / (name + ".wtm");
    auto it = previous.find(name);
    if (it != previous.end() && it->second.phantom_sha256 == sha && it->second.request_sha256 == request_sha &&
        fs::exists(out) && fs::exists(sidecar_path(out))) {
      std::string have;
      try {
        have = sha256_file(out);
      } catch (const std::exception&) {
      }
      if (have == it->second.output_sha256) {
        result.entries.push_back(it->second);
        ++result.reused;
        continue;
      }
    }
    Job job{name, sha, pad_extend(c, cfg.pad, PadMode::edge), c.grid(), {}};
    job.m.frequencies = frequencies;
    job.m.geometry = geom;
    job.m.stencil = stencil;
    job.m.data.assign(frequencies.size() * geom.n_sources() * geom.n_elements, complex{});
    jobs.push_back(std::move(job));
  }

  // Flat task list over (phantom, frequency, source); each task owns its slice of the output.
  const std::size_t per_job = frequencies.size() * geom.n_sources();
  const CbsForwardOperator fwd(cfg);
  parallel_for(jobs.size() * per_job, workers, [&](std::size_t task) {
    Job& job = jobs[task / per_job];
    const std::size_t rest = task % per_job;
    const std::size_t f = rest / geom.n_sources(), k = rest % geom.n_sources();
    const double omega = 2.0 * M_PI * frequencies[f];
    ComplexField u;
    try {
      u = fwd.solve(job.c_pad, point_source_field(geom, geom.sources[k], job.c_pad.grid(), stencil), omega);
    } catch (const DivergedError& e) {
      throw SimulationError("phantom " + job.name + ": solver diverged at frequency " +
                            std::to_string(frequencies[f]) + " Hz, source " + std::to_string(geom.sources[k]) +
                            ": " + e.what());
    }
    const auto y = sample_at_elements(u, geom, stencil);
    std::copy(y.begin(), y.end(), job.m.data.begin() + static_cast<std::ptrdiff_t>(job.m.offset(f, k)));
  });
  result.solves = jobs.size() * per_job;

  for (const auto& job : jobs) {
    const fs::path out = out_dir / (job.name + ".wtm");
    nlohmann::json extra = {{"solver", to_json(cfg)}, {"phantom_sha256", job.phantom_sha}};
    write_measurements(out, job.m, extra, job.grid.dx);
    result.entries.push_back({job.name, job.phantom_sha, request_sha, out.filename().string(), sha256_file(out)});
    ++result.simulated;
  }
  std::sort(result.entries.begin(), result.entries.end(),
            [](const HarnessEntry& a, const HarnessEntry& b) { return a.name < b.name; });
  io::write_bytes(manifest_path, to_json(result).dump(2) + "\n");
  return result;
}

inline HarnessResult dataset_harness(const std::filesystem::path& phantom_dir, const ArrayGeometry& geom,
                                     const std::vector<double>& frequencies, const std::filesystem::path& out_dir,
                                     const SolverConfig& cfg, std::size_t workers = 1,
                                     std::ostream* log = nullptr,
                                     SourceStencil stencil = SourceStencil::bilinear) {
  return dataset_harness(list_phantom_files(phantom_dir), geom, frequencies, out_dir, cfg, workers, log, stencil);
}

}  // namespace wavetomo
