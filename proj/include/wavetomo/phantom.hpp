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
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wavetomo/field.hpp"
#include "wavetomo/labeling.hpp"
#include "wavetomo/random.hpp"

namespace wavetomo {

enum class Tissue : std::uint8_t {
  water = 0,
  skin = 1,
  fat = 2,
  muscle = 3,
  cortical_bone = 4,
  marrow = 5,
  gland = 6,
  lesion_malignant = 7,
  lesion_benign = 8,
};

inline constexpr std::array<Tissue, 9> kAllTissues = {
    Tissue::water,  Tissue::skin,  Tissue::fat,
    Tissue::muscle, Tissue::cortical_bone, Tissue::marrow,
    Tissue::gland,  Tissue::lesion_malignant, Tissue::lesion_benign};

inline std::string tissue_name(Tissue t) {
  switch (t) {
    case Tissue::water: return "water";
    case Tissue::skin: return "skin";
    case Tissue::fat: return "fat";
    case Tissue::muscle: return "muscle";
    case Tissue::cortical_bone: return "cortical_bone";
    case Tissue::marrow: return "marrow";
    case Tissue::gland: return "gland";
    case Tissue::lesion_malignant: return "lesion_malignant";
    case Tissue::lesion_benign: return "lesion_benign";
  }
  return "unknown";
}

inline Tissue tissue_from_name(const std::string& name) {
  for (Tissue t : kAllTissues)
    if (tissue_name(t) == name) return t;
  throw StructuralError("unknown tissue label '" + name + "'");
}

using LabelMap = Field<std::uint8_t>;

struct TissuePhantom {
  LabelMap labels;

  const Grid2D& grid() const { return labels.grid(); }
  Tissue at(std::size_t i) const { return static_cast<Tissue>(labels[i]); }
  Tissue at(std::size_t ix, std::size_t iy) const { return static_cast<Tissue>(labels(ix, iy)); }
  bool is(std::size_t i, Tissue t) const { return labels[i] == static_cast<std::uint8_t>(t); }
  std::size_t count(Tissue t) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), static_cast<std::uint8_t>(t)));
  }
};

struct TissueProperties {
  double mean = 1500.0;     // m/s
  double half_width = 0.0;  // m/s
};

/// Per-label speed distribution.
class TissueTable {
 public:
  static constexpr double kMinSpeed = 1300.0;
  static constexpr double kMaxSpeed = 3500.0;

  TissueTable() = default;

  static TissueTable defaults() {
    TissueTable t;
    t.set(Tissue::water, {1500.0, 0.0});
    t.set(Tissue::skin, {1610.0, 10.0});
    t.set(Tissue::fat, {1450.0, 10.0});
    t.set(Tissue::gland, {1520.0, 10.0});
    t.set(Tissue::muscle, {1580.0, 10.0});
    t.set(Tissue::lesion_malignant, {1590.0, 5.0});
    t.set(Tissue::lesion_benign, {1560.0, 5.0});
    t.set(Tissue::cortical_bone, {2800.0, 50.0});
    t.set(Tissue::marrow, {1450.0, 10.0});
    return t;
  }

  void set(Tissue t, TissueProperties p) {
    if (!(p.mean >= kMinSpeed && p.mean <= kMaxSpeed))
      throw StructuralError("tissue table: mean speed of " + tissue_name(t) + " outside [1300, 3500] m/s");
    if (!(p.half_width >= 0.0 && p.half_width < 0.1 * p.mean))
      throw StructuralError("tissue table: half-width of " + tissue_name(t) + " must lie in [0, 0.1 * mean)");
    if (p.mean - p.half_width < kMinSpeed || p.mean + p.half_width > kMaxSpeed)
      throw StructuralError("tissue table: range of " + tissue_name(t) + " leaves [1300, 3500] m/s");
    entries_[t] = p;
  }

  bool contains(Tissue t) const { return entries_.count(t) > 0; }

  const TissueProperties& at(Tissue t) const {
    auto it = entries_.find(t);
    if (it == entries_.end()) throw StructuralError("tissue table has no entry for " + tissue_name(t));
    return it->second;
  }

  const std::map<Tissue, TissueProperties>& entries() const { return entries_; }

 private:
  std::map<Tissue, TissueProperties> entries_;
};

enum class OrganKind { disc, breast, arm, leg };

inline std::string organ_name(OrganKind k) {
  switch (k) {
    case OrganKind::disc: return "disc";
    case OrganKind::breast: return "breast";
    case OrganKind::arm: return "arm";
    case OrganKind::leg: return "leg";
  }
  return "unknown";
}

inline OrganKind organ_from_name(const std::string& s) {
  for (auto k : {OrganKind::disc, OrganKind::breast, OrganKind::arm, OrganKind::leg})
    if (organ_name(k) == s) return k;
  throw StructuralError("unknown organ kind '" + s + "'");
}

/// Procedural phantom description. Lengths in meters. Zero-valued optional lengths select
/// kind-dependent defaults; an empty bone list gives one bone for arm and leg.
struct PhantomSpec {
  Grid2D grid;
  OrganKind kind = OrganKind::disc;
  double body_radius = 0.02;
  std::vector<double> bone_radii;
  double marrow_fraction = 0.55;
  int lesion_count = 0;
  double lesion_radius = 0.0;
  double skin_thickness = 0.0;
  double fat_thickness = 0.0;
  Tissue disc_tissue = Tissue::muscle;
  bool rotate = true;
  std::uint64_t seed = 0;
};

namespace detail {

// Closed star-shaped outline r(phi) = scale * ellipse(phi) * (1 + harmonic jitter).
struct Outline {
  double cx = 0, cy = 0;
  double scale = 0;
  double aspect = 1.0;  // minor/major, major along the rotated x axis
  double theta = 0;
  std::array<double, 3> amp{0, 0, 0};
  std::array<double, 3> phase{0, 0, 0};

  double radius_at(double phi) const {
    const double a = phi - theta;
    const double c = std::cos(a), s = std::sin(a) / aspect;
    double r = 1.0 / std::sqrt(c * c + s * s);
    double jitter = 1.0;
    for (int h = 0; h < 3; ++h) jitter += amp[h] * std::cos((h + 2) * a - phase[h]);
    return scale * r * jitter;
  }
  double max_radius() const { return scale * (1.0 + amp[0] + amp[1] + amp[2]); }
  double min_radius() const { return scale * aspect * (1.0 - amp[0] - amp[1] - amp[2]); }

  // Signed radial depth inside the outline (positive inside).
  double depth(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    return radius_at(std::atan2(dy, dx)) - std::hypot(dx, dy);
  }
};

inline Outline jittered(Rng& rng, double cx, double cy, double scale, double aspect, double theta,
                        double jitter) {
  Outline o;
  o.cx = cx;
  o.cy = cy;
  o.scale = scale;
  o.aspect = aspect;
  o.theta = theta;
  for (int h = 0; h < 3; ++h) {
    o.amp[h] = rng.uniform(0.0, jitter / (h + 1));
    o.phase[h] = rng.uniform(0.0, 2.0 * M_PI);
  }
  return o;
}

struct Texture {
  std::vector<std::array<double, 3>> waves;  // kx, ky, phase
  double operator()(double x, double y) const {
    double s = 0;
    for (const auto& w : waves) s += std::cos(w[0] * x + w[1] * y + w[2]);
    return s / std::sqrt(static_cast<double>(waves.size()));
  }
};

inline Texture random_texture(Rng& rng, double wavelength, int n_waves) {
  Texture t;
  for (int i = 0; i < n_waves; ++i) {
    const double dir = rng.uniform(0.0, M_PI);
    const double k = 2.0 * M_PI / (wavelength * rng.uniform(0.7, 1.4));
    t.waves.push_back({k * std::cos(dir), k * std::sin(dir), rng.uniform(0.0, 2.0 * M_PI)});
  }
  return t;
}

}  // namespace detail

/// Builds a labeled phantom centered on spec.grid. Deterministic in spec.seed.
inline TissuePhantom generate_phantom(const PhantomSpec& spec) {
  const Grid2D& g = spec.grid;
  if (g.size() == 0) throw StructuralError("phantom: grid is empty");
  if (!(spec.body_radius > 0)) throw StructuralError("phantom: body radius must be positive");
  if (spec.lesion_count < 0) throw StructuralError("phantom: lesion count must be non-negative");
  if (!(spec.marrow_fraction > 0 && spec.marrow_fraction < 1))
    throw StructuralError("phantom: marrow fraction must lie in (0, 1)");

  const bool limb = spec.kind == OrganKind::arm || spec.kind == OrganKind::leg;
  if (!limb && !spec.bone_radii.empty()) throw StructuralError("phantom: bones are only supported for arm and leg");
  if (spec.kind != OrganKind::breast && spec.lesion_count > 0)
    throw StructuralError("phantom: lesions are only supported for breast");

  Rng rng(spec.seed);
  const double dx = g.dx;
  const double R = spec.body_radius;
  const double cx = g.x0 + 0.5 * static_cast<double>(g.nx - 1) * dx;
  const double cy = g.y0 + 0.5 * static_cast<double>(g.ny - 1) * dx;
  const double theta = spec.rotate ? rng.uniform(0.0, 2.0 * M_PI) : 0.0;

  detail::Outline body;
  switch (spec.kind) {
    case OrganKind::disc:
      body.cx = cx;
      body.cy = cy;
      body.scale = R;
      break;
    case OrganKind::breast:
      body = detail::jittered(rng, cx, cy, R, rng.uniform(0.8, 0.95), theta, 0.04);
      break;
    case OrganKind::arm:
    case OrganKind::leg:
      body = detail::jittered(rng, cx, cy, R, rng.uniform(0.85, 0.97), theta, 0.03);
      break;
  }

  // Keep at least two water cells on every side.
  const double room = 0.5 * std::min(g.extent_x(), g.extent_y()) - 2.5 * dx;
  if (body.max_radius() > room) throw StructuralError("phantom: body does not fit inside the grid");

  const double skin = spec.skin_thickness > 0 ? spec.skin_thickness : 2.0 * dx;
  if (spec.kind != OrganKind::disc && skin < 1.5 * dx)
    throw StructuralError("phantom: skin thinner than 1.5 cells cannot form a closed ring");
  const double fat = spec.fat_thickness > 0 ? spec.fat_thickness : 0.12 * R;

  LabelMap labels(g, static_cast<std::uint8_t>(Tissue::water));
  const auto put = [&](std::size_t i, Tissue t) { labels[i] = static_cast<std::uint8_t>(t); };
  const auto each = [&](auto&& fn) {
    for (std::size_t iy = 0; iy < g.ny; ++iy)
      for (std::size_t ix = 0; ix < g.nx; ++ix) fn(g.index(ix, iy), g.x(ix), g.y(iy));
  };

  if (spec.kind == OrganKind::disc) {
    each([&](std::size_t i, double x, double y) {
      if (body.depth(x, y) >= 0) put(i, spec.disc_tissue);
    });
    return TissuePhantom{std::move(labels)};
  }

  if (body.min_radius() <= skin + 2.0 * dx) throw StructuralError("phantom: body too small for its skin layer");

  if (spec.kind == OrganKind::breast) {
    const detail::Texture tex = detail::random_texture(rng, 0.35 * R, 6);
    const double gland_level = rng.uniform(-0.1, 0.3);

    struct Lesion {
      detail::Outline shape;
      Tissue tissue;
    };
    std::vector<Lesion> lesions;
    const double lr = spec.lesion_radius > 0 ? spec.lesion_radius : 0.1 * R;
    for (int k = 0; k < spec.lesion_count; ++k) {
      const bool malignant = k == 0 || rng.uniform() < 0.5;
      const double jitter = malignant ? 0.25 : 0.05;
      bool placed = false;
      for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
        const double rad = rng.uniform(0.0, 0.6) * body.min_radius();
        const double ang = rng.uniform(0.0, 2.0 * M_PI);
        detail::Outline o = detail::jittered(rng, cx + rad * std::cos(ang), cy + rad * std::sin(ang), lr,
                                             malignant ? rng.uniform(0.75, 1.0) : rng.uniform(0.6, 0.9),
                                             rng.uniform(0.0, 2.0 * M_PI), jitter);
        bool ok = rad + o.max_radius() < body.min_radius() - skin - 2.0 * dx;
        for (const auto& other : lesions)
          ok = ok && std::hypot(o.cx - other.shape.cx, o.cy - other.shape.cy) >
                         o.max_radius() + other.shape.max_radius() + 2.0 * dx;
        if (ok) {
          lesions.push_back({o, malignant ? Tissue::lesion_malignant : Tissue::lesion_benign});
          placed = true;
        }
      }
      if (!placed) throw StructuralError("phantom: cannot place lesion " + std::to_string(k));
    }

    each([&](std::size_t i, double x, double y) {
      const double d = body.depth(x, y);
      if (d < 0) return;
      if (d < skin) {
        put(i, Tissue::skin);
        return;
      }
      const double rel = std::hypot(x - cx, y - cy) / body.radius_at(std::atan2(y - cy, x - cx));
      put(i, rel < 0.75 && tex(x - cx, y - cy) > gland_level + 2.0 * std::max(0.0, rel - 0.5) ? Tissue::gland
                                                                                               : Tissue::fat);
      for (const auto& l : lesions)
        if (l.shape.depth(x, y) >= 0) put(i, l.tissue);
    });
    return TissuePhantom{std::move(labels)};
  }

  // Limbs: skin, subcutaneous fat, muscle, and bones with a marrow cavity.
  std::vector<double> radii = spec.bone_radii;
  if (radii.empty()) radii.push_back((spec.kind == OrganKind::arm ? 0.2 : 0.3) * R);
  const double muscle_room = body.min_radius() - skin - fat;
  if (muscle_room <= 2.0 * dx) throw StructuralError("phantom: no room for muscle inside skin and fat layers");

  std::vector<detail::Outline> bones;
  const double spread = radii.size() > 1 ? 1.1 * *std::max_element(radii.begin(), radii.end()) : 0.0;
  for (std::size_t b = 0; b < radii.size(); ++b) {
    const double rb = radii[b];
    if (!(rb > 0)) throw StructuralError("phantom: bone radii must be positive");
    if ((1.0 - spec.marrow_fraction) * rb * 0.9 < 2.0 * dx)
      throw StructuralError("phantom: cortical shell thinner than two cells");
    const double along = radii.size() > 1 ? spread * (2.0 * static_cast<double>(b) /
                                                          static_cast<double>(radii.size() - 1) - 1.0)
                                          : 0.0;
    const double off = rng.uniform(0.0, 0.1) * R;
    const double off_ang = rng.uniform(0.0, 2.0 * M_PI);
    const double bx = cx + along * std::cos(theta) + off * std::cos(off_ang);
    const double by = cy + along * std::sin(theta) + off * std::sin(off_ang);
    detail::Outline o = detail::jittered(rng, bx, by, rb, rng.uniform(0.9, 1.0), rng.uniform(0.0, 2.0 * M_PI), 0.03);
    if (std::hypot(bx - cx, by - cy) + o.max_radius() > muscle_room - dx)
      throw StructuralError("phantom: bone " + std::to_string(b) + " does not fit inside the muscle");
    for (const auto& other : bones)
      if (std::hypot(o.cx - other.cx, o.cy - other.cy) < o.max_radius() + other.max_radius() + 2.0 * dx)
        throw StructuralError("phantom: bones overlap");
    bones.push_back(o);
  }

  each([&](std::size_t i, double x, double y) {
    const double d = body.depth(x, y);
    if (d < 0) return;
    if (d < skin) {
      put(i, Tissue::skin);
      return;
    }
    put(i, d < skin + fat ? Tissue::fat : Tissue::muscle);
    for (const auto& o : bones) {
      const double ddx = x - o.cx, ddy = y - o.cy;
      const double r = std::hypot(ddx, ddy);
      const double rb = o.radius_at(std::atan2(ddy, ddx));
      if (r <= spec.marrow_fraction * rb)
        put(i, Tissue::marrow);
      else if (r <= rb)
        put(i, Tissue::cortical_bone);
    }
  });
  return TissuePhantom{std::move(labels)};
}

struct SpeedOptions {
  double pixel_noise = 0.0;  // m/s half-width of optional per-pixel noise
};

/// Sound-speed map: one uniform draw per connected region of each label, water left at its mean.
inline RealField assign_sound_speed(const TissuePhantom& ph, const TissueTable& tbl, std::uint64_t seed,
                                    const SpeedOptions& opt = {}) {
  const Grid2D& g = ph.grid();
  std::set<std::uint8_t> present(ph.labels.begin(), ph.labels.end());
  for (auto v : present) {
    if (v >= kAllTissues.size()) throw StructuralError("phantom: invalid label id " + std::to_string(v));
    tbl.at(static_cast<Tissue>(v));
  }
  if (!(opt.pixel_noise >= 0)) throw StructuralError("pixel noise must be non-negative");

  Rng rng(seed);
  RealField c(g, 0.0);
  for (Tissue t : kAllTissues) {
    if (!present.count(static_cast<std::uint8_t>(t))) continue;
    const TissueProperties& p = tbl.at(t);
    const Components comp = connected_components(g, [&](std::size_t i) { return ph.is(i, t); });
    std::vector<double> value(static_cast<std::size_t>(comp.count), p.mean);
    if (t != Tissue::water)
      for (auto& v : value) v = p.mean + rng.uniform(-p.half_width, p.half_width);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (comp.id[i] >= 0) c[i] = value[static_cast<std::size_t>(comp.id[i])];
  }
  if (opt.pixel_noise > 0) {
    Rng noise(seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double n = noise.uniform(-opt.pixel_noise, opt.pixel_noise);
      if (!ph.is(i, Tissue::water))
        c[i] = std::clamp(c[i] + n, TissueTable::kMinSpeed, TissueTable::kMaxSpeed);
    }
  }
  return c;
}

// JSON configuration.

inline nlohmann::json to_json(const TissueTable& t) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, p] : t.entries()) j[tissue_name(k)] = {{"mean", p.mean}, {"half_width", p.half_width}};
  return j;
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw StructuralError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw StructuralError(where + ": unknown key '" + key + "'");
  }
}

/// Table from JSON. Listed labels override the defaults.
inline TissueTable tissue_table_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw StructuralError("tissue table: expected a JSON object");
  TissueTable t = TissueTable::defaults();
  for (const auto& [name, v] : j.items()) {
    check_keys(v, {"mean", "half_width"}, "tissue table entry '" + name + "'");
    TissueProperties p = t.contains(tissue_from_name(name)) ? t.at(tissue_from_name(name)) : TissueProperties{};
    try {
      if (v.contains("mean")) p.mean = v.at("mean").get<double>();
      if (v.contains("half_width")) p.half_width = v.at("half_width").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw StructuralError("tissue table entry '" + name + "': " + e.what());
    }
    t.set(tissue_from_name(name), p);
  }
  return t;
}

inline nlohmann::json to_json(const PhantomSpec& s) {
  return {{"kind", organ_name(s.kind)},
          {"body_radius", s.body_radius},
          {"bone_radii", s.bone_radii},
          {"marrow_fraction", s.marrow_fraction},
          {"lesion_count", s.lesion_count},
          {"lesion_radius", s.lesion_radius},
          {"skin_thickness", s.skin_thickness},
          {"fat_thickness", s.fat_thickness},
          {"disc_tissue", tissue_name(s.disc_tissue)},
          {"rotate", s.rotate},
          {"seed", s.seed}};
}

/// PhantomSpec from JSON; the grid is supplied separately.
inline PhantomSpec phantom_spec_from_json(const nlohmann::json& j, const Grid2D& grid) {
  check_keys(j,
             {"kind", "body_radius", "bone_radii", "marrow_fraction", "lesion_count", "lesion_radius",
              "skin_thickness", "fat_thickness", "disc_tissue", "rotate", "seed"},
             "phantom");
  PhantomSpec s;
  s.grid = grid;
  try {
    if (j.contains("kind")) s.kind = organ_from_name(j.at("kind").get<std::string>());
    if (j.contains("body_radius")) s.body_radius = j.at("body_radius").get<double>();
    if (j.contains("bone_radii")) s.bone_radii = j.at("bone_radii").get<std::vector<double>>();
    if (j.contains("marrow_fraction")) s.marrow_fraction = j.at("marrow_fraction").get<double>();
    if (j.contains("lesion_count")) s.lesion_count = j.at("lesion_count").get<int>();
    if (j.contains("lesion_radius")) s.lesion_radius = j.at("lesion_radius").get<double>();
    if (j.contains("skin_thickness")) s.skin_thickness = j.at("skin_thickness").get<double>();
    if (j.contains("fat_thickness")) s.fat_thickness = j.at("fat_thickness").get<double>();
    if (j.contains("disc_tissue")) s.disc_tissue = tissue_from_name(j.at("disc_tissue").get<std::string>());
    if (j.contains("rotate")) s.rotate = j.at("rotate").get<bool>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError(std::string("phantom: ") + e.what());
  }
  return s;
}

/// Label map as a real field of label ids, for storage in a WTM1 container.
inline RealField labels_as_field(const TissuePhantom& ph) {
  RealField f(ph.grid());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = ph.labels[i];
  return f;
}

inline TissuePhantom labels_from_field(const RealField& f) {
  LabelMap labels(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double v = f[i];
    if (!(v >= 0 && v < static_cast<double>(kAllTissues.size())) || v != std::floor(v))
      throw StructuralError("label map holds a non-label value");
    labels[i] = static_cast<std::uint8_t>(v);
  }
  return TissuePhantom{std::move(labels)};
}

}  // namespace wavetomo
