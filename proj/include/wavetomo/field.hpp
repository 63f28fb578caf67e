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
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wavetomo {

using complex = std::complex<double>;

/// Raised when inputs violate a structural precondition (shapes, ranges, geometry).
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Uniform isotropic 2D grid. Cell (ix, iy) sits at origin + (ix, iy) * dx.
struct Grid2D {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double dx = 0.0;
  double x0 = 0.0;
  double y0 = 0.0;

  Grid2D() = default;
  Grid2D(std::size_t nx_, std::size_t ny_, double dx_, double x0_ = 0.0, double y0_ = 0.0)
      : nx(nx_), ny(ny_), dx(dx_), x0(x0_), y0(y0_) {
    if (nx < 8 || ny < 8) throw StructuralError("Grid2D: nx and ny must be >= 8");
    if (!(dx > 0.0) || !std::isfinite(dx)) throw StructuralError("Grid2D: dx must be positive");
  }

  /// Grid centered on (0, 0).
  static Grid2D centered(std::size_t nx, std::size_t ny, double dx) {
    return Grid2D(nx, ny, dx, -0.5 * static_cast<double>(nx - 1) * dx,
                  -0.5 * static_cast<double>(ny - 1) * dx);
  }

  std::size_t size() const { return nx * ny; }
  std::size_t index(std::size_t ix, std::size_t iy) const { return iy * nx + ix; }
  double x(std::size_t ix) const { return x0 + static_cast<double>(ix) * dx; }
  double y(std::size_t iy) const { return y0 + static_cast<double>(iy) * dx; }
  double extent_x() const { return static_cast<double>(nx) * dx; }
  double extent_y() const { return static_cast<double>(ny) * dx; }

  /// Continuous (fractional) index coordinates of a physical point.
  std::pair<double, double> to_index(double px, double py) const {
    return {(px - x0) / dx, (py - y0) / dx};
  }

  /// Grid grown by `pad` cells on every side, keeping physical coordinates aligned.
  Grid2D padded(std::size_t pad) const {
    const double p = static_cast<double>(pad) * dx;
    return Grid2D(nx + 2 * pad, ny + 2 * pad, dx, x0 - p, y0 - p);
  }

  bool operator==(const Grid2D&) const = default;
};

inline bool same_shape(const Grid2D& a, const Grid2D& b) { return a.nx == b.nx && a.ny == b.ny; }

/// Row-major 2D field of scalars bound to a grid.
template <typename T>
class Field {
 public:
  using value_type = T;

  Field() = default;
  explicit Field(const Grid2D& grid, T fill = T{}) : grid_(grid), data_(grid.size(), fill) {}
  Field(const Grid2D& grid, std::vector<T> data) : grid_(grid), data_(std::move(data)) {
    if (data_.size() != grid_.size())
      throw StructuralError("Field: data length " + std::to_string(data_.size()) +
                            " does not match grid " + std::to_string(grid_.size()));
  }

  const Grid2D& grid() const { return grid_; }
  std::size_t nx() const { return grid_.nx; }
  std::size_t ny() const { return grid_.ny; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t ix, std::size_t iy) { return data_[grid_.index(ix, iy)]; }
  const T& operator()(std::size_t ix, std::size_t iy) const { return data_[grid_.index(ix, iy)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  Field& operator+=(const Field& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  template <typename S>
  Field& operator*=(S s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  void check_same(const Field& o) const {
    if (!same_shape(grid_, o.grid_)) throw StructuralError("Field: grid shape mismatch");
  }

 private:
  Grid2D grid_;
  std::vector<T> data_;
};

using RealField = Field<double>;
using ComplexField = Field<complex>;
using SoundSpeedMap = RealField;

template <typename T>
Field<T> operator+(Field<T> a, const Field<T>& b) { return a += b; }
template <typename T>
Field<T> operator-(Field<T> a, const Field<T>& b) { return a -= b; }
template <typename T, typename S>
Field<T> operator*(Field<T> a, S s) { return a *= s; }

template <typename T>
double norm2(const Field<T>& f) {
  double s = 0.0;
  for (const auto& v : f) s += std::norm(v);
  return std::sqrt(s);
}

template <typename T>
double norm2(std::span<const T> v) {
  double s = 0.0;
  for (const auto& x : v) s += std::norm(x);
  return std::sqrt(s);
}

template <typename T>
bool all_finite(const Field<T>& f) {
  for (const auto& v : f) {
    if constexpr (std::is_same_v<T, complex>) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    } else {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
  }
  return true;
}

/// Relative L2 distance ||a - b|| / ||b||.
template <typename T>
double relative_l2(const Field<T>& a, const Field<T>& b) {
  a.check_same(b);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline RealField real_part(const ComplexField& f) {
  RealField out(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i].real();
  return out;
}

inline ComplexField to_complex(const RealField& f) {
  ComplexField out(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i];
  return out;
}

enum class PadMode { edge, zero };

/// Grows a field by `pad` cells per side. Edge mode replicates the nearest interior value.
template <typename T>
Field<T> pad_extend(const Field<T>& f, std::size_t pad, PadMode mode = PadMode::edge) {
  if (pad == 0) return f;
  const Grid2D& g = f.grid();
  Field<T> out(g.padded(pad));
  const auto clampi = [](std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  for (std::size_t iy = 0; iy < out.ny(); ++iy) {
    const auto sy = static_cast<std::ptrdiff_t>(iy) - static_cast<std::ptrdiff_t>(pad);
    const bool in_y = sy >= 0 && sy < static_cast<std::ptrdiff_t>(g.ny);
    for (std::size_t ix = 0; ix < out.nx(); ++ix) {
      const auto sx = static_cast<std::ptrdiff_t>(ix) - static_cast<std::ptrdiff_t>(pad);
      const bool in_x = sx >= 0 && sx < static_cast<std::ptrdiff_t>(g.nx);
      if (in_x && in_y) {
        out(ix, iy) = f(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy));
      } else if (mode == PadMode::edge) {
        out(ix, iy) = f(clampi(sx, g.nx), clampi(sy, g.ny));
      }
    }
  }
  return out;
}

/// Removes `pad` cells per side; inverse of pad_extend.
template <typename T>
Field<T> crop(const Field<T>& f, std::size_t pad) {
  if (pad == 0) return f;
  const Grid2D& g = f.grid();
  if (g.nx < 2 * pad + 8 || g.ny < 2 * pad + 8) throw StructuralError("crop: pad too large for grid");
  const double p = static_cast<double>(pad) * g.dx;
  Field<T> out(Grid2D(g.nx - 2 * pad, g.ny - 2 * pad, g.dx, g.x0 + p, g.y0 + p));
  for (std::size_t iy = 0; iy < out.ny(); ++iy)
    for (std::size_t ix = 0; ix < out.nx(); ++ix) out(ix, iy) = f(ix + pad, iy + pad);
  return out;
}

/// Adjoint of edge-mode pad_extend: every padded cell's value is accumulated onto the
/// interior cell it was replicated from.
inline RealField fold_edge_padding(const RealField& padded, std::size_t pad) {
  if (pad == 0) return padded;
  RealField out = crop(padded, pad);
  const std::size_t nx = out.nx(), ny = out.ny();
  for (std::size_t iy = 0; iy < padded.ny(); ++iy) {
    for (std::size_t ix = 0; ix < padded.nx(); ++ix) {
      const bool inside = ix >= pad && ix < pad + nx && iy >= pad && iy < pad + ny;
      if (inside) continue;
      const std::size_t sx = std::clamp(ix, pad, pad + nx - 1) - pad;
      const std::size_t sy = std::clamp(iy, pad, pad + ny - 1) - pad;
      out(sx, sy) += padded(ix, iy);
    }
  }
  return out;
}

}  // namespace wavetomo
