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

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

#include "wavetomo/field.hpp"

namespace wavetomo {

namespace detail {

// FFTW planning is not thread-safe; execution with the new-array interface is.
// Plans are created once per (shape, direction) with FFTW_UNALIGNED so they can
// run on any std::vector buffer, and FFTW_ESTIMATE so the chosen algorithm (and
// hence every rounding) is identical between runs.
class FftPlanCache {
 public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  fftw_plan get(std::size_t nx, std::size_t ny, int sign) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(nx, ny, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    auto* scratch = fftw_alloc_complex(nx * ny);
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(ny), static_cast<int>(nx), scratch, scratch,
                                      sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(scratch);
    plans_.emplace(key, plan);
    return plan;
  }

  FftPlanCache(const FftPlanCache&) = delete;
  FftPlanCache& operator=(const FftPlanCache&) = delete;

 private:
  FftPlanCache() = default;
  ~FftPlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

inline void execute_inplace(ComplexField& f, int sign) {
  fftw_plan plan = FftPlanCache::instance().get(f.nx(), f.ny(), sign);
  auto* p = reinterpret_cast<fftw_complex*>(f.data());
  fftw_execute_dft(plan, p, p);
}

}  // namespace detail

/// Unnormalized forward transform in place: F[k] = sum_x f[x] exp(-i 2pi k.x / N).
inline void fft2_inplace(ComplexField& f) { detail::execute_inplace(f, FFTW_FORWARD); }

/// Inverse transform in place, divided by nx*ny so ifft2(fft2(f)) == f.
inline void ifft2_inplace(ComplexField& f) {
  detail::execute_inplace(f, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(f.size());
  for (auto& v : f) v *= scale;
}

inline ComplexField fft2(ComplexField f) {
  fft2_inplace(f);
  return f;
}

inline ComplexField ifft2(ComplexField f) {
  ifft2_inplace(f);
  return f;
}

/// Angular wavenumber (rad/m) of FFT bin k on an axis of n samples spaced dx.
inline double fft_wavenumber(std::size_t k, std::size_t n, double dx) {
  const auto kk = static_cast<std::ptrdiff_t>(k);
  const auto nn = static_cast<std::ptrdiff_t>(n);
  const std::ptrdiff_t signed_k = kk <= nn / 2 ? kk : kk - nn;
  return 2.0 * M_PI * static_cast<double>(signed_k) / (static_cast<double>(n) * dx);
}

/// Squared Fourier wavenumber magnitude p^2 = px^2 + py^2 on the FFT bin layout of a grid.
struct SpectralCoords {
  Grid2D grid;
  RealField p2;

  explicit SpectralCoords(const Grid2D& g) : grid(g), p2(g) {
    std::vector<double> px2(g.nx), py2(g.ny);
    for (std::size_t k = 0; k < g.nx; ++k) px2[k] = std::pow(fft_wavenumber(k, g.nx, g.dx), 2);
    for (std::size_t k = 0; k < g.ny; ++k) py2[k] = std::pow(fft_wavenumber(k, g.ny, g.dx), 2);
    for (std::size_t iy = 0; iy < g.ny; ++iy)
      for (std::size_t ix = 0; ix < g.nx; ++ix) p2(ix, iy) = px2[ix] + py2[iy];
  }
};

/// Spectral Laplacian: F^-1[-p^2 F[u]].
inline ComplexField spectral_laplacian(const ComplexField& u, const SpectralCoords& coords) {
  if (!same_shape(u.grid(), coords.grid)) throw StructuralError("spectral_laplacian: grid mismatch");
  ComplexField w = fft2(u);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] *= -coords.p2[i];
  ifft2_inplace(w);
  return w;
}

}  // namespace wavetomo
