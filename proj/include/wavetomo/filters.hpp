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

#include <cmath>
#include <vector>

#include "wavetomo/field.hpp"

namespace wavetomo {

/// Separable Gaussian blur with sigma in grid cells; kernel truncated at 4 sigma,
/// edges replicated. sigma <= 0 returns the input unchanged.
inline RealField gaussian_blur(const RealField& f, double sigma) {
  if (!(sigma > 0.0)) return f;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    kernel[static_cast<std::size_t>(k + radius)] = w;
    sum += w;
  }
  for (auto& w : kernel) w /= sum;

  const auto nx = static_cast<std::ptrdiff_t>(f.nx());
  const auto ny = static_cast<std::ptrdiff_t>(f.ny());
  RealField tmp(f.grid()), out(f.grid());
  for (std::ptrdiff_t iy = 0; iy < ny; ++iy) {
    for (std::ptrdiff_t ix = 0; ix < nx; ++ix) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const auto sx = std::clamp<std::ptrdiff_t>(ix + k, 0, nx - 1);
        acc += kernel[static_cast<std::size_t>(k + radius)] * f(static_cast<std::size_t>(sx), static_cast<std::size_t>(iy));
      }
      tmp(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy)) = acc;
    }
  }
  for (std::ptrdiff_t iy = 0; iy < ny; ++iy) {
    for (std::ptrdiff_t ix = 0; ix < nx; ++ix) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const auto sy = std::clamp<std::ptrdiff_t>(iy + k, 0, ny - 1);
        acc += kernel[static_cast<std::size_t>(k + radius)] * tmp(static_cast<std::size_t>(ix), static_cast<std::size_t>(sy));
      }
      out(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy)) = acc;
    }
  }
  return out;
}

/// Bilinear interpolation at fractional index coordinates; clamps to the grid.
template <typename T>
T sample_bilinear(const Field<T>& f, double fx, double fy) {
  const double mx = static_cast<double>(f.nx() - 1), my = static_cast<double>(f.ny() - 1);
  fx = std::clamp(fx, 0.0, mx);
  fy = std::clamp(fy, 0.0, my);
  auto ix = static_cast<std::size_t>(std::floor(fx));
  auto iy = static_cast<std::size_t>(std::floor(fy));
  ix = std::min(ix, f.nx() - 2);
  iy = std::min(iy, f.ny() - 2);
  const double tx = fx - static_cast<double>(ix), ty = fy - static_cast<double>(iy);
  return (1 - tx) * (1 - ty) * f(ix, iy) + tx * (1 - ty) * f(ix + 1, iy) +
         (1 - tx) * ty * f(ix, iy + 1) + tx * ty * f(ix + 1, iy + 1);
}

}  // namespace wavetomo
