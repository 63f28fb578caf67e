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
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "wavetomo/field.hpp"

namespace wavetomo {

/// Per-item values with summary statistics (population standard deviation).
struct MetricReport {
  std::string metric;
  std::vector<double> values;
  std::vector<std::size_t> excluded;  // items that could not be scored
  double mean = 0.0;
  double stddev = 0.0;

  std::size_t count() const { return values.size(); }

  void summarize() {
    mean = stddev = 0.0;
    if (values.empty()) return;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    for (double v : values) stddev += (v - mean) * (v - mean);
    stddev = std::sqrt(stddev / static_cast<double>(values.size()));
  }

  /// "0.958 ± 0.031" style.
  std::string formatted(int digits = 3) const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f ± %.*f", digits, mean, digits, stddev);
    return buf;
  }
};

inline nlohmann::json to_json(const MetricReport& r) {
  return {{"metric", r.metric}, {"values", r.values},     {"count", r.count()},
          {"mean", r.mean},     {"std", r.stddev},        {"excluded", r.excluded},
          {"summary", r.formatted()}};
}

/// ||u - u_hat|| / ||u|| for one pair of sample vectors.
template <typename T>
double rrmse_item(std::span<const T> u, std::span<const T> u_hat) {
  if (u.size() != u_hat.size()) throw StructuralError("rrmse: sample counts differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    num += std::norm(u[i] - u_hat[i]);
    den += std::norm(u[i]);
  }
  if (!(den > 0.0)) throw StructuralError("rrmse: reference field has zero norm");
  return std::sqrt(num / den);
}

template <typename T>
double rrmse_item(const Field<T>& u, const Field<T>& u_hat) {
  u.check_same(u_hat);
  return rrmse_item(u.values(), u_hat.values());
}

/// Mean relative L2 error over items; zero-norm references are excluded and listed.
template <typename T>
MetricReport rrmse(const std::vector<Field<T>>& truth, const std::vector<Field<T>>& pred) {
  if (truth.size() != pred.size()) throw StructuralError("rrmse: item counts differ");
  MetricReport r;
  r.metric = "rrmse";
  for (std::size_t k = 0; k < truth.size(); ++k) {
    truth[k].check_same(pred[k]);
    if (norm2(truth[k]) == 0.0) {
      r.excluded.push_back(k);
      continue;
    }
    r.values.push_back(rrmse_item(truth[k], pred[k]));
  }
  r.summarize();
  return r;
}

struct SsimOptions {
  double dynamic_range = 0.0;   // L; 0 selects max - min of the reference
  bool windowed = false;        // Gaussian-window local statistics, averaged over the map
  double window_sigma = 1.5;    // cells
  int window_radius = 5;        // cells
};

namespace detail {

inline double ssim_from_stats(double mx, double my, double vx, double vy, double cxy, double c1, double c2) {
  return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

inline double dynamic_range_of(const RealField& ref, double requested) {
  if (requested > 0.0) return requested;
  if (requested < 0.0) throw StructuralError("ssim: dynamic range must be positive");
  const auto [lo, hi] = std::minmax_element(ref.begin(), ref.end());
  const double L = *hi - *lo;
  return L > 0.0 ? L : 1.0;
}

}  // namespace detail

/// Global-statistics structural similarity: means, variances (1/N) and covariance
/// with C1 = (0.01 L)^2 and C2 = (0.03 L)^2. L <= 0 selects max - min of x.
inline double ssim_global(std::span<const double> x, std::span<const double> y, double dynamic_range = 0.0) {
  if (x.size() != y.size() || x.empty()) throw StructuralError("ssim: sample counts differ or are empty");
  if (dynamic_range < 0.0) throw StructuralError("ssim: dynamic range must be positive");
  double L = dynamic_range;
  if (L == 0.0) {
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    L = *hi > *lo ? *hi - *lo : 1.0;
  }
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cxy += (x[i] - mx) * (y[i] - my);
  }
  return detail::ssim_from_stats(mx, my, vx / n, vy / n, cxy / n, c1, c2);
}

/// SSIM of two maps; global statistics unless opt.windowed.
inline double ssim(const RealField& x, const RealField& y, const SsimOptions& opt = {}) {
  x.check_same(y);
  if (!opt.windowed) return ssim_global(x.values(), y.values(), opt.dynamic_range);
  const double L = detail::dynamic_range_of(x, opt.dynamic_range);
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);

  // Local statistics under a truncated Gaussian window; windows are clipped at the border.
  const Grid2D& g = x.grid();
  const int r = opt.window_radius;
  std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
  for (int k = -r; k <= r; ++k) w[static_cast<std::size_t>(k + r)] = std::exp(-0.5 * k * k / (opt.window_sigma * opt.window_sigma));
  double total = 0.0;
  for (std::size_t iy = 0; iy < g.ny; ++iy)
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      double sw = 0, mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const long jy = static_cast<long>(iy) + dy;
        if (jy < 0 || jy >= static_cast<long>(g.ny)) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const long jx = static_cast<long>(ix) + dx;
          if (jx < 0 || jx >= static_cast<long>(g.nx)) continue;
          const double wt = w[static_cast<std::size_t>(dx + r)] * w[static_cast<std::size_t>(dy + r)];
          const double a = x(static_cast<std::size_t>(jx), static_cast<std::size_t>(jy));
          const double b = y(static_cast<std::size_t>(jx), static_cast<std::size_t>(jy));
          sw += wt;
          mx += wt * a;
          my += wt * b;
          sxx += wt * a * a;
          syy += wt * b * b;
          sxy += wt * a * b;
        }
      }
      mx /= sw;
      my /= sw;
      total += detail::ssim_from_stats(mx, my, sxx / sw - mx * mx, syy / sw - my * my, sxy / sw - mx * my, c1, c2);
    }
  return total / static_cast<double>(g.size());
}

inline MetricReport ssim(const std::vector<RealField>& truth, const std::vector<RealField>& pred,
                         const SsimOptions& opt = {}) {
  if (truth.size() != pred.size()) throw StructuralError("ssim: item counts differ");
  MetricReport r;
  r.metric = "ssim";
  for (std::size_t k = 0; k < truth.size(); ++k) r.values.push_back(ssim(truth[k], pred[k], opt));
  r.summarize();
  return r;
}

}  // namespace wavetomo
