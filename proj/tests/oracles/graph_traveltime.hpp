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

// Test-only oracle: first-arrival times from shortest paths on a dense stencil graph, fully
// independent of the sweeping solver.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include "wavetomo/filters.hpp"

namespace wavetomo::oracle {

// Shortest paths on a graph joining each node to all nodes reachable by moves (i, j) with
// |i|, |j| <= 3 and gcd 1; edge cost = length times the mean slowness sampled along the edge.
inline RealField dijkstra_traveltime(const RealField& c, std::size_t sx, std::size_t sy) {
  const Grid2D& g = c.grid();
  std::vector<std::pair<int, int>> moves;
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j)
      if ((i || j) && std::gcd(std::abs(i), std::abs(j)) == 1) moves.emplace_back(i, j);
  RealField T(g, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  T(sx, sy) = 0.0;
  pq.emplace(0.0, g.index(sx, sy));
  while (!pq.empty()) {
    const auto [t, k] = pq.top();
    pq.pop();
    if (t > T[k]) continue;
    const long ix = static_cast<long>(k % g.nx), iy = static_cast<long>(k / g.nx);
    for (const auto& [mi, mj] : moves) {
      const long jx = ix + mi, jy = iy + mj;
      if (jx < 0 || jy < 0 || jx >= static_cast<long>(g.nx) || jy >= static_cast<long>(g.ny)) continue;
      constexpr int samples = 16;
      double slow = 0.0;
      for (int q = 0; q < samples; ++q) {
        const double a = (q + 0.5) / samples;
        slow += 1.0 / sample_bilinear(c, static_cast<double>(ix) + a * mi, static_cast<double>(iy) + a * mj);
      }
      const double cost = std::hypot(mi, mj) * g.dx * slow / samples;
      const std::size_t kk = g.index(static_cast<std::size_t>(jx), static_cast<std::size_t>(jy));
      if (t + cost < T[kk]) {
        T[kk] = t + cost;
        pq.emplace(T[kk], kk);
      }
    }
  }
  return T;
}

}  // namespace wavetomo::oracle
