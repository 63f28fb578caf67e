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

#include <cstdint>
#include <deque>
#include <vector>

#include "wavetomo/field.hpp"

namespace wavetomo {

/// 4-connected components of cells where `member(i)` holds. Component ids are assigned
/// in raster order of each component's first cell; non-members get -1.
struct Components {
  std::vector<int> id;
  int count = 0;
  std::vector<std::size_t> sizes;
  std::vector<bool> touches_border;
};

template <typename Pred>
Components connected_components(const Grid2D& g, Pred&& member) {
  Components out;
  out.id.assign(g.size(), -1);
  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < g.size(); ++start) {
    if (out.id[start] >= 0 || !member(start)) continue;
    const int label = out.count++;
    out.sizes.push_back(0);
    out.touches_border.push_back(false);
    out.id[start] = label;
    queue.push_back(start);
    while (!queue.empty()) {
      const std::size_t i = queue.front();
      queue.pop_front();
      ++out.sizes.back();
      const std::size_t ix = i % g.nx, iy = i / g.nx;
      if (ix == 0 || iy == 0 || ix + 1 == g.nx || iy + 1 == g.ny) out.touches_border.back() = true;
      const auto visit = [&](std::size_t j) {
        if (out.id[j] < 0 && member(j)) {
          out.id[j] = label;
          queue.push_back(j);
        }
      };
      if (ix > 0) visit(i - 1);
      if (ix + 1 < g.nx) visit(i + 1);
      if (iy > 0) visit(i - g.nx);
      if (iy + 1 < g.ny) visit(i + g.nx);
    }
  }
  return out;
}

/// Number of enclosed holes in a binary mask: complement components not touching the border.
template <typename Pred>
int count_holes(const Grid2D& g, Pred&& member) {
  const Components bg = connected_components(g, [&](std::size_t i) { return !member(i); });
  int holes = 0;
  for (int c = 0; c < bg.count; ++c)
    if (!bg.touches_border[static_cast<std::size_t>(c)]) ++holes;
  return holes;
}

}  // namespace wavetomo
