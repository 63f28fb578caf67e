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

// Test-only oracle: assembles the discretized Helmholtz operator as a dense matrix and
// solves it with LU. The Laplacian kernel is built from explicit cosine sums, so nothing
// here goes through the FFT path used by the solvers.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "wavetomo/field.hpp"

namespace wavetomo::oracle {

/// 1D periodic spectral second-derivative kernel: k(d) = (1/n) sum_j -p_j^2 cos(2 pi j d / n).
inline std::vector<double> spectral_d2_kernel(std::size_t n, double dx) {
  std::vector<double> out(n, 0.0);
  for (std::size_t d = 0; d < n; ++d) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double sj = j <= n / 2 ? static_cast<double>(j) : static_cast<double>(j) - static_cast<double>(n);
      const double p = 2.0 * M_PI * sj / (static_cast<double>(n) * dx);
      acc += -p * p * std::cos(2.0 * M_PI * static_cast<double>(j * d) / static_cast<double>(n));
    }
    out[d] = acc / static_cast<double>(n);
  }
  return out;
}

/// Dense matrix of lap + diag(diagonal) on the grid (row-major unknown ordering).
inline Eigen::MatrixXcd helmholtz_matrix(const Grid2D& g, const std::vector<complex>& diagonal) {
  const std::size_t n = g.size();
  const auto kx = spectral_d2_kernel(g.nx, g.dx);
  const auto ky = spectral_d2_kernel(g.ny, g.dx);
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t iy = 0; iy < g.ny; ++iy)
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const auto row = static_cast<Eigen::Index>(g.index(ix, iy));
      for (std::size_t jx = 0; jx < g.nx; ++jx)
        a(row, static_cast<Eigen::Index>(g.index(jx, iy))) += kx[(ix + g.nx - jx) % g.nx];
      for (std::size_t jy = 0; jy < g.ny; ++jy)
        a(row, static_cast<Eigen::Index>(g.index(ix, jy))) += ky[(iy + g.ny - jy) % g.ny];
      a(row, row) += diagonal[g.index(ix, iy)];
    }
  return a;
}

/// Factorized operator [lap + (omega/c)^2 + i a] so several right-hand sides can be solved.
class DenseHelmholtz {
 public:
  DenseHelmholtz(const RealField& c, double omega, const RealField* absorption = nullptr) : grid_(c.grid()) {
    std::vector<complex> diag(c.size());
    for (std::size_t i = 0; i < c.size(); ++i)
      diag[i] = complex(std::pow(omega / c[i], 2), absorption ? (*absorption)[i] : 0.0);
    lu_.compute(helmholtz_matrix(grid_, diag));
  }

  /// Solves A u = -rho.
  ComplexField solve(const ComplexField& rho) const {
    Eigen::VectorXcd b(static_cast<Eigen::Index>(rho.size()));
    for (std::size_t i = 0; i < rho.size(); ++i) b(static_cast<Eigen::Index>(i)) = -rho[i];
    const Eigen::VectorXcd x = lu_.solve(b);
    ComplexField u(grid_);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = x(static_cast<Eigen::Index>(i));
    return u;
  }

 private:
  Grid2D grid_;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
};

/// Dense inverse of the damped reference operator (lap + kappa^2 + i eps), applied to f;
/// equals the Green operator applied to -(-f), i.e. G f.
inline ComplexField dense_green(const ComplexField& f, double kappa2, double eps) {
  const std::vector<complex> diag(f.size(), complex(kappa2, eps));
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(helmholtz_matrix(f.grid(), diag));
  Eigen::VectorXcd b(static_cast<Eigen::Index>(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i) b(static_cast<Eigen::Index>(i)) = -f[i];
  const Eigen::VectorXcd x = lu.solve(b);
  ComplexField out(f.grid());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace wavetomo::oracle
