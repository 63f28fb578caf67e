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

#include <memory>

#include "wavetomo/field.hpp"
#include "wavetomo/helmholtz.hpp"

namespace wavetomo {

/// Maps (sound speed, source, angular frequency) to the wavefield solving
/// [lap + (omega/c)^2] u = -rho on a padded computational grid. Implementations must be
/// linear in the source and deterministic; a CBS solve is the reference implementation,
/// and a learned surrogate can be substituted behind the same interface.
class ForwardOperator {
 public:
  virtual ~ForwardOperator() = default;

  /// `initial_guess`, when given, may be used to warm-start an iterative solver.
  virtual ComplexField solve(const RealField& c, const ComplexField& rho, double omega,
                             const ComplexField* initial_guess = nullptr) const = 0;

  /// Width of the outer buffer the operator expects around the model; callers edge-pad c and
  /// zero-pad sources by this many cells.
  virtual std::size_t padding() const = 0;
};

/// Reference forward operator: CBS with an absorbing layer in the outer `cfg.pad` cells
/// of the grid it is handed.
class CbsForwardOperator final : public ForwardOperator {
 public:
  explicit CbsForwardOperator(SolverConfig cfg) : cfg_(cfg) {}

  ComplexField solve(const RealField& c, const ComplexField& rho, double omega,
                     const ComplexField* initial_guess = nullptr) const override {
    return solve_with_report(c, rho, omega, initial_guess).first;
  }

  std::pair<ComplexField, SolveReport> solve_with_report(const RealField& c, const ComplexField& rho, double omega,
                                                         const ComplexField* initial_guess = nullptr) const {
    const HelmholtzProblem problem = make_problem(c, rho, omega, cfg_);
    return cbs_solve(problem, cfg_.tol, cfg_.n_max, initial_guess);
  }

  std::size_t padding() const override { return cfg_.pad; }

  const SolverConfig& config() const { return cfg_; }

 private:
  SolverConfig cfg_;
};

}  // namespace wavetomo
