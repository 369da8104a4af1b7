/*
   Copyright 2026 The ipmscale Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ipm/grid.hpp"
#include "ipm/kernel.hpp"

namespace ipm {

/// Discretized kernel operator; entry (j, l) is K(x_j, x_l) times the cell
/// width, so a step is a plain matrix-vector product.
class KernelMatrix {
public:
    KernelMatrix(TraitGrid grid, std::vector<double> entries);

    const TraitGrid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return grid_.size(); }
    double operator()(std::size_t row, std::size_t col) const { return entries_[row * size() + col]; }
    std::span<const double> entries() const noexcept { return entries_; }

    std::vector<double> apply(std::span<const double> v) const;

private:
    TraitGrid grid_;
    std::vector<double> entries_;
};

KernelMatrix build_kernel_matrix(const TraitGrid& grid, Covariates z, const KernelParams& params,
                                 double gamma_dot);

/// Matrix-free form of the one-step update. The growth part is a Toeplitz
/// convolution that depends only on (mu, sigma); the recruit profile only on
/// eta. Both are cached so that callers varying other parameters pay O(B).
class StepOperator {
public:
    StepOperator(TraitGrid grid, const KernelParams& params);

    const TraitGrid& grid() const noexcept { return grid_; }

    /// Recomputes whichever cached pieces depend on changed parameters.
    void update(const KernelParams& params);

    /// Survivor redistribution: (G v)_j = d sum_l phi(x_j - x_l) v_l.
    void convolve(std::span<const double> in, std::span<double> out) const;

    /// Recruit profile g(x_j).
    std::span<const double> recruit_profile() const noexcept { return recruits_; }

    /// out = e^{effect} (q(mass) conv + Delta(mass) mass g), with `conv` the
    /// output of `convolve` for the same input.
    void combine(std::span<const double> conv, double mass, double effect,
                 const KernelParams& params, std::span<double> out) const;

    void apply(std::span<const double> in, Covariates z, const KernelParams& params,
               std::span<double> out) const;

private:
    TraitGrid grid_;
    double mu_;
    double sigma_;
    double eta_;
    std::vector<double> offsets_;  // d phi(k d) for k = -(B-1) .. B-1
    std::size_t first_nonzero_ = 0;
    std::size_t last_nonzero_ = 0;
    std::vector<double> recruits_;

    void rebuild_growth();
    void rebuild_recruits();
};

/// gamma_{t+1}(x_j) = sum_l K(x_j, x_l; z, theta, gamma_dot) gamma_hat(x_l) d, with
/// gamma_dot = integrate(gamma_hat) driving density dependence.
IntensityField pseudo_ipm_step(const IntensityField& gamma_hat, Covariates z,
                               const KernelParams& params);
IntensityField pseudo_ipm_step(const IntensityField& gamma_hat, const ClimateRecord& z,
                               const KernelParams& params);

enum class ProjectionMode {
    chained,   // each output feeds the next step
    anchored,  // step t starts from anchors[t] (empirical intensities)
};

struct ProjectionOptions {
    ProjectionMode mode = ProjectionMode::chained;
    std::span<const IntensityField> anchors;
};

/// Runs `horizon` steps, step t using covariates[t]. Returns horizon + 1
/// fields starting with gamma0.
std::vector<IntensityField> project(const IntensityField& gamma0,
                                    std::span<const std::vector<double>> covariates,
                                    const KernelParams& params, std::size_t horizon,
                                    const ProjectionOptions& options = {});

struct EigenPair {
    double growth_rate = 0.0;
    IntensityField stable_distribution;
    std::size_t iterations = 0;
    double residual = 0.0;  // ||K w - Lambda w||_inf for the unit-integral w
};

/// Power iteration from the uniform field. Stops once the residual is at most
/// tol * Lambda; throws no-convergence after max_iter iterations.
EigenPair dominant_eigenpair(const KernelMatrix& matrix, double tol, std::size_t max_iter);

}  // namespace ipm
