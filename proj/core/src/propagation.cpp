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

#include "ipm/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ipm/error.hpp"

namespace ipm {

KernelMatrix::KernelMatrix(TraitGrid grid, std::vector<double> entries)
    : grid_(std::move(grid)), entries_(std::move(entries)) {
    if (entries_.size() != grid_.size() * grid_.size()) {
        throw Error(Errc::length_mismatch, "kernel matrix must be B x B");
    }
}

std::vector<double> KernelMatrix::apply(std::span<const double> v) const {
    const std::size_t n = size();
    if (v.size() != n) {
        throw Error(Errc::length_mismatch, "vector length does not match kernel matrix");
    }
    std::vector<double> out(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double* row = entries_.data() + j * n;
        double acc = 0.0;
        for (std::size_t l = 0; l < n; ++l) {
            acc += row[l] * v[l];
        }
        out[j] = acc;
    }
    return out;
}

KernelMatrix build_kernel_matrix(const TraitGrid& grid, Covariates z, const KernelParams& params,
                                 double gamma_dot) {
    const std::size_t n = grid.size();
    const double d = grid.width();
    std::vector<double> entries(n * n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t l = 0; l < n; ++l) {
            entries[j * n + l] =
                kernel_eval(grid.center(j), grid.center(l), z, params, gamma_dot, grid.lower()) * d;
        }
    }
    return KernelMatrix(grid, std::move(entries));
}

StepOperator::StepOperator(TraitGrid grid, const KernelParams& params)
    : grid_(std::move(grid)), mu_(params.mu), sigma_(params.sigma), eta_(params.eta) {
    rebuild_growth();
    rebuild_recruits();
}

void StepOperator::update(const KernelParams& params) {
    if (params.mu != mu_ || params.sigma != sigma_) {
        mu_ = params.mu;
        sigma_ = params.sigma;
        rebuild_growth();
    }
    if (params.eta != eta_) {
        eta_ = params.eta;
        rebuild_recruits();
    }
}

void StepOperator::rebuild_growth() {
    const std::size_t n = grid_.size();
    const double d = grid_.width();
    KernelParams p;
    p.mu = mu_;
    p.sigma = sigma_;
    offsets_.assign(2 * n - 1, 0.0);
    for (std::size_t k = 0; k < offsets_.size(); ++k) {
        const double shift = (static_cast<double>(k) - static_cast<double>(n - 1)) * d;
        offsets_[k] = growth_density(shift, p) * d;
    }
    // underflowed tails are exact zeros and can be skipped
    first_nonzero_ = 0;
    while (first_nonzero_ + 1 < offsets_.size() && offsets_[first_nonzero_] == 0.0) ++first_nonzero_;
    last_nonzero_ = offsets_.size() - 1;
    while (last_nonzero_ > first_nonzero_ && offsets_[last_nonzero_] == 0.0) --last_nonzero_;
}

void StepOperator::rebuild_recruits() {
    KernelParams p;
    p.eta = eta_;
    recruits_.resize(grid_.size());
    for (std::size_t j = 0; j < grid_.size(); ++j) {
        recruits_[j] = recruit_density(grid_.center(j), p, grid_.lower());
    }
}

void StepOperator::convolve(std::span<const double> in, std::span<double> out) const {
    const std::size_t n = grid_.size();
    if (in.size() != n || out.size() != n) {
        throw Error(Errc::length_mismatch, "convolution buffers must match the grid");
    }
    // offsets_[j - l + n - 1] = d phi(x_j - x_l)
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t shift = j + n - 1;
        const std::size_t l_begin = shift > last_nonzero_ ? shift - last_nonzero_ : 0;
        const std::size_t l_end = std::min(n, shift - first_nonzero_ + 1);
        const double* k = offsets_.data() + shift;
        double acc = 0.0;
        for (std::size_t l = l_begin; l < l_end; ++l) {
            acc += *(k - l) * in[l];
        }
        out[j] = acc;
    }
}

void StepOperator::combine(std::span<const double> conv, double mass, double effect,
                           const KernelParams& params, std::span<double> out) const {
    const double scale = std::exp(effect);
    const double q = survival_prob(params, mass) * scale;
    const double influx = recruitment_rate(params, mass) * mass * scale;
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = q * conv[j] + influx * recruits_[j];
    }
}

void StepOperator::apply(std::span<const double> in, Covariates z, const KernelParams& params,
                         std::span<double> out) const {
    std::vector<double> conv(grid_.size());
    convolve(in, conv);
    combine(conv, integrate(in, grid_.width()), climate_effect(params, z), params, out);
}

IntensityField pseudo_ipm_step(const IntensityField& gamma_hat, Covariates z,
                               const KernelParams& params) {
    const StepOperator op(gamma_hat.grid(), params);
    std::vector<double> out(gamma_hat.size());
    op.apply(gamma_hat.values(), z, params, out);
    return IntensityField(gamma_hat.grid(), std::move(out), gamma_hat.year() + 1, gamma_hat.bin());
}

IntensityField pseudo_ipm_step(const IntensityField& gamma_hat, const ClimateRecord& z,
                               const KernelParams& params) {
    const auto cov = climate_covariates(z);
    return pseudo_ipm_step(gamma_hat, cov, params);
}

std::vector<IntensityField> project(const IntensityField& gamma0,
                                    std::span<const std::vector<double>> covariates,
                                    const KernelParams& params, std::size_t horizon,
                                    const ProjectionOptions& options) {
    if (covariates.size() < horizon) {
        throw Error(Errc::invalid_argument, "projection needs " + std::to_string(horizon) +
                                                " climate records, got " +
                                                std::to_string(covariates.size()));
    }
    if (options.mode == ProjectionMode::anchored && options.anchors.size() < horizon) {
        throw Error(Errc::invalid_argument, "anchored projection needs one anchor per step");
    }
    std::vector<IntensityField> out;
    out.reserve(horizon + 1);
    out.push_back(gamma0);
    const StepOperator op(gamma0.grid(), params);
    std::vector<double> next(gamma0.size());
    for (std::size_t t = 0; t < horizon; ++t) {
        const IntensityField& start =
            options.mode == ProjectionMode::anchored ? options.anchors[t] : out.back();
        if (!(start.grid() == gamma0.grid())) {
            throw Error(Errc::grid_mismatch, "anchor field lives on a different grid");
        }
        op.apply(start.values(), covariates[t], params, next);
        out.emplace_back(gamma0.grid(), next, out.back().year() + 1, gamma0.bin());
    }
    return out;
}

EigenPair dominant_eigenpair(const KernelMatrix& matrix, double tol, std::size_t max_iter) {
    const std::size_t n = matrix.size();
    const double d = matrix.grid().width();
    for (double e : matrix.entries()) {
        if (!(e >= 0.0)) {
            throw Error(Errc::invalid_argument, "power iteration needs a nonnegative matrix");
        }
    }
    std::vector<double> w(n, 1.0 / (static_cast<double>(n) * d));
    double lambda = 0.0;
    double residual = 0.0;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        std::vector<double> kw = matrix.apply(w);
        const double mass = integrate(kw, d);
        if (!(mass > 0.0) || !std::isfinite(mass)) {
            throw Error(Errc::no_convergence, "power iteration collapsed to zero");
        }
        lambda = mass;  // w has unit integral
        residual = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            residual = std::max(residual, std::abs(kw[j] - lambda * w[j]));
        }
        if (residual <= tol * lambda) {
            return {lambda, IntensityField(matrix.grid(), std::move(w)), it, residual};
        }
        for (std::size_t j = 0; j < n; ++j) {
            w[j] = kw[j] / mass;
        }
    }
    throw Error(Errc::no_convergence, "power iteration did not converge in " +
                                          std::to_string(max_iter) + " iterations (residual " +
                                          std::to_string(residual / lambda) + ")");
}

}  // namespace ipm
