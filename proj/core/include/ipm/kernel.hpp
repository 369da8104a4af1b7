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

#include <span>
#include <vector>

#include "ipm/grid.hpp"

namespace ipm {

/// Demographic parameters of the redistribution kernel.
///
/// Survival is logistic in total population mass, recruitment influx is
/// log-linear in it, growth increments are Gaussian and recruit sizes are
/// exponential above the lower trait bound. `beta[0]` is the intercept of
/// the multiplicative climate effect; `beta[k]` pairs with covariate k-1.
struct KernelParams {
    double q0 = 1.0;
    double q1 = 0.0;
    double mu = 0.0;
    double sigma = 1.0;
    double delta0 = 0.0;
    double delta1 = 0.0;
    double eta = 1.0;
    std::vector<double> beta{0.0};

    /// Throws invalid-argument when a positivity or sign constraint fails or
    /// when `beta` does not have `covariate_count + 1` entries.
    void validate(std::size_t covariate_count) const;

    friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

/// Covariate vector without the intercept term.
using Covariates = std::span<const double>;

/// Winter temperature and precipitation, in that order.
std::vector<double> climate_covariates(const ClimateRecord& z);

/// Linear predictor beta[0] + sum_k beta[k+1] z[k].
double climate_effect(const KernelParams& params, Covariates z);

/// q = Q0 e^{-Q1 g} / (1 + Q0 e^{-Q1 g}).
double survival_prob(const KernelParams& params, double gamma_dot);
double survival_prob_derivative(const KernelParams& params, double gamma_dot);

/// Delta = exp(delta0 - delta1 g).
double recruitment_rate(const KernelParams& params, double gamma_dot);
double recruitment_rate_derivative(const KernelParams& params, double gamma_dot);

/// Normal density of the increment with mean mu and standard deviation sigma.
double growth_density(double increment, const KernelParams& params);

/// eta e^{-eta (y - lower)} for y >= lower; throws below-threshold otherwise.
double recruit_density(double y, const KernelParams& params, double lower);

/// K(y, x) = (q f(y - x) + Delta g(y)) e^{z'beta}.
double kernel_eval(double y, double x, Covariates z, const KernelParams& params, double gamma_dot,
                   double lower);
double kernel_eval(double y, double x, const ClimateRecord& z, const KernelParams& params,
                   double gamma_dot, double lower);

/// Expected total mass one step ahead, (q + Delta) e^{z'beta} gamma_dot.
double population_update(double gamma_dot, Covariates z, const KernelParams& params);
double population_update(double gamma_dot, const ClimateRecord& z, const KernelParams& params);

}  // namespace ipm
