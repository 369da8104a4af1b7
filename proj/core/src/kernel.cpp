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

#include "ipm/kernel.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ipm/error.hpp"

namespace ipm {

namespace {

void require_population(double gamma_dot) {
    if (!(gamma_dot >= 0.0)) {
        throw Error(Errc::negative_population,
                    "population mass must be nonnegative, got " + std::to_string(gamma_dot));
    }
}

}  // namespace

void KernelParams::validate(std::size_t covariate_count) const {
    auto fail = [](const char* what) { throw Error(Errc::invalid_argument, what); };
    if (!(q0 > 0.0)) fail("Q0 must be positive");
    if (!(q1 >= 0.0)) fail("Q1 must be nonnegative");
    if (!std::isfinite(mu)) fail("mu must be finite");
    if (!(sigma > 0.0)) fail("sigma must be positive");
    if (!(delta0 >= 0.0)) fail("delta0 must be nonnegative");
    if (!(delta1 >= 0.0)) fail("delta1 must be nonnegative");
    if (!(eta > 0.0)) fail("eta must be positive");
    if (beta.size() != covariate_count + 1) {
        throw Error(Errc::invalid_argument, "beta needs " + std::to_string(covariate_count + 1) +
                                                " entries (intercept first), got " +
                                                std::to_string(beta.size()));
    }
}

std::vector<double> climate_covariates(const ClimateRecord& z) {
    return {z.winter_temp, z.annual_precip};
}

double climate_effect(const KernelParams& params, Covariates z) {
    if (params.beta.size() != z.size() + 1) {
        throw Error(Errc::length_mismatch, "beta has " + std::to_string(params.beta.size()) +
                                               " entries for " + std::to_string(z.size()) +
                                               " covariates");
    }
    double eta = params.beta[0];
    for (std::size_t k = 0; k < z.size(); ++k) {
        eta += params.beta[k + 1] * z[k];
    }
    return eta;
}

double survival_prob(const KernelParams& params, double gamma_dot) {
    require_population(gamma_dot);
    // logistic(log Q0 - Q1 g), written to stay accurate for large Q1 g
    const double a = std::log(params.q0) - params.q1 * gamma_dot;
    if (a >= 0.0) {
        return 1.0 / (1.0 + std::exp(-a));
    }
    const double e = std::exp(a);
    return e / (1.0 + e);
}

double survival_prob_derivative(const KernelParams& params, double gamma_dot) {
    const double q = survival_prob(params, gamma_dot);
    return -params.q1 * q * (1.0 - q);
}

double recruitment_rate(const KernelParams& params, double gamma_dot) {
    require_population(gamma_dot);
    return std::exp(params.delta0 - params.delta1 * gamma_dot);
}

double recruitment_rate_derivative(const KernelParams& params, double gamma_dot) {
    return -params.delta1 * recruitment_rate(params, gamma_dot);
}

double growth_density(double increment, const KernelParams& params) {
    const double u = (increment - params.mu) / params.sigma;
    return std::exp(-0.5 * u * u) / (params.sigma * std::sqrt(2.0 * std::numbers::pi));
}

double recruit_density(double y, const KernelParams& params, double lower) {
    if (y < lower) {
        throw Error(Errc::below_threshold, "recruit size " + std::to_string(y) +
                                               " below lower bound " + std::to_string(lower));
    }
    return params.eta * std::exp(-params.eta * (y - lower));
}

double kernel_eval(double y, double x, Covariates z, const KernelParams& params, double gamma_dot,
                   double lower) {
    const double q = survival_prob(params, gamma_dot);
    const double influx = recruitment_rate(params, gamma_dot);
    const double growth = growth_density(y - x, params);
    const double recruits = recruit_density(y, params, lower);
    return (q * growth + influx * recruits) * std::exp(climate_effect(params, z));
}

double kernel_eval(double y, double x, const ClimateRecord& z, const KernelParams& params,
                   double gamma_dot, double lower) {
    const auto cov = climate_covariates(z);
    return kernel_eval(y, x, cov, params, gamma_dot, lower);
}

double population_update(double gamma_dot, Covariates z, const KernelParams& params) {
    require_population(gamma_dot);
    const double factor = survival_prob(params, gamma_dot) + recruitment_rate(params, gamma_dot);
    return factor * std::exp(climate_effect(params, z)) * gamma_dot;
}

double population_update(double gamma_dot, const ClimateRecord& z, const KernelParams& params) {
    const auto cov = climate_covariates(z);
    return population_update(gamma_dot, cov, params);
}

}  // namespace ipm
