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

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "ipm/kernel.hpp"
#include "support.hpp"

using namespace ipm;
using ipm::test::error_code;
using hp = boost::multiprecision::cpp_bin_float_50;

namespace {

KernelParams params(double q0, double q1, double d0, double d1) {
    KernelParams p;
    p.q0 = q0;
    p.q1 = q1;
    p.delta0 = d0;
    p.delta1 = d1;
    return p;
}

}  // namespace

TEST_SUITE("kernel") {

TEST_CASE("survival probability") {
    CHECK(survival_prob(params(1, 0.01, 0, 0), 0.0) == doctest::Approx(0.5).epsilon(1e-15));
    const hp e = exp(hp(-1));
    const double oracle = static_cast<double>(e / (1 + e));
    CHECK(survival_prob(params(1, 0.01, 0, 0), 100.0) == doctest::Approx(oracle).epsilon(1e-14));
    CHECK(oracle == doctest::Approx(0.26894).epsilon(1e-5));
    for (double q1 : {0.0, 0.3, 7.0}) {
        CHECK(survival_prob(params(9, q1, 0, 0), 0.0) == doctest::Approx(0.9).epsilon(1e-15));
    }
    CHECK(error_code([] { survival_prob(params(1, 0.1, 0, 0), -1.0); }) ==
          Errc::negative_population);
}

TEST_CASE("survival stays in (0,1) and decreases") {
    auto p = params(3, 0.2, 0, 0);
    double prev = 1.0;
    for (double g = 0.0; g < 1500.0; g += 7.3) {
        const double q = survival_prob(p, g);
        CHECK(q > 0.0);
        CHECK(q < 1.0);
        CHECK(q < prev);
        prev = q;
    }
    auto flat = params(3, 0.0, 0, 0);
    CHECK(survival_prob(flat, 0.0) == survival_prob(flat, 1e6));
}

TEST_CASE("recruitment rate") {
    CHECK(recruitment_rate(params(1, 0, 0, 0), 123.0) == 1.0);
    CHECK(recruitment_rate(params(1, 0, 0.3, 0.01), 30.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(recruitment_rate(params(1, 0, 0.3, 0), 50.0) ==
          doctest::Approx(static_cast<double>(exp(hp("0.3")))).epsilon(1e-15));
    CHECK(recruitment_rate(params(1, 0, 0.7, 0.4), 0.0) == doctest::Approx(std::exp(0.7)));
    CHECK(error_code([] { recruitment_rate(params(1, 0, 0, 0), -0.5); }) ==
          Errc::negative_population);
}

TEST_CASE("analytic derivatives match finite differences") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        auto p = params(0.2 + 5 * u(rng), 0.05 * u(rng), u(rng), 0.05 * u(rng));
        const double g = 1.0 + 100.0 * u(rng);
        const double h = 1e-4;
        const double dq = (survival_prob(p, g + h) - survival_prob(p, g - h)) / (2 * h);
        const double dd = (recruitment_rate(p, g + h) - recruitment_rate(p, g - h)) / (2 * h);
        CHECK(survival_prob_derivative(p, g) == doctest::Approx(dq).epsilon(1e-6));
        CHECK(recruitment_rate_derivative(p, g) == doctest::Approx(dd).epsilon(1e-6));
    }
}

TEST_CASE("growth density") {
    KernelParams p;
    p.sigma = 0.25;
    const double peak = static_cast<double>(1 / (hp("0.25") * sqrt(2 * boost::math::constants::pi<hp>())));
    CHECK(growth_density(0.0, p) == doctest::Approx(peak).epsilon(1e-15));
    CHECK(peak == doctest::Approx(1.59577).epsilon(1e-5));
    p.mu = 0.4;
    for (double a : {0.01, 0.3, 1.7}) CHECK(growth_density(0.4 + a, p) ==
                                          doctest::Approx(growth_density(0.4 - a, p)).epsilon(1e-12));
    CHECK(growth_density(0.4 + 10 * 0.25, p) < 1e-20);
    CHECK(growth_density(0.4 - 10 * 0.25, p) < 1e-20);

    // integrates to one
    double sum = 0.0;
    const double h = 1e-3;
    for (double x = -5.0; x <= 5.0; x += h) sum += growth_density(x, p) * h;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("recruit density") {
    KernelParams p;
    p.eta = 0.1;
    CHECK(recruit_density(12.7, p, 12.7) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(recruit_density(22.7, p, 12.7) == doctest::Approx(0.1 * std::exp(-1.0)).epsilon(1e-14));
    CHECK(recruit_density(22.7, p, 12.7) == doctest::Approx(0.036788).epsilon(1e-5));
    CHECK(error_code([&] { recruit_density(11.7, p, 12.7); }) == Errc::below_threshold);
}

TEST_CASE("kernel composes its components") {
    KernelParams p = params(1, 0.01, 0.3, 0.0);
    p.sigma = 0.25;
    p.eta = 0.1;
    p.beta = {0.0, 0.0, 0.0};
    const double L = 0.0, x = 50.0, g = 40.0;
    const ClimateRecord z{2.0, 700.0};
    const double q = survival_prob(p, g);
    const double delta = recruitment_rate(p, g);
    const double expected = q * 1.5957691216057308 + delta * 0.1 * std::exp(-0.1 * x);
    CHECK(kernel_eval(x, x, z, p, g, L) == doctest::Approx(expected).epsilon(1e-14));

    // multiplicative climate effect
    KernelParams pz = p;
    pz.beta = {0.2, -0.1, 0.002};
    const double effect = std::exp(0.2 - 0.1 * 2.0 + 0.002 * 700.0);
    for (double y : {0.5, 10.0, 49.0, 50.3}) {
        CHECK(kernel_eval(y, x, z, pz, g, L) / kernel_eval(y, x, z, p, g, L) ==
              doctest::Approx(effect).epsilon(1e-13));
    }

    // both components vanish for very strong density dependence
    KernelParams strong = p;
    strong.q1 = 50.0;
    strong.delta1 = 50.0;
    CHECK(kernel_eval(x, x, z, strong, g, L) < 1e-300);
    CHECK(kernel_eval(x, x, z, p, g, L) >= 0.0);
}

TEST_CASE("kernel mass identity") {
    // integrate K over y on a wide domain: survivors over R, recruits over [L, inf)
    KernelParams p = params(2, 0.02, 0.1, 0.005);
    p.sigma = 1.5;
    p.eta = 0.3;
    p.beta = {0.1};
    const double L = 0.0, x = 40.0, g = 25.0;
    double sum = 0.0;
    const double h = 1e-3;
    for (double y = L + h / 2; y < 200.0; y += h) sum += kernel_eval(y, x, Covariates{}, p, g, L) * h;
    const double expected = (survival_prob(p, g) + recruitment_rate(p, g)) * std::exp(0.1);
    CHECK(sum == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("population update") {
    KernelParams p = params(1, 0, 0, 0);
    CHECK(population_update(100.0, Covariates{}, p) == doctest::Approx(150.0));
    CHECK(population_update(0.0, Covariates{}, p) == 0.0);
    CHECK(error_code([&] { population_update(-1.0, Covariates{}, p); }) == Errc::negative_population);
}

TEST_CASE("parameter validation") {
    KernelParams p;
    CHECK_NOTHROW(p.validate(0));
    CHECK(error_code([&] { p.validate(1); }) == Errc::invalid_argument);
    auto bad = [](auto mutate) {
        KernelParams q;
        mutate(q);
        return error_code([&] { q.validate(0); });
    };
    CHECK(bad([](KernelParams& q) { q.q0 = 0.0; }) == Errc::invalid_argument);
    CHECK(bad([](KernelParams& q) { q.q1 = -0.1; }) == Errc::invalid_argument);
    CHECK(bad([](KernelParams& q) { q.sigma = 0.0; }) == Errc::invalid_argument);
    CHECK(bad([](KernelParams& q) { q.delta0 = -1.0; }) == Errc::invalid_argument);
    CHECK(bad([](KernelParams& q) { q.delta1 = -1.0; }) == Errc::invalid_argument);
    CHECK(bad([](KernelParams& q) { q.eta = 0.0; }) == Errc::invalid_argument);
}

}  // TEST_SUITE
