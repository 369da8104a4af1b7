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

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "ipm/cox.hpp"
#include "support.hpp"

using namespace ipm;
using ipm::test::error_code;

TEST_SUITE("cox") {

TEST_CASE("bin counts") {
    auto g = discretize(0.0, 10.0, 5);
    PointPattern p;
    p.diameters = {1.0, 3.0, 9.0};
    auto c = bin_counts(p, g);
    CHECK(c.counts == std::vector<std::int64_t>{1, 1, 0, 0, 1});
    CHECK(c.total() == 3);

    PointPattern empty;
    CHECK(bin_counts(empty, g).counts == std::vector<std::int64_t>(5, 0));

    PointPattern top;
    top.diameters = {10.0};
    CHECK(bin_counts(top, g).counts[4] == 1);

    PointPattern out;
    out.diameters = {10.5};
    CHECK(error_code([&] { bin_counts(out, g); }) == Errc::out_of_range);
}

TEST_CASE("bin counts conserve the pooled total") {
    auto g = discretize(12.7, 112.7, 100);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(12.7, 112.7);
    std::vector<PointPattern> ps(7);
    std::int64_t n = 0;
    for (auto& p : ps) {
        const int k = static_cast<int>(rng() % 40);
        for (int i = 0; i < k; ++i) p.diameters.push_back(u(rng));
        n += k;
    }
    CHECK(bin_counts(ps, g, 0).total() == n);
}

TEST_CASE("log likelihood closed forms") {
    auto g = discretize(0.0, 10.0, 10);
    IntensityField lambda(g, std::vector<double>(10, 2.0));
    CellCounts c{g, {1, 0, 0, 2, 0, 0, 0, 1, 0, 1}, 0, kPlotLevel};
    CHECK(log_likelihood(c, lambda, 1) == doctest::Approx(-20.0 + 5.0 * std::log(2.0)).epsilon(1e-14));
    CHECK(log_likelihood(c, lambda, 1) == doctest::Approx(-16.53426).epsilon(1e-6));
    CHECK(log_likelihood(c, lambda, 3) == doctest::Approx(-60.0 + 5.0 * std::log(6.0)).epsilon(1e-14));

    CellCounts none{g, std::vector<std::int64_t>(10, 0), 0, kPlotLevel};
    CHECK(log_likelihood(none, lambda, 2) == doctest::Approx(-40.0));
}

TEST_CASE("log likelihood errors") {
    auto g = discretize(0.0, 10.0, 10);
    std::vector<double> v(10, 1.0);
    v[4] = 0.0;
    IntensityField lambda(g, v);
    CellCounts c{g, std::vector<std::int64_t>(10, 0), 0, kPlotLevel};
    CHECK_NOTHROW(log_likelihood(c, lambda, 1));
    c.counts[4] = 1;
    CHECK(error_code([&] { log_likelihood(c, lambda, 1); }) == Errc::zero_intensity_with_count);
    c.counts[4] = 0;
    CHECK(error_code([&] { log_likelihood(c, lambda, 0); }) == Errc::invalid_argument);
    auto other = discretize(0.0, 20.0, 10);
    CHECK(error_code([&] { log_likelihood(CellCounts{other, c.counts, 0, kPlotLevel}, lambda, 1); }) ==
          Errc::grid_mismatch);
}

TEST_CASE("log likelihood is concave in each log intensity") {
    const std::vector<std::int64_t> counts = {0, 3, 1, 7};
    std::vector<double> lambda = {0.4, 2.5, 1.1, 6.0};
    const double h = 1e-3;
    for (std::size_t b = 0; b < lambda.size(); ++b) {
        auto at = [&](double shift) {
            auto l = lambda;
            l[b] *= std::exp(shift);
            return log_likelihood(counts, l, 0.5, 2);
        };
        CHECK(at(h) - 2 * at(0.0) + at(-h) <= 0.0);
    }
}

TEST_CASE("constant intensity maximizer") {
    // golden-section search over a constant lambda against N / (m B d)
    const std::vector<std::int64_t> counts = {2, 0, 5, 1, 0, 0, 4, 3};
    const double d = 0.75;
    const int m = 3;
    auto f = [&](double c) { return log_likelihood(counts, std::vector<double>(8, c), d, m); };
    double a = 1e-3, b = 10.0;
    const double r = (std::sqrt(5.0) - 1) / 2;
    for (int i = 0; i < 200; ++i) {
        const double x1 = b - r * (b - a), x2 = a + r * (b - a);
        if (f(x1) < f(x2)) a = x1;
        else b = x2;
    }
    CHECK((a + b) / 2 == doctest::Approx(15.0 / (3 * 8 * 0.75)).epsilon(1e-8));
}

TEST_CASE("apply_log_gp") {
    auto g = discretize(0.0, 4.0, 4);
    IntensityField gamma(g, {1.0, 0.0, 2.5, 4.0});
    auto same = apply_log_gp(gamma, std::vector<double>(4, 0.0));
    for (std::size_t j = 0; j < 4; ++j) CHECK(same[j] == gamma[j]);
    auto scaled = apply_log_gp(gamma, std::vector<double>(4, 0.7));
    CHECK(integrate(scaled) == doctest::Approx(std::exp(0.7) * integrate(gamma)));
    auto mixed = apply_log_gp(gamma, std::vector<double>{-30.0, 5.0, -2.0, 1.0});
    for (double v : mixed.values()) CHECK(v >= 0.0);
    CHECK(error_code([&] { apply_log_gp(gamma, std::vector<double>(3, 0.0)); }) ==
          Errc::length_mismatch);
}

TEST_CASE("gp sampling is deterministic and degenerates with the variance") {
    auto g = discretize(0.0, 10.0, 20);
    GPConfig cfg{0.5, 0.3, CorrelationFamily::exponential};
    CHECK(sample_gp(g, cfg, 42) == sample_gp(g, cfg, 42));
    CHECK(sample_gp(g, cfg, 42) != sample_gp(g, cfg, 43));
    GPConfig tiny{1e-16, 0.3, CorrelationFamily::exponential};
    for (double v : sample_gp(g, tiny, 5)) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("gp empirical covariance") {
    auto g = discretize(0.0, 10.0, 10);
    const GPConfig cfg{0.8, 0.4, CorrelationFamily::exponential};
    GaussianProcess gp(g, cfg);
    std::mt19937_64 rng(99);
    const int n = 10000;
    double s00 = 0, s01 = 0, s11 = 0;
    std::vector<double> x(10);
    for (int i = 0; i < n; ++i) {
        gp.sample(rng, x);
        s00 += x[0] * x[0];
        s01 += x[0] * x[1];
        s11 += x[1] * x[1];
    }
    const double var = s00 / n;
    const double cov = s01 / n;
    const double target_cov = 0.8 * std::exp(-0.4);
    // standard errors of the second-moment estimators for a zero-mean normal pair
    const double se_var = 0.8 * std::sqrt(2.0 / n);
    const double se_cov = std::sqrt((0.8 * 0.8 + target_cov * target_cov) / n);
    CHECK(std::abs(var - 0.8) < 3 * se_var);
    CHECK(std::abs(cov - target_cov) < 3 * se_cov);
    (void)s11;
}

TEST_CASE("gp draws decorrelate for large decay") {
    auto g = discretize(0.0, 10.0, 5);
    GaussianProcess gp(g, GPConfig{1.0, 50.0, CorrelationFamily::exponential});
    std::mt19937_64 rng(5);
    const int n = 10000;
    double s01 = 0, s00 = 0, s11 = 0;
    for (int i = 0; i < n; ++i) {
        auto x = gp.sample(rng);
        s01 += x[1] * x[2];
        s00 += x[1] * x[1];
        s11 += x[2] * x[2];
    }
    CHECK(std::abs(s01 / std::sqrt(s00 * s11)) < 0.05);
}

TEST_CASE("gp log density matches a two-cell closed form") {
    auto g = discretize(0.0, 2.0, 2);
    const GPConfig cfg{1.5, 0.7, CorrelationFamily::exponential};
    GaussianProcess gp(g, cfg);
    const double v = 1.5 + gp.jitter();
    const double c = 1.5 * std::exp(-0.7);
    const double det = v * v - c * c;
    const double x0 = 0.3, x1 = -1.2;
    const double quad = (v * x0 * x0 - 2 * c * x0 * x1 + v * x1 * x1) / det;
    const double oracle = -0.5 * quad - 0.5 * std::log(det) - std::log(2 * 3.14159265358979323846);
    CHECK(gp.log_density(std::vector<double>{x0, x1}) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(error_code([&] { gp.log_density(std::vector<double>{1.0}); }) == Errc::length_mismatch);
}

TEST_CASE("gp configuration") {
    CHECK(parse_correlation_family("exponential") == CorrelationFamily::exponential);
    CHECK(parse_correlation_family("matern32") == CorrelationFamily::matern32);
    CHECK(error_code([] { parse_correlation_family("rbf"); }) == Errc::invalid_argument);
    GPConfig m{1.0, 2.0, CorrelationFamily::matern32};
    const double a = std::sqrt(3.0) * 2.0 * 0.5;
    CHECK(m.correlation(0.5) == doctest::Approx((1 + a) * std::exp(-a)));
    CHECK(m.correlation(0.0) == 1.0);
    CHECK(error_code([] { GPConfig{0.0, 1.0}.validate(); }) == Errc::invalid_argument);
    CHECK(error_code([] { GPConfig{1.0, -1.0}.validate(); }) == Errc::invalid_argument);
}

}  // TEST_SUITE
