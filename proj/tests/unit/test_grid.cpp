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
#include "ipm/grid.hpp"
#include "support.hpp"

using namespace ipm;
using ipm::test::error_code;

TEST_SUITE("grid") {

TEST_CASE("discretize computes width and centers") {
    auto g = discretize(0.0, 10.0, 5);
    CHECK(g.width() == doctest::Approx(2.0));
    const double expected[] = {1, 3, 5, 7, 9};
    for (std::size_t j = 0; j < 5; ++j) CHECK(g.center(j) == doctest::Approx(expected[j]));

    auto fia = discretize(12.7, 112.7, 100);
    CHECK(fia.width() == doctest::Approx(1.0));
    CHECK(fia.center(0) == doctest::Approx(13.2));
    CHECK(fia.center(99) == doctest::Approx(112.2));
}

TEST_CASE("discretize rejects bad input") {
    CHECK(error_code([] { discretize(0, 1, 1); }) == Errc::invalid_count);
    CHECK(error_code([] { discretize(1, 1, 5); }) == Errc::invalid_bounds);
    CHECK(error_code([] { discretize(2, 1, 5); }) == Errc::invalid_bounds);
}

TEST_CASE("centers are strictly increasing and reproducible") {
    auto a = discretize(-3.5, 17.25, 37);
    auto b = discretize(-3.5, 17.25, 37);
    CHECK(a == b);
    for (std::size_t j = 0; j < a.size(); ++j) {
        CHECK(a.center(j) == b.center(j));
        CHECK(a.center(j) > a.lower());
        CHECK(a.center(j) < a.upper());
        if (j > 0) CHECK(a.center(j) > a.center(j - 1));
    }
}

TEST_CASE("cell_of follows the boundary rule") {
    auto g = discretize(0.0, 10.0, 5);
    CHECK(g.cell_of(0.0) == 0);
    CHECK(g.cell_of(1.999) == 0);
    CHECK(g.cell_of(2.0) == 1);
    CHECK(g.cell_of(10.0) == 4);
    CHECK(error_code([&] { g.cell_of(-0.01); }) == Errc::out_of_range);
    CHECK(error_code([&] { g.cell_of(10.01); }) == Errc::out_of_range);
}

TEST_CASE("intensity fields must be nonnegative and sized to the grid") {
    auto g = discretize(0.0, 1.0, 4);
    CHECK(error_code([&] { IntensityField(g, {1, 2, 3}); }) == Errc::length_mismatch);
    CHECK(error_code([&] { IntensityField(g, {1, -2, 3, 4}); }) == Errc::invalid_argument);
}

TEST_CASE("integrate uses the midpoint rule") {
    auto g = discretize(2.0, 7.0, 10);
    CHECK(integrate(IntensityField(g, std::vector<double>(10, 3.5))) == doctest::Approx(3.5 * 5.0));
    CHECK(integrate(IntensityField::zeros(g)) == 0.0);
    std::vector<double> v(10, 0.0);
    v[3] = 1e-300;
    CHECK(integrate(IntensityField(g, v)) > 0.0);
}

TEST_CASE("midpoint error on a quadratic shrinks by four when cells double") {
    auto f = [](double x) { return 1.0 + x * x; };
    const double exact = 10.0 + 1000.0 / 3.0;  // integral of 1 + x^2 over [0, 10]
    double previous = 0.0;
    for (std::size_t b : {10u, 20u, 40u, 80u}) {
        auto g = discretize(0.0, 10.0, b);
        std::vector<double> v(b);
        for (std::size_t j = 0; j < b; ++j) v[j] = f(g.center(j));
        const double err = std::abs(integrate(IntensityField(g, v)) - exact);
        // midpoint error for f'' = 2 is (U - L) d^2 / 12
        CHECK(err == doctest::Approx(10.0 * g.width() * g.width() / 12.0).epsilon(1e-9));
        if (previous > 0.0) CHECK(previous / err == doctest::Approx(4.0).epsilon(1e-9));
        previous = err;
    }
}

TEST_CASE("empirical intensity normalization") {
    auto g = discretize(0.0, 100.0, 50);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 100.0);

    PointPattern single;
    for (int i = 0; i < 50; ++i) single.diameters.push_back(u(rng));
    for (double h : {0.3, 2.0, 15.0, 80.0}) {
        EmpiricalOptions opts;
        opts.bandwidth = h;
        auto field = empirical_intensity(std::span(&single, 1), g, opts);
        CHECK(integrate(field) == doctest::Approx(50.0).epsilon(1e-9));
    }

    std::vector<PointPattern> four(4);
    for (int i = 0; i < 100; ++i) four[i % 4].diameters.push_back(u(rng));
    EmpiricalOptions per_plot;
    per_plot.scaling = IntensityScaling::per_plot;
    CHECK(integrate(empirical_intensity(four, g, per_plot)) == doctest::Approx(25.0).epsilon(1e-9));
    CHECK(integrate(empirical_intensity(four, g)) == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("empirical intensity at small bandwidth matches histogram binning") {
    auto g = discretize(0.0, 10.0, 10);
    PointPattern p;
    p.diameters = {0.5, 3.5, 3.5, 9.5, 9.5, 9.5};
    EmpiricalOptions opts;
    opts.bandwidth = 1e-3;
    auto field = empirical_intensity(std::span(&p, 1), g, opts);
    std::vector<double> hist(10, 0.0);
    for (double x : p.diameters) hist[g.cell_of(x)] += 1.0 / g.width();
    for (std::size_t j = 0; j < 10; ++j) CHECK(field[j] == doctest::Approx(hist[j]).epsilon(1e-9));
}

TEST_CASE("empirical intensity input checks") {
    auto g = discretize(0.0, 10.0, 10);
    CHECK(error_code([&] { empirical_intensity({}, g); }) == Errc::empty_input);
    EmpiricalOptions allow;
    allow.allow_empty = true;
    CHECK(integrate(empirical_intensity({}, g, allow)) == 0.0);

    PointPattern bad;
    bad.diameters = {5.0, 10.5};
    CHECK(error_code([&] { empirical_intensity(std::span(&bad, 1), g); }) == Errc::out_of_range);
    EmpiricalOptions zero_bw;
    zero_bw.bandwidth = 0.0;
    PointPattern ok;
    ok.diameters = {5.0};
    CHECK(error_code([&] { empirical_intensity(std::span(&ok, 1), g, zero_bw); }) ==
          Errc::invalid_argument);

    // points at both ends are accepted
    PointPattern edges;
    edges.diameters = {0.0, 10.0};
    CHECK(integrate(empirical_intensity(std::span(&edges, 1), g)) == doctest::Approx(2.0));
}

TEST_CASE("silverman bandwidth") {
    std::vector<double> pts = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    // sd = 3.02765, IQR (type 7) = 4.5 -> 3.3582; min is the sd
    const double sd = std::sqrt(82.5 / 9.0);
    CHECK(silverman_bandwidth(pts, 1.0) == doctest::Approx(0.9 * sd * std::pow(10.0, -0.2)));
    std::vector<double> same(5, 3.0);
    CHECK(silverman_bandwidth(same, 0.7) == 0.7);
    CHECK(silverman_bandwidth(std::vector<double>{1.0}, 0.7) == 0.7);
}

}  // TEST_SUITE
