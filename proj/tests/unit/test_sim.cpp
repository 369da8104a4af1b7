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
#include <numeric>
#include <vector>

#include "doctest.h"
#include "ipm/propagation.hpp"
#include "ipm/sim.hpp"
#include "support.hpp"

using namespace ipm;
using ipm::test::error_code;

namespace {

SimConfig small_config() {
    SimConfig c;
    c.plots_per_bin = 10;
    c.horizon = 4;
    c.seed = 17;
    return c;
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("reference truth and transition matrix") {
    auto p = reference_truth();
    CHECK(p.q0 == 1.0);
    CHECK(p.q1 == 0.01);
    CHECK(p.mu == 0.0);
    CHECK(p.sigma == 0.25);
    CHECK(p.delta0 == 0.30);
    CHECK(p.delta1 == 0.0);
    CHECK(p.eta == 0.10);
    CHECK(p.beta == std::vector<double>{0.0, 0.01});
    auto m = reference_transition_matrix();
    REQUIRE(m.size() == 4);
    CHECK(m[0] == std::vector<double>{0.7, 0.2, 0.07, 0.03});
    CHECK(m[1] == std::vector<double>{0.2, 0.7, 0.03, 0.07});
    CHECK(m[2] == std::vector<double>{0.07, 0.03, 0.7, 0.2});
    CHECK(m[3] == std::vector<double>{0.03, 0.07, 0.2, 0.7});
    for (const auto& row : m) CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("config validation") {
    auto c = small_config();
    CHECK_NOTHROW(c.validate());
    c.transition_matrix[0][0] = 0.71;
    CHECK(error_code([&] { c.validate(); }) == Errc::invalid_argument);
    c = small_config();
    c.missing_fraction = 1.0;
    CHECK(error_code([&] { c.validate(); }) == Errc::invalid_argument);
    c = small_config();
    c.horizon = 1;
    CHECK(error_code([&] { c.validate(); }) == Errc::invalid_count);
}

TEST_CASE("derived seeds are distinct and stable") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
}

TEST_CASE("identity transitions keep labels fixed") {
    auto c = small_config();
    c.transition_matrix = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    auto truth = generate_truth(c, synthetic_initial_fields(c));
    for (std::size_t j = 0; j < c.plot_count(); ++j) {
        for (auto l : truth.labels[j]) CHECK(l == j / c.plots_per_bin);
    }
}

TEST_CASE("zero climate slope gives identical trajectories from identical starts") {
    auto c = small_config();
    c.true_params.beta = {0.0, 0.0};
    auto init = synthetic_initial_fields(c);
    std::vector<IntensityField> same(c.plot_count(), init[0]);
    auto truth = generate_truth(c, same);
    for (std::size_t j = 1; j < c.plot_count(); ++j) {
        for (std::size_t t = 0; t < c.horizon; ++t) {
            for (std::size_t b = 0; b < truth.grid.size(); ++b) CHECK(truth.gamma[j][t][b] == truth.gamma[0][t][b]);
        }
    }
}

TEST_CASE("label transitions follow the matrix") {
    SimConfig c;
    c.plots_per_bin = 100;
    c.horizon = 10;
    c.gp_noise = false;
    c.seed = 5;
    auto truth = generate_truth(c, synthetic_initial_fields(c));
    std::vector<std::vector<double>> counts(4, std::vector<double>(4, 0.0));
    for (const auto& labels : truth.labels) {
        for (std::size_t t = 0; t + 1 < labels.size(); ++t) counts[labels[t]][labels[t + 1]] += 1.0;
    }
    const auto m = reference_transition_matrix();
    for (std::size_t i = 0; i < 4; ++i) {
        const double n = std::accumulate(counts[i].begin(), counts[i].end(), 0.0);
        REQUIRE(n > 0);
        for (std::size_t k = 0; k < 4; ++k) {
            const double se = std::sqrt(m[i][k] * (1 - m[i][k]) / n);
            CHECK(std::abs(counts[i][k] / n - m[i][k]) < 3 * se);
        }
    }
}

TEST_CASE("sample_pattern") {
    auto g = discretize(0.0, 10.0, 20);
    CHECK(sample_pattern(IntensityField::zeros(g), 3u).diameters.empty());

    IntensityField two(g, std::vector<double>(20, 2.0));
    const int reps = 1000;
    double sum = 0.0, sq = 0.0;
    for (int r = 0; r < reps; ++r) {
        const double n = static_cast<double>(sample_pattern(two, static_cast<std::uint64_t>(r)).diameters.size());
        sum += n;
        sq += n * n;
    }
    const double mean = sum / reps;
    const double var = (sq - reps * mean * mean) / (reps - 1);
    CHECK(std::abs(mean - 20.0) < 3 * std::sqrt(20.0 / reps));
    CHECK(var / mean > 0.8);
    CHECK(var / mean < 1.2);

    // points stay inside the cell that generated them
    std::vector<double> one_cell(20, 0.0);
    one_cell[7] = 400.0;
    auto p = sample_pattern(IntensityField(g, one_cell), 11u);
    CHECK(!p.diameters.empty());
    for (double x : p.diameters) CHECK(g.cell_of(x) == 7);
    CHECK(sample_pattern(two, 4u).diameters == sample_pattern(two, 4u).diameters);
}

TEST_CASE("simulate layout and determinism") {
    auto c = small_config();
    auto a = simulate(c);
    auto b = simulate(c);
    CHECK(a.patterns.size() == c.plot_count() * c.horizon);
    CHECK(a.climates.size() == a.patterns.size());
    CHECK(a.plot_ids.front() == "p00001");
    CHECK(a.patterns.front().year == 1);
    CHECK(a.patterns[c.horizon - 1].year == static_cast<int>(c.horizon));
    for (std::size_t i = 0; i < a.patterns.size(); ++i) CHECK(a.patterns[i].diameters == b.patterns[i].diameters);
    for (const auto& p : a.patterns) {
        for (double x : p.diameters) CHECK(a.truth.grid.contains(x));
        CHECK(p.climate.annual_precip == doctest::Approx(1000.0 + 100.0 * p.climate.winter_temp));
    }
    c.seed = 18;
    auto d = simulate(c);
    bool differ = false;
    for (std::size_t i = 0; i < a.patterns.size(); ++i) differ |= a.patterns[i].diameters != d.patterns[i].diameters;
    CHECK(differ);
}

TEST_CASE("missingness removal counts") {
    SimConfig c;
    c.plots_per_bin = 100;
    c.horizon = 4;
    c.gp_noise = false;
    auto data = simulate(c);
    auto full = simulated_panel(data, c);
    CHECK(inject_missingness(full, 0.0, 1) == full);

    for (double fraction : {0.5, 0.8}) {
        auto sparse = inject_missingness(full, fraction, 2);
        const std::size_t keep = fraction == 0.5 ? 50 : 20;
        for (std::size_t t = 0; t < c.horizon; ++t) {
            std::vector<std::size_t> observed(4, 0);
            for (std::size_t j = 0; j < sparse.plot_count(); ++j) {
                if (sparse.observed(j, t)) {
                    ++observed[j / c.plots_per_bin];
                    // retained patterns are untouched
                    CHECK(sparse.pattern(j, t).diameters == full.pattern(j, t).diameters);
                }
            }
            for (auto n : observed) CHECK(n == (t + 1 < c.horizon ? keep : 100));
        }
    }
    CHECK(error_code([&] { inject_missingness(full, 0.333, 1); }) == Errc::invalid_argument);
    CHECK(error_code([&] { inject_missingness(full, 1.0, 1); }) == Errc::over_removal);
    auto half = inject_missingness(full, 0.5, 3);
    CHECK(error_code([&] { inject_missingness(half, 0.6, 3); }) == Errc::over_removal);
}

TEST_CASE("projection bands collapse for a constant chain") {
    auto c = small_config();
    auto data = simulate(c);
    auto panel = simulated_panel(data, c);
    auto start = projection_start(panel, c.grid());
    PosteriorChain chain;
    for (int i = 0; i < 30; ++i) {
        ChainSample s;
        s.params = c.true_params;
        chain.samples.push_back(s);
    }
    std::vector<std::vector<double>> cov;
    for (std::size_t l = 0; l < start.size(); ++l) cov.push_back({static_cast<double>(l)});
    auto bands = projection_bands(std::span(&chain, 1), start, cov, 3, 400, &c.true_params);
    REQUIRE(bands.size() == start.size());
    for (std::size_t l = 0; l < bands.size(); ++l) {
        auto path = project(start[l], std::vector<std::vector<double>>(3, cov[l]), c.true_params, 3);
        for (std::size_t b = 0; b < c.cells; ++b) {
            CHECK(bands[l].band.lower[b] == doctest::Approx(path[3][b]).epsilon(1e-12));
            CHECK(bands[l].band.upper[b] == doctest::Approx(path[3][b]).epsilon(1e-12));
            CHECK(bands[l].truth[b] == doctest::Approx(path[3][b]).epsilon(1e-12));
        }
        CHECK(bands[l].containment == 1.0);
        CHECK(bands[l].mass.median.size() == 4);
    }
    CHECK(median_width_ratio(bands, bands) == doctest::Approx(1.0));
    PosteriorChain empty;
    CHECK(error_code([&] { projection_bands(std::span(&empty, 1), start, cov, 3); }) ==
          Errc::insufficient_samples);
}

TEST_CASE("recovery experiment is reproducible") {
    auto c = small_config();
    FitSettings fs;
    fs.mcmc.iterations = 300;
    fs.mcmc.burn_in = 100;
    fs.mcmc.thin = 2;
    fs.mcmc.seed = 4;
    const double fractions[] = {0.0, 0.5};
    auto a = recovery_experiment(c, fs, fractions);
    auto b = recovery_experiment(c, fs, fractions);
    REQUIRE(a.rows.size() == b.rows.size());
    REQUIRE(a.runs.size() == 2);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].name == b.rows[i].name);
        CHECK(a.rows[i].summary.mean == b.rows[i].summary.mean);
        CHECK(a.rows[i].summary.lower == b.rows[i].summary.lower);
    }
    CHECK(truth_value(c, "sigma") == 0.25);
    CHECK(truth_value(c, "beta_1") == 0.01);
    const auto complete = simulated_panel(simulate(c), c);
    for (const auto& run : a.runs) {
        const auto panel = run.missing_fraction > 0.0
                               ? inject_missingness(complete, run.missing_fraction, derive_seed(c.seed, 5))
                               : complete;
        const auto model = simulation_model(panel, c, fs);
        for (const auto& s : run.chains.front().samples) CHECK(model.satisfies_constraint(s.params));
    }
}

}  // TEST_SUITE
