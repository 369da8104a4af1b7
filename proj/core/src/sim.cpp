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

#include "ipm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "ipm/error.hpp"
#include "ipm/propagation.hpp"

namespace ipm {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ stream) ^ index);
}

KernelParams reference_truth() {
    KernelParams p;
    p.q0 = 1.0;
    p.q1 = 0.01;
    p.mu = 0.0;
    p.sigma = 0.25;
    p.delta0 = 0.30;
    p.delta1 = 0.0;
    p.eta = 0.10;
    p.beta = {0.0, 0.01};
    return p;
}

std::vector<std::vector<double>> reference_transition_matrix() {
    return {{0.70, 0.20, 0.07, 0.03},
            {0.20, 0.70, 0.03, 0.07},
            {0.07, 0.03, 0.70, 0.20},
            {0.03, 0.07, 0.20, 0.70}};
}

ClimateRecord level_climate(std::size_t level) {
    const auto z = static_cast<double>(level);
    return {z, 1000.0 + 100.0 * z};
}

void SimConfig::validate() const {
    if (n_bins == 0 || plots_per_bin == 0) {
        throw Error(Errc::invalid_count, "need at least one bin and one plot per bin");
    }
    if (horizon < 2) {
        throw Error(Errc::invalid_count, "horizon must cover at least two years");
    }
    if (transition_matrix.size() != n_bins) {
        throw Error(Errc::invalid_argument, "transition matrix must have one row per bin");
    }
    for (const auto& row : transition_matrix) {
        if (row.size() != n_bins) {
            throw Error(Errc::invalid_argument, "transition matrix must be square");
        }
        double sum = 0.0;
        for (double p : row) {
            if (!(p >= 0.0)) {
                throw Error(Errc::invalid_argument, "transition probabilities must be nonnegative");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12) {
            throw Error(Errc::invalid_argument, "transition matrix rows must sum to 1");
        }
    }
    if (!(missing_fraction >= 0.0 && missing_fraction < 1.0)) {
        throw Error(Errc::invalid_argument, "missing fraction must lie in [0, 1)");
    }
    true_params.validate(true_params.beta.size() - 1);
    if (true_params.beta.size() != 2) {
        throw Error(Errc::invalid_argument, "simulation uses one covariate: beta needs 2 entries");
    }
    (void)grid();
    if (!(initial_mass > 0.0) || !(initial_mass_sd >= 0.0) || !(initial_sdlog > 0.0)) {
        throw Error(Errc::invalid_argument, "initial field settings must be positive");
    }
    if (gp_noise) gp().validate();
}

GPConfig SimConfig::gp() const {
    return {gp_sigma2, gp_range_scale / (upper - lower), gp_family};
}

std::vector<IntensityField> synthetic_initial_fields(const SimConfig& config) {
    const auto grid = config.grid();
    std::mt19937_64 rng(derive_seed(config.seed, 1));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<IntensityField> out;
    out.reserve(config.plot_count());
    const double s = config.initial_mass_sd;
    for (std::size_t j = 0; j < config.plot_count(); ++j) {
        const double mass = config.initial_mass * std::exp(s * normal(rng) - 0.5 * s * s);
        const double meanlog = config.initial_meanlog + 0.05 * normal(rng);
        std::vector<double> v(grid.size());
        for (std::size_t b = 0; b < v.size(); ++b) {
            const double x = grid.center(b);
            const double u = (std::log(x) - meanlog) / config.initial_sdlog;
            v[b] = std::exp(-0.5 * u * u) / x;
        }
        const double total = integrate(v, grid.width());
        for (double& x : v) x *= mass / total;
        out.emplace_back(grid, std::move(v), 1);
    }
    return out;
}

SimTruth generate_truth(const SimConfig& config, std::span<const IntensityField> initial) {
    config.validate();
    const auto grid = config.grid();
    if (initial.size() != config.plot_count()) {
        throw Error(Errc::length_mismatch, "need one initial field per plot");
    }
    SimTruth truth{grid, {}, {}, {}};
    std::mt19937_64 rng(derive_seed(config.seed, 2));
    std::vector<std::discrete_distribution<std::size_t>> rows;
    for (const auto& row : config.transition_matrix) {
        rows.emplace_back(row.begin(), row.end());
    }
    truth.labels.resize(config.plot_count());
    truth.gamma.resize(config.plot_count());
    for (std::size_t j = 0; j < config.plot_count(); ++j) {
        if (!(initial[j].grid() == grid)) {
            throw Error(Errc::grid_mismatch, "initial field lives on a different grid");
        }
        auto& labels = truth.labels[j];
        labels.push_back(j / config.plots_per_bin);
        for (std::size_t t = 0; t + 1 < config.horizon; ++t) {
            labels.push_back(rows[labels[t]](rng));
        }
        auto& gamma = truth.gamma[j];
        gamma.push_back(IntensityField(grid, {initial[j].values().begin(), initial[j].values().end()},
                                       1, static_cast<int>(labels[0])));
        for (std::size_t t = 0; t + 1 < config.horizon; ++t) {
            const std::vector<double> z{level_climate(labels[t]).winter_temp};
            gamma.push_back(pseudo_ipm_step(gamma[t], z, config.true_params));
        }
    }
    if (config.gp_noise) {
        const GaussianProcess gp(grid, config.gp());
        std::mt19937_64 gp_rng(derive_seed(config.seed, 3));
        truth.eps.resize(config.n_bins);
        for (auto& per_bin : truth.eps) {
            for (std::size_t t = 0; t + 1 < config.horizon; ++t) {
                per_bin.push_back(gp.sample(gp_rng));
            }
        }
    }
    return truth;
}

PointPattern sample_pattern(const IntensityField& lambda, std::mt19937_64& rng) {
    const auto& grid = lambda.grid();
    const double d = grid.width();
    PointPattern out;
    out.year = lambda.year();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t b = 0; b < lambda.size(); ++b) {
        const double mean = lambda[b] * d;
        if (!(mean > 0.0)) continue;
        const auto n = std::poisson_distribution<long long>(mean)(rng);
        const double left = grid.lower() + static_cast<double>(b) * d;
        for (long long i = 0; i < n; ++i) {
            double x = left + unit(rng) * d;
            // keep floating-point edge cases inside the generating cell
            while (grid.cell_of(x) < b) x = std::nextafter(x, grid.upper());
            while (grid.cell_of(x) > b) x = std::nextafter(x, grid.lower());
            out.diameters.push_back(x);
        }
    }
    return out;
}

PointPattern sample_pattern(const IntensityField& lambda, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_pattern(lambda, rng);
}

namespace {

std::string plot_name(std::size_t j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%05zu", j + 1);
    return buf;
}

}  // namespace

SimDataset simulate(const SimConfig& config, std::span<const IntensityField> initial) {
    SimDataset data{generate_truth(config, initial), {}, {}, {}};
    const auto& truth = data.truth;
    for (std::size_t j = 0; j < config.plot_count(); ++j) {
        data.plot_ids.push_back(plot_name(j));
        for (std::size_t t = 0; t < config.horizon; ++t) {
            const int year = static_cast<int>(t) + 1;
            std::mt19937_64 rng(derive_seed(config.seed, 4, j * config.horizon + t));
            PointPattern p;
            if (t > 0 && config.gp_noise) {
                const auto& eps = truth.eps[truth.labels[j][t - 1]][t - 1];
                p = sample_pattern(apply_log_gp(truth.gamma[j][t], eps), rng);
            } else {
                p = sample_pattern(truth.gamma[j][t], rng);
            }
            const auto climate = level_climate(truth.labels[j][t]);
            p.plot_id = data.plot_ids.back();
            p.year = year;
            p.climate = climate;
            data.patterns.push_back(std::move(p));
            data.climates.push_back({data.plot_ids.back(), year, climate});
        }
    }
    return data;
}

SimDataset simulate(const SimConfig& config) {
    config.validate();
    return simulate(config, synthetic_initial_fields(config));
}

SparsePanel inject_missingness(const SparsePanel& panel, double fraction, std::uint64_t seed,
                               const MissingnessOptions& options) {
    if (fraction < 0.0 || !std::isfinite(fraction)) {
        throw Error(Errc::invalid_argument, "missing fraction must be nonnegative");
    }
    if (fraction >= 1.0) {
        throw Error(Errc::over_removal, "missing fraction must be below 1");
    }
    std::vector<std::size_t> groups = options.groups;
    if (groups.empty()) {
        for (std::size_t j = 0; j < panel.plot_count(); ++j) groups.push_back(panel.label(j, 0));
    }
    if (groups.size() != panel.plot_count()) {
        throw Error(Errc::length_mismatch, "need one removal group per plot");
    }
    const std::size_t test_year = options.first_test_year.value_or(panel.year_count() - 1);
    const std::size_t n_groups = *std::max_element(groups.begin(), groups.end()) + 1;
    std::vector<std::vector<std::size_t>> members(n_groups);
    for (std::size_t j = 0; j < groups.size(); ++j) members[groups[j]].push_back(j);

    SparsePanel out = panel;
    if (fraction == 0.0) return out;
    for (std::size_t t = 0; t < std::min(test_year, panel.year_count()); ++t) {
        std::mt19937_64 rng(derive_seed(seed, 5, t));
        for (const auto& group : members) {
            if (group.empty()) continue;
            const double target = fraction * static_cast<double>(group.size());
            const double rounded = std::round(target);
            if (std::abs(target - rounded) > 1e-9) {
                throw Error(Errc::invalid_argument,
                            "missing fraction times group size (" + std::to_string(target) +
                                ") is not a whole number of plots");
            }
            std::vector<std::size_t> observed;
            for (std::size_t j : group) {
                if (out.observed(j, t)) observed.push_back(j);
            }
            const auto k = static_cast<std::size_t>(rounded);
            if (k > observed.size()) {
                throw Error(Errc::over_removal, "cannot remove " + std::to_string(k) +
                                                    " plots from a group with " +
                                                    std::to_string(observed.size()) +
                                                    " observed in year index " + std::to_string(t));
            }
            // partial Fisher-Yates: the first k entries become the removed set
            for (std::size_t i = 0; i < k; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, observed.size() - 1);
                std::swap(observed[i], observed[pick(rng)]);
                out.clear_pattern(observed[i], t);
            }
        }
    }
    return out;
}

SparsePanel simulated_panel(const SimDataset& data, const SimConfig& config) {
    std::vector<double> temp_breaks;
    for (std::size_t l = 0; l <= config.n_bins; ++l) {
        temp_breaks.push_back(static_cast<double>(l) - 0.5);
    }
    const double top = level_climate(config.n_bins - 1).annual_precip;
    ClimateBinning binning(std::move(temp_breaks), {950.0, top + 50.0});
    std::vector<ClimateRecord> records;
    records.reserve(data.climates.size());
    for (const auto& c : data.climates) records.push_back(c.climate);
    binning.set_members(records);
    return build_panel(data.patterns, data.climates, binning);
}

PosteriorModel simulation_model(const SparsePanel& panel, const SimConfig& config,
                                const FitSettings& settings) {
    const auto grid = config.grid();
    CovariateSpec covariates;
    covariates.use_temp = true;
    covariates.use_precip = false;
    ModelSpec spec;
    spec.base = config.true_params;
    spec.estimate_q1 = true;
    spec.estimate_sigma = true;
    spec.estimate_delta0 = settings.estimate_delta0;
    spec.estimate_delta1 = false;
    spec.estimate_eta = true;
    spec.estimate_beta = {false, true};
    spec.latent_field = settings.latent_field;
    spec.estimate_gp = settings.latent_field;
    spec.gp = GPConfig{config.gp_sigma2, config.gp_range_scale / (config.upper - config.lower),
                       settings.gp_family};
    TermOptions options;
    options.bandwidth = settings.bandwidth;
    options.last_year = config.horizon - 2;
    return PosteriorModel::from_panel(panel, grid, covariates, spec, PriorSpec::for_grid(grid),
                                      options);
}

double truth_value(const SimConfig& config, const std::string& name) {
    ChainSample s;
    s.params = config.true_params;
    s.gp = config.gp();
    return parameter_value(s, name);
}

namespace {

RecoveryRun fit_level(const SimConfig& config, const SparsePanel& panel, double fraction,
                      const FitSettings& settings) {
    auto model = simulation_model(panel, config, settings);
    RecoveryRun run;
    run.missing_fraction = fraction;
    run.bound = model.bound();
    run.prior_constraint_mass = calibrate_constraint_priors(model, derive_seed(config.seed, 6));
    for (std::size_t c = 0; c < std::max<std::size_t>(settings.chains, 1); ++c) {
        McmcConfig mc = settings.mcmc;
        mc.seed = derive_seed(settings.mcmc.seed, 7, c);
        run.chains.push_back(mcmc_fit(model, mc));
    }
    run.summaries = summarize(run.chains, 1);
    return run;
}

}  // namespace

RecoveryReport recovery_experiment(const SimConfig& config, const SimDataset& data,
                                   const FitSettings& settings, std::span<const double> fractions) {
    const auto complete = simulated_panel(data, config);
    RecoveryReport report;
    for (double f : fractions) {
        const auto panel = f > 0.0 ? inject_missingness(complete, f, derive_seed(config.seed, 5))
                                   : complete;
        auto run = fit_level(config, panel, f, settings);
        for (const auto& s : run.summaries) {
            const bool gp_param = s.name == "sigma2_eps" || s.name == "phi";
            const double truth = truth_value(config, s.name);
            const bool known = !gp_param || config.gp_noise;
            report.rows.push_back(
                {f, s.name, truth, s, known && s.lower <= truth && truth <= s.upper});
        }
        report.runs.push_back(std::move(run));
    }
    return report;
}

RecoveryReport recovery_experiment(const SimConfig& config, const FitSettings& settings,
                                   std::span<const double> fractions) {
    return recovery_experiment(config, simulate(config), settings, fractions);
}

std::vector<BinProjection> projection_bands(std::span<const PosteriorChain> chains,
                                            std::span<const IntensityField> start,
                                            std::span<const std::vector<double>> covariates,
                                            std::size_t steps, std::size_t max_draws,
                                            const KernelParams* truth) {
    if (start.size() != covariates.size()) {
        throw Error(Errc::length_mismatch, "need one covariate vector per starting field");
    }
    std::vector<const ChainSample*> all;
    for (const auto& c : chains) {
        for (const auto& s : c.samples) all.push_back(&s);
    }
    if (all.empty()) {
        throw Error(Errc::insufficient_samples, "no retained draws to project");
    }
    std::vector<const ChainSample*> draws;
    if (max_draws == 0 || all.size() <= max_draws) {
        draws = all;
    } else {
        for (std::size_t i = 0; i < max_draws; ++i) draws.push_back(all[i * all.size() / max_draws]);
    }

    std::vector<BinProjection> out;
    for (std::size_t l = 0; l < start.size(); ++l) {
        const std::vector<std::vector<double>> z(steps, covariates[l]);
        std::vector<std::vector<double>> finals;
        std::vector<std::vector<double>> masses(steps + 1);
        for (const auto* s : draws) {
            const auto path = project(start[l], z, s->params, steps);
            finals.emplace_back(path.back().values().begin(), path.back().values().end());
            for (std::size_t t = 0; t <= steps; ++t) masses[t].push_back(integrate(path[t]));
        }
        BinProjection bp;
        bp.bin = static_cast<std::size_t>(std::max(start[l].bin(), 0));
        bp.cell_centers.assign(start[l].grid().centers().begin(), start[l].grid().centers().end());
        bp.band = pointwise_band(finals);
        for (const auto& m : masses) {
            bp.mass.lower.push_back(quantile(m, 0.025));
            bp.mass.median.push_back(quantile(m, 0.5));
            bp.mass.upper.push_back(quantile(m, 0.975));
        }
        if (truth) {
            const auto path = project(start[l], z, *truth, steps);
            bp.truth.assign(path.back().values().begin(), path.back().values().end());
            for (const auto& f : path) bp.truth_mass.push_back(integrate(f));
            std::size_t inside = 0;
            for (std::size_t b = 0; b < bp.truth.size(); ++b) {
                if (bp.band.lower[b] <= bp.truth[b] && bp.truth[b] <= bp.band.upper[b]) ++inside;
            }
            bp.containment = static_cast<double>(inside) / static_cast<double>(bp.truth.size());
        }
        out.push_back(std::move(bp));
    }
    return out;
}

std::vector<IntensityField> projection_start(const SparsePanel& complete, const TraitGrid& grid,
                                             std::optional<double> bandwidth) {
    std::vector<IntensityField> out;
    for (std::size_t l = 0; l < complete.bin_count(); ++l) {
        out.push_back(per_plot_intensity(complete, 0, l, grid, bandwidth));
    }
    return out;
}

std::vector<BinProjection> projection_experiment(std::span<const PosteriorChain> chains,
                                                 const SparsePanel& complete,
                                                 const SimConfig& config, std::size_t max_draws) {
    const auto start = projection_start(complete, config.grid());
    std::vector<std::vector<double>> z;
    for (std::size_t l = 0; l < start.size(); ++l) z.push_back({level_climate(l).winter_temp});
    return projection_bands(chains, start, z, config.horizon - 1, max_draws, &config.true_params);
}

double median_width_ratio(std::span<const BinProjection> wide,
                          std::span<const BinProjection> narrow) {
    if (wide.size() != narrow.size()) {
        throw Error(Errc::length_mismatch, "projections cover different bins");
    }
    std::vector<double> ratios;
    for (std::size_t l = 0; l < wide.size(); ++l) {
        const auto& a = wide[l].band;
        const auto& b = narrow[l].band;
        for (std::size_t j = 0; j < a.lower.size(); ++j) {
            const double wb = b.upper[j] - b.lower[j];
            if (wb > 0.0) ratios.push_back((a.upper[j] - a.lower[j]) / wb);
        }
    }
    if (ratios.empty()) return 1.0;
    return quantile(ratios, 0.5);
}

}  // namespace ipm
