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
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ipm/climate.hpp"
#include "ipm/cox.hpp"
#include "ipm/grid.hpp"
#include "ipm/inference.hpp"
#include "ipm/kernel.hpp"

namespace ipm {

/// Independent stream seed for (seed, stream, index); splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

/// Demographic truth of the four-bin experiment: Q1 = 0.01, sigma = 0.25,
/// delta0 = 0.3, eta = 0.1, beta = (0, 0.01) with Q0 = 1, delta1 = 0, mu = 0.
KernelParams reference_truth();

/// Row-stochastic 4 x 4 matrix that moves plots between climate bins.
std::vector<std::vector<double>> reference_transition_matrix();

/// Climate record for covariate level z: temperature z, precipitation 1000 + 100 z.
ClimateRecord level_climate(std::size_t level);

struct SimConfig {
    std::size_t n_bins = 4;
    std::size_t plots_per_bin = 100;
    std::size_t horizon = 10;  // number of years, first year included
    KernelParams true_params = reference_truth();
    std::vector<std::vector<double>> transition_matrix = reference_transition_matrix();
    double missing_fraction = 0.0;
    std::uint64_t seed = 1;

    double lower = 12.7;
    double upper = 112.7;
    std::size_t cells = 100;

    /// Synthetic initial fields: lognormal-shaped in diameter, total mass
    /// initial_mass times a lognormal factor with sd initial_mass_sd.
    double initial_mass = 30.0;
    double initial_mass_sd = 0.1;
    double initial_meanlog = 3.3;
    double initial_sdlog = 0.35;

    /// Latent field added to the generating intensity; one draw per
    /// (bin, transition year). phi = gp_range_scale / (upper - lower).
    bool gp_noise = true;
    double gp_sigma2 = 0.04;
    double gp_range_scale = 6.0;
    CorrelationFamily gp_family = CorrelationFamily::exponential;

    void validate() const;
    TraitGrid grid() const { return TraitGrid(lower, upper, cells); }
    GPConfig gp() const;
    std::size_t plot_count() const noexcept { return n_bins * plots_per_bin; }
};

/// One lognormal-shaped initial field per plot, deterministic in the seed.
std::vector<IntensityField> synthetic_initial_fields(const SimConfig& config);

struct SimTruth {
    TraitGrid grid;
    std::vector<std::vector<std::size_t>> labels;        // [plot][year]
    std::vector<std::vector<IntensityField>> gamma;      // [plot][year]
    std::vector<std::vector<std::vector<double>>> eps;   // [bin][transition], empty without GP
};

/// Labels follow the Markov chain from home bin plot / plots_per_bin; each
/// plot's field advances by the pseudo-IPM step with covariate z = label.
SimTruth generate_truth(const SimConfig& config, std::span<const IntensityField> initial);

/// Poisson(lambda(b) d) points per cell, uniform within the cell.
PointPattern sample_pattern(const IntensityField& lambda, std::mt19937_64& rng);
PointPattern sample_pattern(const IntensityField& lambda, std::uint64_t seed);

struct SimDataset {
    SimTruth truth;
    std::vector<PointPattern> patterns;  // every plot-year, plot-major
    std::vector<ClimateObservation> climates;
    std::vector<std::string> plot_ids;
};

/// Truth plus complete patterns. Year 0 is drawn from gamma_0, later years
/// from gamma_{t+1} e^{eps} with eps shared by plots labelled alike in year t.
SimDataset simulate(const SimConfig& config);
SimDataset simulate(const SimConfig& config, std::span<const IntensityField> initial);

struct MissingnessOptions {
    /// Removal group of every plot; plots are removed per group and year.
    /// Empty means the label each plot carries in the first year.
    std::vector<std::size_t> groups;
    /// Years from this index on are left complete (test years).
    std::optional<std::size_t> first_test_year;
};

/// Removes fraction x group size plots from each group in every training
/// year. Throws invalid-argument when that count is not integral and
/// over-removal when fraction >= 1.
SparsePanel inject_missingness(const SparsePanel& panel, double fraction, std::uint64_t seed,
                               const MissingnessOptions& options = {});

/// Panel view of a simulated data set with n_bins x 1 climate bins.
SparsePanel simulated_panel(const SimDataset& data, const SimConfig& config);

struct FitSettings {
    McmcConfig mcmc;
    std::size_t chains = 1;
    CorrelationFamily gp_family = CorrelationFamily::exponential;
    bool latent_field = true;
    bool estimate_delta0 = true;
    std::optional<double> bandwidth;
};

/// Model of the simulation study: Q1, sigma, delta0, eta and the slope on z
/// free; Q0 = 1, mu = 0, delta1 = 0 and the intercept fixed; training years
/// exclude the final year.
PosteriorModel simulation_model(const SparsePanel& panel, const SimConfig& config,
                                const FitSettings& settings);

struct RecoveryRow {
    double missing_fraction = 0.0;
    std::string name;
    double truth = 0.0;
    ParameterSummary summary;
    bool covered = false;
};

struct RecoveryRun {
    double missing_fraction = 0.0;
    IdentifiabilityBound bound;
    double prior_constraint_mass = 0.0;
    std::vector<PosteriorChain> chains;
    std::vector<ParameterSummary> summaries;
};

struct RecoveryReport {
    std::vector<RecoveryRun> runs;
    std::vector<RecoveryRow> rows;
};

/// Simulate once, then fit each missingness level and compare with truth.
RecoveryReport recovery_experiment(const SimConfig& config, const FitSettings& settings,
                                   std::span<const double> fractions);
RecoveryReport recovery_experiment(const SimConfig& config, const SimDataset& data,
                                   const FitSettings& settings, std::span<const double> fractions);

/// Truth values of the free simulation parameters, by name.
double truth_value(const SimConfig& config, const std::string& name);

struct BinProjection {
    std::size_t bin = 0;
    std::vector<double> cell_centers;
    Band band;                          // final projection year
    std::vector<double> truth;          // empty when no truth is known
    Band mass;                          // integral per projection year
    std::vector<double> truth_mass;
    double containment = 0.0;           // share of cells with truth inside the band
};

/// Projects every retained draw (at most max_draws, evenly spaced) from
/// start[l] with constant covariates[l] for `steps` steps.
std::vector<BinProjection> projection_bands(std::span<const PosteriorChain> chains,
                                            std::span<const IntensityField> start,
                                            std::span<const std::vector<double>> covariates,
                                            std::size_t steps, std::size_t max_draws = 400,
                                            const KernelParams* truth = nullptr);

/// Starting fields for the projection experiment: per-plot intensity of
/// each bin in the first year of the complete panel.
std::vector<IntensityField> projection_start(const SparsePanel& complete, const TraitGrid& grid,
                                             std::optional<double> bandwidth = {});

/// Bands over horizon - 1 steps with the true-parameter projection overlaid.
std::vector<BinProjection> projection_experiment(std::span<const PosteriorChain> chains,
                                                 const SparsePanel& complete,
                                                 const SimConfig& config,
                                                 std::size_t max_draws = 400);

/// Median over bins and cells of (upper - lower) in `wide` over that in `narrow`.
double median_width_ratio(std::span<const BinProjection> wide,
                          std::span<const BinProjection> narrow);

}  // namespace ipm
