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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipm/climate.hpp"
#include "ipm/cox.hpp"
#include "ipm/grid.hpp"
#include "ipm/kernel.hpp"

namespace ipm {

struct BoundaryValues {
    double q0 = 1.0;
    double delta0 = 0.0;
};

/// Inverts survival and influx at zero population: Q0 = q/(1-q), delta0 = log D.
BoundaryValues solve_boundary(double q_max, double delta_max);

/// Open interval that q + Delta must stay inside at every realized mass.
struct IdentifiabilityBound {
    double rho_max = 0.0;
    double lower = 0.0;
    double upper = 0.0;

    bool contains(double value) const noexcept { return value > lower && value < upper; }
};

/// rho_max = max_t |N_{t+1} - N_t| / N_t. When rho_max is below
/// `min_half_width` the interval is widened to 1 +/- min_half_width.
IdentifiabilityBound identifiability_bound(std::span<const double> population_series,
                                           double min_half_width = 0.05);

/// Which parameters are sampled; every other value comes from `base`.
/// Q0 and mu are always fixed.
struct ModelSpec {
    KernelParams base;
    bool estimate_q1 = true;
    bool estimate_sigma = true;
    bool estimate_delta0 = true;
    bool estimate_delta1 = false;
    bool estimate_eta = true;
    std::vector<bool> estimate_beta{true};
    GPConfig gp{0.1, 1.0, CorrelationFamily::exponential};
    bool estimate_gp = true;
    /// Without a latent field the operating intensity equals gamma~.
    bool latent_field = true;
    double intensity_floor = 1e-12;
};

struct PriorSpec {
    double beta_variance = 100.0;
    double sigma_scale = 1.0;      // half-normal
    double eta_shape = 2.0;        // gamma, rate parameterization
    double eta_rate = 10.0;
    double delta0_scale = 0.5;     // half-normal
    double q1_rate = 1.0;          // exponential
    double delta1_rate = 1.0;      // exponential
    double sigma2_shape = 2.0;     // inverse gamma
    double sigma2_scale = 1.0;
    double phi_lower = 0.03;       // uniform
    double phi_upper = 3.0;

    /// Defaults whose phi support is 3/(U-L) .. 300/(U-L).
    static PriorSpec for_grid(const TraitGrid& grid);

    double log_density(const KernelParams& params, const GPConfig& gp,
                       const ModelSpec& spec) const;
};

/// Full sampler state: kernel parameters, GP hyperparameters and one latent
/// log-intensity field per likelihood term.
struct ModelState {
    KernelParams params;
    GPConfig gp;
    std::vector<std::vector<double>> eps;
};

struct PosteriorTerms {
    std::vector<double> log_likelihood;  // one per term
    std::vector<double> gp_log_density;  // one per term (0 without latent field)
    double log_prior = 0.0;
    double total = 0.0;
};

/// Scaled pseudo-IPM posterior over a fixed set of transition terms.
class PosteriorModel {
public:
    PosteriorModel(TraitGrid grid, std::vector<TransitionTerm> terms, IdentifiabilityBound bound,
                   ModelSpec spec, PriorSpec priors);

    /// Terms and bound derived from a panel; the bound uses the observed
    /// per-plot population series up to `options.last_year`.
    static PosteriorModel from_panel(const SparsePanel& panel, const TraitGrid& grid,
                                     const CovariateSpec& covariates, ModelSpec spec,
                                     PriorSpec priors, const TermOptions& options = {},
                                     double min_half_width = 0.05);

    const TraitGrid& grid() const noexcept { return grid_; }
    std::span<const TransitionTerm> terms() const noexcept { return terms_; }
    const IdentifiabilityBound& bound() const noexcept { return bound_; }
    const ModelSpec& spec() const noexcept { return spec_; }
    const PriorSpec& priors() const noexcept { return priors_; }
    PriorSpec& priors() noexcept { return priors_; }

    /// Start-of-year per-plot masses that drive density dependence.
    std::span<const double> realized_masses() const noexcept { return masses_; }

    bool satisfies_constraint(const KernelParams& params) const;

    /// gamma~_{l,t+1} for every term.
    std::vector<IntensityField> predicted(const KernelParams& params) const;

    /// Term-level decomposition. Throws constraint-violation when q + Delta
    /// leaves the identifiability interval at some realized mass.
    PosteriorTerms evaluate(const ModelState& state, bool with_likelihood = true) const;
    double log_posterior(const ModelState& state) const { return evaluate(state).total; }

    /// All-zero latent fields of the right shape.
    ModelState zero_state(const KernelParams& params, const GPConfig& gp) const;

private:
    TraitGrid grid_;
    std::vector<TransitionTerm> terms_;
    IdentifiabilityBound bound_;
    ModelSpec spec_;
    PriorSpec priors_;
    std::vector<double> masses_;
};

double log_posterior(const ModelState& state, const PosteriorModel& model);

/// Picks exponential rates for Q1 and delta1 so that prior draws satisfy the
/// identifiability constraint with probability >= 0.5, preferring rates near
/// one over the median realized mass. Returns the achieved prior mass.
double calibrate_constraint_priors(PosteriorModel& model, std::uint64_t seed,
                                   std::size_t draws = 4000);

struct McmcConfig {
    std::size_t iterations = 50000;
    std::size_t burn_in = 10000;
    std::size_t thin = 10;
    std::uint64_t seed = 1;
    double target_acceptance = 0.3;
    double initial_scale = 0.1;
    std::size_t latent_sweeps = 1;
    /// Also propose kernel parameters with the operating intensity held fixed.
    bool centered_moves = true;
    bool store_latent = false;
    /// Switch the likelihood off to sample the prior (subject to constraints).
    bool with_likelihood = true;
};

struct ChainSample {
    std::size_t iteration = 0;
    KernelParams params;
    GPConfig gp;
    double log_posterior = 0.0;
    std::vector<std::vector<double>> eps;  // empty unless store_latent
};

struct PosteriorChain {
    std::vector<ChainSample> samples;
    std::vector<std::string> free_parameters;
    std::map<std::string, double> acceptance;
    std::vector<double> log_posterior_trace;  // every iteration
    std::uint64_t seed = 0;
    std::size_t iterations = 0;
    std::size_t burn_in = 0;
    std::size_t thin = 1;
    std::size_t completed_iterations = 0;
    bool interrupted = false;
};

/// Initial state: free parameters at prior medians, moved into the
/// constraint region if needed; latent fields at zero.
ModelState initial_state(const PosteriorModel& model);

/// Metropolis-within-Gibbs: random-walk updates on unconstrained transforms
/// of the kernel and GP parameters (Robbins-Monro scaled during burn-in, then
/// frozen) and elliptical slice updates of each term's latent field.
/// `stop` is polled once per iteration; a true result ends the run early
/// with `interrupted` set.
PosteriorChain mcmc_fit(const PosteriorModel& model, const McmcConfig& config,
                        const std::function<bool()>& stop = {});

/// Value of a named parameter ("Q1", "sigma", "beta_1", "sigma2_eps", ...).
double parameter_value(const ChainSample& sample, const std::string& name);

/// Names of every recorded parameter, free or fixed, for `beta_count`
/// regression coefficients.
std::vector<std::string> parameter_names(std::size_t beta_count);

struct ParameterSummary {
    std::string name;
    double mean = 0.0;
    double median = 0.0;
    double lower = 0.0;  // 2.5% equal-tail
    double upper = 0.0;  // 97.5% equal-tail
    std::size_t count = 0;
};

/// Mean, median and 95% equal-tail interval of one parameter's draws.
ParameterSummary summarize_values(const std::string& name, std::span<const double> values);

/// Summaries for the chain's free parameters. Needs at least `min_samples`
/// retained draws.
std::vector<ParameterSummary> summarize(const PosteriorChain& chain, std::size_t min_samples = 100);
std::vector<ParameterSummary> summarize(std::span<const PosteriorChain> chains,
                                        std::size_t min_samples = 100);

/// Pointwise quantile bands over a set of fields on one grid.
struct Band {
    std::vector<double> lower;
    std::vector<double> median;
    std::vector<double> upper;
};

Band pointwise_band(std::span<const std::vector<double>> draws, double lower_q = 0.025,
                    double upper_q = 0.975);

/// Type-7 quantile of unsorted values.
double quantile(std::vector<double> values, double p);

}  // namespace ipm
