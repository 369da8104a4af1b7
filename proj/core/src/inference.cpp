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

#include "ipm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "ipm/error.hpp"
#include "ipm/propagation.hpp"

namespace ipm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_half_normal(double x, double scale) {
    if (x < 0.0) return kNegInf;
    return std::log(2.0) - 0.5 * std::log(2.0 * std::numbers::pi * scale * scale) -
           0.5 * x * x / (scale * scale);
}

double log_exponential(double x, double rate) {
    if (x < 0.0) return kNegInf;
    return std::log(rate) - rate * x;
}

double log_gamma_density(double x, double shape, double rate) {
    if (!(x > 0.0)) return kNegInf;
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double log_inverse_gamma(double x, double shape, double scale) {
    if (!(x > 0.0)) return kNegInf;
    return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

// Wilson-Hilferty approximation to the median of Gamma(shape, 1).
double gamma_median(double shape) {
    const double c = 1.0 - 1.0 / (9.0 * shape);
    return shape * c * c * c;
}

double floored(double v, double floor) { return v > floor ? v : floor; }

}  // namespace

BoundaryValues solve_boundary(double q_max, double delta_max) {
    if (!(q_max > 0.0 && q_max < 1.0)) {
        throw Error(Errc::invalid_bound, "survival bound must lie in (0, 1)");
    }
    if (!(delta_max > 0.0) || !std::isfinite(delta_max)) {
        throw Error(Errc::invalid_bound, "influx bound must be positive");
    }
    return {q_max / (1.0 - q_max), std::log(delta_max)};
}

IdentifiabilityBound identifiability_bound(std::span<const double> series, double min_half_width) {
    if (series.size() < 2) {
        throw Error(Errc::invalid_argument, "population series needs at least two years");
    }
    for (double n : series) {
        if (!(n > 0.0)) {
            throw Error(Errc::zero_population_year, "population series contains a zero year");
        }
    }
    double rho = 0.0;
    for (std::size_t t = 0; t + 1 < series.size(); ++t) {
        rho = std::max(rho, std::abs((series[t + 1] - series[t]) / series[t]));
    }
    const double half = std::max(rho, min_half_width);
    return {rho, 1.0 - half, 1.0 + half};
}

PriorSpec PriorSpec::for_grid(const TraitGrid& grid) {
    PriorSpec p;
    const double range = grid.upper() - grid.lower();
    p.phi_lower = 3.0 / range;
    p.phi_upper = 300.0 / range;
    return p;
}

double PriorSpec::log_density(const KernelParams& params, const GPConfig& gp,
                              const ModelSpec& spec) const {
    double lp = 0.0;
    if (spec.estimate_q1) lp += log_exponential(params.q1, q1_rate);
    if (spec.estimate_sigma) lp += log_half_normal(params.sigma, sigma_scale);
    if (spec.estimate_delta0) lp += log_half_normal(params.delta0, delta0_scale);
    if (spec.estimate_delta1) lp += log_exponential(params.delta1, delta1_rate);
    if (spec.estimate_eta) lp += log_gamma_density(params.eta, eta_shape, eta_rate);
    for (std::size_t k = 0; k < params.beta.size() && k < spec.estimate_beta.size(); ++k) {
        if (spec.estimate_beta[k]) {
            const double b = params.beta[k];
            lp += -0.5 * std::log(2.0 * std::numbers::pi * beta_variance) -
                  0.5 * b * b / beta_variance;
        }
    }
    if (spec.estimate_gp && spec.latent_field) {
        lp += log_inverse_gamma(gp.sigma2, sigma2_shape, sigma2_scale);
        if (gp.phi <= phi_lower || gp.phi >= phi_upper) return kNegInf;
        lp += -std::log(phi_upper - phi_lower);
    }
    return lp;
}

PosteriorModel::PosteriorModel(TraitGrid grid, std::vector<TransitionTerm> terms,
                               IdentifiabilityBound bound, ModelSpec spec, PriorSpec priors)
    : grid_(std::move(grid)),
      terms_(std::move(terms)),
      bound_(bound),
      spec_(std::move(spec)),
      priors_(priors) {
    if (terms_.empty()) {
        throw Error(Errc::no_live_terms, "no (year, bin) pair has data on both sides");
    }
    if (spec_.estimate_beta.size() != spec_.base.beta.size()) {
        throw Error(Errc::invalid_argument, "estimate_beta must have one flag per beta entry");
    }
    spec_.base.validate(spec_.base.beta.size() - 1);
    masses_.reserve(terms_.size());
    for (const auto& term : terms_) {
        if (!(term.start.grid() == grid_) || !(term.counts.grid == grid_)) {
            throw Error(Errc::grid_mismatch, "transition term lives on a different grid");
        }
        if (term.covariates.size() + 1 != spec_.base.beta.size()) {
            throw Error(Errc::invalid_argument, "term covariates do not match beta");
        }
        masses_.push_back(integrate(term.start));
    }
}

PosteriorModel PosteriorModel::from_panel(const SparsePanel& panel, const TraitGrid& grid,
                                          const CovariateSpec& covariates, ModelSpec spec,
                                          PriorSpec priors, const TermOptions& options,
                                          double min_half_width) {
    auto terms = build_transition_terms(panel, grid, covariates, options);
    if (terms.empty()) {
        throw Error(Errc::no_live_terms, "no (year, bin) pair has observed plots on both sides");
    }
    const auto series = observed_population_series(panel, options.last_year);
    const auto bound = identifiability_bound(series, min_half_width);
    return PosteriorModel(grid, std::move(terms), bound, std::move(spec), priors);
}

bool PosteriorModel::satisfies_constraint(const KernelParams& params) const {
    for (double mass : masses_) {
        const double v = survival_prob(params, mass) + recruitment_rate(params, mass);
        if (!bound_.contains(v)) {
            return false;
        }
    }
    return true;
}

std::vector<IntensityField> PosteriorModel::predicted(const KernelParams& params) const {
    std::vector<IntensityField> out;
    out.reserve(terms_.size());
    for (const auto& term : terms_) {
        out.push_back(pseudo_ipm_step(term.start, term.covariates, params));
    }
    return out;
}

PosteriorTerms PosteriorModel::evaluate(const ModelState& state, bool with_likelihood) const {
    if (!satisfies_constraint(state.params)) {
        throw Error(Errc::constraint_violation,
                    "q + Delta leaves (" + std::to_string(bound_.lower) + ", " +
                        std::to_string(bound_.upper) + ") at a realized population mass");
    }
    if (spec_.latent_field && state.eps.size() != terms_.size()) {
        throw Error(Errc::length_mismatch, "need one latent field per likelihood term");
    }
    PosteriorTerms out;
    out.log_likelihood.assign(terms_.size(), 0.0);
    out.gp_log_density.assign(terms_.size(), 0.0);
    out.log_prior = priors_.log_density(state.params, state.gp, spec_);

    const StepOperator op(grid_, state.params);
    std::vector<double> pred(grid_.size());
    std::vector<double> lambda(grid_.size());
    std::optional<GaussianProcess> gp;
    if (spec_.latent_field) {
        gp.emplace(grid_, state.gp);
    }
    for (std::size_t k = 0; k < terms_.size(); ++k) {
        const auto& term = terms_[k];
        if (with_likelihood) {
            op.apply(term.start.values(), term.covariates, state.params, pred);
            for (std::size_t b = 0; b < pred.size(); ++b) {
                lambda[b] = floored(pred[b], spec_.intensity_floor);
                if (spec_.latent_field) {
                    lambda[b] *= std::exp(state.eps[k][b]);
                }
            }
            out.log_likelihood[k] =
                log_likelihood(term.counts.counts, lambda, grid_.width(), term.multiplicity);
        }
        if (gp) {
            out.gp_log_density[k] = gp->log_density(state.eps[k]);
        }
    }
    out.total = out.log_prior;
    for (std::size_t k = 0; k < terms_.size(); ++k) {
        out.total += out.log_likelihood[k] + out.gp_log_density[k];
    }
    return out;
}

ModelState PosteriorModel::zero_state(const KernelParams& params, const GPConfig& gp) const {
    ModelState s{params, gp, {}};
    if (spec_.latent_field) {
        s.eps.assign(terms_.size(), std::vector<double>(grid_.size(), 0.0));
    }
    return s;
}

double log_posterior(const ModelState& state, const PosteriorModel& model) {
    return model.log_posterior(state);
}

double calibrate_constraint_priors(PosteriorModel& model, std::uint64_t seed, std::size_t draws) {
    const auto& spec = model.spec();
    auto masses = std::vector<double>(model.realized_masses().begin(),
                                      model.realized_masses().end());
    std::nth_element(masses.begin(), masses.begin() + static_cast<long>(masses.size() / 2),
                     masses.end());
    const double median_mass = std::max(masses[masses.size() / 2], 1e-12);
    const double base_rate = 1.0 / median_mass;

    auto mass_for = [&](double factor) {
        std::mt19937_64 rng(seed);
        std::exponential_distribution<double> q1_draw(base_rate * factor);
        std::exponential_distribution<double> d1_draw(base_rate * factor);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::size_t inside = 0;
        KernelParams p = spec.base;
        for (std::size_t i = 0; i < draws; ++i) {
            if (spec.estimate_q1) p.q1 = q1_draw(rng);
            if (spec.estimate_delta1) p.delta1 = d1_draw(rng);
            if (spec.estimate_delta0) p.delta0 = std::abs(normal(rng)) * model.priors().delta0_scale;
            if (model.satisfies_constraint(p)) ++inside;
        }
        return static_cast<double>(inside) / static_cast<double>(draws);
    };

    double best_factor = 1.0;
    double best_mass = -1.0;
    for (int step = 0; step <= 20; ++step) {
        // 0, +1, -1, +2, -2, ... in powers of two
        const int k = (step % 2 == 1) ? (step + 1) / 2 : -(step / 2);
        const double factor = std::ldexp(1.0, k);
        const double m = mass_for(factor);
        if (m > best_mass) {
            best_mass = m;
            best_factor = factor;
        }
        if (m >= 0.5) {
            break;
        }
    }
    model.priors().q1_rate = base_rate * best_factor;
    model.priors().delta1_rate = base_rate * best_factor;
    return best_mass;
}

// ---------------------------------------------------------------------------
// Sampler

namespace {

enum class Slot { q1, sigma, delta0, delta1, eta, beta, sigma2, phi };
enum class Transform { log, identity, logit };

struct Coordinate {
    Slot slot;
    std::size_t index = 0;
    std::string name;
    Transform transform;
    double lo = 0.0;
    double hi = 0.0;
};

double get(const Coordinate& c, const KernelParams& p, const GPConfig& gp) {
    switch (c.slot) {
        case Slot::q1: return p.q1;
        case Slot::sigma: return p.sigma;
        case Slot::delta0: return p.delta0;
        case Slot::delta1: return p.delta1;
        case Slot::eta: return p.eta;
        case Slot::beta: return p.beta[c.index];
        case Slot::sigma2: return gp.sigma2;
        case Slot::phi: return gp.phi;
    }
    return 0.0;
}

void set(const Coordinate& c, KernelParams& p, GPConfig& gp, double v) {
    switch (c.slot) {
        case Slot::q1: p.q1 = v; break;
        case Slot::sigma: p.sigma = v; break;
        case Slot::delta0: p.delta0 = v; break;
        case Slot::delta1: p.delta1 = v; break;
        case Slot::eta: p.eta = v; break;
        case Slot::beta: p.beta[c.index] = v; break;
        case Slot::sigma2: gp.sigma2 = v; break;
        case Slot::phi: gp.phi = v; break;
    }
}

double to_free(const Coordinate& c, double x) {
    switch (c.transform) {
        case Transform::log: return std::log(x);
        case Transform::identity: return x;
        case Transform::logit: {
            const double s = (x - c.lo) / (c.hi - c.lo);
            return std::log(s) - std::log1p(-s);
        }
    }
    return x;
}

double from_free(const Coordinate& c, double u) {
    switch (c.transform) {
        case Transform::log: return std::exp(u);
        case Transform::identity: return u;
        case Transform::logit: return c.lo + (c.hi - c.lo) / (1.0 + std::exp(-u));
    }
    return u;
}

// log |dx/du| at the free coordinate u
double log_jacobian(const Coordinate& c, double u) {
    switch (c.transform) {
        case Transform::log: return u;
        case Transform::identity: return 0.0;
        case Transform::logit: {
            const double s = 1.0 / (1.0 + std::exp(-u));
            return std::log(c.hi - c.lo) + std::log(s) + std::log1p(-s);
        }
    }
    return 0.0;
}

std::vector<Coordinate> kernel_coordinates(const ModelSpec& spec) {
    std::vector<Coordinate> out;
    if (spec.estimate_q1) out.push_back({Slot::q1, 0, "Q1", Transform::log});
    if (spec.estimate_sigma) out.push_back({Slot::sigma, 0, "sigma", Transform::log});
    if (spec.estimate_delta0) out.push_back({Slot::delta0, 0, "delta0", Transform::log});
    if (spec.estimate_delta1) out.push_back({Slot::delta1, 0, "delta1", Transform::log});
    if (spec.estimate_eta) out.push_back({Slot::eta, 0, "eta", Transform::log});
    for (std::size_t k = 0; k < spec.estimate_beta.size(); ++k) {
        if (spec.estimate_beta[k]) {
            out.push_back({Slot::beta, k, "beta_" + std::to_string(k), Transform::identity});
        }
    }
    return out;
}

std::vector<Coordinate> gp_coordinates(const ModelSpec& spec, const PriorSpec& priors) {
    std::vector<Coordinate> out;
    if (spec.estimate_gp && spec.latent_field) {
        out.push_back({Slot::sigma2, 0, "sigma2_eps", Transform::log});
        out.push_back({Slot::phi, 0, "phi", Transform::logit, priors.phi_lower, priors.phi_upper});
    }
    return out;
}

struct Proposal {
    double scale;
    std::size_t attempts = 0;
    std::size_t accepted = 0;
    std::size_t post_attempts = 0;
    std::size_t post_accepted = 0;
};

class Sampler {
public:
    Sampler(const PosteriorModel& model, const McmcConfig& config, ModelState init)
        : model_(model),
          config_(config),
          spec_(model.spec()),
          grid_(model.grid()),
          rng_(config.seed),
          params_(std::move(init.params)),
          gp_config_(init.gp),
          op_(grid_, params_),
          prop_op_(op_),
          kernel_coords_(kernel_coordinates(spec_)),
          gp_coords_(gp_coordinates(spec_, model.priors())) {
        const std::size_t n_terms = model.terms().size();
        const std::size_t n = grid_.size();
        if (spec_.latent_field) {
            gp_.emplace(grid_, gp_config_);
        }
        terms_.resize(n_terms);
        scratch_.resize(n_terms);
        for (std::size_t k = 0; k < n_terms; ++k) {
            auto& c = terms_[k];
            const auto& term = model.terms()[k];
            c.mass = model.realized_masses()[k];
            c.counts.assign(term.counts.counts.begin(), term.counts.counts.end());
            double total = 0.0;
            for (double v : c.counts) total += v;
            c.constant = total * std::log(static_cast<double>(term.multiplicity));
            c.exposure_scale = static_cast<double>(term.multiplicity) * grid_.width();
            c.conv.assign(n, 0.0);
            c.pred.assign(n, 0.0);
            c.log_pred.assign(n, 0.0);
            c.eps = spec_.latent_field ? std::move(init.eps[k]) : std::vector<double>(n, 0.0);
            c.exp_eps.resize(n);
            for (std::size_t b = 0; b < n; ++b) c.exp_eps[b] = std::exp(c.eps[b]);
            op_.convolve(term.start.values(), c.conv);
            predict(op_, params_, k, c.conv, c.pred, c.log_pred);
            c.loglik = loglik(c, c.pred, c.log_pred, c.eps, c.exp_eps);
            c.gp_logd = gp_ ? gp_->log_density(c.eps) : 0.0;
            auto& s = scratch_[k];
            s.conv.assign(n, 0.0);
            s.pred.assign(n, 0.0);
            s.log_pred.assign(n, 0.0);
            s.eps.assign(n, 0.0);
            s.exp_eps.assign(n, 0.0);
        }
        nu_.assign(n, 0.0);
        log_prior_ = model.priors().log_density(params_, gp_config_, spec_);
        if (!std::isfinite(target())) {
            throw Error(Errc::non_finite_posterior, "log posterior is not finite at the initial state");
        }
        for (std::size_t i = 0; i < kernel_coords_.size(); ++i) {
            noncentered_.push_back({config.initial_scale});
            centered_.push_back({config.initial_scale});
        }
        for (std::size_t i = 0; i < gp_coords_.size(); ++i) {
            gp_moves_.push_back({config.initial_scale});
        }
    }

    PosteriorChain run(const std::function<bool()>& stop) {
        PosteriorChain chain;
        chain.seed = config_.seed;
        chain.iterations = config_.iterations;
        chain.burn_in = config_.burn_in;
        chain.thin = std::max<std::size_t>(config_.thin, 1);
        for (const auto& c : kernel_coords_) chain.free_parameters.push_back(c.name);
        for (const auto& c : gp_coords_) chain.free_parameters.push_back(c.name);
        chain.log_posterior_trace.reserve(config_.iterations);
        const bool centered = config_.centered_moves && spec_.latent_field;

        for (std::size_t it = 0; it < config_.iterations; ++it) {
            if (stop && stop()) {
                chain.interrupted = true;
                break;
            }
            iteration_ = it;
            for (std::size_t i = 0; i < kernel_coords_.size(); ++i) {
                kernel_move(i, false);
                if (centered) kernel_move(i, true);
            }
            for (std::size_t i = 0; i < gp_coords_.size(); ++i) {
                gp_move(i);
            }
            if (spec_.latent_field) {
                for (std::size_t s = 0; s < config_.latent_sweeps; ++s) {
                    for (std::size_t k = 0; k < terms_.size(); ++k) latent_move(k);
                }
            }
            const double lp = target();
            chain.log_posterior_trace.push_back(lp);
            chain.completed_iterations = it + 1;
            if (it >= config_.burn_in && (it - config_.burn_in) % chain.thin == 0) {
                ChainSample s{it, params_, gp_config_, lp, {}};
                if (config_.store_latent) {
                    for (const auto& c : terms_) s.eps.push_back(c.eps);
                }
                chain.samples.push_back(std::move(s));
            }
        }

        auto rate = [](const Proposal& p) {
            return p.post_attempts ? static_cast<double>(p.post_accepted) /
                                         static_cast<double>(p.post_attempts)
                                   : 0.0;
        };
        for (std::size_t i = 0; i < kernel_coords_.size(); ++i) {
            chain.acceptance[kernel_coords_[i].name] = rate(noncentered_[i]);
            if (centered) {
                chain.acceptance[kernel_coords_[i].name + ":centered"] = rate(centered_[i]);
            }
        }
        for (std::size_t i = 0; i < gp_coords_.size(); ++i) {
            chain.acceptance[gp_coords_[i].name] = rate(gp_moves_[i]);
        }
        if (spec_.latent_field && latent_steps_ > 0) {
            // elliptical slice always moves; report likelihood evaluations per update
            chain.acceptance["eps:evaluations_per_update"] =
                static_cast<double>(latent_evaluations_) / static_cast<double>(latent_steps_);
        }
        return chain;
    }

private:
    struct Buffers {
        std::vector<double> conv;
        std::vector<double> pred;      // floored gamma~
        std::vector<double> log_pred;
        std::vector<double> eps;
        std::vector<double> exp_eps;
    };
    struct TermCache : Buffers {
        double mass = 0.0;
        std::vector<double> counts;
        double constant = 0.0;        // log(m) times the pooled count
        double exposure_scale = 0.0;  // m d
        double loglik = 0.0;
        double gp_logd = 0.0;
    };

    const PosteriorModel& model_;
    McmcConfig config_;
    const ModelSpec& spec_;
    TraitGrid grid_;
    std::mt19937_64 rng_;
    KernelParams params_;
    GPConfig gp_config_;
    std::optional<GaussianProcess> gp_;
    StepOperator op_;
    StepOperator prop_op_;
    std::vector<TermCache> terms_;
    std::vector<Buffers> scratch_;
    std::vector<double> nu_;
    double log_prior_ = 0.0;
    std::vector<Coordinate> kernel_coords_;
    std::vector<Coordinate> gp_coords_;
    std::vector<Proposal> noncentered_;
    std::vector<Proposal> centered_;
    std::vector<Proposal> gp_moves_;
    std::size_t iteration_ = 0;
    std::size_t latent_steps_ = 0;
    std::size_t latent_evaluations_ = 0;

    double target() const {
        double total = log_prior_;
        for (const auto& c : terms_) total += c.loglik + c.gp_logd;
        return total;
    }

    void predict(const StepOperator& op, const KernelParams& params, std::size_t k,
                 std::span<const double> conv, std::vector<double>& pred,
                 std::vector<double>& log_pred) const {
        const auto& term = model_.terms()[k];
        op.combine(conv, terms_[k].mass, climate_effect(params, term.covariates), params, pred);
        for (std::size_t b = 0; b < pred.size(); ++b) {
            pred[b] = floored(pred[b], spec_.intensity_floor);
            log_pred[b] = std::log(pred[b]);
        }
    }

    // Poisson log likelihood with lambda = pred e^eps, reusing log(pred) and e^eps.
    double loglik(const TermCache& c, std::span<const double> pred,
                  std::span<const double> log_pred, std::span<const double> eps,
                  std::span<const double> exp_eps) const {
        if (!config_.with_likelihood) return 0.0;
        double points = c.constant;
        double exposure = 0.0;
        const bool latent = spec_.latent_field;
        for (std::size_t b = 0; b < pred.size(); ++b) {
            if (c.counts[b] > 0.0) points += c.counts[b] * (latent ? log_pred[b] + eps[b] : log_pred[b]);
            exposure += latent ? pred[b] * exp_eps[b] : pred[b];
        }
        return points - c.exposure_scale * exposure;
    }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

    bool accept(double log_ratio) {
        if (!(log_ratio == log_ratio)) return false;  // NaN
        return log_ratio >= 0.0 || std::log(uniform()) < log_ratio;
    }

    void record(Proposal& p, bool accepted) {
        p.attempts += 1;
        p.accepted += accepted ? 1 : 0;
        if (iteration_ < config_.burn_in) {
            const double step = 1.0 / std::pow(static_cast<double>(iteration_) + 1.0, 0.6);
            const double log_scale = std::log(p.scale) +
                                     step * ((accepted ? 1.0 : 0.0) - config_.target_acceptance);
            p.scale = std::clamp(std::exp(log_scale), 1e-5, 10.0);
        } else {
            p.post_attempts += 1;
            p.post_accepted += accepted ? 1 : 0;
        }
    }

    // Random-walk update of one kernel parameter. The non-centered form keeps
    // the latent fields and lets the operating intensity move; the centered
    // form shifts each field by log gamma~(old) - log gamma~(new) so that the
    // operating intensity, and with it the likelihood, stays put.
    void kernel_move(std::size_t i, bool centered) {
        const auto& coord = kernel_coords_[i];
        Proposal& prop = centered ? centered_[i] : noncentered_[i];
        const double u = to_free(coord, get(coord, params_, gp_config_));
        const double u_new = u + prop.scale * normal();
        KernelParams proposal = params_;
        GPConfig gp_unused = gp_config_;
        set(coord, proposal, gp_unused, from_free(coord, u_new));

        if (!model_.satisfies_constraint(proposal)) {
            record(prop, false);
            return;
        }
        const double prior_new = model_.priors().log_density(proposal, gp_config_, spec_);
        if (!std::isfinite(prior_new)) {
            record(prop, false);
            return;
        }
        const bool growth_changed = coord.slot == Slot::sigma;
        prop_op_.update(proposal);

        const std::size_t n_terms = terms_.size();
        std::vector<double> loglik_new(n_terms), gp_new(n_terms);
        double delta = prior_new - log_prior_ + log_jacobian(coord, u_new) - log_jacobian(coord, u);
        for (std::size_t k = 0; k < n_terms && std::isfinite(delta); ++k) {
            const auto& term = model_.terms()[k];
            auto& c = terms_[k];
            auto& s = scratch_[k];
            if (growth_changed) prop_op_.convolve(term.start.values(), s.conv);
            predict(prop_op_, proposal, k, growth_changed ? s.conv : c.conv, s.pred, s.log_pred);
            if (centered) {
                for (std::size_t b = 0; b < s.pred.size(); ++b) {
                    s.eps[b] = c.eps[b] + c.log_pred[b] - s.log_pred[b];
                    s.exp_eps[b] = c.exp_eps[b] * (c.pred[b] / s.pred[b]);
                }
                gp_new[k] = gp_->log_density(s.eps);
                delta += gp_new[k] - c.gp_logd;
                loglik_new[k] = c.loglik;
            } else {
                loglik_new[k] = loglik(c, s.pred, s.log_pred, c.eps, c.exp_eps);
                delta += loglik_new[k] - c.loglik;
            }
        }
        const bool ok = std::isfinite(delta) && accept(delta);
        record(prop, ok);
        if (!ok) {
            prop_op_ = op_;
            return;
        }
        params_ = std::move(proposal);
        op_ = prop_op_;
        log_prior_ = prior_new;
        for (std::size_t k = 0; k < n_terms; ++k) {
            auto& c = terms_[k];
            auto& s = scratch_[k];
            if (growth_changed) c.conv.swap(s.conv);
            c.pred.swap(s.pred);
            c.log_pred.swap(s.log_pred);
            c.loglik = loglik_new[k];
            if (centered) {
                c.eps.swap(s.eps);
                c.exp_eps.swap(s.exp_eps);
                c.gp_logd = gp_new[k];
            }
        }
    }

    void gp_move(std::size_t i) {
        const auto& coord = gp_coords_[i];
        Proposal& prop = gp_moves_[i];
        const double u = to_free(coord, get(coord, params_, gp_config_));
        const double u_new = u + prop.scale * normal();
        GPConfig proposal = gp_config_;
        KernelParams unused = params_;
        set(coord, unused, proposal, from_free(coord, u_new));
        const double prior_new = model_.priors().log_density(params_, proposal, spec_);
        if (!std::isfinite(prior_new)) {
            record(prop, false);
            return;
        }
        std::optional<GaussianProcess> gp;
        try {
            gp.emplace(grid_, proposal);
        } catch (const Error&) {
            record(prop, false);
            return;
        }
        std::vector<double> logd(terms_.size());
        double delta = prior_new - log_prior_ + log_jacobian(coord, u_new) - log_jacobian(coord, u);
        for (std::size_t k = 0; k < terms_.size(); ++k) {
            logd[k] = gp->log_density(terms_[k].eps);
            delta += logd[k] - terms_[k].gp_logd;
        }
        const bool ok = accept(delta);
        record(prop, ok);
        if (!ok) return;
        gp_config_ = proposal;
        gp_ = std::move(gp);
        log_prior_ = prior_new;
        for (std::size_t k = 0; k < terms_.size(); ++k) terms_[k].gp_logd = logd[k];
    }

    // Elliptical slice sampling of one latent field under its GP prior.
    void latent_move(std::size_t k) {
        auto& c = terms_[k];
        auto& s = scratch_[k];
        const std::size_t n = grid_.size();
        gp_->sample(rng_, nu_);
        const double threshold = c.loglik + std::log(uniform());
        double angle = 2.0 * std::numbers::pi * uniform();
        double lo = angle - 2.0 * std::numbers::pi;
        double hi = angle;
        latent_steps_ += 1;
        for (;;) {
            latent_evaluations_ += 1;
            const double cs = std::cos(angle);
            const double sn = std::sin(angle);
            for (std::size_t b = 0; b < n; ++b) {
                s.eps[b] = c.eps[b] * cs + nu_[b] * sn;
                s.exp_eps[b] = std::exp(s.eps[b]);
            }
            const double ll = loglik(c, c.pred, c.log_pred, s.eps, s.exp_eps);
            if (ll > threshold) {
                c.eps.swap(s.eps);
                c.exp_eps.swap(s.exp_eps);
                c.loglik = ll;
                c.gp_logd = gp_->log_density(c.eps);
                return;
            }
            if (angle < 0.0) {
                lo = angle;
            } else {
                hi = angle;
            }
            angle = lo + (hi - lo) * uniform();
            if (hi - lo < 1e-12) {
                return;  // bracket collapsed onto the current state
            }
        }
    }
};

}  // namespace

ModelState initial_state(const PosteriorModel& model) {
    const auto& spec = model.spec();
    const auto& pr = model.priors();
    KernelParams p = spec.base;
    if (spec.estimate_q1) p.q1 = std::log(2.0) / pr.q1_rate;
    if (spec.estimate_sigma) p.sigma = 0.6744897501960817 * pr.sigma_scale;
    if (spec.estimate_delta0) p.delta0 = 0.6744897501960817 * pr.delta0_scale;
    if (spec.estimate_delta1) p.delta1 = std::log(2.0) / pr.delta1_rate;
    if (spec.estimate_eta) p.eta = gamma_median(pr.eta_shape) / pr.eta_rate;
    for (std::size_t k = 0; k < p.beta.size(); ++k) {
        if (spec.estimate_beta[k]) p.beta[k] = 0.0;
    }
    GPConfig gp = spec.gp;
    if (spec.estimate_gp && spec.latent_field) {
        gp.sigma2 = pr.sigma2_scale / gamma_median(pr.sigma2_shape);
        gp.phi = 0.5 * (pr.phi_lower + pr.phi_upper);
    }

    if (!model.satisfies_constraint(p)) {
        // Walk Q1, delta0 and delta1 away from their medians until q + Delta
        // fits inside the interval at every realized mass.
        const KernelParams median = p;
        bool found = false;
        const double d0_factors[] = {1.0, 0.5, 0.25, 0.1, 0.03, 0.01, 0.0};
        for (double f0 : d0_factors) {
            if (!spec.estimate_delta0 && f0 != 1.0) break;
            for (int k = 0; k <= 40 && !found; ++k) {
                const int e = (k % 2 == 1) ? (k + 1) / 2 : -(k / 2);
                KernelParams trial = median;
                if (spec.estimate_delta0) trial.delta0 = std::max(median.delta0 * f0, 1e-6);
                if (spec.estimate_q1) trial.q1 = median.q1 * std::ldexp(1.0, e);
                if (spec.estimate_delta1) trial.delta1 = median.delta1 * std::ldexp(1.0, e);
                if (model.satisfies_constraint(trial)) {
                    p = trial;
                    found = true;
                }
            }
            if (found) break;
        }
        if (!found) {
            throw Error(Errc::constraint_violation,
                        "no starting point satisfies the identifiability interval (" +
                            std::to_string(model.bound().lower) + ", " +
                            std::to_string(model.bound().upper) + ")");
        }
    }
    return model.zero_state(p, gp);
}

PosteriorChain mcmc_fit(const PosteriorModel& model, const McmcConfig& config,
                        const std::function<bool()>& stop) {
    if (config.iterations == 0) {
        throw Error(Errc::invalid_argument, "MCMC needs at least one iteration");
    }
    Sampler sampler(model, config, initial_state(model));
    return sampler.run(stop);
}

std::vector<std::string> parameter_names(std::size_t beta_count) {
    std::vector<std::string> names{"Q0", "Q1", "mu", "sigma", "delta0", "delta1", "eta"};
    for (std::size_t k = 0; k < beta_count; ++k) names.push_back("beta_" + std::to_string(k));
    names.emplace_back("sigma2_eps");
    names.emplace_back("phi");
    return names;
}

double parameter_value(const ChainSample& s, const std::string& name) {
    const auto& p = s.params;
    if (name == "Q0") return p.q0;
    if (name == "Q1") return p.q1;
    if (name == "mu") return p.mu;
    if (name == "sigma") return p.sigma;
    if (name == "delta0") return p.delta0;
    if (name == "delta1") return p.delta1;
    if (name == "eta") return p.eta;
    if (name == "sigma2_eps") return s.gp.sigma2;
    if (name == "phi") return s.gp.phi;
    if (name.rfind("beta_", 0) == 0) {
        const auto k = static_cast<std::size_t>(std::stoul(name.substr(5)));
        if (k < p.beta.size()) return p.beta[k];
    }
    throw Error(Errc::invalid_argument, "unknown parameter '" + name + "'");
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) {
        throw Error(Errc::insufficient_samples, "quantile of an empty sample");
    }
    std::sort(values.begin(), values.end());
    const double h = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ParameterSummary summarize_values(const std::string& name, std::span<const double> values) {
    if (values.empty()) {
        throw Error(Errc::insufficient_samples, "no draws for " + name);
    }
    std::vector<double> v(values.begin(), values.end());
    ParameterSummary s;
    s.name = name;
    s.count = v.size();
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.median = quantile(v, 0.5);
    s.lower = quantile(v, 0.025);
    s.upper = quantile(v, 0.975);
    return s;
}

std::vector<ParameterSummary> summarize(std::span<const PosteriorChain> chains,
                                        std::size_t min_samples) {
    if (chains.empty()) {
        throw Error(Errc::insufficient_samples, "no chains to summarize");
    }
    std::size_t total = 0;
    for (const auto& c : chains) total += c.samples.size();
    if (total < min_samples) {
        throw Error(Errc::insufficient_samples, "need at least " + std::to_string(min_samples) +
                                                    " retained draws, have " +
                                                    std::to_string(total));
    }
    std::vector<ParameterSummary> out;
    for (const auto& name : chains.front().free_parameters) {
        std::vector<double> values;
        values.reserve(total);
        for (const auto& c : chains) {
            for (const auto& s : c.samples) values.push_back(parameter_value(s, name));
        }
        out.push_back(summarize_values(name, values));
    }
    return out;
}

std::vector<ParameterSummary> summarize(const PosteriorChain& chain, std::size_t min_samples) {
    return summarize(std::span<const PosteriorChain>(&chain, 1), min_samples);
}

Band pointwise_band(std::span<const std::vector<double>> draws, double lower_q, double upper_q) {
    if (draws.empty()) {
        throw Error(Errc::insufficient_samples, "no draws for a pointwise band");
    }
    const std::size_t n = draws.front().size();
    Band band{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
    std::vector<double> column(draws.size());
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < draws.size(); ++i) column[i] = draws[i].at(b);
        band.lower[b] = quantile(column, lower_q);
        band.median[b] = quantile(column, 0.5);
        band.upper[b] = quantile(column, upper_q);
    }
    return band;
}

}  // namespace ipm
