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

#include "ipm/cox.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <string>

#include "ipm/error.hpp"

namespace ipm {

CorrelationFamily parse_correlation_family(std::string_view name) {
    if (name == "exponential") return CorrelationFamily::exponential;
    if (name == "matern32" || name == "matern-3/2") return CorrelationFamily::matern32;
    throw Error(Errc::invalid_argument, "unknown correlation family '" + std::string(name) + "'");
}

std::string_view to_string(CorrelationFamily family) noexcept {
    return family == CorrelationFamily::exponential ? "exponential" : "matern32";
}

void GPConfig::validate() const {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
        throw Error(Errc::invalid_argument, "GP variance must be positive");
    }
    if (!(phi > 0.0) || !std::isfinite(phi)) {
        throw Error(Errc::invalid_argument, "GP decay phi must be positive");
    }
}

double GPConfig::correlation(double distance) const {
    const double h = std::abs(distance);
    switch (family) {
        case CorrelationFamily::exponential:
            return std::exp(-phi * h);
        case CorrelationFamily::matern32: {
            const double a = std::sqrt(3.0) * phi * h;
            return (1.0 + a) * std::exp(-a);
        }
    }
    return 0.0;
}

struct GaussianProcess::Factor {
    Eigen::MatrixXd lower;  // Cholesky factor of the jittered covariance
    double log_det = 0.0;
};

GaussianProcess::GaussianProcess(const TraitGrid& grid, const GPConfig& config)
    : config_(config), factor_(std::make_unique<Factor>()) {
    config.validate();
    const auto n = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd cov(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = 0; k <= j; ++k) {
            const double c = config.sigma2 *
                             config.correlation(grid.center(static_cast<std::size_t>(j)) -
                                                grid.center(static_cast<std::size_t>(k)));
            cov(j, k) = c;
            cov(k, j) = c;
        }
    }
    for (double rel = 1e-10; rel <= 1e-6 * (1.0 + 1e-9); rel *= 10.0) {
        const double jitter = rel * config.sigma2;
        Eigen::MatrixXd jittered = cov;
        jittered.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(jittered);
        if (llt.info() == Eigen::Success) {
            factor_->lower = llt.matrixL();
            factor_->log_det = 2.0 * factor_->lower.diagonal().array().log().sum();
            if (std::isfinite(factor_->log_det)) {
                jitter_ = jitter;
                return;
            }
        }
    }
    throw Error(Errc::not_positive_definite,
                "GP covariance is not positive definite after maximum jitter");
}

GaussianProcess::~GaussianProcess() = default;
GaussianProcess::GaussianProcess(GaussianProcess&&) noexcept = default;
GaussianProcess& GaussianProcess::operator=(GaussianProcess&&) noexcept = default;

GaussianProcess::GaussianProcess(const GaussianProcess& other)
    : config_(other.config_),
      jitter_(other.jitter_),
      factor_(std::make_unique<Factor>(*other.factor_)) {}

GaussianProcess& GaussianProcess::operator=(const GaussianProcess& other) {
    if (this != &other) {
        config_ = other.config_;
        jitter_ = other.jitter_;
        factor_ = std::make_unique<Factor>(*other.factor_);
    }
    return *this;
}

std::size_t GaussianProcess::size() const noexcept {
    return static_cast<std::size_t>(factor_->lower.rows());
}

void GaussianProcess::sample(std::mt19937_64& rng, std::span<double> out) const {
    const auto n = factor_->lower.rows();
    if (static_cast<Eigen::Index>(out.size()) != n) {
        throw Error(Errc::length_mismatch, "GP sample buffer has the wrong length");
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z(i) = normal(rng);
    }
    Eigen::Map<Eigen::VectorXd> result(out.data(), n);
    result.noalias() = factor_->lower.triangularView<Eigen::Lower>() * z;
}

std::vector<double> GaussianProcess::sample(std::mt19937_64& rng) const {
    std::vector<double> out(size());
    sample(rng, out);
    return out;
}

double GaussianProcess::log_density(std::span<const double> eps) const {
    const auto n = factor_->lower.rows();
    if (static_cast<Eigen::Index>(eps.size()) != n) {
        throw Error(Errc::length_mismatch, "GP field has the wrong length");
    }
    Eigen::Map<const Eigen::VectorXd> x(eps.data(), n);
    const Eigen::VectorXd v = factor_->lower.triangularView<Eigen::Lower>().solve(x);
    return -0.5 * v.squaredNorm() - 0.5 * factor_->log_det -
           0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

std::vector<double> sample_gp(const TraitGrid& grid, const GPConfig& config, std::uint64_t seed) {
    const GaussianProcess gp(grid, config);
    std::mt19937_64 rng(seed);
    return gp.sample(rng);
}

IntensityField apply_log_gp(const IntensityField& gamma, std::span<const double> eps) {
    if (eps.size() != gamma.size()) {
        throw Error(Errc::length_mismatch, "GP field length " + std::to_string(eps.size()) +
                                               " does not match intensity length " +
                                               std::to_string(gamma.size()));
    }
    std::vector<double> out(gamma.size());
    for (std::size_t b = 0; b < out.size(); ++b) {
        out[b] = gamma[b] * std::exp(eps[b]);
    }
    return IntensityField(gamma.grid(), std::move(out), gamma.year(), gamma.bin());
}

std::int64_t CellCounts::total() const {
    std::int64_t sum = 0;
    for (auto c : counts) {
        sum += c;
    }
    return sum;
}

CellCounts bin_counts(const PointPattern& pattern, const TraitGrid& grid) {
    return bin_counts(std::span<const PointPattern>(&pattern, 1), grid, pattern.year);
}

CellCounts bin_counts(std::span<const PointPattern> patterns, const TraitGrid& grid, int year,
                      int bin) {
    CellCounts out{grid, std::vector<std::int64_t>(grid.size(), 0), year, bin};
    for (const auto& p : patterns) {
        for (double x : p.diameters) {
            out.counts[grid.cell_of(x)] += 1;
        }
    }
    return out;
}

double log_likelihood(std::span<const std::int64_t> counts, std::span<const double> lambda,
                      double width, int multiplicity) {
    if (counts.size() != lambda.size()) {
        throw Error(Errc::length_mismatch, "counts and intensity lengths differ");
    }
    if (multiplicity < 1) {
        throw Error(Errc::invalid_argument, "multiplicity must be at least 1");
    }
    const auto m = static_cast<long double>(multiplicity);
    long double exposure = 0.0L;
    long double points = 0.0L;
    for (std::size_t b = 0; b < counts.size(); ++b) {
        const long double rate = m * static_cast<long double>(lambda[b]);
        exposure += rate;
        if (counts[b] > 0) {
            if (!(lambda[b] > 0.0)) {
                throw Error(Errc::zero_intensity_with_count,
                            "cell " + std::to_string(b) + " has " + std::to_string(counts[b]) +
                                " points but zero intensity");
            }
            points += static_cast<long double>(counts[b]) * std::log(rate);
        }
    }
    return static_cast<double>(points - exposure * static_cast<long double>(width));
}

double log_likelihood(const CellCounts& counts, const IntensityField& lambda, int multiplicity) {
    if (!(counts.grid == lambda.grid())) {
        throw Error(Errc::grid_mismatch, "counts and intensity live on different grids");
    }
    return log_likelihood(counts.counts, lambda.values(), lambda.grid().width(), multiplicity);
}

}  // namespace ipm
