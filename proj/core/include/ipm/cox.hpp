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

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "ipm/grid.hpp"

namespace ipm {

enum class CorrelationFamily { exponential, matern32 };

CorrelationFamily parse_correlation_family(std::string_view name);
std::string_view to_string(CorrelationFamily family) noexcept;

/// Stationary zero-mean Gaussian process on the trait axis with covariance
/// sigma2 rho(h; phi).
struct GPConfig {
    double sigma2 = 1.0;
    double phi = 1.0;
    CorrelationFamily family = CorrelationFamily::exponential;

    void validate() const;
    double correlation(double distance) const;
};

/// Covariance of a GPConfig on the grid centers, factored once. Jitter starts
/// at 1e-10 sigma2 and grows tenfold up to 1e-6 sigma2 before giving up.
class GaussianProcess {
public:
    GaussianProcess(const TraitGrid& grid, const GPConfig& config);
    ~GaussianProcess();
    GaussianProcess(GaussianProcess&&) noexcept;
    GaussianProcess& operator=(GaussianProcess&&) noexcept;
    GaussianProcess(const GaussianProcess&);
    GaussianProcess& operator=(const GaussianProcess&);

    std::size_t size() const noexcept;
    const GPConfig& config() const noexcept { return config_; }
    double jitter() const noexcept { return jitter_; }

    /// Draws eps = L z with z standard normal.
    void sample(std::mt19937_64& rng, std::span<double> out) const;
    std::vector<double> sample(std::mt19937_64& rng) const;

    /// Multivariate normal log density of eps.
    double log_density(std::span<const double> eps) const;

private:
    struct Factor;
    GPConfig config_;
    double jitter_ = 0.0;
    std::unique_ptr<Factor> factor_;
};

/// One draw of the GP at the grid centers; deterministic in `seed`.
std::vector<double> sample_gp(const TraitGrid& grid, const GPConfig& config, std::uint64_t seed);

/// lambda(b) = gamma(b) e^{eps(b)}.
IntensityField apply_log_gp(const IntensityField& gamma, std::span<const double> eps);

/// Per-cell point counts of one (pooled) pattern.
struct CellCounts {
    TraitGrid grid;
    std::vector<std::int64_t> counts;
    int year = 0;
    int bin = kPlotLevel;

    std::int64_t total() const;
};

CellCounts bin_counts(const PointPattern& pattern, const TraitGrid& grid);
CellCounts bin_counts(std::span<const PointPattern> patterns, const TraitGrid& grid, int year,
                      int bin = kPlotLevel);

/// Discretized Poisson log likelihood with multiplicity m:
///   -sum_b m lambda(b) d + sum_b n_b log(m lambda(b)).
/// Throws zero-intensity-with-count when some n_b > 0 meets lambda(b) = 0.
double log_likelihood(const CellCounts& counts, const IntensityField& lambda, int multiplicity);
double log_likelihood(std::span<const std::int64_t> counts, std::span<const double> lambda,
                      double width, int multiplicity);

}  // namespace ipm
