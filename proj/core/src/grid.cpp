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

#include "ipm/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ipm/error.hpp"

namespace ipm {

void ClimateRecord::validate() const {
    if (!std::isfinite(winter_temp) || !std::isfinite(annual_precip)) {
        throw Error(Errc::invalid_argument, "climate values must be finite");
    }
    if (annual_precip < 0.0) {
        throw Error(Errc::invalid_argument, "annual precipitation must be nonnegative");
    }
}

TraitGrid::TraitGrid(double lower, double upper, std::size_t cells) {
    if (!std::isfinite(lower) || !std::isfinite(upper) || !(lower < upper)) {
        throw Error(Errc::invalid_bounds, "grid requires finite lower < upper");
    }
    if (cells < 2) {
        throw Error(Errc::invalid_count, "grid requires at least 2 cells");
    }
    lower_ = lower;
    upper_ = upper;
    width_ = (upper - lower) / static_cast<double>(cells);
    std::vector<double> centers(cells);
    for (std::size_t j = 0; j < cells; ++j) {
        centers[j] = lower + (static_cast<double>(j) + 0.5) * width_;
    }
    centers_ = std::make_shared<const std::vector<double>>(std::move(centers));
}

std::size_t TraitGrid::cell_of(double x) const {
    if (!contains(x)) {
        throw Error(Errc::out_of_range, "trait value " + std::to_string(x) + " outside [" +
                                            std::to_string(lower_) + ", " +
                                            std::to_string(upper_) + "]");
    }
    auto cell = static_cast<std::size_t>(std::floor((x - lower_) / width_));
    return std::min(cell, size() - 1);
}

TraitGrid discretize(double lower, double upper, std::size_t cells) {
    return TraitGrid(lower, upper, cells);
}

IntensityField::IntensityField(TraitGrid grid, std::vector<double> values, int year, int bin)
    : grid_(std::move(grid)), values_(std::move(values)), year_(year), bin_(bin) {
    if (values_.size() != grid_.size()) {
        throw Error(Errc::length_mismatch, "intensity length " + std::to_string(values_.size()) +
                                               " does not match grid size " +
                                               std::to_string(grid_.size()));
    }
    for (double v : values_) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw Error(Errc::invalid_argument, "intensity values must be finite and nonnegative");
        }
    }
}

IntensityField IntensityField::zeros(const TraitGrid& grid, int year, int bin) {
    return IntensityField(grid, std::vector<double>(grid.size(), 0.0), year, bin);
}

namespace {

double quantile_sorted(std::span<const double> sorted, double p) {
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Adds one point's unit mass to `out`, spread by a reflected Gaussian kernel.
void deposit(double x, double bandwidth, const TraitGrid& grid, std::vector<double>& weights,
             std::vector<double>& out) {
    const double lo = grid.lower();
    const double hi = grid.upper();
    const double d = grid.width();
    const double reach = 8.0 * bandwidth;

    // Both mirror images only reach cells that the point itself reaches.
    const std::size_t begin = grid.cell_of(std::max(lo, x - reach));
    const std::size_t end = grid.cell_of(std::min(hi, x + reach));

    const double inv2h2 = 0.5 / (bandwidth * bandwidth);
    auto kernel = [&](double c) {
        const double a = c - x;
        const double b = c - (2.0 * lo - x);
        const double e = c - (2.0 * hi - x);
        return std::exp(-a * a * inv2h2) + std::exp(-b * b * inv2h2) + std::exp(-e * e * inv2h2);
    };

    double total = 0.0;
    for (std::size_t j = begin; j <= end; ++j) {
        weights[j] = kernel(grid.center(j));
        total += weights[j];
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        out[grid.cell_of(x)] += 1.0 / d;
        return;
    }
    const double scale = 1.0 / (total * d);
    for (std::size_t j = begin; j <= end; ++j) {
        out[j] += weights[j] * scale;
    }
}

}  // namespace

double silverman_bandwidth(std::span<const double> points, double fallback) {
    const std::size_t n = points.size();
    if (n < 2) {
        return fallback;
    }
    std::vector<double> sorted(points.begin(), points.end());
    std::sort(sorted.begin(), sorted.end());
    const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : sorted) {
        ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    double spread = sd;
    if (iqr > 0.0) {
        spread = std::min(sd, iqr / 1.34);
    }
    const double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
    return h > 0.0 ? h : fallback;
}

IntensityField empirical_intensity(std::span<const PointPattern> patterns, const TraitGrid& grid,
                                   const EmpiricalOptions& options) {
    if (patterns.empty()) {
        if (options.allow_empty) {
            return IntensityField::zeros(grid);
        }
        throw Error(Errc::empty_input, "no point patterns supplied");
    }
    std::vector<double> pooled;
    for (const auto& p : patterns) {
        for (double x : p.diameters) {
            if (!grid.contains(x)) {
                throw Error(Errc::out_of_range, "diameter " + std::to_string(x) + " in plot " +
                                                    p.plot_id + " lies outside the grid");
            }
            pooled.push_back(x);
        }
    }

    std::vector<double> values(grid.size(), 0.0);
    if (!pooled.empty()) {
        const double h = options.bandwidth.value_or(silverman_bandwidth(pooled, grid.width()));
        if (!(h > 0.0) || !std::isfinite(h)) {
            throw Error(Errc::invalid_argument, "bandwidth must be positive");
        }
        std::vector<double> weights(grid.size(), 0.0);
        for (double x : pooled) {
            deposit(x, h, grid, weights, values);
        }
        if (options.scaling == IntensityScaling::per_plot) {
            const double inv = 1.0 / static_cast<double>(patterns.size());
            for (double& v : values) {
                v *= inv;
            }
        }
    }
    const int year = patterns.front().year;
    return IntensityField(grid, std::move(values), year);
}

double integrate(std::span<const double> values, double width) {
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    return sum * width;
}

double integrate(const IntensityField& field) {
    return integrate(field.values(), field.grid().width());
}

}  // namespace ipm
