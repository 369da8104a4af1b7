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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ipm {

/// Annual climate seen by one plot in one year. Units are fixed: degrees C
/// for mean winter temperature and mm for average annual precipitation.
struct ClimateRecord {
    double winter_temp = 0.0;
    double annual_precip = 0.0;

    void validate() const;
    friend bool operator==(const ClimateRecord&, const ClimateRecord&) = default;
};

/// Equal-width discretization of the trait interval [lower, upper] into
/// `size()` cells. Cheap to copy; the centers are shared and immutable.
class TraitGrid {
public:
    TraitGrid(double lower, double upper, std::size_t cells);

    double lower() const noexcept { return lower_; }
    double upper() const noexcept { return upper_; }
    std::size_t size() const noexcept { return centers_->size(); }
    double width() const noexcept { return width_; }
    double center(std::size_t j) const { return (*centers_)[j]; }
    std::span<const double> centers() const noexcept { return *centers_; }

    /// Cell holding trait value x. A point at `upper` belongs to the last
    /// cell. Throws out-of-range outside [lower, upper].
    std::size_t cell_of(double x) const;
    bool contains(double x) const noexcept { return x >= lower_ && x <= upper_; }

    friend bool operator==(const TraitGrid& a, const TraitGrid& b) noexcept {
        return a.lower_ == b.lower_ && a.upper_ == b.upper_ && a.size() == b.size();
    }

private:
    double lower_;
    double upper_;
    double width_;
    std::shared_ptr<const std::vector<double>> centers_;
};

TraitGrid discretize(double lower, double upper, std::size_t cells);

/// Marks an intensity that is not tied to a climate bin.
inline constexpr int kPlotLevel = -1;

/// Nonnegative intensity (individuals per trait unit) at the grid centers.
class IntensityField {
public:
    IntensityField(TraitGrid grid, std::vector<double> values, int year = 0, int bin = kPlotLevel);

    static IntensityField zeros(const TraitGrid& grid, int year = 0, int bin = kPlotLevel);

    const TraitGrid& grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t j) const { return values_[j]; }
    std::size_t size() const noexcept { return values_.size(); }
    int year() const noexcept { return year_; }
    int bin() const noexcept { return bin_; }

private:
    TraitGrid grid_;
    std::vector<double> values_;
    int year_;
    int bin_;
};

/// One plot-year of observed diameters.
struct PointPattern {
    std::string plot_id;
    int year = 0;
    std::vector<double> diameters;
    ClimateRecord climate;
};

enum class IntensityScaling {
    raw,       // mass equals the pooled point count
    per_plot,  // mass equals the pooled count divided by the number of patterns
};

struct EmpiricalOptions {
    /// Kernel bandwidth in trait units; Silverman's rule on the pooled
    /// diameters when unset.
    std::optional<double> bandwidth;
    IntensityScaling scaling = IntensityScaling::raw;
    /// Return a zero field for an empty pattern list instead of throwing.
    bool allow_empty = false;
};

/// Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) n^(-1/5). Falls back to
/// `fallback` when the spread is zero or there are fewer than two points.
double silverman_bandwidth(std::span<const double> points, double fallback);

/// Gaussian kernel intensity estimate with reflection at both grid ends,
/// evaluated at the cell centers. Each point contributes exactly unit mass.
IntensityField empirical_intensity(std::span<const PointPattern> patterns, const TraitGrid& grid,
                                   const EmpiricalOptions& options = {});

/// Midpoint-rule integral, sum of values times cell width.
double integrate(const IntensityField& field);
double integrate(std::span<const double> values, double width);

}  // namespace ipm
