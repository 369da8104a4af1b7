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
#include <span>
#include <string>
#include <vector>

#include "ipm/cox.hpp"
#include "ipm/grid.hpp"
#include "ipm/kernel.hpp"

namespace ipm {

/// Rectangular partition of (winter temperature, precipitation) space.
/// Bins are numbered row-major from 0: l = temp_index * n_precip + precip_index.
class ClimateBinning {
public:
    ClimateBinning(std::vector<double> temp_breaks, std::vector<double> precip_breaks);

    std::size_t size() const noexcept { return temp_bins() * precip_bins(); }
    std::size_t temp_bins() const noexcept { return temp_breaks_.size() - 1; }
    std::size_t precip_bins() const noexcept { return precip_breaks_.size() - 1; }
    std::span<const double> temp_breaks() const noexcept { return temp_breaks_; }
    std::span<const double> precip_breaks() const noexcept { return precip_breaks_; }

    /// Bin holding z. Values on an interior break go to the lower-index bin;
    /// throws out-of-rectangle outside the bounding box.
    std::size_t assign(const ClimateRecord& z) const;

    /// Mean of the member climates, or nothing for a bin without members.
    const std::optional<ClimateRecord>& centroid(std::size_t bin) const { return centroids_.at(bin); }
    std::size_t member_count(std::size_t bin) const { return members_.at(bin); }

    /// Recomputes centroids as the mean of the given climates per bin.
    void set_members(std::span<const ClimateRecord> climates);

private:
    std::vector<double> temp_breaks_;
    std::vector<double> precip_breaks_;
    std::vector<std::optional<ClimateRecord>> centroids_;
    std::vector<std::size_t> members_;
};

/// Equi-spaced n_temp x n_precip partition of the bounding rectangle of
/// `climates`, with centroids over all records.
ClimateBinning build_binning(std::span<const ClimateRecord> climates, std::size_t n_temp,
                             std::size_t n_precip);

std::size_t assign(const ClimateRecord& z, const ClimateBinning& binning);

/// Which climate variables enter the kernel and on what scale.
struct CovariateSpec {
    bool use_temp = true;
    bool use_precip = true;
    bool standardize = false;
    double temp_mean = 0.0;
    double temp_sd = 1.0;
    double precip_mean = 0.0;
    double precip_sd = 1.0;

    std::size_t size() const noexcept { return (use_temp ? 1 : 0) + (use_precip ? 1 : 0); }
    std::vector<double> operator()(const ClimateRecord& z) const;

    /// Takes centering and scaling constants from `climates` when
    /// `standardize` is set.
    static CovariateSpec fit(std::span<const ClimateRecord> climates, bool use_temp,
                             bool use_precip, bool standardize);
};

struct ClimateObservation {
    std::string plot_id;
    int year = 0;
    ClimateRecord climate;
};

/// Plot-by-year array of climate labels and (possibly missing) patterns.
class SparsePanel {
public:
    SparsePanel(std::vector<std::string> plot_ids, int first_year, std::size_t year_count,
                ClimateBinning binning);

    std::size_t plot_count() const noexcept { return plot_ids_.size(); }
    std::size_t year_count() const noexcept { return years_; }
    int first_year() const noexcept { return first_year_; }
    std::size_t bin_count() const noexcept { return binning_.size(); }
    const ClimateBinning& binning() const noexcept { return binning_; }
    const std::string& plot_id(std::size_t j) const { return plot_ids_.at(j); }

    bool observed(std::size_t j, std::size_t t) const { return cell(j, t).pattern.has_value(); }
    std::size_t label(std::size_t j, std::size_t t) const { return cell(j, t).label; }
    const ClimateRecord& climate(std::size_t j, std::size_t t) const { return cell(j, t).climate; }
    const PointPattern& pattern(std::size_t j, std::size_t t) const;

    void set_climate(std::size_t j, std::size_t t, const ClimateRecord& z);
    void set_pattern(std::size_t j, std::size_t t, PointPattern pattern);
    void clear_pattern(std::size_t j, std::size_t t);

    /// S_{t,l}: plots labelled l in year t.
    std::vector<std::size_t> members(std::size_t t, std::size_t l) const;
    /// S_{t,l,1} / S_{t,l,0}: members observed (or not) in year t.
    std::vector<std::size_t> start_set(std::size_t t, std::size_t l, bool observed = true) const;
    /// R_{t,l,1} / R_{t,l,0}: members observed (or not) in year t + 1.
    std::vector<std::size_t> end_set(std::size_t t, std::size_t l, bool observed = true) const;

    std::vector<PointPattern> patterns(std::span<const std::size_t> plots, std::size_t t) const;

    friend bool operator==(const SparsePanel& a, const SparsePanel& b);

private:
    struct Cell {
        std::size_t label = 0;
        ClimateRecord climate;
        bool has_climate = false;
        std::optional<PointPattern> pattern;
    };
    const Cell& cell(std::size_t j, std::size_t t) const;
    Cell& cell(std::size_t j, std::size_t t);

    std::vector<std::string> plot_ids_;
    int first_year_;
    std::size_t years_;
    ClimateBinning binning_;
    std::vector<Cell> cells_;  // plot-major

    friend SparsePanel build_panel(std::span<const PointPattern>, std::span<const ClimateObservation>,
                                   const ClimateBinning&);
};

/// Builds the panel over the plots and year range of the climate table.
/// Every plot-year in range needs a climate record; patterns mark the
/// observed plot-years (an empty diameter list is an observed empty plot).
SparsePanel build_panel(std::span<const PointPattern> patterns,
                        std::span<const ClimateObservation> climates,
                        const ClimateBinning& binning);

/// Pooled kernel intensity of S_{t,l,1} divided by n_{t,l,1}.
IntensityField per_plot_intensity(const SparsePanel& panel, std::size_t t, std::size_t l,
                                  const TraitGrid& grid, std::optional<double> bandwidth = {});

/// Data side of one likelihood term: the per-plot start intensity in year t,
/// the climate of bin l, and the pooled counts of R_{t,l,1} in year t + 1.
struct TransitionTerm {
    std::size_t t = 0;
    std::size_t bin = 0;
    IntensityField start;
    std::vector<double> covariates;
    int multiplicity = 0;
    CellCounts counts;
    std::size_t start_plots = 0;
};

struct TermOptions {
    std::optional<double> bandwidth;
    /// Last panel year index whose patterns may be used; defaults to all.
    std::optional<std::size_t> last_year;
};

/// One term per (t, l) with n_{t,l,1} >= 1, m_{t,l,1} >= 1 and a nonempty
/// start pattern; every other bin-year is skipped.
std::vector<TransitionTerm> build_transition_terms(const SparsePanel& panel, const TraitGrid& grid,
                                                   const CovariateSpec& covariates,
                                                   const TermOptions& options = {});

/// Plot-level terms for a single plot's yearly patterns: one per pair of
/// consecutive observed years, raw kernel intensity of year t as the start,
/// the plot's own year-t climate and multiplicity 1.
std::vector<TransitionTerm> plot_level_terms(std::span<const PointPattern> series,
                                             const TraitGrid& grid, const CovariateSpec& covariates,
                                             std::optional<double> bandwidth = {});

struct StepTarget {
    IntensityField predicted;  // gamma~_{l,t+1}
    int multiplicity = 0;      // m_{t,l,1}
    CellCounts counts;         // pooled R_{t,l,1} counts in year t + 1
};

/// Applies the pseudo-IPM step to the per-plot intensity of (t, l) with the
/// bin centroid climate. Throws empty-bin-year if either side is empty.
StepTarget scaled_step_target(const SparsePanel& panel, std::size_t t, std::size_t l,
                              const KernelParams& params, const TraitGrid& grid,
                              const CovariateSpec& covariates, std::optional<double> bandwidth = {});

struct PanelSummaryRow {
    int year = 0;
    std::size_t bin = 0;
    std::size_t n_start = 0;
    std::size_t m_end = 0;
    std::int64_t pooled_count_start = 0;
    std::int64_t pooled_count_end = 0;
};

std::vector<PanelSummaryRow> panel_summary(const SparsePanel& panel);

/// Observed trees per observed plot in each year up to `last_year`
/// (inclusive); years with no observed plot are skipped.
std::vector<double> observed_population_series(const SparsePanel& panel,
                                               std::optional<std::size_t> last_year = {});

}  // namespace ipm
