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

#include "ipm/climate.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ipm/error.hpp"
#include "ipm/propagation.hpp"

namespace ipm {

namespace {

void check_breaks(std::span<const double> breaks, const char* axis) {
    if (breaks.size() < 2) {
        throw Error(Errc::invalid_count, std::string(axis) + " axis needs at least one bin");
    }
    for (std::size_t i = 1; i < breaks.size(); ++i) {
        // a single zero-width bin is allowed (constant climate along an axis)
        const bool single_point = breaks.size() == 2 && breaks[0] == breaks[1];
        if (!(breaks[i] > breaks[i - 1]) && !single_point) {
            throw Error(Errc::invalid_argument,
                        std::string(axis) + " breaks must be strictly increasing");
        }
    }
}

// Smallest bin index i with value <= breaks[i + 1].
std::optional<std::size_t> locate(std::span<const double> breaks, double value) {
    if (value < breaks.front() || value > breaks.back()) {
        return std::nullopt;
    }
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        if (value <= breaks[i + 1]) {
            return i;
        }
    }
    return breaks.size() - 2;
}

std::vector<double> equi_breaks(double lo, double hi, std::size_t n) {
    std::vector<double> out(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n);
    }
    out[n] = hi;
    return out;
}

}  // namespace

ClimateBinning::ClimateBinning(std::vector<double> temp_breaks, std::vector<double> precip_breaks)
    : temp_breaks_(std::move(temp_breaks)), precip_breaks_(std::move(precip_breaks)) {
    check_breaks(temp_breaks_, "temperature");
    check_breaks(precip_breaks_, "precipitation");
    centroids_.assign(size(), std::nullopt);
    members_.assign(size(), 0);
}

std::size_t ClimateBinning::assign(const ClimateRecord& z) const {
    const auto it = locate(temp_breaks_, z.winter_temp);
    const auto ip = locate(precip_breaks_, z.annual_precip);
    if (!it || !ip) {
        throw Error(Errc::out_of_rectangle,
                    "climate (" + std::to_string(z.winter_temp) + ", " +
                        std::to_string(z.annual_precip) + ") lies outside the binning rectangle");
    }
    return *it * precip_bins() + *ip;
}

void ClimateBinning::set_members(std::span<const ClimateRecord> climates) {
    std::vector<double> sum_t(size(), 0.0);
    std::vector<double> sum_p(size(), 0.0);
    members_.assign(size(), 0);
    for (const auto& z : climates) {
        const std::size_t l = assign(z);
        sum_t[l] += z.winter_temp;
        sum_p[l] += z.annual_precip;
        members_[l] += 1;
    }
    for (std::size_t l = 0; l < size(); ++l) {
        if (members_[l] == 0) {
            centroids_[l] = std::nullopt;
        } else {
            const auto n = static_cast<double>(members_[l]);
            centroids_[l] = ClimateRecord{sum_t[l] / n, sum_p[l] / n};
        }
    }
}

ClimateBinning build_binning(std::span<const ClimateRecord> climates, std::size_t n_temp,
                             std::size_t n_precip) {
    if (climates.empty()) {
        throw Error(Errc::empty_input, "binning needs at least one climate record");
    }
    if (n_temp < 1 || n_precip < 1) {
        throw Error(Errc::invalid_count, "binning needs at least one bin per axis");
    }
    double t_lo = climates.front().winter_temp;
    double t_hi = t_lo;
    double p_lo = climates.front().annual_precip;
    double p_hi = p_lo;
    for (const auto& z : climates) {
        z.validate();
        t_lo = std::min(t_lo, z.winter_temp);
        t_hi = std::max(t_hi, z.winter_temp);
        p_lo = std::min(p_lo, z.annual_precip);
        p_hi = std::max(p_hi, z.annual_precip);
    }
    if (t_lo == t_hi && n_temp > 1) {
        throw Error(Errc::degenerate_range, "all temperatures are identical");
    }
    if (p_lo == p_hi && n_precip > 1) {
        throw Error(Errc::degenerate_range, "all precipitation values are identical");
    }
    ClimateBinning binning(equi_breaks(t_lo, t_hi, n_temp), equi_breaks(p_lo, p_hi, n_precip));
    binning.set_members(climates);
    return binning;
}

std::size_t assign(const ClimateRecord& z, const ClimateBinning& binning) {
    return binning.assign(z);
}

std::vector<double> CovariateSpec::operator()(const ClimateRecord& z) const {
    std::vector<double> out;
    out.reserve(size());
    if (use_temp) {
        out.push_back(standardize ? (z.winter_temp - temp_mean) / temp_sd : z.winter_temp);
    }
    if (use_precip) {
        out.push_back(standardize ? (z.annual_precip - precip_mean) / precip_sd : z.annual_precip);
    }
    return out;
}

CovariateSpec CovariateSpec::fit(std::span<const ClimateRecord> climates, bool use_temp,
                                 bool use_precip, bool standardize) {
    CovariateSpec spec;
    spec.use_temp = use_temp;
    spec.use_precip = use_precip;
    spec.standardize = standardize;
    if (!standardize) {
        return spec;
    }
    if (climates.size() < 2) {
        throw Error(Errc::invalid_argument, "standardizing covariates needs two or more climates");
    }
    auto moments = [&](auto get, double& mean, double& sd) {
        double sum = 0.0;
        for (const auto& z : climates) sum += get(z);
        mean = sum / static_cast<double>(climates.size());
        double ss = 0.0;
        for (const auto& z : climates) ss += (get(z) - mean) * (get(z) - mean);
        sd = std::sqrt(ss / static_cast<double>(climates.size() - 1));
        if (!(sd > 0.0)) sd = 1.0;
    };
    moments([](const ClimateRecord& z) { return z.winter_temp; }, spec.temp_mean, spec.temp_sd);
    moments([](const ClimateRecord& z) { return z.annual_precip; }, spec.precip_mean,
            spec.precip_sd);
    return spec;
}

SparsePanel::SparsePanel(std::vector<std::string> plot_ids, int first_year, std::size_t year_count,
                         ClimateBinning binning)
    : plot_ids_(std::move(plot_ids)),
      first_year_(first_year),
      years_(year_count),
      binning_(std::move(binning)),
      cells_(plot_ids_.size() * year_count) {}

const SparsePanel::Cell& SparsePanel::cell(std::size_t j, std::size_t t) const {
    if (j >= plot_count() || t >= years_) {
        throw Error(Errc::out_of_range, "panel index (" + std::to_string(j) + ", " +
                                            std::to_string(t) + ") out of range");
    }
    return cells_[j * years_ + t];
}

SparsePanel::Cell& SparsePanel::cell(std::size_t j, std::size_t t) {
    return const_cast<Cell&>(std::as_const(*this).cell(j, t));
}

const PointPattern& SparsePanel::pattern(std::size_t j, std::size_t t) const {
    const auto& c = cell(j, t);
    if (!c.pattern) {
        throw Error(Errc::out_of_range, "plot " + plot_ids_[j] + " is not observed in year " +
                                            std::to_string(first_year_ + static_cast<int>(t)));
    }
    return *c.pattern;
}

void SparsePanel::set_climate(std::size_t j, std::size_t t, const ClimateRecord& z) {
    auto& c = cell(j, t);
    c.climate = z;
    c.label = binning_.assign(z);
    c.has_climate = true;
}

void SparsePanel::set_pattern(std::size_t j, std::size_t t, PointPattern pattern) {
    auto& c = cell(j, t);
    pattern.climate = c.climate;
    c.pattern = std::move(pattern);
}

void SparsePanel::clear_pattern(std::size_t j, std::size_t t) { cell(j, t).pattern.reset(); }

std::vector<std::size_t> SparsePanel::members(std::size_t t, std::size_t l) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < plot_count(); ++j) {
        if (label(j, t) == l) out.push_back(j);
    }
    return out;
}

std::vector<std::size_t> SparsePanel::start_set(std::size_t t, std::size_t l, bool obs) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < plot_count(); ++j) {
        if (label(j, t) == l && observed(j, t) == obs) out.push_back(j);
    }
    return out;
}

std::vector<std::size_t> SparsePanel::end_set(std::size_t t, std::size_t l, bool obs) const {
    std::vector<std::size_t> out;
    if (t + 1 >= years_) {
        return out;
    }
    for (std::size_t j = 0; j < plot_count(); ++j) {
        if (label(j, t) == l && observed(j, t + 1) == obs) out.push_back(j);
    }
    return out;
}

std::vector<PointPattern> SparsePanel::patterns(std::span<const std::size_t> plots,
                                                std::size_t t) const {
    std::vector<PointPattern> out;
    out.reserve(plots.size());
    for (std::size_t j : plots) {
        out.push_back(pattern(j, t));
    }
    return out;
}

bool operator==(const SparsePanel& a, const SparsePanel& b) {
    if (a.plot_ids_ != b.plot_ids_ || a.first_year_ != b.first_year_ || a.years_ != b.years_) {
        return false;
    }
    for (std::size_t i = 0; i < a.cells_.size(); ++i) {
        const auto& x = a.cells_[i];
        const auto& y = b.cells_[i];
        if (x.label != y.label || !(x.climate == y.climate) ||
            x.pattern.has_value() != y.pattern.has_value()) {
            return false;
        }
        if (x.pattern && x.pattern->diameters != y.pattern->diameters) {
            return false;
        }
    }
    return true;
}

SparsePanel build_panel(std::span<const PointPattern> patterns,
                        std::span<const ClimateObservation> climates,
                        const ClimateBinning& binning) {
    if (climates.empty()) {
        throw Error(Errc::empty_input, "climate table is empty");
    }
    std::map<std::string, std::size_t> plot_index;
    int first = climates.front().year;
    int last = first;
    for (const auto& c : climates) {
        plot_index.emplace(c.plot_id, 0);
        first = std::min(first, c.year);
        last = std::max(last, c.year);
    }
    std::vector<std::string> ids;
    for (auto& [id, idx] : plot_index) {
        idx = ids.size();
        ids.push_back(id);
    }
    const auto years = static_cast<std::size_t>(last - first + 1);
    SparsePanel panel(std::move(ids), first, years, binning);
    for (const auto& c : climates) {
        c.climate.validate();
        panel.set_climate(plot_index.at(c.plot_id), static_cast<std::size_t>(c.year - first),
                          c.climate);
    }
    for (std::size_t j = 0; j < panel.plot_count(); ++j) {
        for (std::size_t t = 0; t < years; ++t) {
            if (!panel.cell(j, t).has_climate) {
                throw Error(Errc::missing_climate,
                            "no climate for plot " + panel.plot_id(j) + " in year " +
                                std::to_string(first + static_cast<int>(t)));
            }
        }
    }
    for (const auto& p : patterns) {
        const auto it = plot_index.find(p.plot_id);
        if (it == plot_index.end() || p.year < first || p.year > last) {
            throw Error(Errc::missing_climate, "pattern for plot " + p.plot_id + " in year " +
                                                   std::to_string(p.year) +
                                                   " has no climate record");
        }
        const auto t = static_cast<std::size_t>(p.year - first);
        auto& cell = panel.cell(it->second, t);
        if (cell.pattern) {
            auto& d = cell.pattern->diameters;
            d.insert(d.end(), p.diameters.begin(), p.diameters.end());
        } else {
            panel.set_pattern(it->second, t, p);
        }
    }
    return panel;
}

IntensityField per_plot_intensity(const SparsePanel& panel, std::size_t t, std::size_t l,
                                  const TraitGrid& grid, std::optional<double> bandwidth) {
    const auto plots = panel.start_set(t, l);
    if (plots.empty()) {
        throw Error(Errc::empty_bin_year, "no observed plots in bin " + std::to_string(l) +
                                              " in year index " + std::to_string(t));
    }
    const auto pats = panel.patterns(plots, t);
    EmpiricalOptions opt;
    opt.bandwidth = bandwidth;
    opt.scaling = IntensityScaling::per_plot;
    const auto field = empirical_intensity(pats, grid, opt);
    return IntensityField(grid, {field.values().begin(), field.values().end()},
                          panel.first_year() + static_cast<int>(t), static_cast<int>(l));
}

namespace {

std::int64_t pooled_count(const SparsePanel& panel, std::span<const std::size_t> plots,
                          std::size_t t) {
    std::int64_t n = 0;
    for (std::size_t j : plots) {
        n += static_cast<std::int64_t>(panel.pattern(j, t).diameters.size());
    }
    return n;
}

std::vector<double> bin_covariates(const SparsePanel& panel, std::size_t l,
                                   const CovariateSpec& covariates) {
    const auto& centroid = panel.binning().centroid(l);
    if (!centroid) {
        throw Error(Errc::empty_bin_year, "bin " + std::to_string(l) + " has no members");
    }
    return covariates(*centroid);
}

}  // namespace

std::vector<TransitionTerm> build_transition_terms(const SparsePanel& panel, const TraitGrid& grid,
                                                   const CovariateSpec& covariates,
                                                   const TermOptions& options) {
    std::size_t last = panel.year_count() - 1;
    if (options.last_year) {
        last = std::min(last, *options.last_year);
    }
    std::vector<TransitionTerm> terms;
    for (std::size_t t = 0; t < last; ++t) {
        for (std::size_t l = 0; l < panel.bin_count(); ++l) {
            const auto start = panel.start_set(t, l);
            const auto end = panel.end_set(t, l);
            if (start.empty() || end.empty() || pooled_count(panel, start, t) == 0) {
                continue;
            }
            const auto end_patterns = panel.patterns(end, t + 1);
            const int year = panel.first_year() + static_cast<int>(t);
            terms.push_back(TransitionTerm{
                t, l, per_plot_intensity(panel, t, l, grid, options.bandwidth),
                bin_covariates(panel, l, covariates), static_cast<int>(end.size()),
                bin_counts(end_patterns, grid, year + 1, static_cast<int>(l)), start.size()});
        }
    }
    return terms;
}

std::vector<TransitionTerm> plot_level_terms(std::span<const PointPattern> series,
                                             const TraitGrid& grid, const CovariateSpec& covariates,
                                             std::optional<double> bandwidth) {
    std::vector<const PointPattern*> sorted;
    for (const auto& p : series) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(),
              [](const PointPattern* a, const PointPattern* b) { return a->year < b->year; });
    std::vector<TransitionTerm> terms;
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        const auto& now = *sorted[i];
        const auto& next = *sorted[i + 1];
        if (next.year == now.year) {
            throw Error(Errc::invalid_argument, "plot series has two patterns for one year");
        }
        if (next.year != now.year + 1 || now.diameters.empty()) {
            continue;
        }
        EmpiricalOptions opt;
        opt.bandwidth = bandwidth;
        opt.scaling = IntensityScaling::raw;
        auto start = empirical_intensity(std::span<const PointPattern>(&now, 1), grid, opt);
        terms.push_back(TransitionTerm{
            static_cast<std::size_t>(i), 0,
            IntensityField(grid, {start.values().begin(), start.values().end()}, now.year, kPlotLevel),
            covariates(now.climate), 1, bin_counts(next, grid), 1});
    }
    return terms;
}

StepTarget scaled_step_target(const SparsePanel& panel, std::size_t t, std::size_t l,
                              const KernelParams& params, const TraitGrid& grid,
                              const CovariateSpec& covariates, std::optional<double> bandwidth) {
    const auto end = panel.end_set(t, l);
    if (end.empty()) {
        throw Error(Errc::empty_bin_year, "no plots of bin " + std::to_string(l) +
                                              " observed at the end of year index " +
                                              std::to_string(t));
    }
    const auto start = per_plot_intensity(panel, t, l, grid, bandwidth);
    const auto z = bin_covariates(panel, l, covariates);
    auto predicted = pseudo_ipm_step(start, z, params);
    const auto end_patterns = panel.patterns(end, t + 1);
    return StepTarget{std::move(predicted), static_cast<int>(end.size()),
                      bin_counts(end_patterns, grid, start.year() + 1, static_cast<int>(l))};
}

std::vector<PanelSummaryRow> panel_summary(const SparsePanel& panel) {
    std::vector<PanelSummaryRow> rows;
    for (std::size_t t = 0; t < panel.year_count(); ++t) {
        for (std::size_t l = 0; l < panel.bin_count(); ++l) {
            const auto start = panel.start_set(t, l);
            const auto end = panel.end_set(t, l);
            if (panel.members(t, l).empty()) {
                continue;
            }
            std::int64_t end_count = 0;
            for (std::size_t j : end) {
                end_count += static_cast<std::int64_t>(panel.pattern(j, t + 1).diameters.size());
            }
            rows.push_back({panel.first_year() + static_cast<int>(t), l, start.size(), end.size(),
                            pooled_count(panel, start, t), end_count});
        }
    }
    return rows;
}

std::vector<double> observed_population_series(const SparsePanel& panel,
                                               std::optional<std::size_t> last_year) {
    std::size_t last = panel.year_count() - 1;
    if (last_year) {
        last = std::min(last, *last_year);
    }
    std::vector<double> series;
    for (std::size_t t = 0; t <= last; ++t) {
        std::size_t plots = 0;
        std::int64_t trees = 0;
        for (std::size_t j = 0; j < panel.plot_count(); ++j) {
            if (panel.observed(j, t)) {
                ++plots;
                trees += static_cast<std::int64_t>(panel.pattern(j, t).diameters.size());
            }
        }
        if (plots > 0) {
            series.push_back(static_cast<double>(trees) / static_cast<double>(plots));
        }
    }
    return series;
}

}  // namespace ipm
