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
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ipm/climate.hpp"
#include "ipm/grid.hpp"
#include "ipm/inference.hpp"
#include "ipm/sim.hpp"

namespace ipm::io {

/// Shortest round-trip text for a double (%.17g).
std::string format_double(double value);

/// 64-bit FNV-1a over bytes, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

/// `plot_id,year,diameter_cm`. A row with an empty diameter records an
/// observed plot-year without trees.
std::vector<PointPattern> read_patterns(const std::filesystem::path& path);
void write_patterns(const std::filesystem::path& path, std::span<const PointPattern> patterns);

/// `plot_id,year,winter_temp_c,annual_precip_mm`.
std::vector<ClimateObservation> read_climate(const std::filesystem::path& path);
void write_climate(const std::filesystem::path& path,
                   std::span<const ClimateObservation> climates);

void write_panel_summary(const std::filesystem::path& path,
                         std::span<const PanelSummaryRow> rows);

/// Long format `iteration,param,value`; every recorded parameter plus
/// log_posterior for each retained draw.
void write_chain(const std::filesystem::path& path, const PosteriorChain& chain);
PosteriorChain read_chain(const std::filesystem::path& path);

void write_summary(const std::filesystem::path& path, std::span<const ParameterSummary> rows);

/// `bin,year,cell_center,intensity`.
void write_projection(const std::filesystem::path& path,
                      std::span<const std::vector<IntensityField>> paths);

/// `bin,cell_center,lower,median,upper,truth`; truth is empty when unknown.
void write_bands(const std::filesystem::path& path, std::span<const BinProjection> bands);

/// `bin,step,lower,median,upper,truth` for the projected population mass.
void write_mass_bands(const std::filesystem::path& path, std::span<const BinProjection> bands);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

/// Flat `key = value` file with optional `[section]` headers. Keys are
/// stored as "section.key"; '#' and ';' start comments.
class ConfigFile {
public:
    static ConfigFile parse(std::string_view text, const std::string& origin = "config");
    static ConfigFile load(const std::filesystem::path& path);

    std::optional<std::string> get(const std::string& key) const;
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace ipm::io
