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

#include "ipm/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ipm/error.hpp"

namespace ipm::io {

namespace fs = std::filesystem;

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::io_failure, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(Errc::io_failure, "cannot write " + path.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw Error(Errc::io_failure, "write failed for " + path.string());
    }
}

std::string file_digest(const fs::path& path) { return fnv1a_hex(read_text(path)); }

namespace {

struct CsvReader {
    std::string origin;
    std::vector<std::string> lines;

    explicit CsvReader(const fs::path& path) : origin(path.string()) {
        std::istringstream in(read_text(path));
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(std::move(line));
        }
    }

    [[noreturn]] void fail(std::size_t line, const std::string& msg) const {
        throw Error(Errc::parse_error, origin + ":" + std::to_string(line + 1) + ": " + msg);
    }

    void expect_header(std::string_view header) const {
        if (lines.empty()) {
            throw Error(Errc::empty_input, origin + " is empty");
        }
        if (lines.front() != header) {
            fail(0, "expected header '" + std::string(header) + "', found '" + lines.front() + "'");
        }
    }
};

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    out.push_back(std::move(field));
    return out;
}

std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end) return std::nullopt;
    return v;
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
    Int v = 0;
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end) return std::nullopt;
    return v;
}

class Writer {
public:
    explicit Writer(const fs::path& path) : path_(path) {}
    void line(const std::string& s) {
        text_ += s;
        text_ += '\n';
    }
    ~Writer() noexcept(false) { write_text(path_, text_); }

private:
    fs::path path_;
    std::string text_;
};

}  // namespace

std::vector<PointPattern> read_patterns(const fs::path& path) {
    CsvReader csv(path);
    csv.expect_header("plot_id,year,diameter_cm");
    std::map<std::pair<std::string, int>, std::size_t> index;
    std::vector<PointPattern> out;
    for (std::size_t i = 1; i < csv.lines.size(); ++i) {
        if (csv.lines[i].empty()) continue;
        const auto f = split(csv.lines[i]);
        if (f.size() != 3) csv.fail(i, "expected 3 fields, found " + std::to_string(f.size()));
        if (f[0].empty()) csv.fail(i, "empty plot_id");
        const auto year = parse_int<int>(f[1]);
        if (!year) csv.fail(i, "bad year '" + f[1] + "'");
        const auto key = std::make_pair(f[0], *year);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, out.size()).first;
            out.push_back(PointPattern{f[0], *year, {}, {}});
        }
        if (!f[2].empty()) {
            const auto d = parse_double(f[2]);
            if (!d || !std::isfinite(*d) || *d < 0.0) csv.fail(i, "bad diameter '" + f[2] + "'");
            out[it->second].diameters.push_back(*d);
        }
    }
    return out;
}

void write_patterns(const fs::path& path, std::span<const PointPattern> patterns) {
    Writer w(path);
    w.line("plot_id,year,diameter_cm");
    for (const auto& p : patterns) {
        const std::string prefix = p.plot_id + "," + std::to_string(p.year) + ",";
        if (p.diameters.empty()) {
            w.line(prefix);
        }
        for (double d : p.diameters) w.line(prefix + format_double(d));
    }
}

std::vector<ClimateObservation> read_climate(const fs::path& path) {
    CsvReader csv(path);
    csv.expect_header("plot_id,year,winter_temp_c,annual_precip_mm");
    std::vector<ClimateObservation> out;
    std::map<std::pair<std::string, int>, bool> seen;
    for (std::size_t i = 1; i < csv.lines.size(); ++i) {
        if (csv.lines[i].empty()) continue;
        const auto f = split(csv.lines[i]);
        if (f.size() != 4) csv.fail(i, "expected 4 fields, found " + std::to_string(f.size()));
        if (f[0].empty()) csv.fail(i, "empty plot_id");
        const auto year = parse_int<int>(f[1]);
        if (!year) csv.fail(i, "bad year '" + f[1] + "'");
        const auto temp = parse_double(f[2]);
        const auto precip = parse_double(f[3]);
        if (!temp || !std::isfinite(*temp)) csv.fail(i, "bad temperature '" + f[2] + "'");
        if (!precip || !std::isfinite(*precip) || *precip < 0.0) {
            csv.fail(i, "bad precipitation '" + f[3] + "'");
        }
        if (!seen.emplace(std::make_pair(f[0], *year), true).second) {
            csv.fail(i, "duplicate climate record for plot " + f[0] + " in year " + f[1]);
        }
        out.push_back({f[0], *year, {*temp, *precip}});
    }
    if (out.empty()) {
        throw Error(Errc::empty_input, path.string() + " has no climate rows");
    }
    return out;
}

void write_climate(const fs::path& path, std::span<const ClimateObservation> climates) {
    Writer w(path);
    w.line("plot_id,year,winter_temp_c,annual_precip_mm");
    for (const auto& c : climates) {
        w.line(c.plot_id + "," + std::to_string(c.year) + "," + format_double(c.climate.winter_temp) +
               "," + format_double(c.climate.annual_precip));
    }
}

void write_panel_summary(const fs::path& path, std::span<const PanelSummaryRow> rows) {
    Writer w(path);
    w.line("year,bin,n_start,m_end,pooled_count_start,pooled_count_end");
    for (const auto& r : rows) {
        w.line(std::to_string(r.year) + "," + std::to_string(r.bin) + "," +
               std::to_string(r.n_start) + "," + std::to_string(r.m_end) + "," +
               std::to_string(r.pooled_count_start) + "," + std::to_string(r.pooled_count_end));
    }
}

void write_chain(const fs::path& path, const PosteriorChain& chain) {
    Writer w(path);
    w.line("iteration,param,value");
    for (const auto& s : chain.samples) {
        const std::string it = std::to_string(s.iteration) + ",";
        for (const auto& name : parameter_names(s.params.beta.size())) {
            w.line(it + name + "," + format_double(parameter_value(s, name)));
        }
        w.line(it + "log_posterior," + format_double(s.log_posterior));
    }
}

PosteriorChain read_chain(const fs::path& path) {
    if (!fs::exists(path)) {
        throw Error(Errc::missing_chain, "chain file " + path.string() + " does not exist");
    }
    CsvReader csv(path);
    csv.expect_header("iteration,param,value");
    PosteriorChain chain;
    std::map<std::size_t, std::map<std::string, double>> rows;
    std::vector<std::size_t> order;
    for (std::size_t i = 1; i < csv.lines.size(); ++i) {
        if (csv.lines[i].empty()) continue;
        const auto f = split(csv.lines[i]);
        if (f.size() != 3) csv.fail(i, "expected 3 fields");
        const auto it = parse_int<std::size_t>(f[0]);
        const auto v = parse_double(f[2]);
        if (!it) csv.fail(i, "bad iteration '" + f[0] + "'");
        if (!v) csv.fail(i, "bad value '" + f[2] + "'");
        if (!rows.count(*it)) order.push_back(*it);
        rows[*it][f[1]] = *v;
    }
    for (std::size_t it : order) {
        const auto& m = rows[it];
        auto value = [&](const std::string& name) {
            const auto p = m.find(name);
            if (p == m.end()) {
                throw Error(Errc::parse_error, path.string() + ": iteration " + std::to_string(it) +
                                                   " lacks " + name);
            }
            return p->second;
        };
        ChainSample s;
        s.iteration = it;
        s.params.q0 = value("Q0");
        s.params.q1 = value("Q1");
        s.params.mu = value("mu");
        s.params.sigma = value("sigma");
        s.params.delta0 = value("delta0");
        s.params.delta1 = value("delta1");
        s.params.eta = value("eta");
        s.params.beta.clear();
        for (std::size_t k = 0; m.count("beta_" + std::to_string(k)); ++k) {
            s.params.beta.push_back(value("beta_" + std::to_string(k)));
        }
        s.gp.sigma2 = value("sigma2_eps");
        s.gp.phi = value("phi");
        s.log_posterior = m.count("log_posterior") ? m.at("log_posterior") : 0.0;
        chain.samples.push_back(std::move(s));
    }
    return chain;
}

void write_summary(const fs::path& path, std::span<const ParameterSummary> rows) {
    Writer w(path);
    w.line("param,mean,median,lower_2.5,upper_97.5,draws");
    for (const auto& r : rows) {
        w.line(r.name + "," + format_double(r.mean) + "," + format_double(r.median) + "," +
               format_double(r.lower) + "," + format_double(r.upper) + "," +
               std::to_string(r.count));
    }
}

void write_projection(const fs::path& path, std::span<const std::vector<IntensityField>> paths) {
    Writer w(path);
    w.line("bin,year,cell_center,intensity");
    for (const auto& path_fields : paths) {
        for (const auto& f : path_fields) {
            const std::string prefix =
                std::to_string(f.bin()) + "," + std::to_string(f.year()) + ",";
            for (std::size_t b = 0; b < f.size(); ++b) {
                w.line(prefix + format_double(f.grid().center(b)) + "," + format_double(f[b]));
            }
        }
    }
}

void write_bands(const fs::path& path, std::span<const BinProjection> bands) {
    Writer w(path);
    w.line("bin,cell_center,lower,median,upper,truth");
    for (const auto& p : bands) {
        for (std::size_t b = 0; b < p.cell_centers.size(); ++b) {
            w.line(std::to_string(p.bin) + "," + format_double(p.cell_centers[b]) + "," +
                   format_double(p.band.lower[b]) + "," + format_double(p.band.median[b]) + "," +
                   format_double(p.band.upper[b]) + "," +
                   (p.truth.empty() ? std::string() : format_double(p.truth[b])));
        }
    }
}

void write_mass_bands(const fs::path& path, std::span<const BinProjection> bands) {
    Writer w(path);
    w.line("bin,step,lower,median,upper,truth");
    for (const auto& p : bands) {
        for (std::size_t t = 0; t < p.mass.median.size(); ++t) {
            w.line(std::to_string(p.bin) + "," + std::to_string(t) + "," +
                   format_double(p.mass.lower[t]) + "," + format_double(p.mass.median[t]) + "," +
                   format_double(p.mass.upper[t]) + "," +
                   (p.truth_mass.empty() ? std::string() : format_double(p.truth_mass[t])));
        }
    }
}

namespace {

std::string trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return std::string(s.substr(a, b - a + 1));
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text, const std::string& origin) {
    ConfigFile cfg;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                                       : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        std::string line(raw);
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.erase(comment);
        line = trim(line);
        if (line.empty()) continue;
        auto fail = [&](const std::string& msg) {
            throw Error(Errc::parse_error, origin + ":" + std::to_string(line_no) + ": " + msg);
        };
        if (line.front() == '[') {
            if (line.back() != ']') fail("unterminated section header");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            if (section.empty()) fail("empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected 'key = value'");
        const auto key = trim(std::string_view(line).substr(0, eq));
        if (key.empty()) fail("empty key");
        const auto full = section.empty() ? key : section + "." + key;
        if (cfg.values_.count(full)) fail("duplicate key '" + full + "'");
        cfg.values_[full] = trim(std::string_view(line).substr(eq + 1));
    }
    return cfg;
}

ConfigFile ConfigFile::load(const fs::path& path) {
    if (!fs::exists(path)) {
        throw Error(Errc::io_failure, "config file " + path.string() + " does not exist");
    }
    return parse(read_text(path), path.string());
}

std::optional<std::string> ConfigFile::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

}  // namespace ipm::io
