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

// ipmscale: simulate, fit, project and summarize climate-binned pseudo-IPMs.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ipm/climate.hpp"
#include "ipm/error.hpp"
#include "ipm/inference.hpp"
#include "ipm/io.hpp"
#include "ipm/propagation.hpp"
#include "ipm/sim.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

[[noreturn]] void invalid(const std::string& msg) {
    throw ipm::Error(ipm::Errc::invalid_argument, msg);
}

// Effective settings: command-line value, else "<command>.<key>" or "<key>"
// from the config file, else the default.
class Settings {
public:
    Settings(std::string command, std::optional<ipm::io::ConfigFile> file)
        : command_(std::move(command)), file_(std::move(file)) {}

    void add(const std::string& key, const std::string& fallback, const CLI::Option* opt,
             const std::string& flag_value) {
        std::string value = fallback;
        if (file_) {
            if (auto v = file_->get(command_ + "." + key)) {
                value = *v;
            } else if (auto g = file_->get(key)) {
                value = *g;
            }
        }
        if (opt && opt->count() > 0) value = flag_value;
        values_[key] = value;
    }

    const std::string& str(const std::string& key) const { return values_.at(key); }

    double real(const std::string& key) const {
        const auto& s = str(key);
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            invalid("setting '" + key + "' expects a number, got '" + s + "'");
        }
    }

    std::uint64_t count(const std::string& key) const {
        const auto& s = str(key);
        try {
            std::size_t used = 0;
            if (!s.empty() && s.front() == '-') throw std::invalid_argument(s);
            const auto v = std::stoull(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            invalid("setting '" + key + "' expects a nonnegative integer, got '" + s + "'");
        }
    }

    bool flag(const std::string& key) const {
        const auto& s = str(key);
        if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "0" || s == "no" || s == "off") return false;
        invalid("setting '" + key + "' expects true or false, got '" + s + "'");
    }

    json to_json() const {
        json j = json::object();
        for (const auto& [k, v] : values_) j[k] = v;
        return j;
    }

private:
    std::string command_;
    std::optional<ipm::io::ConfigFile> file_;
    std::map<std::string, std::string> values_;
};

// String-valued CLI option bound to a setting key.
struct Bound {
    std::string key;
    std::string fallback;
    std::string value;
    CLI::Option* option = nullptr;
};

struct Command {
    std::string name;
    CLI::App* app = nullptr;
    std::string config_path;
    std::string out;
    bool overwrite = false;
    std::vector<std::unique_ptr<Bound>> bound;

    void opt(const std::string& flag, const std::string& key, const std::string& fallback,
             const std::string& help) {
        auto b = std::make_unique<Bound>();
        b->key = key;
        b->fallback = fallback;
        b->option = app->add_option(flag, b->value, help + " (default: " +
                                                        (fallback.empty() ? "none" : fallback) + ")");
        bound.push_back(std::move(b));
    }

    Settings settings() const {
        std::optional<ipm::io::ConfigFile> file;
        if (!config_path.empty()) file = ipm::io::ConfigFile::load(config_path);
        Settings s(name, std::move(file));
        for (const auto& b : bound) {
            s.add(b->key, b->fallback, b->option, b->value);
        }
        return s;
    }
};

ipm::TraitGrid parse_grid(const std::string& spec) {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t cells = 0;
    char tail = 0;
    if (std::sscanf(spec.c_str(), "%lf,%lf,%zu%c", &lo, &hi, &cells, &tail) != 3) {
        invalid("--grid expects L,U,B, got '" + spec + "'");
    }
    return ipm::TraitGrid(lo, hi, cells);
}

std::pair<std::size_t, std::size_t> parse_bins(const std::string& spec) {
    std::size_t nt = 0;
    std::size_t np = 0;
    char tail = 0;
    if (std::sscanf(spec.c_str(), "%zux%zu%c", &nt, &np, &tail) != 2 || nt == 0 || np == 0) {
        invalid("--bins expects NTxNP with positive counts, got '" + spec + "'");
    }
    return {nt, np};
}

// Output directory staged next to the target and renamed into place.
class Staging {
public:
    Staging(const fs::path& target, bool overwrite) : target_(target) {
        if (target_.empty()) invalid("an output directory (--out) is required");
        if (fs::exists(target_) && !fs::is_empty(target_) && !overwrite) {
            invalid("output directory " + target_.string() +
                    " exists and is not empty; pass --overwrite to replace it");
        }
        if (fs::exists(target_) && !fs::is_directory(target_)) {
            invalid(target_.string() + " exists and is not a directory");
        }
        const auto parent = fs::absolute(target_).parent_path();
        fs::create_directories(parent);
        stage_ = parent / ("." + target_.filename().string() + ".partial");
        fs::remove_all(stage_);
        fs::create_directories(stage_);
    }

    ~Staging() {
        std::error_code ec;
        if (!committed_) fs::remove_all(stage_, ec);
    }

    fs::path file(const std::string& name) {
        files_.push_back(name);
        return stage_ / name;
    }

    json digests() const {
        json j = json::object();
        for (const auto& f : files_) j[f] = ipm::io::file_digest(stage_ / f);
        return j;
    }

    void commit() {
        if (fs::exists(target_)) fs::remove_all(target_);
        fs::rename(stage_, target_);
        committed_ = true;
    }

    const fs::path& path() const { return stage_; }

private:
    fs::path target_;
    fs::path stage_;
    std::vector<std::string> files_;
    bool committed_ = false;
};

void write_json(const fs::path& path, const json& j) { ipm::io::write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    if (!fs::exists(path)) {
        throw ipm::Error(ipm::Errc::missing_chain, "no manifest at " + path.string());
    }
    try {
        return json::parse(ipm::io::read_text(path));
    } catch (const json::exception& e) {
        throw ipm::Error(ipm::Errc::parse_error, path.string() + ": " + e.what());
    }
}

std::vector<ipm::ClimateRecord> records_of(const std::vector<ipm::ClimateObservation>& climates) {
    std::vector<ipm::ClimateRecord> out;
    out.reserve(climates.size());
    for (const auto& c : climates) out.push_back(c.climate);
    return out;
}

ipm::KernelParams read_truth(const fs::path& path) {
    const auto text = ipm::io::read_text(path);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line != "param,value") {
        throw ipm::Error(ipm::Errc::parse_error, path.string() + ":1: expected header 'param,value'");
    }
    ipm::ChainSample s;
    std::map<std::string, double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw ipm::Error(ipm::Errc::parse_error, path.string() + ": malformed row '" + line + "'");
        }
        values[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
    }
    auto& p = s.params;
    p.q0 = values.at("Q0");
    p.q1 = values.at("Q1");
    p.mu = values.at("mu");
    p.sigma = values.at("sigma");
    p.delta0 = values.at("delta0");
    p.delta1 = values.at("delta1");
    p.eta = values.at("eta");
    p.beta.clear();
    for (std::size_t k = 0; values.count("beta_" + std::to_string(k)); ++k) {
        p.beta.push_back(values.at("beta_" + std::to_string(k)));
    }
    return p;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Command& cmd) {
    const auto s = cmd.settings();
    ipm::SimConfig cfg;
    const auto grid = parse_grid(s.str("grid"));
    cfg.lower = grid.lower();
    cfg.upper = grid.upper();
    cfg.cells = grid.size();
    const auto [nt, np] = parse_bins(s.str("bins"));
    if (np != 1) invalid("simulation uses a single climate axis; --bins must be Nx1");
    cfg.n_bins = nt;
    if (nt != 4) {
        // Without the reference matrix, plots keep their bin.
        cfg.transition_matrix.assign(nt, std::vector<double>(nt, 0.0));
        for (std::size_t l = 0; l < nt; ++l) cfg.transition_matrix[l][l] = 1.0;
    }
    cfg.plots_per_bin = s.count("plots-per-bin");
    cfg.horizon = s.count("years");
    cfg.seed = s.count("seed");
    cfg.missing_fraction = s.real("missing");
    cfg.gp_noise = s.flag("gp");
    cfg.gp_sigma2 = s.real("gp-variance");
    cfg.gp_range_scale = s.real("gp-range-scale");
    cfg.initial_mass = s.real("initial-mass");
    cfg.validate();

    Staging out(cmd.out, cmd.overwrite);
    const auto data = ipm::simulate(cfg);
    const auto complete = ipm::simulated_panel(data, cfg);
    auto panel = complete;
    if (cfg.missing_fraction > 0.0) {
        panel = ipm::inject_missingness(complete, cfg.missing_fraction,
                                        ipm::derive_seed(cfg.seed, 5));
    }
    std::vector<ipm::PointPattern> observed;
    for (std::size_t j = 0; j < panel.plot_count(); ++j) {
        for (std::size_t t = 0; t < panel.year_count(); ++t) {
            if (panel.observed(j, t)) observed.push_back(panel.pattern(j, t));
        }
    }
    ipm::io::write_patterns(out.file("patterns.csv"), observed);
    if (cfg.missing_fraction > 0.0) {
        ipm::io::write_patterns(out.file("patterns_complete.csv"), data.patterns);
    }
    ipm::io::write_climate(out.file("climate.csv"), data.climates);
    ipm::io::write_panel_summary(out.file("panel_summary.csv"), ipm::panel_summary(panel));
    {
        std::string text = "param,value\n";
        ipm::ChainSample truth;
        truth.params = cfg.true_params;
        truth.gp = cfg.gp();
        for (const auto& name : ipm::parameter_names(truth.params.beta.size())) {
            text += name + "," + ipm::io::format_double(ipm::parameter_value(truth, name)) + "\n";
        }
        ipm::io::write_text(out.file("truth.csv"), text);
    }
    json manifest;
    manifest["command"] = "simulate";
    manifest["version"] = kVersion;
    manifest["config"] = s.to_json();
    manifest["seed"] = cfg.seed;
    manifest["outputs"] = out.digests();
    write_json(out.path() / "manifest.json", manifest);
    out.commit();
    std::cout << "wrote " << observed.size() << " observed plot-years of " << cfg.plot_count()
              << " plots x " << cfg.horizon << " years to " << cmd.out << "\n";
    return 0;
}

struct FitInputs {
    std::vector<ipm::PointPattern> patterns;
    std::vector<ipm::ClimateObservation> climates;
    ipm::TraitGrid grid{0.0, 1.0, 2};
    ipm::ClimateBinning binning{{0.0, 1.0}, {0.0, 1.0}};
    ipm::CovariateSpec covariates;
};

FitInputs load_inputs(const fs::path& patterns, const fs::path& climate, const std::string& grid,
                      std::size_t nt, std::size_t np, bool use_temp, bool use_precip,
                      bool standardize) {
    FitInputs in;
    in.patterns = ipm::io::read_patterns(patterns);
    in.climates = ipm::io::read_climate(climate);
    in.grid = parse_grid(grid);
    const auto records = records_of(in.climates);
    in.binning = ipm::build_binning(records, nt, np);
    in.covariates = ipm::CovariateSpec::fit(records, use_temp, use_precip, standardize);
    return in;
}

json covariates_json(const ipm::CovariateSpec& c) {
    return json{{"use_temp", c.use_temp},       {"use_precip", c.use_precip},
                {"standardize", c.standardize}, {"temp_mean", c.temp_mean},
                {"temp_sd", c.temp_sd},         {"precip_mean", c.precip_mean},
                {"precip_sd", c.precip_sd}};
}

ipm::CovariateSpec covariates_from(const json& j) {
    ipm::CovariateSpec c;
    c.use_temp = j.at("use_temp").get<bool>();
    c.use_precip = j.at("use_precip").get<bool>();
    c.standardize = j.at("standardize").get<bool>();
    c.temp_mean = j.at("temp_mean").get<double>();
    c.temp_sd = j.at("temp_sd").get<double>();
    c.precip_mean = j.at("precip_mean").get<double>();
    c.precip_sd = j.at("precip_sd").get<double>();
    return c;
}

void print_occupancy(const ipm::SparsePanel& panel) {
    std::cerr << "year,bin,n_start,m_end,pooled_count_start,pooled_count_end\n";
    for (const auto& r : ipm::panel_summary(panel)) {
        std::cerr << r.year << "," << r.bin << "," << r.n_start << "," << r.m_end << ","
                  << r.pooled_count_start << "," << r.pooled_count_end << "\n";
    }
}

int cmd_fit(const Command& cmd) {
    const auto s = cmd.settings();
    if (s.str("patterns").empty() || s.str("climate").empty()) {
        invalid("fit needs --patterns and --climate");
    }
    const auto [nt, np] = parse_bins(s.str("bins"));
    const auto cov = s.str("covariates");
    const bool use_temp = cov.find("temp") != std::string::npos;
    const bool use_precip = cov.find("precip") != std::string::npos;
    if (cov != "none" && !use_temp && !use_precip) {
        invalid("--covariates expects temp, precip, temp,precip or none");
    }
    auto in = load_inputs(s.str("patterns"), s.str("climate"), s.str("grid"), nt, np, use_temp,
                          use_precip, s.flag("standardize"));
    const auto panel = ipm::build_panel(in.patterns, in.climates, in.binning);

    ipm::ModelSpec spec;
    spec.base.q0 = s.real("q0");
    spec.base.beta.assign(in.covariates.size() + 1, 0.0);
    spec.estimate_beta.assign(in.covariates.size() + 1, true);
    spec.estimate_beta[0] = s.flag("estimate-intercept");
    spec.estimate_delta1 = s.flag("delta1");
    if (!s.str("boundary").empty()) {
        double q = 0.0;
        double d = 0.0;
        char tail = 0;
        if (std::sscanf(s.str("boundary").c_str(), "%lf,%lf%c", &q, &d, &tail) != 2) {
            invalid("--boundary expects q,D");
        }
        const auto b = ipm::solve_boundary(q, d);
        spec.base.q0 = b.q0;
        spec.base.delta0 = b.delta0;
        spec.estimate_delta0 = false;
    }
    spec.latent_field = s.flag("gp");
    spec.estimate_gp = spec.latent_field;
    spec.gp.family = ipm::parse_correlation_family(s.str("gp-family"));
    spec.base.validate(in.covariates.size());

    ipm::TermOptions options;
    if (!s.str("bandwidth").empty()) options.bandwidth = s.real("bandwidth");
    if (s.count("train-years") > 0) options.last_year = s.count("train-years") - 1;

    ipm::McmcConfig mc;
    mc.iterations = s.count("iterations");
    mc.burn_in = s.count("burn-in");
    mc.thin = std::max<std::uint64_t>(s.count("thin"), 1);
    mc.centered_moves = s.flag("centered");
    const auto seed = s.count("seed");
    const auto chains = std::max<std::uint64_t>(s.count("chains"), 1);
    if (mc.burn_in >= mc.iterations) invalid("--burn-in must be below --iterations");

    std::optional<ipm::PosteriorModel> model;
    try {
        model.emplace(ipm::PosteriorModel::from_panel(panel, in.grid, in.covariates, spec,
                                                      ipm::PriorSpec::for_grid(in.grid), options));
    } catch (const ipm::Error& e) {
        if (e.code() == ipm::Errc::no_live_terms) {
            std::cerr << "bin-year occupancy:\n";
            print_occupancy(panel);
        }
        throw;
    }
    const double prior_mass = ipm::calibrate_constraint_priors(*model, ipm::derive_seed(seed, 6));

    Staging out(cmd.out, cmd.overwrite);
    g_stop.store(false);
    std::signal(SIGINT, on_sigint);
    std::vector<ipm::PosteriorChain> results;
    json chain_meta = json::array();
    for (std::uint64_t c = 0; c < chains; ++c) {
        mc.seed = ipm::derive_seed(seed, 7, c);
        results.push_back(ipm::mcmc_fit(*model, mc, [] { return g_stop.load(); }));
        const auto& chain = results.back();
        const std::string file = "chain_" + std::to_string(c) + ".csv";
        ipm::io::write_chain(out.file(file), chain);
        json acc = json::object();
        for (const auto& [k, v] : chain.acceptance) acc[k] = v;
        chain_meta.push_back({{"file", file},
                              {"seed", chain.seed},
                              {"iterations", chain.iterations},
                              {"burn_in", chain.burn_in},
                              {"thin", chain.thin},
                              {"completed_iterations", chain.completed_iterations},
                              {"interrupted", chain.interrupted},
                              {"retained", chain.samples.size()},
                              {"acceptance", acc}});
        if (chain.interrupted) break;
    }
    std::signal(SIGINT, SIG_DFL);
    const bool interrupted = results.back().interrupted;

    std::size_t retained = 0;
    for (const auto& c : results) retained += c.samples.size();
    if (retained > 0) {
        ipm::io::write_summary(out.file("summary.csv"), ipm::summarize(results, 1));
    }
    ipm::io::write_panel_summary(out.file("panel_summary.csv"), ipm::panel_summary(panel));
    {
        std::string text = "chain,move,acceptance\n";
        for (std::size_t c = 0; c < results.size(); ++c) {
            for (const auto& [k, v] : results[c].acceptance) {
                text += std::to_string(c) + "," + k + "," + ipm::io::format_double(v) + "\n";
            }
        }
        ipm::io::write_text(out.file("acceptance.csv"), text);
    }

    const auto& bound = model->bound();
    const auto& pr = model->priors();
    json manifest;
    manifest["command"] = "fit";
    manifest["version"] = kVersion;
    manifest["config"] = s.to_json();
    manifest["seed"] = seed;
    manifest["inputs"] = {{"patterns", fs::absolute(s.str("patterns")).string()},
                          {"patterns_digest", ipm::io::file_digest(s.str("patterns"))},
                          {"climate", fs::absolute(s.str("climate")).string()},
                          {"climate_digest", ipm::io::file_digest(s.str("climate"))}};
    manifest["grid"] = {{"lower", in.grid.lower()}, {"upper", in.grid.upper()},
                        {"cells", in.grid.size()}};
    manifest["binning"] = {
        {"temp_breaks", std::vector<double>(in.binning.temp_breaks().begin(),
                                            in.binning.temp_breaks().end())},
        {"precip_breaks", std::vector<double>(in.binning.precip_breaks().begin(),
                                              in.binning.precip_breaks().end())}};
    manifest["covariates"] = covariates_json(in.covariates);
    manifest["constraint"] = {{"rho_max", bound.rho_max}, {"lower", bound.lower},
                              {"upper", bound.upper}};
    manifest["priors"] = {{"q1_rate", pr.q1_rate},           {"delta1_rate", pr.delta1_rate},
                          {"beta_variance", pr.beta_variance}, {"sigma_scale", pr.sigma_scale},
                          {"eta_shape", pr.eta_shape},       {"eta_rate", pr.eta_rate},
                          {"delta0_scale", pr.delta0_scale}, {"sigma2_shape", pr.sigma2_shape},
                          {"sigma2_scale", pr.sigma2_scale}, {"phi_lower", pr.phi_lower},
                          {"phi_upper", pr.phi_upper},
                          {"constraint_prior_mass", prior_mass}};
    manifest["terms"] = model->terms().size();
    manifest["free_parameters"] = results.front().free_parameters;
    manifest["chains"] = chain_meta;
    manifest["interrupted"] = interrupted;
    manifest["outputs"] = out.digests();
    write_json(out.path() / "manifest.json", manifest);
    out.commit();

    if (interrupted) {
        std::cerr << "interrupted: chain checkpointed after "
                  << results.back().completed_iterations << " iterations in " << cmd.out << "\n";
        return 3;
    }
    std::cout << "fitted " << model->terms().size() << " bin-year terms; interval ("
              << bound.lower << ", " << bound.upper << "); " << retained << " retained draws in "
              << cmd.out << "\n";
    if (retained > 0) {
        for (const auto& r : ipm::summarize(results, 1)) {
            std::printf("  %-10s mean %.6g  95%% CI (%.6g, %.6g)\n", r.name.c_str(), r.mean,
                        r.lower, r.upper);
        }
    }
    return 0;
}

struct FitRun {
    json manifest;
    std::vector<ipm::PosteriorChain> chains;
};

FitRun load_fit(const fs::path& dir) {
    FitRun run;
    run.manifest = read_json(dir / "manifest.json");
    if (run.manifest.value("command", "") != "fit") {
        throw ipm::Error(ipm::Errc::missing_chain, dir.string() + " is not a fit output directory");
    }
    std::vector<std::string> free;
    for (const auto& p : run.manifest.at("free_parameters")) free.push_back(p.get<std::string>());
    for (const auto& c : run.manifest.at("chains")) {
        auto chain = ipm::io::read_chain(dir / c.at("file").get<std::string>());
        chain.free_parameters = free;
        chain.seed = c.at("seed").get<std::uint64_t>();
        run.chains.push_back(std::move(chain));
    }
    return run;
}

ipm::SparsePanel panel_for(const FitRun& run, const std::vector<ipm::PointPattern>& patterns,
                           const std::vector<ipm::ClimateObservation>& climates) {
    const auto& b = run.manifest.at("binning");
    ipm::ClimateBinning binning(b.at("temp_breaks").get<std::vector<double>>(),
                                b.at("precip_breaks").get<std::vector<double>>());
    binning.set_members(records_of(climates));
    return ipm::build_panel(patterns, climates, binning);
}

ipm::TraitGrid grid_for(const FitRun& run) {
    const auto& g = run.manifest.at("grid");
    return ipm::TraitGrid(g.at("lower").get<double>(), g.at("upper").get<double>(),
                          g.at("cells").get<std::size_t>());
}

ipm::KernelParams median_params(const std::vector<ipm::PosteriorChain>& chains) {
    ipm::KernelParams p = chains.front().samples.front().params;
    for (const auto& s : ipm::summarize(chains, 1)) {
        if (s.name == "Q1") p.q1 = s.median;
        else if (s.name == "sigma") p.sigma = s.median;
        else if (s.name == "delta0") p.delta0 = s.median;
        else if (s.name == "delta1") p.delta1 = s.median;
        else if (s.name == "eta") p.eta = s.median;
        else if (s.name.rfind("beta_", 0) == 0) p.beta[std::stoul(s.name.substr(5))] = s.median;
    }
    return p;
}

int cmd_project(const Command& cmd) {
    const auto s = cmd.settings();
    if (s.str("fit").empty()) invalid("project needs --fit DIR");
    const auto run = load_fit(s.str("fit"));
    const auto& inputs = run.manifest.at("inputs");
    const std::string patterns_path =
        s.str("patterns").empty() ? inputs.at("patterns").get<std::string>() : s.str("patterns");
    const std::string climate_path =
        s.str("climate").empty() ? inputs.at("climate").get<std::string>() : s.str("climate");
    const auto patterns = ipm::io::read_patterns(patterns_path);
    const auto climates = ipm::io::read_climate(climate_path);
    const auto grid = grid_for(run);
    const auto panel = panel_for(run, patterns, climates);
    const auto covariates = covariates_from(run.manifest.at("covariates"));
    const auto steps = s.count("horizon");
    std::optional<ipm::KernelParams> truth;
    if (!s.str("truth").empty()) truth = read_truth(s.str("truth"));

    std::vector<ipm::IntensityField> start;
    std::vector<std::vector<double>> z;
    for (std::size_t l = 0; l < panel.bin_count(); ++l) {
        if (panel.start_set(0, l).empty()) {
            std::cerr << "bin " << l << " has no observed plots in the first year; skipped\n";
            continue;
        }
        start.push_back(ipm::per_plot_intensity(panel, 0, l, grid));
        z.push_back(covariates(*panel.binning().centroid(l)));
    }
    if (start.empty()) {
        throw ipm::Error(ipm::Errc::empty_bin_year, "no bin has observed plots in the first year");
    }

    Staging out(cmd.out, cmd.overwrite);
    const auto bands = ipm::projection_bands(run.chains, start, z, steps, s.count("max-draws"),
                                             truth ? &*truth : nullptr);
    ipm::io::write_bands(out.file("bands.csv"), bands);
    ipm::io::write_mass_bands(out.file("mass_bands.csv"), bands);
    const auto centre = median_params(run.chains);
    std::vector<std::vector<ipm::IntensityField>> paths;
    for (std::size_t i = 0; i < start.size(); ++i) {
        const std::vector<std::vector<double>> zs(steps, z[i]);
        paths.push_back(ipm::project(start[i], zs, centre, steps));
    }
    ipm::io::write_projection(out.file("projection.csv"), paths);
    {
        std::string text = "bin,median_band_width,containment\n";
        for (const auto& b : bands) {
            std::vector<double> widths;
            for (std::size_t j = 0; j < b.band.lower.size(); ++j) {
                widths.push_back(b.band.upper[j] - b.band.lower[j]);
            }
            text += std::to_string(b.bin) + "," + ipm::io::format_double(ipm::quantile(widths, 0.5)) +
                    "," + (b.truth.empty() ? std::string() : ipm::io::format_double(b.containment)) +
                    "\n";
        }
        ipm::io::write_text(out.file("band_report.csv"), text);
    }
    json manifest;
    manifest["command"] = "project";
    manifest["version"] = kVersion;
    manifest["config"] = s.to_json();
    manifest["inputs"] = {{"patterns_digest", ipm::io::file_digest(patterns_path)},
                          {"climate_digest", ipm::io::file_digest(climate_path)}};
    manifest["outputs"] = out.digests();
    write_json(out.path() / "manifest.json", manifest);
    out.commit();
    std::cout << "projected " << bands.size() << " bins " << steps << " steps ahead into "
              << cmd.out << "\n";
    return 0;
}

int cmd_summarize(const Command& cmd) {
    const auto s = cmd.settings();
    if (s.str("fit").empty()) invalid("summarize needs --fit DIR");
    const auto run = load_fit(s.str("fit"));
    const auto min_draws = s.count("min-draws");
    const auto table = ipm::summarize(run.chains, min_draws);

    std::printf("%-10s %12s %12s %12s %12s\n", "param", "mean", "median", "2.5%", "97.5%");
    for (const auto& r : table) {
        std::printf("%-10s %12.6g %12.6g %12.6g %12.6g\n", r.name.c_str(), r.mean, r.median,
                    r.lower, r.upper);
    }

    // Observed versus predicted trees per plot for every fitted bin-year.
    const auto& inputs = run.manifest.at("inputs");
    const auto patterns = ipm::io::read_patterns(inputs.at("patterns").get<std::string>());
    const auto climates = ipm::io::read_climate(inputs.at("climate").get<std::string>());
    const auto grid = grid_for(run);
    const auto panel = panel_for(run, patterns, climates);
    const auto covariates = covariates_from(run.manifest.at("covariates"));
    const auto terms = ipm::build_transition_terms(panel, grid, covariates);
    const auto centre = median_params(run.chains);
    std::string text = "year,bin,observed_per_plot,predicted_per_plot\n";
    for (const auto& term : terms) {
        const auto pred = ipm::pseudo_ipm_step(term.start, term.covariates, centre);
        const double observed =
            static_cast<double>(term.counts.total()) / static_cast<double>(term.multiplicity);
        text += std::to_string(term.counts.year) + "," + std::to_string(term.bin) + "," +
                ipm::io::format_double(observed) + "," + ipm::io::format_double(ipm::integrate(pred)) +
                "\n";
    }
    if (!cmd.out.empty()) {
        Staging out(cmd.out, cmd.overwrite);
        ipm::io::write_summary(out.file("summary.csv"), table);
        ipm::io::write_text(out.file("abundance.csv"), text);
        json manifest;
        manifest["command"] = "summarize";
        manifest["version"] = kVersion;
        manifest["config"] = s.to_json();
        manifest["outputs"] = out.digests();
        write_json(out.path() / "manifest.json", manifest);
        out.commit();
    } else {
        std::cout << "\n" << text;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Climate-binned pseudo-IPM inference for sparse forest plot panels"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::vector<std::unique_ptr<Command>> commands;
    auto make = [&](const std::string& name, const std::string& help) {
        auto c = std::make_unique<Command>();
        c->name = name;
        c->app = app.add_subcommand(name, help);
        c->app->add_option("--config", c->config_path, "key = value settings file");
        c->app->add_option("--out", c->out, "output directory");
        c->app->add_flag("--overwrite", c->overwrite, "replace a non-empty output directory");
        c->opt("--seed", "seed", "1", "random seed");
        commands.push_back(std::move(c));
        return commands.back().get();
    };

    auto* sim = make("simulate", "generate a synthetic panel from known parameters");
    sim->opt("--missing", "missing", "0", "fraction of plots removed per bin and training year");
    sim->opt("--bins", "bins", "4x1", "number of covariate levels, as Nx1");
    sim->opt("--grid", "grid", "12.7,112.7,100", "trait grid L,U,B");
    sim->opt("--plots-per-bin", "plots-per-bin", "100", "plots starting in each bin");
    sim->opt("--years", "years", "10", "number of years");
    sim->opt("--gp", "gp", "true", "perturb intensities with a latent Gaussian field");
    sim->opt("--gp-variance", "gp-variance", "0.04", "latent field variance");
    sim->opt("--gp-range-scale", "gp-range-scale", "6", "latent field decay times (U - L)");
    sim->opt("--initial-mass", "initial-mass", "30", "mean trees per plot in the first year");

    auto* fit = make("fit", "fit the scaled pseudo-IPM posterior by MCMC");
    fit->opt("--patterns", "patterns", "", "pattern CSV (plot_id,year,diameter_cm)");
    fit->opt("--climate", "climate", "", "climate CSV (plot_id,year,winter_temp_c,annual_precip_mm)");
    fit->opt("--bins", "bins", "4x1", "climate bins NTxNP");
    fit->opt("--grid", "grid", "12.7,112.7,100", "trait grid L,U,B");
    fit->opt("--iterations", "iterations", "50000", "MCMC iterations per chain");
    fit->opt("--burn-in", "burn-in", "10000", "adaptive burn-in iterations");
    fit->opt("--thin", "thin", "10", "keep every n-th post burn-in draw");
    fit->opt("--chains", "chains", "1", "independent chains");
    fit->opt("--covariates", "covariates", "temp,precip", "temp, precip, temp,precip or none");
    fit->opt("--standardize", "standardize", "false", "center and scale covariates");
    fit->opt("--estimate-intercept", "estimate-intercept", "false", "sample the intercept beta_0");
    fit->opt("--delta1", "delta1", "false", "sample the recruitment density slope delta1");
    fit->opt("--q0", "q0", "1", "fixed survival scale Q0");
    fit->opt("--boundary", "boundary", "", "fix Q0 and delta0 from boundary values q,D");
    fit->opt("--gp", "gp", "true", "include the latent Gaussian field");
    fit->opt("--gp-family", "gp-family", "exponential", "exponential or matern32");
    fit->opt("--train-years", "train-years", "0", "use only the first n years (0 = all)");
    fit->opt("--bandwidth", "bandwidth", "", "kernel bandwidth in cm (Silverman if empty)");
    fit->opt("--centered", "centered", "true", "add centered kernel-parameter moves");

    auto* proj = make("project", "project posterior bands forward from first-year intensities");
    proj->opt("--fit", "fit", "", "fit output directory");
    proj->opt("--patterns", "patterns", "", "pattern CSV for the starting year (fit input if empty)");
    proj->opt("--climate", "climate", "", "climate CSV (fit input if empty)");
    proj->opt("--horizon", "horizon", "9", "projection steps");
    proj->opt("--max-draws", "max-draws", "400", "posterior draws used (0 = all)");
    proj->opt("--truth", "truth", "", "truth.csv from simulate to overlay");

    auto* sum = make("summarize", "tabulate posterior summaries and abundance fit");
    sum->opt("--fit", "fit", "", "fit output directory");
    sum->opt("--min-draws", "min-draws", "100", "minimum retained draws");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (const auto& c : commands) {
            if (!c->app->parsed()) continue;
            if (c->name == "simulate") return cmd_simulate(*c);
            if (c->name == "fit") return cmd_fit(*c);
            if (c->name == "project") return cmd_project(*c);
            if (c->name == "summarize") return cmd_summarize(*c);
        }
    } catch (const ipm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ipm::is_validation_error(e.code()) ? 2 : 3;
    } catch (const json::exception& e) {
        std::cerr << "error: malformed manifest: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: io-failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
