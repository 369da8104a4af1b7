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

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "ipm/io.hpp"
#include "support.hpp"

using namespace ipm;
using ipm::test::error_code;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("ipmscale-io-" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace

TEST_SUITE("io") {

TEST_CASE("fnv1a reference vectors") {
    CHECK(io::fnv1a_hex("") == "cbf29ce484222325");
    CHECK(io::fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(io::fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("doubles round-trip through text") {
    for (double v : {0.1, 1.0 / 3.0, 12.7, -2.5e-300, 6.02214076e23}) {
        CHECK(std::stod(io::format_double(v)) == v);
    }
}

TEST_CASE("patterns round-trip, including empty plot-years") {
    TempDir dir;
    std::vector<PointPattern> ps = {{"a", 1, {12.7, 30.125, 99.0}, {}}, {"a", 2, {}, {}},
                                    {"b", 1, {1.0 / 3.0}, {}}};
    io::write_patterns(dir / "p.csv", ps);
    auto back = io::read_patterns(dir / "p.csv");
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].plot_id == ps[i].plot_id);
        CHECK(back[i].year == ps[i].year);
        CHECK(back[i].diameters == ps[i].diameters);
    }
    io::write_patterns(dir / "q.csv", back);
    CHECK(io::file_digest(dir / "p.csv") == io::file_digest(dir / "q.csv"));
}

TEST_CASE("malformed pattern rows report the line") {
    TempDir dir;
    io::write_text(dir / "bad.csv", "plot_id,year,diameter_cm\na,1,10\na,x,12\n");
    try {
        io::read_patterns(dir / "bad.csv");
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::parse_error);
        CHECK(std::string(e.what()).find("bad.csv:3") != std::string::npos);
    }
    io::write_text(dir / "hdr.csv", "plot,year,d\n");
    CHECK(error_code([&] { io::read_patterns(dir / "hdr.csv"); }) == Errc::parse_error);
    io::write_text(dir / "neg.csv", "plot_id,year,diameter_cm\na,1,-3\n");
    CHECK(error_code([&] { io::read_patterns(dir / "neg.csv"); }) == Errc::parse_error);
    io::write_text(dir / "fields.csv", "plot_id,year,diameter_cm\na,1\n");
    CHECK(error_code([&] { io::read_patterns(dir / "fields.csv"); }) == Errc::parse_error);
    CHECK(error_code([&] { io::read_patterns(dir / "absent.csv"); }) == Errc::io_failure);
}

TEST_CASE("climate round-trip and duplicate detection") {
    TempDir dir;
    std::vector<ClimateObservation> cs = {{"a", 1, {-3.25, 812.5}}, {"a", 2, {0.0, 1000.0}}};
    io::write_climate(dir / "c.csv", cs);
    auto back = io::read_climate(dir / "c.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].climate == cs[0].climate);
    CHECK(back[1].year == 2);
    io::write_text(dir / "dup.csv", "plot_id,year,winter_temp_c,annual_precip_mm\na,1,0,1\na,1,0,2\n");
    CHECK(error_code([&] { io::read_climate(dir / "dup.csv"); }) == Errc::parse_error);
    io::write_text(dir / "neg.csv", "plot_id,year,winter_temp_c,annual_precip_mm\na,1,0,-1\n");
    CHECK(error_code([&] { io::read_climate(dir / "neg.csv"); }) == Errc::parse_error);
    io::write_text(dir / "empty.csv", "plot_id,year,winter_temp_c,annual_precip_mm\n");
    CHECK(error_code([&] { io::read_climate(dir / "empty.csv"); }) == Errc::empty_input);
}

TEST_CASE("chains round-trip") {
    TempDir dir;
    PosteriorChain chain;
    for (int i = 0; i < 3; ++i) {
        ChainSample s;
        s.iteration = 10 * static_cast<std::size_t>(i);
        s.params.q1 = 0.01 * (i + 1);
        s.params.sigma = 0.3 + i;
        s.params.beta = {0.0, 0.1 / 3.0};
        s.gp = GPConfig{0.04, 0.06, CorrelationFamily::exponential};
        s.log_posterior = -1234.5 + i;
        chain.samples.push_back(s);
    }
    io::write_chain(dir / "chain.csv", chain);
    auto back = io::read_chain(dir / "chain.csv");
    REQUIRE(back.samples.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.samples[i].params == chain.samples[i].params);
        CHECK(back.samples[i].gp.sigma2 == 0.04);
        CHECK(back.samples[i].iteration == chain.samples[i].iteration);
        CHECK(back.samples[i].log_posterior == chain.samples[i].log_posterior);
    }
    CHECK(error_code([&] { io::read_chain(dir / "nope.csv"); }) == Errc::missing_chain);
    io::write_text(dir / "short.csv", "iteration,param,value\n0,Q1,0.1\n");
    CHECK(error_code([&] { io::read_chain(dir / "short.csv"); }) == Errc::parse_error);
}

TEST_CASE("summary and band writers") {
    TempDir dir;
    std::vector<ParameterSummary> rows = {{"sigma", 0.5, 0.25, 0.125, 1.0, 40}};
    io::write_summary(dir / "s.csv", rows);
    CHECK(io::read_text(dir / "s.csv") ==
          "param,mean,median,lower_2.5,upper_97.5,draws\nsigma,0.5,0.25,0.125,1,40\n");

    BinProjection b;
    b.bin = 2;
    b.cell_centers = {1.0, 3.0};
    b.band = Band{{0.5, 1.0}, {1.0, 2.0}, {1.5, 3.0}};
    b.mass = Band{{1.0}, {2.0}, {3.0}};
    io::write_bands(dir / "b.csv", std::span(&b, 1));
    CHECK(io::read_text(dir / "b.csv") ==
          "bin,cell_center,lower,median,upper,truth\n2,1,0.5,1,1.5,\n2,3,1,2,3,\n");
    io::write_mass_bands(dir / "m.csv", std::span(&b, 1));
    CHECK(io::read_text(dir / "m.csv") == "bin,step,lower,median,upper,truth\n2,0,1,2,3,\n");
}

TEST_CASE("config files") {
    auto cfg = io::ConfigFile::parse("seed = 5\n# comment\n[fit]\niterations = 100 ; trailing\nchains=2\n");
    CHECK(cfg.get("seed") == "5");
    CHECK(cfg.get("fit.iterations") == "100");
    CHECK(cfg.get("fit.chains") == "2");
    CHECK_FALSE(cfg.get("iterations").has_value());
    CHECK(error_code([] { io::ConfigFile::parse("a = 1\na = 2\n"); }) == Errc::parse_error);
    CHECK(error_code([] { io::ConfigFile::parse("[fit\n"); }) == Errc::parse_error);
    CHECK(error_code([] { io::ConfigFile::parse("novalue\n"); }) == Errc::parse_error);
    try {
        io::ConfigFile::parse("ok = 1\n\nbroken\n", "run.cfg");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("run.cfg:3") != std::string::npos);
    }
    CHECK(error_code([] { io::ConfigFile::load("/nonexistent/x.cfg"); }) == Errc::io_failure);
}

}  // TEST_SUITE
