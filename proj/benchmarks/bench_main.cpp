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

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "ipm/cox.hpp"
#include "ipm/inference.hpp"
#include "ipm/propagation.hpp"
#include "ipm/sim.hpp"

using namespace ipm;

namespace {

std::vector<double> bump(const TraitGrid& g) {
    std::vector<double> v(g.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        const double u = (g.center(j) - 40.0) / 10.0;
        v[j] = 3.0 * std::exp(-0.5 * u * u);
    }
    return v;
}

void BM_Convolve(benchmark::State& state) {
    const TraitGrid grid(12.7, 112.7, static_cast<std::size_t>(state.range(0)));
    const StepOperator op(grid, reference_truth());
    const auto in = bump(grid);
    std::vector<double> out(grid.size());
    for (auto _ : state) {
        op.convolve(in, out);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_Convolve)->Arg(100)->Arg(400)->Arg(1600);

void BM_DenseStep(benchmark::State& state) {
    const TraitGrid grid(12.7, 112.7, static_cast<std::size_t>(state.range(0)));
    const std::vector<double> z{1.0};
    const auto k = build_kernel_matrix(grid, z, reference_truth(), 30.0);
    const auto in = bump(grid);
    for (auto _ : state) benchmark::DoNotOptimize(k.apply(in));
}
BENCHMARK(BM_DenseStep)->Arg(100)->Arg(400);

void BM_LogLikelihood(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    std::vector<double> lambda(n);
    std::vector<std::int64_t> counts(n);
    for (std::size_t b = 0; b < n; ++b) {
        lambda[b] = std::uniform_real_distribution<double>(0.1, 5.0)(rng);
        counts[b] = static_cast<std::int64_t>(lambda[b]);
    }
    for (auto _ : state) benchmark::DoNotOptimize(log_likelihood(counts, lambda, 1.0, 3));
}
BENCHMARK(BM_LogLikelihood)->Arg(100)->Arg(400);

void BM_GPLogDensity(benchmark::State& state) {
    const TraitGrid grid(12.7, 112.7, static_cast<std::size_t>(state.range(0)));
    const GaussianProcess gp(grid, GPConfig{0.04, 0.06, CorrelationFamily::exponential});
    std::mt19937_64 rng(2);
    const auto eps = gp.sample(rng);
    for (auto _ : state) benchmark::DoNotOptimize(gp.log_density(eps));
}
BENCHMARK(BM_GPLogDensity)->Arg(100)->Arg(400);

void BM_GPFactor(benchmark::State& state) {
    const TraitGrid grid(12.7, 112.7, static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        GaussianProcess gp(grid, GPConfig{0.04, 0.06, CorrelationFamily::exponential});
        benchmark::DoNotOptimize(gp.jitter());
    }
}
BENCHMARK(BM_GPFactor)->Arg(100)->Arg(400);

// Sampler cost per iteration on the four-bin simulated panel.
void BM_SamplerIterations(benchmark::State& state) {
    SimConfig cfg;
    cfg.plots_per_bin = 25;
    cfg.seed = 9;
    const auto data = simulate(cfg);
    const auto panel = simulated_panel(data, cfg);
    auto model = simulation_model(panel, cfg, FitSettings{});
    calibrate_constraint_priors(model, 3);
    McmcConfig mc;
    mc.iterations = 200;
    mc.burn_in = 100;
    mc.thin = 10;
    for (auto _ : state) benchmark::DoNotOptimize(mcmc_fit(model, mc).samples.size());
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * mc.iterations));
}
BENCHMARK(BM_SamplerIterations)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
