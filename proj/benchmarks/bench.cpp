#include <benchmark/benchmark.h>

#include <vector>

#include "moecast/data.hpp"
#include "moecast/drift.hpp"
#include "moecast/fft.hpp"
#include "moecast/manager.hpp"
#include "moecast/model.hpp"
#include "moecast/optimizer.hpp"
#include "moecast/rng.hpp"

namespace {

using namespace moecast;

std::vector<double> random_rows(int n, int dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out(static_cast<std::size_t>(n) * dim);
    for (auto& x : out) x = rng.normal();
    return out;
}

void BM_MmdBiased(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const int dim = 7;
    const auto ref = random_rows(n, dim, 1);
    const auto cur = random_rows(n, dim, 2);
    const double sigma = median_bandwidth(ref, n, dim);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mmd2_biased(ref, n, cur, n, dim, sigma));
    }
}
BENCHMARK(BM_MmdBiased)->Arg(96)->Arg(192);

void BM_Rfft(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto x = random_rows(n, 1, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fft::rfft(x));
    }
}
BENCHMARK(BM_Rfft)->Arg(96)->Arg(512)->Arg(730); // non-power-of-two goes through Bluestein

void BM_ModelForward(benchmark::State& state) {
    ModelConfig mc;
    mc.lookback = 96;
    mc.horizon = 24;
    mc.vars = 3;
    mc.patch_len = 24;
    mc.stride = 12;
    mc.d_model = 8;
    mc.d_hidden = 16;
    mc.top_k = 2;
    Rng rng(7);
    ForecastModel model(mc, rng);
    ForecastWindow w;
    w.origin = 95;
    w.input = random_rows(mc.lookback, mc.vars, 4);
    w.target = random_rows(mc.horizon, mc.vars, 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.forward(w));
    }
}
BENCHMARK(BM_ModelForward);

void BM_TrainStep(benchmark::State& state) {
    ModelConfig mc;
    mc.lookback = 48;
    mc.horizon = 12;
    mc.vars = 2;
    mc.patch_len = 12;
    mc.stride = 6;
    mc.d_model = 8;
    mc.d_hidden = 8;
    mc.top_k = 2;
    Rng rng(7);
    ForecastModel model(mc, rng);
    AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.01});
    ForecastWindow w;
    w.origin = 47;
    w.input = random_rows(mc.lookback, mc.vars, 4);
    w.target = random_rows(mc.horizon, mc.vars, 5);
    const auto params = model.params();
    for (auto _ : state) {
        AdamW::zero_grad(params);
        const Tensor loss = mse_loss(model.forward(w), w.target);
        loss.backward();
        opt.step(params);
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_TrainStep);

} // namespace

BENCHMARK_MAIN();
