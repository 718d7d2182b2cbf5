#include "waveud/bench.hpp"

#include <algorithm>
#include <chrono>
#include <vector>

namespace waveud {

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

template <typename Fn>
BenchResult run_bench(Fn&& pass, int batch, int segment, int warmup, int iters) {
    if (warmup < 1) throw usage_error("benchmark: warmup must be >= 1");
    if (iters < 1) throw usage_error("benchmark: iters must be >= 1");
    for (int i = 0; i < warmup; ++i) pass();
    std::vector<double> times;
    times.reserve(iters);
    for (int i = 0; i < iters; ++i) {
        const auto t0 = Clock::now();
        pass();
        const auto t1 = Clock::now();
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    BenchResult r;
    r.seconds_per_batch = median(times);
    r.batch = batch;
    r.segment = segment;
    r.warmup = warmup;
    r.iters = iters;
    return r;
}

} // namespace

BenchResult benchmark_waveunet(const WaveUNetConfig& cfg, int batch, int segment, int warmup,
                               int iters, std::uint64_t seed) {
    Rng rng(seed);
    WaveUNetDiscriminator<float> disc(cfg, rng);
    disc.set_requires_grad(false);
    auto real = random_uniform<float>(rng, batch, 1, segment, -0.95, 0.95);
    auto fake = random_uniform<float>(rng, batch, 1, segment, -0.95, 0.95);
    volatile float sink = 0.0f;
    return run_bench(
        [&]() {
            auto a = disc.forward(nullptr, real);
            auto b = disc.forward(nullptr, fake);
            sink = a.score_map->data()[0] + b.score_map->data()[0];
        },
        batch, segment, warmup, iters);
}

BenchResult benchmark_ensemble(const EnsembleConfig& cfg, int batch, int segment, int warmup,
                               int iters, std::uint64_t seed) {
    Rng rng(seed);
    HifiGanEnsemble ensemble(cfg, rng);
    auto real = random_uniform<float>(rng, batch, 1, segment, -0.95, 0.95);
    auto fake = random_uniform<float>(rng, batch, 1, segment, -0.95, 0.95);
    volatile float sink = 0.0f;
    return run_bench(
        [&]() {
            auto a = ensemble.forward(*real);
            auto b = ensemble.forward(*fake);
            sink = a[0].score.data()[0] + b[0].score.data()[0];
        },
        batch, segment, warmup, iters);
}

} // namespace waveud
