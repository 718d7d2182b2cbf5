#include <doctest.h>

#include "waveud/bench.hpp"

using namespace waveud;

TEST_CASE("self-comparison benchmarks agree within measurement noise") {
    // Median of 9 passes over a workload large enough (~0.3 s) to swamp
    // scheduler jitter.
    WaveUNetConfig cfg;
    const int batch = 4, segment = 4096;
    const BenchResult a = benchmark_waveunet(cfg, batch, segment, 2, 9, 7);
    const BenchResult b = benchmark_waveunet(cfg, batch, segment, 2, 9, 7);
    const double ratio = a.seconds_per_batch / b.seconds_per_batch;
    CHECK(ratio > 0.9);
    CHECK(ratio < 1.1);
}

TEST_CASE("doubling the batch roughly doubles waveunet forward time") {
    WaveUNetConfig cfg;
    const BenchResult small = benchmark_waveunet(cfg, 4, 4096, 2, 7, 7);
    const BenchResult big = benchmark_waveunet(cfg, 8, 4096, 2, 7, 7);
    const double factor = big.seconds_per_batch / small.seconds_per_batch;
    CHECK(factor > 1.5);
    CHECK(factor < 2.5);
}

TEST_CASE("benchmark rejects degenerate settings") {
    CHECK_THROWS_AS(benchmark_waveunet({}, 1, 2048, 0, 1, 7), usage_error);
    CHECK_THROWS_AS(benchmark_waveunet({}, 1, 2048, 1, 0, 7), usage_error);
}
