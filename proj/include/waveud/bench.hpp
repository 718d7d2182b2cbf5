#pragma once

#include <cstdint>
#include <string>

#include "waveud/ensemble.hpp"
#include "waveud/generator.hpp"
#include "waveud/waveunet.hpp"

namespace waveud {

struct BenchResult {
    double seconds_per_batch = 0; // median over iters of (real + fake) forwards
    int batch = 0, segment = 0, warmup = 0, iters = 0;
};

// Wall time for a discriminator to forward-propagate one real and one fake
// batch, median over iters after warmup throwaway runs. Inputs are random
// and fixed per seed; forwards run in pure inference mode.
BenchResult benchmark_waveunet(const WaveUNetConfig& cfg, int batch, int segment, int warmup,
                               int iters, std::uint64_t seed = 7);

BenchResult benchmark_ensemble(const EnsembleConfig& cfg, int batch, int segment, int warmup,
                               int iters, std::uint64_t seed = 7);

} // namespace waveud
