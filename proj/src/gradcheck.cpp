#include "waveud/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "waveud/generator.hpp"
#include "waveud/losses.hpp"
#include "waveud/ops.hpp"
#include "waveud/waveunet.hpp"

namespace waveud {

namespace {

using D = double;
using TP = TensorPtr<D>;

constexpr double kStep = 1e-5;

// Loss builders return a scalar tensor; with tape == nullptr they run pure
// forward, which is what the numeric side differentiates.
struct Probe {
    std::string name;
    std::vector<TP> leaves;
    std::function<TP(Tape<D>*)> loss;
    int probes_per_leaf = 0; // 0: every element
};

double run_probe(Probe& probe, Rng& rng) {
    for (auto& leaf : probe.leaves) {
        leaf->set_requires_grad(true);
        leaf->zero_grad();
    }
    Tape<D> tape;
    auto loss = probe.loss(&tape);
    tape.backward(loss);

    double max_err = 0.0;
    for (auto& leaf : probe.leaves) {
        const std::size_t n = leaf->size();
        std::vector<std::size_t> indices;
        if (probe.probes_per_leaf == 0 || static_cast<std::size_t>(probe.probes_per_leaf) >= n) {
            indices.resize(n);
            for (std::size_t i = 0; i < n; ++i) indices[i] = i;
        } else {
            for (int i = 0; i < probe.probes_per_leaf; ++i)
                indices.push_back(static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)));
        }
        const std::vector<D> analytic = leaf->has_grad() ? leaf->grad_view() : std::vector<D>(n, 0);
        for (const std::size_t i : indices) {
            const D saved = leaf->data()[i];
            leaf->data()[i] = saved + kStep;
            const double lp = scalar_value(probe.loss(nullptr));
            leaf->data()[i] = saved - kStep;
            const double lm = scalar_value(probe.loss(nullptr));
            leaf->data()[i] = saved;
            const double numeric = (lp - lm) / (2.0 * kStep);
            const double a = analytic[i];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

// Weighted readout makes the probe sensitive to the full Jacobian instead of
// only row sums.
TP weighted_sum(Tape<D>* tape, const TP& y, const TP& weights) {
    return sum_all(tape, mul(tape, y, weights));
}

TP rand_t(Rng& rng, int b, int c, int t, double lo = -1.0, double hi = 1.0) {
    return random_uniform<D>(rng, b, c, t, lo, hi);
}

// Uniform values with magnitude in [0.15, 1) so kinked ops (abs, lrelu) stay
// away from their corners under the finite-difference step.
TP rand_away_from_zero(Rng& rng, int b, int c, int t) {
    auto x = make_tensor<D>(b, c, t);
    for (auto& v : x->values()) {
        const double mag = rng.uniform(0.15, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return x;
}

} // namespace

std::vector<GradCheckCase> run_gradcheck(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Probe> probes;

    {
        auto x = rand_t(rng, 2, 3, 17);
        auto w = rand_t(rng, 4, 3, 5);
        auto b = rand_t(rng, 1, 4, 1);
        auto wt = rand_t(rng, 2, 4, 17);
        probes.push_back({"conv1d_s1", {x, w, b},
                          [=](Tape<D>* t) {
                              return weighted_sum(t, conv1d(t, x, w, b, 1, 2), wt);
                          }});
    }
    {
        auto x = rand_t(rng, 2, 2, 20);
        auto w = rand_t(rng, 3, 2, 5);
        auto b = rand_t(rng, 1, 3, 1);
        auto wt = rand_t(rng, 2, 3, 5);
        probes.push_back({"conv1d_s4", {x, w, b},
                          [=](Tape<D>* t) {
                              return weighted_sum(t, conv1d(t, x, w, b, 4, 2), wt);
                          }});
    }
    {
        auto x = rand_t(rng, 1, 2, 9);
        auto w = rand_t(rng, 2, 3, 4);
        auto b = rand_t(rng, 1, 3, 1);
        auto wt = rand_t(rng, 1, 3, 18);
        probes.push_back({"conv_transpose1d_s2", {x, w, b},
                          [=](Tape<D>* t) {
                              return weighted_sum(t, conv_transpose1d(t, x, w, b, 2, 1), wt);
                          }});
    }
    {
        auto x = rand_t(rng, 2, 2, 6);
        auto w = rand_t(rng, 2, 2, 3);
        auto b = rand_t(rng, 1, 2, 1);
        auto wt = rand_t(rng, 2, 2, 8);
        probes.push_back({"conv_transpose1d_s1", {x, w, b},
                          [=](Tape<D>* t) {
                              return weighted_sum(t, conv_transpose1d(t, x, w, b, 1, 0), wt);
                          }});
    }
    {
        auto x = rand_away_from_zero(rng, 2, 3, 11);
        auto wt = rand_t(rng, 2, 3, 11);
        probes.push_back({"leaky_relu", {x}, [=](Tape<D>* t) {
                              return weighted_sum(t, leaky_relu(t, x, 0.1), wt);
                          }});
    }
    {
        auto x = rand_t(rng, 2, 2, 13);
        auto wt = rand_t(rng, 2, 2, 13);
        probes.push_back(
            {"tanh", {x}, [=](Tape<D>* t) { return weighted_sum(t, tanh_op(t, x), wt); }});
    }
    {
        auto x = rand_t(rng, 2, 4, 9);
        auto wt = rand_t(rng, 2, 4, 9);
        probes.push_back(
            {"global_norm", {x}, [=](Tape<D>* t) { return weighted_sum(t, global_norm(t, x), wt); }});
    }
    {
        auto a = rand_t(rng, 2, 3, 7);
        auto b = rand_t(rng, 2, 3, 7);
        auto wt = rand_t(rng, 2, 3, 7);
        probes.push_back({"residual_combine", {a, b}, [=](Tape<D>* t) {
                              return weighted_sum(t, residual_combine(t, a, b, 0.4), wt);
                          }});
    }
    {
        auto x = rand_t(rng, 2, 2, 8);
        auto wt = rand_t(rng, 2, 6, 8);
        probes.push_back({"duplicate_channels", {x}, [=](Tape<D>* t) {
                              return weighted_sum(t, duplicate_channels(t, x, 3), wt);
                          }});
    }
    {
        auto x = rand_t(rng, 2, 6, 8);
        auto wt = rand_t(rng, 2, 2, 8);
        probes.push_back({"mean_channels", {x}, [=](Tape<D>* t) {
                              return weighted_sum(t, mean_channels(t, x, 2), wt);
                          }});
    }
    {
        auto a = rand_t(rng, 2, 3, 5);
        auto b = rand_t(rng, 2, 2, 5);
        auto wt = rand_t(rng, 2, 5, 5);
        probes.push_back({"concat_channels", {a, b}, [=](Tape<D>* t) {
                              return weighted_sum(t, concat_channels(t, a, b), wt);
                          }});
    }
    {
        auto x = rand_t(rng, 2, 5, 6);
        auto wt = rand_t(rng, 2, 2, 6);
        probes.push_back({"slice_channels", {x}, [=](Tape<D>* t) {
                              return weighted_sum(t, slice_channels(t, x, 1, 2), wt);
                          }});
    }
    {
        auto x = rand_t(rng, 2, 2, 12);
        auto wt = rand_t(rng, 2, 2, 9);
        probes.push_back({"trim_time", {x}, [=](Tape<D>* t) {
                              return weighted_sum(t, trim_time(t, x, 9), wt);
                          }});
    }
    {
        auto x = rand_t(rng, 2, 2, 6);
        auto wt = rand_t(rng, 2, 2, 11);
        probes.push_back({"zero_pad_time", {x}, [=](Tape<D>* t) {
                              return weighted_sum(t, zero_pad_time(t, x, 2, 3), wt);
                          }});
    }
    {
        auto x = rand_t(rng, 2, 1, 7);
        auto wt = rand_t(rng, 2, 1, 15);
        probes.push_back({"reflect_pad_time", {x}, [=](Tape<D>* t) {
                              return weighted_sum(t, reflect_pad_time(t, x, 4, 4), wt);
                          }});
    }
    {
        auto x = rand_away_from_zero(rng, 2, 6, 5);
        auto wt = rand_t(rng, 2, 3, 5);
        probes.push_back({"stft_magnitude", {x}, [=](Tape<D>* t) {
                              return weighted_sum(t, stft_magnitude(t, x), wt);
                          }});
    }
    {
        auto x = rand_t(rng, 2, 3, 6, 0.5, 2.0); // safely above the floor
        auto wt = rand_t(rng, 2, 3, 6);
        probes.push_back({"log_floor", {x}, [=](Tape<D>* t) {
                              return weighted_sum(t, log_floor(t, x, 1e-5), wt);
                          }});
    }
    {
        auto a = rand_t(rng, 2, 3, 5);
        auto b = rand_t(rng, 2, 3, 5);
        auto wt = rand_t(rng, 2, 3, 5);
        probes.push_back({"add_sub_mul", {a, b}, [=](Tape<D>* t) {
                              auto y = mul(t, add(t, a, b), sub(t, a, b));
                              return weighted_sum(t, y, wt);
                          }});
    }
    {
        auto x = rand_away_from_zero(rng, 2, 3, 5);
        auto wt = rand_t(rng, 2, 3, 5);
        probes.push_back({"scalar_abs_square", {x}, [=](Tape<D>* t) {
                              auto y = abs_op(t, square(t, add_scalar(t, mul_scalar(t, x, 1.7), 0.3)));
                              return weighted_sum(t, y, wt);
                          }});
    }
    {
        auto x = rand_t(rng, 2, 3, 5);
        probes.push_back({"mean_all", {x}, [=](Tape<D>* t) { return mean_all(t, x); }});
    }

    // Composed discriminator: every parameter tensor probed.
    {
        WaveUNetConfig cfg;
        cfg.base_channels = 2;
        cfg.channel_multipliers = {1, 2, 2, 4};
        cfg.io_kernel = 7;
        cfg.block_kernel = 5;
        Rng model_rng = rng.fork(101);
        auto disc = std::make_shared<WaveUNetDiscriminator<D>>(cfg, model_rng);
        auto x = rand_t(rng, 1, 1, 256);
        Probe probe;
        probe.name = "composed_discriminator";
        probe.leaves.push_back(x);
        for (const auto& p : disc->parameters()) probe.leaves.push_back(p.tensor);
        probe.probes_per_leaf = 4;
        probe.loss = [disc, x](Tape<D>* t) {
            return mean_all(t, disc->forward(t, x).score_map);
        };
        probes.push_back(std::move(probe));
    }

    // Composed generator.
    {
        GeneratorConfig cfg;
        cfg.mel_bands = 8;
        cfg.base_channels = 16;
        cfg.up_strides = {4, 4, 4, 4};
        cfg.up_kernels = {4, 4, 4, 4};
        cfg.io_kernel = 3;
        cfg.res_kernel = 3;
        Rng model_rng = rng.fork(102);
        auto gen = std::make_shared<MelGenerator<D>>(cfg, model_rng);
        auto mel = rand_t(rng, 1, 8, 2);
        auto wt = rand_t(rng, 1, 1, 512);
        Probe probe;
        probe.name = "composed_generator";
        probe.leaves.push_back(mel);
        for (const auto& p : gen->parameters()) probe.leaves.push_back(p.tensor);
        probe.probes_per_leaf = 4;
        probe.loss = [gen, mel, wt](Tape<D>* t) {
            return weighted_sum(t, gen->forward(t, mel), wt);
        };
        probes.push_back(std::move(probe));
    }

    // Full generator objective (adversarial + feature matching + mel) with a
    // frozen discriminator, differentiated w.r.t. generator parameters.
    {
        GeneratorConfig gcfg;
        gcfg.mel_bands = 8;
        gcfg.base_channels = 16;
        gcfg.up_strides = {4, 4, 4, 4};
        gcfg.up_kernels = {4, 4, 4, 4};
        gcfg.io_kernel = 3;
        gcfg.res_kernel = 3;
        WaveUNetConfig dcfg;
        dcfg.base_channels = 2;
        dcfg.channel_multipliers = {1, 2, 2, 4};
        dcfg.io_kernel = 7;
        dcfg.block_kernel = 5;
        signal::MelConfig mcfg;
        mcfg.fft = 64;
        mcfg.hop = 64;
        mcfg.win = 64;
        mcfg.n_mels = 8;

        Rng grng = rng.fork(103);
        Rng drng = rng.fork(104);
        auto gen = std::make_shared<MelGenerator<D>>(gcfg, grng);
        auto disc = std::make_shared<WaveUNetDiscriminator<D>>(dcfg, drng);
        disc->set_requires_grad(false);
        auto analyzer = std::make_shared<MelAnalyzer<D>>(mcfg);
        auto mel_in = rand_t(rng, 1, 8, 2);
        auto real = rand_t(rng, 1, 1, 512, -0.9, 0.9);

        Probe probe;
        probe.name = "composed_g_total";
        for (const auto& p : gen->parameters()) probe.leaves.push_back(p.tensor);
        probe.probes_per_leaf = 3;
        probe.loss = [gen, disc, analyzer, mel_in, real](Tape<D>* t) {
            auto fake = gen->forward(t, mel_in);
            auto fake_out = disc->forward(t, fake);
            auto real_out = disc->forward(nullptr, real);
            auto g_adv = adv_loss_g(t, fake_out.score_map);
            auto g_fm = feature_matching(t, real_out.features, fake_out.features);
            auto g_mel = mel_loss(t, *analyzer, real, fake);
            return add(t, g_adv,
                       add(t, mul_scalar(t, g_fm, 2.0), mul_scalar(t, g_mel, 45.0)));
        };
        probes.push_back(std::move(probe));
    }

    std::vector<GradCheckCase> cases;
    for (auto& probe : probes) {
        Rng probe_rng = rng.fork(std::hash<std::string>{}(probe.name));
        cases.push_back({probe.name, run_probe(probe, probe_rng)});
    }
    return cases;
}

double gradcheck_max_err(const std::vector<GradCheckCase>& cases) {
    double m = 0.0;
    for (const auto& c : cases) m = std::max(m, c.max_rel_err);
    return m;
}

} // namespace waveud
