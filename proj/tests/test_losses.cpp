#include <doctest.h>

#include <cmath>

#include "waveud/generator.hpp"
#include "waveud/losses.hpp"
#include "waveud/waveunet.hpp"

using namespace waveud;

namespace {

TensorPtr<double> constant_map(int batch, int time, double value) {
    auto t = make_tensor<double>(batch, 1, time);
    std::fill(t->values().begin(), t->values().end(), value);
    return t;
}

} // namespace

TEST_CASE("discriminator adversarial loss on constant maps") {
    auto one = constant_map(2, 16, 1.0);
    auto zero = constant_map(2, 16, 0.0);
    auto half = constant_map(2, 16, 0.5);

    CHECK(scalar_value(adv_loss_d<double>(nullptr, one, zero)) == doctest::Approx(0.0));
    CHECK(scalar_value(adv_loss_d<double>(nullptr, half, half)) == doctest::Approx(0.5));
    CHECK(scalar_value(adv_loss_d<double>(nullptr, zero, one)) == doctest::Approx(2.0));

    // Minimized exactly at (real=1, fake=0); anything else is positive.
    for (const double r : {0.0, 0.25, 0.75}) {
        auto rm = constant_map(2, 16, r);
        CHECK(scalar_value(adv_loss_d<double>(nullptr, rm, zero)) > 0.0);
        CHECK(scalar_value(adv_loss_d<double>(nullptr, one, constant_map(2, 16, 1.0 - r))) > 0.0);
    }

    auto mismatch = constant_map(2, 8, 0.5);
    CHECK_THROWS_AS(adv_loss_d<double>(nullptr, one, mismatch), shape_error);
}

TEST_CASE("generator adversarial loss on constant maps") {
    CHECK(scalar_value(adv_loss_g<double>(nullptr, constant_map(2, 16, 1.0))) ==
          doctest::Approx(0.0));
    CHECK(scalar_value(adv_loss_g<double>(nullptr, constant_map(2, 16, 0.0))) ==
          doctest::Approx(1.0));
    CHECK(scalar_value(adv_loss_g<double>(nullptr, constant_map(2, 16, 0.5))) ==
          doctest::Approx(0.25));
}

TEST_CASE("feature matching oracle values") {
    Rng rng(1);
    std::vector<TensorPtr<double>> feats;
    for (int i = 0; i < 3; ++i) feats.push_back(random_uniform<double>(rng, 2, 3, 7, -1, 1));
    CHECK(scalar_value(feature_matching<double>(nullptr, feats, feats)) == 0.0);

    // One layer, real [1,1] vs fake [0,0]: (1/2) * 2 = 1.
    auto real = tensor_from<double>({1.0, 1.0}, 1, 1, 2);
    auto fake = tensor_from<double>({0.0, 0.0}, 1, 1, 2);
    CHECK(scalar_value(feature_matching<double>(nullptr, {real}, {fake})) == doctest::Approx(1.0));

    // Duplicating a layer pair doubles the sum over layers.
    const double once = scalar_value(feature_matching<double>(nullptr, {real}, {fake}));
    const double twice =
        scalar_value(feature_matching<double>(nullptr, {real, real}, {fake, fake}));
    CHECK(twice == doctest::Approx(2.0 * once));

    // Non-negative, zero only at identical lists.
    auto perturbed = tensor_from<double>({1.0, 1.0 + 1e-9}, 1, 1, 2);
    CHECK(scalar_value(feature_matching<double>(nullptr, {real}, {perturbed})) > 0.0);

    CHECK_THROWS_AS(feature_matching<double>(nullptr, {real, fake}, {real}), shape_error);
    auto wrong_shape = make_tensor<double>(1, 1, 3);
    CHECK_THROWS_AS(feature_matching<double>(nullptr, {real}, {wrong_shape}), shape_error);
}

TEST_CASE("mel loss basics") {
    signal::MelConfig mcfg; // reference settings
    MelAnalyzer<double> analyzer(mcfg);
    Rng rng(2);

    auto wave = random_uniform<double>(rng, 1, 1, 2048, -0.8, 0.8);
    CHECK(scalar_value(mel_loss<double>(nullptr, analyzer, wave, wave)) == doctest::Approx(0.0));

    // Silence on both sides clamps to the log floor on both sides.
    auto silence = make_tensor<double>(1, 1, 2048);
    CHECK(scalar_value(mel_loss<double>(nullptr, analyzer, silence, silence)) ==
          doctest::Approx(0.0));

    auto longer = make_tensor<double>(1, 1, 4096);
    CHECK_THROWS_AS(mel_loss<double>(nullptr, analyzer, wave, longer), shape_error);
}

TEST_CASE("mel loss equals an independent signal-path recomputation") {
    signal::MelConfig mcfg;
    MelAnalyzer<double> analyzer(mcfg);
    Rng rng(3);
    auto real = random_uniform<double>(rng, 1, 1, 2048, -0.8, 0.8);
    auto fake = random_uniform<double>(rng, 1, 1, 2048, -0.8, 0.8);

    const double via_ops = scalar_value(mel_loss<double>(nullptr, analyzer, real, fake));

    // Oracle: stft -> filterbank -> log floor -> L1 mean, composed from the
    // signal module in double precision.
    auto oracle_mel = [&](const TensorPtr<double>& w) {
        std::vector<float> samples(w->time());
        for (int i = 0; i < w->time(); ++i) samples[i] = static_cast<float>(w->data()[i]);
        return signal::mel_of(samples, mcfg);
    };
    const auto mr = oracle_mel(real);
    const auto mf = oracle_mel(fake);
    double acc = 0.0;
    for (std::size_t i = 0; i < mr.values.size(); ++i)
        acc += std::abs(static_cast<double>(mf.values[i]) - static_cast<double>(mr.values[i]));
    const double via_signal = acc / static_cast<double>(mr.values.size());

    // The oracle path stores float32 mels, so agreement is at float precision.
    CHECK(via_ops == doctest::Approx(via_signal).epsilon(1e-4));
}

TEST_CASE("analyzer log-mel matches signal::mel_of bin by bin") {
    signal::MelConfig mcfg;
    MelAnalyzer<double> analyzer(mcfg);
    Rng rng(4);
    auto wave = random_uniform<double>(rng, 1, 1, 1024, -0.8, 0.8);
    auto mel = analyzer.log_mel(nullptr, wave);

    std::vector<float> samples(wave->time());
    for (int i = 0; i < wave->time(); ++i) samples[i] = static_cast<float>(wave->data()[i]);
    const auto ref = signal::mel_of(samples, mcfg);
    REQUIRE(mel->channels() == ref.bands);
    REQUIRE(mel->time() == ref.frames);
    for (int m = 0; m < ref.bands; ++m)
        for (int f = 0; f < ref.frames; ++f)
            CHECK(mel->at(0, m, f) == doctest::Approx(ref.at(m, f)).epsilon(1e-5));
}

TEST_CASE("gradients stay inside the stepped network") {
    // Tiny G and D wired the way the training loop wires them.
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

    Rng rng(5);
    MelGenerator<double> gen(gcfg, rng);
    WaveUNetDiscriminator<double> disc(dcfg, rng);
    auto mel = random_uniform<double>(rng, 1, 8, 2, -1, 1);
    auto real = random_uniform<double>(rng, 1, 1, 512, -0.9, 0.9);

    auto grads_all_zero = [](const auto& params) {
        for (const auto& p : params) {
            if (!p.tensor->has_grad()) continue;
            for (const auto g : p.tensor->grad_view())
                if (g != 0) return false;
        }
        return true;
    };

    // D step with detached fakes: no gradient reaches G.
    {
        Tape<double> tape_g;
        auto fake = gen.forward(&tape_g, mel);
        Tape<double> tape_d;
        auto real_out = disc.forward(&tape_d, real);
        auto fake_out = disc.forward(&tape_d, detach(fake));
        auto loss = adv_loss_d(&tape_d, real_out.score_map, fake_out.score_map);
        gen.zero_grad();
        disc.zero_grad();
        tape_d.backward(loss);
        CHECK(grads_all_zero(gen.parameters()));
        CHECK_FALSE(grads_all_zero(disc.parameters()));
    }

    // G step with a frozen discriminator: no gradient reaches D.
    {
        Tape<double> tape_g;
        auto fake = gen.forward(&tape_g, mel);
        disc.set_requires_grad(false);
        auto fake_out = disc.forward(&tape_g, fake);
        auto loss = adv_loss_g(&tape_g, fake_out.score_map);
        gen.zero_grad();
        disc.zero_grad();
        tape_g.backward(loss);
        disc.set_requires_grad(true);
        CHECK(grads_all_zero(disc.parameters()));
        CHECK_FALSE(grads_all_zero(gen.parameters()));
    }
}
