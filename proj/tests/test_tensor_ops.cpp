#include <doctest.h>

#include <cmath>

#include "waveud/ops.hpp"
#include "waveud/rng.hpp"

using namespace waveud;

namespace {

// Independent sliding-window reference for conv1d: direct evaluation of the
// cross-correlation with explicit zero padding.
std::vector<double> conv1d_ref(const std::vector<double>& x, int in_ch, int time,
                               const std::vector<double>& w, int out_ch, int k,
                               const std::vector<double>& bias, int stride, int padding) {
    const int out_time = (time + 2 * padding - k) / stride + 1;
    std::vector<double> y(static_cast<std::size_t>(out_ch) * out_time, 0.0);
    for (int oc = 0; oc < out_ch; ++oc)
        for (int t = 0; t < out_time; ++t) {
            double acc = bias.empty() ? 0.0 : bias[oc];
            for (int ic = 0; ic < in_ch; ++ic)
                for (int j = 0; j < k; ++j) {
                    const int u = t * stride + j - padding;
                    if (u >= 0 && u < time)
                        acc += w[(static_cast<std::size_t>(oc) * in_ch + ic) * k + j] *
                               x[static_cast<std::size_t>(ic) * time + u];
                }
            y[static_cast<std::size_t>(oc) * out_time + t] = acc;
        }
    return y;
}

// Scatter-add reference for conv_transpose1d.
std::vector<double> convt1d_ref(const std::vector<double>& x, int in_ch, int time,
                                const std::vector<double>& w, int out_ch, int k,
                                const std::vector<double>& bias, int stride, int padding) {
    const int out_time = (time - 1) * stride + k - 2 * padding;
    std::vector<double> y(static_cast<std::size_t>(out_ch) * out_time, 0.0);
    for (int oc = 0; oc < out_ch; ++oc)
        for (int u = 0; u < out_time; ++u)
            y[static_cast<std::size_t>(oc) * out_time + u] = bias.empty() ? 0.0 : bias[oc];
    for (int ic = 0; ic < in_ch; ++ic)
        for (int t = 0; t < time; ++t)
            for (int oc = 0; oc < out_ch; ++oc)
                for (int j = 0; j < k; ++j) {
                    const int u = t * stride + j - padding;
                    if (u >= 0 && u < out_time)
                        y[static_cast<std::size_t>(oc) * out_time + u] +=
                            w[(static_cast<std::size_t>(ic) * out_ch + oc) * k + j] *
                            x[static_cast<std::size_t>(ic) * time + t];
                }
    return y;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

} // namespace

TEST_CASE("conv1d identity kernel passes input through") {
    Rng rng(1);
    auto x = random_uniform<double>(rng, 2, 1, 12, -1, 1);
    auto w = tensor_from<double>({1.0}, 1, 1, 1);
    auto b = tensor_from<double>({0.0}, 1, 1, 1);
    auto y = conv1d<double>(nullptr, x, w, b, 1, 0);
    for (std::size_t i = 0; i < x->size(); ++i) CHECK(y->data()[i] == x->data()[i]);
}

TEST_CASE("conv1d matches the sliding-window oracle") {
    // Frozen example, first checked against the oracle.
    const std::vector<double> x = {1, 2, 3, 4};
    const std::vector<double> w = {1, 1, 1};
    const auto oracle = conv1d_ref(x, 1, 4, w, 1, 3, {0.0}, 1, 1);
    const std::vector<double> frozen = {3, 6, 9, 7};
    REQUIRE(oracle.size() == frozen.size());
    for (std::size_t i = 0; i < frozen.size(); ++i) CHECK(oracle[i] == frozen[i]);

    auto xt = tensor_from<double>(x, 1, 1, 4);
    auto wt = tensor_from<double>(w, 1, 1, 3);
    auto bt = tensor_from<double>({0.0}, 1, 1, 1);
    auto y = conv1d<double>(nullptr, xt, wt, bt, 1, 1);
    REQUIRE(y->time() == 4);
    for (int i = 0; i < 4; ++i) CHECK(y->data()[i] == doctest::Approx(frozen[i]).epsilon(1e-12));

    // Randomized agreement across strides/paddings/channels.
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const int in_ch = static_cast<int>(rng.uniform_int(1, 3));
        const int out_ch = static_cast<int>(rng.uniform_int(1, 3));
        const int k = static_cast<int>(rng.uniform_int(1, 5));
        const int stride = static_cast<int>(rng.uniform_int(1, 3));
        const int padding = static_cast<int>(rng.uniform_int(0, 3));
        const int time = static_cast<int>(rng.uniform_int(k + 2, 24));
        auto xt2 = random_uniform<double>(rng, 1, in_ch, time, -1, 1);
        auto wt2 = random_uniform<double>(rng, out_ch, in_ch, k, -1, 1);
        auto bt2 = random_uniform<double>(rng, 1, out_ch, 1, -1, 1);
        std::vector<double> bias_vec(bt2->data(), bt2->data() + out_ch);
        const auto ref = conv1d_ref(xt2->values(), in_ch, time, wt2->values(), out_ch, k, bias_vec,
                                    stride, padding);
        auto got = conv1d<double>(nullptr, xt2, wt2, bt2, stride, padding);
        REQUIRE(got->size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i)
            CHECK(got->data()[i] == doctest::Approx(ref[i]).epsilon(1e-10));
    }
}

TEST_CASE("conv1d output-time formula") {
    Rng rng(3);
    auto x = random_uniform<double>(rng, 1, 1, 8192, -1, 1);
    auto w = random_uniform<double>(rng, 1, 1, 5, -1, 1);
    auto b = random_uniform<double>(rng, 1, 1, 1, -1, 1);
    auto y = conv1d<double>(nullptr, x, w, b, 4, 2);
    CHECK(y->time() == 2048);
}

TEST_CASE("conv1d shape errors") {
    Rng rng(4);
    auto x = random_uniform<double>(rng, 1, 2, 8, -1, 1);
    auto w = random_uniform<double>(rng, 1, 3, 3, -1, 1); // channel mismatch
    auto b = random_uniform<double>(rng, 1, 1, 1, -1, 1);
    CHECK_THROWS_AS(conv1d<double>(nullptr, x, w, b, 1, 0), shape_error);

    auto w2 = random_uniform<double>(rng, 1, 2, 12, -1, 1); // kernel longer than input
    CHECK_THROWS_AS(conv1d<double>(nullptr, x, w2, b, 1, 0), shape_error);
}

TEST_CASE("conv_transpose1d matches the scatter-add oracle") {
    const auto oracle = convt1d_ref({1, 2}, 1, 2, {1, 1}, 1, 2, {0.0}, 2, 0);
    const std::vector<double> frozen = {1, 1, 2, 2};
    REQUIRE(oracle.size() == frozen.size());
    for (std::size_t i = 0; i < frozen.size(); ++i) CHECK(oracle[i] == frozen[i]);

    auto xt = tensor_from<double>({1, 2}, 1, 1, 2);
    auto wt = tensor_from<double>({1, 1}, 1, 1, 2);
    auto bt = tensor_from<double>({0.0}, 1, 1, 1);
    auto y = conv_transpose1d<double>(nullptr, xt, wt, bt, 2, 0);
    REQUIRE(y->time() == 4);
    for (int i = 0; i < 4; ++i) CHECK(y->data()[i] == frozen[i]);

    // Identity.
    auto x5 = tensor_from<double>({5}, 1, 1, 1);
    auto w1 = tensor_from<double>({1}, 1, 1, 1);
    auto y5 = conv_transpose1d<double>(nullptr, x5, w1, bt, 1, 0);
    CHECK(y5->time() == 1);
    CHECK(y5->data()[0] == 5.0);

    // Shape formula: (2048-1)*4 + 5 - 4 = 8189.
    Rng rng(5);
    auto xl = random_uniform<double>(rng, 1, 1, 2048, -1, 1);
    auto wl = random_uniform<double>(rng, 1, 1, 5, -1, 1);
    auto yl = conv_transpose1d<double>(nullptr, xl, wl, bt, 4, 2);
    CHECK(yl->time() == 8189);

    // Randomized agreement.
    for (int trial = 0; trial < 20; ++trial) {
        const int in_ch = static_cast<int>(rng.uniform_int(1, 3));
        const int out_ch = static_cast<int>(rng.uniform_int(1, 3));
        const int k = static_cast<int>(rng.uniform_int(1, 5));
        const int stride = static_cast<int>(rng.uniform_int(1, 3));
        const int padding = static_cast<int>(rng.uniform_int(0, (k - 1) / 2));
        const int time = static_cast<int>(rng.uniform_int(2, 16));
        auto xt2 = random_uniform<double>(rng, 1, in_ch, time, -1, 1);
        auto wt2 = random_uniform<double>(rng, in_ch, out_ch, k, -1, 1);
        auto bt2 = random_uniform<double>(rng, 1, out_ch, 1, -1, 1);
        std::vector<double> bias_vec(bt2->data(), bt2->data() + out_ch);
        const auto ref = convt1d_ref(xt2->values(), in_ch, time, wt2->values(), out_ch, k, bias_vec,
                                     stride, padding);
        auto got = conv_transpose1d<double>(nullptr, xt2, wt2, bt2, stride, padding);
        REQUIRE(got->size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i)
            CHECK(got->data()[i] == doctest::Approx(ref[i]).epsilon(1e-10));
    }
}

TEST_CASE("conv1d and conv_transpose1d are adjoint") {
    // <conv1d(x), y> == <x, conv_transpose1d(y)> with shared weight, zero bias.
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const int in_ch = static_cast<int>(rng.uniform_int(1, 3));
        const int out_ch = static_cast<int>(rng.uniform_int(1, 3));
        const int k = static_cast<int>(rng.uniform_int(1, 5));
        const int stride = static_cast<int>(rng.uniform_int(1, 3));
        const int padding = static_cast<int>(rng.uniform_int(0, 2));
        // Choose time so the conv division is exact and shapes round-trip.
        int time = static_cast<int>(rng.uniform_int(k + 3, 24));
        while ((time + 2 * padding - k) % stride != 0 || time + 2 * padding - k < 0) ++time;

        auto x = random_uniform<double>(rng, 2, in_ch, time, -1, 1);
        auto w = random_uniform<double>(rng, out_ch, in_ch, k, -1, 1);
        auto cx = conv1d<double>(nullptr, x, w, TensorPtr<double>(), stride, padding);
        auto y = random_uniform<double>(rng, 2, out_ch, cx->time(), -1, 1);
        auto cty = conv_transpose1d<double>(nullptr, y, w, TensorPtr<double>(), stride, padding);
        REQUIRE(cty->time() == time);

        const double lhs = dot(cx->values(), y->values());
        const double rhs = dot(x->values(), cty->values());
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-8));
    }
}

TEST_CASE("leaky_relu examples") {
    auto x = tensor_from<double>({2.0, -3.0, 0.0}, 1, 1, 3);
    auto y = leaky_relu<double>(nullptr, x, 0.1);
    CHECK(y->data()[0] == 2.0);
    CHECK(y->data()[1] == doctest::Approx(-0.3));
    CHECK(y->data()[2] == 0.0);
}

TEST_CASE("global_norm unit behavior") {
    auto zeros = make_tensor<double>(1, 1, 4);
    auto yz = global_norm<double>(nullptr, zeros);
    for (std::size_t i = 0; i < yz->size(); ++i) CHECK(yz->data()[i] == 0.0);

    // Direct scalar evaluation: mean sq of [3,4] is 12.5.
    auto x = tensor_from<double>({3.0, 4.0}, 1, 1, 2);
    auto y = global_norm<double>(nullptr, x);
    CHECK(y->data()[0] == doctest::Approx(0.848528).epsilon(1e-5));
    CHECK(y->data()[1] == doctest::Approx(1.131371).epsilon(1e-5));

    // Unit-RMS input is a fixed point up to eps.
    auto unit = tensor_from<double>({1.0, -1.0, 1.0, -1.0}, 1, 2, 2);
    auto yu = global_norm<double>(nullptr, unit);
    for (std::size_t i = 0; i < yu->size(); ++i)
        CHECK(yu->data()[i] == doctest::Approx(unit->data()[i]).epsilon(1e-6));
}

TEST_CASE("global_norm output RMS and positive-scale invariance") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int ch = static_cast<int>(rng.uniform_int(1, 4));
        const int time = static_cast<int>(rng.uniform_int(2, 32));
        auto x = random_uniform<double>(rng, 2, ch, time, -2, 2);
        // Keep RMS comfortably above 1e-3.
        x->data()[0] += 0.5;
        auto y = global_norm<double>(nullptr, x);
        const std::size_t n = static_cast<std::size_t>(ch) * time;
        for (int b = 0; b < 2; ++b) {
            double ms = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double v = y->data()[b * n + i];
                ms += v * v;
            }
            const double rms = std::sqrt(ms / static_cast<double>(n));
            CHECK(rms > 1.0 - 1e-4);
            CHECK(rms < 1.0 + 1e-4);
        }
        for (const double c : {0.5, 2.0, 100.0}) {
            auto xc = make_tensor<double>(2, ch, time);
            for (std::size_t i = 0; i < x->size(); ++i) xc->data()[i] = c * x->data()[i];
            auto yc = global_norm<double>(nullptr, xc);
            for (std::size_t i = 0; i < y->size(); ++i)
                CHECK(yc->data()[i] == doctest::Approx(y->data()[i]).epsilon(1e-5));
        }
    }
}

TEST_CASE("residual_combine examples and errors") {
    auto zero = make_tensor<double>(1, 1, 2);
    auto x = tensor_from<double>({3.0, -1.0}, 1, 1, 2);
    auto y = residual_combine<double>(nullptr, zero, x, 0.4);
    CHECK(y->data()[0] == doctest::Approx(1.2));
    CHECK(y->data()[1] == doctest::Approx(-0.4));

    auto a = tensor_from<double>({1.0, 2.0}, 1, 1, 2);
    auto b = tensor_from<double>({3.0, 4.0}, 1, 1, 2);
    auto s = residual_combine<double>(nullptr, a, b, 0.4);
    CHECK(s->data()[0] == doctest::Approx(1.6));
    CHECK(s->data()[1] == doctest::Approx(2.4));

    auto neg = tensor_from<double>({-1.0, -2.0}, 1, 1, 2);
    auto z = residual_combine<double>(nullptr, a, neg, 1.0);
    CHECK(z->data()[0] == 0.0);
    CHECK(z->data()[1] == 0.0);

    auto wrong = make_tensor<double>(1, 1, 3);
    CHECK_THROWS_AS(residual_combine<double>(nullptr, a, wrong, 0.4), shape_error);
}

TEST_CASE("duplicate_channels tiles whole blocks") {
    auto x = tensor_from<double>({1.0, 2.0}, 1, 2, 1);
    auto y = duplicate_channels<double>(nullptr, x, 2);
    REQUIRE(y->channels() == 4);
    CHECK(y->data()[0] == 1.0);
    CHECK(y->data()[1] == 2.0);
    CHECK(y->data()[2] == 1.0);
    CHECK(y->data()[3] == 2.0);

    Rng rng(8);
    auto x1 = random_uniform<double>(rng, 2, 1, 5, -1, 1);
    auto y1 = duplicate_channels<double>(nullptr, x1, 2);
    for (int b = 0; b < 2; ++b)
        for (int t = 0; t < 5; ++t) {
            CHECK(y1->at(b, 0, t) == x1->at(b, 0, t));
            CHECK(y1->at(b, 1, t) == x1->at(b, 0, t));
        }

    auto same = duplicate_channels<double>(nullptr, x1, 1);
    for (std::size_t i = 0; i < x1->size(); ++i) CHECK(same->data()[i] == x1->data()[i]);
}

TEST_CASE("mean_channels is the group-mean inverse of duplicate_channels") {
    auto c = tensor_from<double>({2.0, 4.0}, 1, 2, 1);
    auto m = mean_channels<double>(nullptr, c, 1);
    CHECK(m->data()[0] == 3.0);

    Rng rng(9);
    auto x = random_uniform<double>(rng, 2, 3, 7, -1, 1);
    auto round_trip = mean_channels<double>(nullptr, duplicate_channels<double>(nullptr, x, 2), 3);
    for (std::size_t i = 0; i < x->size(); ++i)
        CHECK(round_trip->data()[i] == doctest::Approx(x->data()[i]).epsilon(1e-12));

    auto ident = mean_channels<double>(nullptr, x, 3);
    for (std::size_t i = 0; i < x->size(); ++i) CHECK(ident->data()[i] == x->data()[i]);

    CHECK_THROWS_AS(mean_channels<double>(nullptr, x, 2), shape_error);
}

TEST_CASE("concat_channels layout and slice round trip") {
    Rng rng(10);
    auto a = random_uniform<double>(rng, 2, 4, 6, -1, 1);
    auto b = random_uniform<double>(rng, 2, 4, 6, -1, 1);
    auto y = concat_channels<double>(nullptr, a, b);
    REQUIRE(y->channels() == 8);
    for (int bi = 0; bi < 2; ++bi)
        for (int c = 0; c < 4; ++c)
            for (int t = 0; t < 6; ++t) {
                CHECK(y->at(bi, c, t) == a->at(bi, c, t));
                CHECK(y->at(bi, c + 4, t) == b->at(bi, c, t));
            }

    auto back = slice_channels<double>(nullptr, y, 0, 4);
    for (std::size_t i = 0; i < a->size(); ++i) CHECK(back->data()[i] == a->data()[i]);

    auto a2 = random_uniform<double>(rng, 2, 3, 16, -1, 1);
    auto b2 = random_uniform<double>(rng, 2, 5, 16, -1, 1);
    auto y2 = concat_channels<double>(nullptr, a2, b2);
    CHECK(y2->batch() == 2);
    CHECK(y2->channels() == 8);
    CHECK(y2->time() == 16);

    auto mismatch = random_uniform<double>(rng, 2, 3, 7, -1, 1);
    CHECK_THROWS_AS(concat_channels<double>(nullptr, a2, mismatch), shape_error);
}

TEST_CASE("backward populates analytic gradients") {
    // loss = sum(x) -> grad all ones
    {
        Tape<double> tape;
        auto x = tensor_from<double>({1.0, -2.0, 0.5, 3.0}, 1, 2, 2, true);
        auto loss = sum_all(&tape, x);
        tape.backward(loss);
        for (std::size_t i = 0; i < x->size(); ++i) CHECK(x->grad()[i] == 1.0);
    }
    // loss = mean(x^2), x = [1, 2] -> grad = 2x/N = [1, 2]
    {
        Tape<double> tape;
        auto x = tensor_from<double>({1.0, 2.0}, 1, 1, 2, true);
        auto loss = mean_all(&tape, square(&tape, x));
        tape.backward(loss);
        CHECK(x->grad()[0] == doctest::Approx(1.0));
        CHECK(x->grad()[1] == doctest::Approx(2.0));
    }
    // non-scalar loss is a usage error
    {
        Tape<double> tape;
        auto x = tensor_from<double>({1.0, 2.0}, 1, 1, 2, true);
        auto y = square(&tape, x);
        CHECK_THROWS_AS(tape.backward(y), usage_error);
    }
    // zero upstream gradient yields zero input gradients
    {
        Tape<double> tape;
        auto x = tensor_from<double>({1.0, 2.0}, 1, 1, 2, true);
        auto loss = sum_all(&tape, mul_scalar(&tape, x, 0.0));
        tape.backward(loss);
        CHECK(x->grad()[0] == 0.0);
        CHECK(x->grad()[1] == 0.0);
    }
}

TEST_CASE("forward and backward are bit-deterministic") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        auto x = random_uniform<double>(rng, 2, 3, 16, -1, 1, true);
        auto w = random_uniform<double>(rng, 4, 3, 5, -1, 1, true);
        auto b = random_uniform<double>(rng, 1, 4, 1, -1, 1, true);
        Tape<double> tape;
        auto y = conv1d(&tape, x, w, b, 2, 2);
        y = global_norm(&tape, y);
        y = leaky_relu(&tape, y, 0.1);
        auto loss = mean_all(&tape, square(&tape, y));
        tape.backward(loss);
        std::vector<double> out = {scalar_value(loss)};
        out.insert(out.end(), w->grad().begin(), w->grad().end());
        out.insert(out.end(), x->grad().begin(), x->grad().end());
        return out;
    };
    const auto a = run(123);
    const auto b = run(123);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
