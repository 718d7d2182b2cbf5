#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "waveud/errors.hpp"
#include "waveud/signal.hpp"
#include "waveud/train.hpp"

using namespace waveud;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    const fs::path dir = fs::temp_directory_path() / "waveud_signal_tests";
    fs::create_directories(dir);
    return dir;
}

void write_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ostream& out, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

// Raw 16-bit PCM writer so load_wav can be probed with exact sample values.
void write_pcm16(const fs::path& path, const std::vector<std::int16_t>& samples, int rate,
                 int channels = 1) {
    std::ofstream out(path, std::ios::binary);
    const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
    out.write("RIFF", 4);
    write_u32(out, 36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, 1);
    write_u16(out, static_cast<std::uint16_t>(channels));
    write_u32(out, static_cast<std::uint32_t>(rate));
    write_u32(out, static_cast<std::uint32_t>(rate * 2 * channels));
    write_u16(out, static_cast<std::uint16_t>(2 * channels));
    write_u16(out, 16);
    out.write("data", 4);
    write_u32(out, data_size);
    for (const std::int16_t s : samples)
        write_u16(out, static_cast<std::uint16_t>(s));
}

} // namespace

TEST_CASE("load_wav scaling and header arithmetic") {
    const auto path = tmp_dir() / "scale.wav";
    write_pcm16(path, {16384, -32768, 0, 32767}, 22050);
    const auto clip = signal::load_wav(path.string());
    REQUIRE(clip.samples.size() == 4);
    CHECK(clip.samples[0] == doctest::Approx(0.5));
    CHECK(clip.samples[1] == doctest::Approx(-1.0));
    CHECK(clip.samples[2] == 0.0f);
    CHECK(clip.samples[3] == doctest::Approx(32767.0 / 32768.0));

    // One second at 22050 Hz.
    const auto sec = tmp_dir() / "second.wav";
    write_pcm16(sec, std::vector<std::int16_t>(22050, 100), 22050);
    CHECK(signal::load_wav(sec.string()).samples.size() == 22050);
}

TEST_CASE("load_wav error paths") {
    const auto bad = tmp_dir() / "bad.wav";
    {
        std::ofstream out(bad, std::ios::binary);
        out << "this is not a wav file at all, padding padding padding";
    }
    CHECK_THROWS_AS(signal::load_wav(bad.string()), format_error);

    const auto wrong_rate = tmp_dir() / "rate.wav";
    write_pcm16(wrong_rate, {0, 0, 0, 0}, 16000);
    CHECK_THROWS_AS(signal::load_wav(wrong_rate.string()), rate_error);
    CHECK_NOTHROW(signal::load_wav(wrong_rate.string(), 0));
}

TEST_CASE("load_wav downmixes stereo by averaging") {
    const auto path = tmp_dir() / "stereo.wav";
    write_pcm16(path, {16384, 0, -16384, 16384}, 22050, 2);
    const auto clip = signal::load_wav(path.string());
    REQUIRE(clip.samples.size() == 2);
    CHECK(clip.samples[0] == doctest::Approx(0.25));
    CHECK(clip.samples[1] == doctest::Approx(0.0));
}

TEST_CASE("stft frame counts follow floor(len/hop) + 1") {
    for (const int len : {256, 8192, 22050}) {
        std::vector<float> x(len, 0.1f);
        const auto spec = signal::stft(x);
        CHECK(spec.frames == len / 256 + 1);
        CHECK(spec.bins == 513);
        const auto mel = signal::mel_of(x);
        CHECK(mel.frames == len / 256 + 1);
        CHECK(mel.bands == 80);
    }
}

TEST_CASE("stft of silence is silent") {
    std::vector<float> x(2048, 0.0f);
    const auto spec = signal::stft(x);
    for (int k = 0; k < spec.bins; ++k)
        for (int f = 0; f < spec.frames; ++f) CHECK(spec.magnitude(k, f) == 0.0);
}

TEST_CASE("bin-centered sine concentrates its energy") {
    // f = k0 * sr / fft with k0 = 64.
    const int k0 = 64;
    const int len = 4096;
    std::vector<float> x(len);
    for (int t = 0; t < len; ++t)
        x[t] = static_cast<float>(0.7 * std::sin(2.0 * M_PI * k0 * t / 1024.0));

    const int frame = 6; // interior frame, away from the reflected padding

    // Rectangular window: all energy in exactly that bin.
    const auto rect = signal::stft(x, {}, signal::Window::Rect);
    double total = 0.0, at_bin = 0.0;
    for (int k = 0; k < rect.bins; ++k) {
        const double m = rect.magnitude(k, frame);
        total += m * m;
        if (k == k0) at_bin = m * m;
    }
    CHECK(at_bin >= 0.99 * total);

    // Hann window: energy confined to the bin and its two neighbours.
    const auto hann = signal::stft(x, {}, signal::Window::Hann);
    total = 0.0;
    double near_bin = 0.0;
    for (int k = 0; k < hann.bins; ++k) {
        const double m = hann.magnitude(k, frame);
        total += m * m;
        if (std::abs(k - k0) <= 1) near_bin += m * m;
    }
    CHECK(near_bin >= 0.99 * total);
}

TEST_CASE("mel_project clamps silence to the log floor") {
    std::vector<float> x(1024, 0.0f);
    const auto mel = signal::mel_of(x);
    const float floor_db = std::log(1e-5f);
    for (const float v : mel.values) CHECK(v == doctest::Approx(floor_db));
}

TEST_CASE("mel filterbank rows are all nonzero") {
    const auto fb = signal::mel_filterbank({});
    const int bins = 513;
    for (int m = 0; m < 80; ++m) {
        double row_sum = 0.0;
        for (int k = 0; k < bins; ++k) row_sum += fb[static_cast<std::size_t>(m) * bins + k];
        CHECK(row_sum > 0.0);
    }
}

TEST_CASE("mel filterbank reproduces bit-exactly through config serialization") {
    TrainConfig cfg;
    const auto text = train_config_json(cfg);
    const TrainConfig back = parse_train_config(text);
    const auto fb1 = signal::mel_filterbank(cfg.mel);
    const auto fb2 = signal::mel_filterbank(back.mel);
    REQUIRE(fb1.size() == fb2.size());
    CHECK(std::memcmp(fb1.data(), fb2.data(), fb1.size() * sizeof(double)) == 0);
}

TEST_CASE("sample_segment aligns starts to hop boundaries") {
    signal::AudioClip clip;
    clip.samples.assign(8192, 0.25f);
    Rng rng(11);
    for (int i = 0; i < 4; ++i) {
        const auto pair = signal::sample_segment(clip, rng);
        CHECK(pair.start == 0);
        CHECK(pair.wave->time() == 8192);
    }

    clip.samples.assign(8448, 0.25f);
    bool seen[2] = {false, false};
    for (int i = 0; i < 32; ++i) {
        const auto pair = signal::sample_segment(clip, rng);
        REQUIRE((pair.start == 0 || pair.start == 256));
        seen[pair.start / 256] = true;
    }
    CHECK(seen[0]);
    CHECK(seen[1]);

    // Short clips are zero-padded to the segment length.
    clip.samples.assign(1000, 0.5f);
    const auto pair = signal::sample_segment(clip, rng);
    CHECK(pair.wave->time() == 8192);
    CHECK(pair.wave->data()[999] == 0.5f);
    CHECK(pair.wave->data()[1000] == 0.0f);
}

TEST_CASE("sample_segment mel equals an independent recomputation bit-exactly") {
    auto corpus = signal::synth_corpus(1, 99);
    Rng rng(12);
    const auto pair = signal::sample_segment(corpus[0], rng);
    std::vector<float> wave(pair.wave->data(), pair.wave->data() + pair.wave->time());
    const auto recomputed = signal::mel_project(signal::stft(wave), {});
    REQUIRE(recomputed.values.size() == pair.mel.values.size());
    CHECK(std::memcmp(recomputed.values.data(), pair.mel.values.data(),
                      recomputed.values.size() * sizeof(float)) == 0);
}

TEST_CASE("synth_corpus is deterministic, normalized, and sized") {
    const auto a = signal::synth_corpus(10, 1234);
    const auto b = signal::synth_corpus(10, 1234);
    REQUIRE(a.size() == 10);
    REQUIRE(b.size() == 10);
    for (int i = 0; i < 10; ++i) {
        REQUIRE(a[i].samples.size() == b[i].samples.size());
        CHECK(std::memcmp(a[i].samples.data(), b[i].samples.data(),
                          a[i].samples.size() * sizeof(float)) == 0);
        CHECK(a[i].samples.size() >= 22050);
        CHECK(a[i].samples.size() <= 44100);
        float peak = 0.0f;
        for (const float s : a[i].samples) peak = std::max(peak, std::abs(s));
        CHECK(peak <= 0.95f + 1e-6f);
        CHECK(peak > 0.5f);
    }
    // Different seeds diverge.
    const auto c = signal::synth_corpus(1, 77);
    const auto d = signal::synth_corpus(1, 78);
    const bool same_len = c[0].samples.size() == d[0].samples.size();
    bool identical = same_len;
    if (same_len)
        identical = std::memcmp(c[0].samples.data(), d[0].samples.data(),
                                c[0].samples.size() * sizeof(float)) == 0;
    CHECK_FALSE(identical);
}

TEST_CASE("corpus clips depend only on (seed, index), not corpus size") {
    const auto three = signal::synth_corpus(3, 55);
    const auto five = signal::synth_corpus(5, 55);
    for (int i = 0; i < 3; ++i) {
        REQUIRE(three[i].samples.size() == five[i].samples.size());
        CHECK(std::memcmp(three[i].samples.data(), five[i].samples.data(),
                          three[i].samples.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("wav round trip through save_wav and load_wav") {
    const auto corpus = signal::synth_corpus(1, 5);
    const auto path = tmp_dir() / "round.wav";
    signal::save_wav(path.string(), corpus[0]);
    const auto back = signal::load_wav(path.string());
    REQUIRE(back.samples.size() == corpus[0].samples.size());
    for (std::size_t i = 0; i < back.samples.size(); i += 997)
        CHECK(back.samples[i] == doctest::Approx(corpus[0].samples[i]).epsilon(1e-3));
}
