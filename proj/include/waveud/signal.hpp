#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "waveud/rng.hpp"
#include "waveud/tensor.hpp"

namespace waveud::signal {

constexpr int kSampleRate = 22050;
constexpr int kSegmentLength = 8192;

struct AudioClip {
    std::vector<float> samples; // in [-1, 1]
    int sample_rate = kSampleRate;
};

// Analysis settings. The filterbank and window are pure functions of these
// fields, so serializing the config reproduces them bit-exactly.
struct MelConfig {
    int sample_rate = kSampleRate;
    int fft = 1024;
    int hop = 256;
    int win = 1024;
    int n_mels = 80;
    double fmin = 0.0;
    double fmax = 8000.0;
    double log_floor = 1e-5;
};

// Log-mel frames, stored row-major as [band][frame].
struct MelSpectrogram {
    int bands = 0;
    int frames = 0;
    int hop = 0;
    std::vector<float> values;

    float at(int band, int frame) const { return values[static_cast<std::size_t>(band) * frames + frame]; }
};

enum class Window { Hann, Rect };

// Complex STFT frames, stored row-major as [bin][frame] in double precision.
struct Stft {
    int bins = 0;
    int frames = 0;
    std::vector<double> re, im;

    double magnitude(int bin, int frame) const {
        const std::size_t i = static_cast<std::size_t>(bin) * frames + frame;
        return std::sqrt(re[i] * re[i] + im[i] * im[i]);
    }
};

struct SegmentPair {
    TensorPtr<float> wave; // (1, 1, segment)
    MelSpectrogram mel;
    int start = 0;
};

// 16-bit PCM WAV in/out. load_wav downmixes multichannel input by averaging
// and scales by 1/32768; it throws format_error on non-PCM/non-16-bit input
// and rate_error when the file rate differs from expected_rate (pass 0 to
// accept any rate).
AudioClip load_wav(const std::string& path, int expected_rate = kSampleRate);
void save_wav(const std::string& path, const AudioClip& clip);

// Periodic Hann window of length n.
std::vector<double> hann_window(int n);

// Center-padded STFT: the input is reflect-padded by fft/2 on each side
// (folded reflection, so short inputs stay defined) and the frame count is
// floor(len/hop) + 1.
Stft stft(const std::vector<float>& samples, const MelConfig& cfg = {},
          Window window = Window::Hann);

// Triangular mel filterbank (Slaney mel scale, Slaney area normalization),
// row-major [band][bin] with bins = fft/2 + 1.
std::vector<double> mel_filterbank(const MelConfig& cfg);

// Filterbank projection of STFT magnitudes followed by log(max(x, floor)).
MelSpectrogram mel_project(const Stft& spec, const MelConfig& cfg = {});

// stft + mel_project of a sample span.
MelSpectrogram mel_of(const std::vector<float>& samples, const MelConfig& cfg = {});

// Random segment with hop-aligned start; clips shorter than the segment are
// zero-padded on the right. The mel is recomputed from the segment itself.
SegmentPair sample_segment(const AudioClip& clip, Rng& rng, const MelConfig& cfg = {},
                           int segment = kSegmentLength);

// Deterministic synthetic corpus: each clip is 1-2 s of summed sinusoids
// (2-5 partials, 80-1000 Hz fundamental) under an attack/release envelope,
// peak-normalized to 0.95. Clip i depends only on (seed, i).
std::vector<AudioClip> synth_corpus(int n_clips, std::uint64_t seed);

} // namespace waveud::signal
