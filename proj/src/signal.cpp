#include "waveud/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

#include "waveud/errors.hpp"
#include "waveud/kernels.hpp"

namespace waveud::signal {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct RiffChunk {
    char id[4];
    std::uint32_t size;
};

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
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

// DFT basis for one FFT size: cos/sin tables of shape [bin][n]. Cached since
// every analysis call in a training run uses the same size.
struct DftTable {
    int fft = 0;
    int bins = 0;
    std::vector<double> cos_t, sin_t;

    explicit DftTable(int fft_size) : fft(fft_size), bins(fft_size / 2 + 1) {
        cos_t.resize(static_cast<std::size_t>(bins) * fft);
        sin_t.resize(static_cast<std::size_t>(bins) * fft);
        for (int k = 0; k < bins; ++k)
            for (int n = 0; n < fft; ++n) {
                const double phase = 2.0 * kPi * k * n / fft;
                cos_t[static_cast<std::size_t>(k) * fft + n] = std::cos(phase);
                sin_t[static_cast<std::size_t>(k) * fft + n] = std::sin(phase);
            }
    }

    static const DftTable& get(int fft_size) {
        static std::mutex mu;
        static std::map<int, DftTable> cache;
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(fft_size);
        if (it == cache.end()) it = cache.emplace(fft_size, DftTable(fft_size)).first;
        return it->second;
    }
};

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - m;
}

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz) {
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    const double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (hz < min_log_hz) return hz / f_sp;
    return min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel) {
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    const double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (mel < min_log_mel) return mel * f_sp;
    return min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

} // namespace

AudioClip load_wav(const std::string& path, int expected_rate) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);

    char riff[4], wave[4];
    in.read(riff, 4);
    const std::uint32_t riff_size = read_u32(in);
    (void)riff_size;
    in.read(wave, 4);
    if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
        throw format_error(path + ": not a RIFF/WAVE file");

    int channels = 0, sample_rate = 0, bits = 0, audio_format = 0;
    std::vector<std::int16_t> raw;
    bool got_fmt = false, got_data = false;
    while (in && !(got_fmt && got_data)) {
        char id[4];
        in.read(id, 4);
        if (!in) break;
        const std::uint32_t size = read_u32(in);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            audio_format = read_u16(in);
            channels = read_u16(in);
            sample_rate = static_cast<int>(read_u32(in));
            read_u32(in); // byte rate
            read_u16(in); // block align
            bits = read_u16(in);
            if (size > 16) in.seekg(size - 16, std::ios::cur);
            got_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            if (!got_fmt) throw format_error(path + ": data chunk before fmt chunk");
            raw.resize(size / 2);
            in.read(reinterpret_cast<char*>(raw.data()), size);
            got_data = true;
        } else {
            in.seekg(size + (size & 1), std::ios::cur);
        }
    }
    if (!got_fmt || !got_data) throw format_error(path + ": missing fmt or data chunk");
    if (audio_format != 1) throw format_error(path + ": only PCM encoding is supported");
    if (bits != 16) throw format_error(path + ": only 16-bit samples are supported");
    if (channels < 1) throw format_error(path + ": invalid channel count");
    if (expected_rate != 0 && sample_rate != expected_rate)
        throw rate_error(path + ": sample rate " + std::to_string(sample_rate) + ", expected " +
                         std::to_string(expected_rate));

    AudioClip clip;
    clip.sample_rate = sample_rate;
    const std::size_t n_frames = raw.size() / channels;
    clip.samples.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) acc += raw[i * channels + c];
        clip.samples[i] = static_cast<float>(acc / channels / 32768.0);
    }
    return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path);
    const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * 2);
    out.write("RIFF", 4);
    write_u32(out, 36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, 1); // PCM
    write_u16(out, 1); // mono
    write_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
    write_u32(out, static_cast<std::uint32_t>(clip.sample_rate * 2));
    write_u16(out, 2);
    write_u16(out, 16);
    out.write("data", 4);
    write_u32(out, data_size);
    for (const float s : clip.samples) {
        long v = std::lround(static_cast<double>(s) * 32767.0);
        v = std::clamp(v, -32768l, 32767l);
        write_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    }
    if (!out) throw io_error("write failed for " + path);
}

std::vector<double> hann_window(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
    return w;
}

Stft stft(const std::vector<float>& samples, const MelConfig& cfg, Window window) {
    if (samples.empty()) throw shape_error("stft: empty input");
    const int len = static_cast<int>(samples.size());
    const int pad = cfg.fft / 2;
    const int frames = len / cfg.hop + 1;

    std::vector<double> padded(len + 2 * pad);
    for (int i = 0; i < len + 2 * pad; ++i) padded[i] = samples[reflect_index(i - pad, len)];

    std::vector<double> win(cfg.win, 1.0);
    if (window == Window::Hann) win = hann_window(cfg.win);

    const DftTable& table = DftTable::get(cfg.fft);
    Stft out;
    out.bins = table.bins;
    out.frames = frames;
    out.re.assign(static_cast<std::size_t>(out.bins) * frames, 0.0);
    out.im.assign(static_cast<std::size_t>(out.bins) * frames, 0.0);

    // Windowed frames transposed to (fft x frames), so the DFT becomes two
    // matmuls with contiguous inner rows and the basis tables stream once.
    std::vector<double> frames_t(static_cast<std::size_t>(cfg.fft) * frames);
    for (int n = 0; n < cfg.fft; ++n) {
        double* row = frames_t.data() + static_cast<std::size_t>(n) * frames;
        const double wv = win[n];
        for (int f = 0; f < frames; ++f)
            row[f] = padded[static_cast<std::size_t>(f) * cfg.hop + n] * wv;
    }
    kern::mm_axpy_acc(table.cos_t.data(), frames_t.data(), out.re.data(), out.bins, cfg.fft,
                      frames);
    kern::mm_axpy_acc(table.sin_t.data(), frames_t.data(), out.im.data(), out.bins, cfg.fft,
                      frames);
    for (auto& v : out.im) v = -v;
    return out;
}

std::vector<double> mel_filterbank(const MelConfig& cfg) {
    const int bins = cfg.fft / 2 + 1;
    const int n = cfg.n_mels;
    std::vector<double> fb(static_cast<std::size_t>(n) * bins, 0.0);

    const double mel_lo = hz_to_mel(cfg.fmin);
    const double mel_hi = hz_to_mel(cfg.fmax);
    std::vector<double> edges(n + 2);
    for (int m = 0; m < n + 2; ++m)
        edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (n + 1));

    for (int m = 0; m < n; ++m) {
        const double f0 = edges[m], f1 = edges[m + 1], f2 = edges[m + 2];
        const double norm = 2.0 / (f2 - f0);
        for (int k = 0; k < bins; ++k) {
            const double hz = static_cast<double>(k) * cfg.sample_rate / cfg.fft;
            const double up = (hz - f0) / (f1 - f0);
            const double down = (f2 - hz) / (f2 - f1);
            const double w = std::max(0.0, std::min(up, down));
            fb[static_cast<std::size_t>(m) * bins + k] = w * norm;
        }
    }
    return fb;
}

MelSpectrogram mel_project(const Stft& spec, const MelConfig& cfg) {
    if (spec.bins != cfg.fft / 2 + 1)
        throw shape_error("mel_project: " + std::to_string(spec.bins) + " bins do not match fft " +
                          std::to_string(cfg.fft));
    const std::vector<double> fb = mel_filterbank(cfg);
    MelSpectrogram mel;
    mel.bands = cfg.n_mels;
    mel.frames = spec.frames;
    mel.hop = cfg.hop;
    mel.values.resize(static_cast<std::size_t>(mel.bands) * mel.frames);
    for (int m = 0; m < mel.bands; ++m)
        for (int f = 0; f < mel.frames; ++f) {
            double acc = 0.0;
            const double* fbr = fb.data() + static_cast<std::size_t>(m) * spec.bins;
            for (int k = 0; k < spec.bins; ++k) acc += fbr[k] * spec.magnitude(k, f);
            mel.values[static_cast<std::size_t>(m) * mel.frames + f] =
                static_cast<float>(std::log(std::max(acc, cfg.log_floor)));
        }
    return mel;
}

MelSpectrogram mel_of(const std::vector<float>& samples, const MelConfig& cfg) {
    return mel_project(stft(samples, cfg), cfg);
}

SegmentPair sample_segment(const AudioClip& clip, Rng& rng, const MelConfig& cfg, int segment) {
    std::vector<float> wave(segment, 0.0f);
    int start = 0;
    const int len = static_cast<int>(clip.samples.size());
    if (len > segment) {
        const int max_start = (len - segment) / cfg.hop;
        start = static_cast<int>(rng.uniform_int(0, max_start)) * cfg.hop;
    }
    const int n = std::min(segment, len - start);
    std::copy_n(clip.samples.begin() + start, n, wave.begin());

    SegmentPair pair;
    pair.start = start;
    pair.mel = mel_of(wave, cfg);
    pair.wave = make_tensor<float>(1, 1, segment);
    std::copy(wave.begin(), wave.end(), pair.wave->data());
    return pair;
}

std::vector<AudioClip> synth_corpus(int n_clips, std::uint64_t seed) {
    if (n_clips < 1) throw config_error("synth_corpus: n_clips must be >= 1");
    std::vector<AudioClip> corpus(n_clips);
    const Rng base(seed);
    for (int i = 0; i < n_clips; ++i) {
        Rng rng = base.fork(static_cast<std::uint64_t>(i));
        const int len = static_cast<int>(rng.uniform_int(kSampleRate, 2 * kSampleRate));
        const int partials = static_cast<int>(rng.uniform_int(2, 5));
        const double f0 = rng.uniform(80.0, 1000.0);

        std::vector<double> amp(partials), phase(partials), freq(partials);
        for (int p = 0; p < partials; ++p) {
            freq[p] = f0 * (p + 1);
            amp[p] = rng.uniform(0.5, 1.0) / (p + 1);
            phase[p] = rng.uniform(0.0, 2.0 * kPi);
        }

        AudioClip& clip = corpus[i];
        clip.sample_rate = kSampleRate;
        clip.samples.resize(len);
        const double attack = 0.05 * len;
        const double release = 0.1 * len;
        double peak = 0.0;
        std::vector<double> buf(len);
        for (int t = 0; t < len; ++t) {
            double v = 0.0;
            for (int p = 0; p < partials; ++p) {
                if (freq[p] >= kSampleRate / 2.0) continue;
                v += amp[p] * std::sin(2.0 * kPi * freq[p] * t / kSampleRate + phase[p]);
            }
            const double env =
                std::min(1.0, t / attack) * std::min(1.0, (len - 1 - t) / release);
            buf[t] = v * env;
            peak = std::max(peak, std::abs(buf[t]));
        }
        const double gain = peak > 0.0 ? 0.95 / peak : 0.0;
        for (int t = 0; t < len; ++t) clip.samples[t] = static_cast<float>(buf[t] * gain);
    }
    return corpus;
}

} // namespace waveud::signal
