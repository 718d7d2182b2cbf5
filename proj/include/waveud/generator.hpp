#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "waveud/signal.hpp"
#include "waveud/waveunet.hpp"

namespace waveud {

// Mel-to-waveform generator used to exercise the discriminator in a real
// adversarial loop. Upsampling stages multiply out to the mel hop (one frame
// becomes 256 samples); channels halve per stage.
struct GeneratorConfig {
    int mel_bands = 80;
    int base_channels = 128;
    std::vector<int> up_strides = {8, 8, 2, 2};
    std::vector<int> up_kernels = {16, 16, 4, 4};
    int io_kernel = 7;
    int res_kernel = 7;
    double lrelu_slope = 0.1;

    void validate() const;
    std::int64_t expected_param_count() const;
    int total_upsample() const;
};

template <typename T>
class MelGenerator {
public:
    MelGenerator(const GeneratorConfig& cfg, Rng& rng);

    // mel: (batch, mel_bands, frames) -> wave (batch, 1, frames * 256),
    // values in (-1, 1).
    TensorPtr<T> forward(Tape<T>* tape, const TensorPtr<T>& mel) const;

    std::int64_t param_count() const { return waveud::param_count(params_); }
    const std::vector<NamedTensor<T>>& parameters() const { return params_; }
    void set_requires_grad(bool rg) {
        for (auto& p : params_) p.tensor->set_requires_grad(rg);
    }
    void zero_grad() {
        for (auto& p : params_) p.tensor->zero_grad();
    }
    const GeneratorConfig& config() const { return cfg_; }

private:
    struct Stage {
        ConvT1dLayer<T> up;
        Conv1dLayer<T> res1, res2;
    };

    GeneratorConfig cfg_;
    Conv1dLayer<T> conv_in_, conv_out_;
    std::vector<Stage> stages_;
    std::vector<NamedTensor<T>> params_;
};

// Batch conversion helper: stacks per-item mels into (batch, bands, frames).
TensorPtr<float> mel_batch(const std::vector<const signal::MelSpectrogram*>& mels);

} // namespace waveud
