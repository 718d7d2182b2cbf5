#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "waveud/ops.hpp"
#include "waveud/rng.hpp"
#include "waveud/tape.hpp"
#include "waveud/tensor.hpp"

namespace waveud {

// Topology of the discriminator. Time is downsampled by
// product(down_strides) == 256 (one bottleneck step per mel frame) and the
// decoder mirrors the encoder strides in reverse. Channels after encoder
// level i are base_channels * channel_multipliers[i]; consecutive channel
// ratios must divide evenly so duplicate/mean shortcuts stay exact.
struct WaveUNetConfig {
    int levels = 4;
    int base_channels = 48;
    std::vector<int> channel_multipliers = {1, 2, 4, 8};
    std::vector<int> down_strides = {4, 4, 4, 4};
    int io_kernel = 15;
    int block_kernel = 5;
    double residual_scale = 0.4;
    double lrelu_slope = 0.1;

    void validate() const;
    // Closed-form trainable parameter total for this topology.
    std::int64_t expected_param_count() const;
    // One-sided receptive field width along the main path, in samples.
    int receptive_field() const;
    int total_downsample() const; // product of down_strides
};

// Sample-wise score map at input resolution plus the ordered intermediate
// features (input conv, each residual block, output conv).
template <typename T>
struct DiscOutput {
    TensorPtr<T> score_map;
    std::vector<TensorPtr<T>> features;
};

template <typename T>
struct Conv1dLayer {
    TensorPtr<T> w, b;
    int stride = 1;
    int padding = 0;

    TensorPtr<T> forward(Tape<T>* tape, const TensorPtr<T>& x) const {
        return conv1d(tape, x, w, b, stride, padding);
    }
};

template <typename T>
struct ConvT1dLayer {
    TensorPtr<T> w, b; // (in_ch, out_ch, k)
    int stride = 1;
    int padding = 0;

    TensorPtr<T> forward(Tape<T>* tape, const TensorPtr<T>& x) const {
        return conv_transpose1d(tape, x, w, b, stride, padding);
    }
};

// Encoder/decoder with skip connections and a sample-wise head. Weights are
// read-only during forward; concurrent forwards on distinct inputs are safe,
// gradient accumulation is single-writer.
template <typename T>
class WaveUNetDiscriminator {
public:
    WaveUNetDiscriminator(const WaveUNetConfig& cfg, Rng& rng);

    // wave must have 1 channel. Lengths not divisible by the total
    // downsampling factor are zero-padded on the right and the score map is
    // trimmed back, so score time always equals input time.
    DiscOutput<T> forward(Tape<T>* tape, const TensorPtr<T>& wave) const;

    std::int64_t param_count() const { return waveud::param_count(params_); }
    const std::vector<NamedTensor<T>>& parameters() const { return params_; }
    void set_requires_grad(bool rg) {
        for (auto& p : params_) p.tensor->set_requires_grad(rg);
    }
    void zero_grad() {
        for (auto& p : params_) p.tensor->zero_grad();
    }
    const WaveUNetConfig& config() const { return cfg_; }
    // Feature-list length produced by forward().
    int feature_count() const { return 2 * cfg_.levels + 3; }

private:
    struct DownBlock {
        Conv1dLayer<T> main1, main2;
        Conv1dLayer<T> shortcut; // channel-preserving, then duplicated
        int dup_factor = 1;
    };
    struct NeckBlock {
        Conv1dLayer<T> main1, main2; // stride 1, identity shortcut
    };
    struct UpBlock {
        ConvT1dLayer<T> main1;
        Conv1dLayer<T> main2;
        ConvT1dLayer<T> shortcut; // after group-mean channel reduction
        int mean_to = 1;
    };

    TensorPtr<T> run_down(Tape<T>* tape, const DownBlock& blk, const TensorPtr<T>& x) const;
    TensorPtr<T> run_neck(Tape<T>* tape, const NeckBlock& blk, const TensorPtr<T>& x) const;
    TensorPtr<T> run_up(Tape<T>* tape, const UpBlock& blk, const TensorPtr<T>& x,
                        int target_time) const;

    WaveUNetConfig cfg_;
    Conv1dLayer<T> conv_in_, conv_out_;
    std::vector<DownBlock> down_;
    NeckBlock neck_;
    std::vector<UpBlock> up_;
    std::vector<NamedTensor<T>> params_;
};

// Kaiming-style fan-in uniform init shared by all models here.
template <typename T>
TensorPtr<T> init_conv_weight(Rng& rng, int d0, int d1, int k, int fan_in);

} // namespace waveud
