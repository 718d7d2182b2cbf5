#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "waveud/rng.hpp"
#include "waveud/tensor.hpp"

namespace waveud {

// HiFi-GAN-style discriminator ensemble (multi-period + multi-scale),
// reimplemented forward-only as the size/speed comparison target. Layer
// tables follow the reference topology; with the defaults the trainable
// parameter total is 70,702,792.
struct EnsembleConfig {
    std::vector<int> periods = {2, 3, 5, 7, 11};
    int msd_scales = 3;

    // Per-period discriminator: 2-D convs with kernel (k, 1), stride (s, 1)
    // over the (time/period, period) folding.
    std::vector<int> mpd_channels = {32, 128, 512, 1024};
    int mpd_kernel = 5;
    int mpd_stride = 3;
    int mpd_post_channels = 1024;

    // Per-scale discriminator: (out_ch, kernel, stride, groups, padding).
    struct MsdLayer {
        int out_ch, kernel, stride, groups, padding;
    };
    std::vector<MsdLayer> msd_layers = {
        {128, 15, 1, 1, 7},    {128, 41, 2, 4, 20},  {256, 41, 2, 16, 20},
        {512, 41, 4, 16, 20},  {1024, 41, 4, 16, 20}, {1024, 41, 1, 16, 20},
        {1024, 5, 1, 1, 2},
    };

    double lrelu_slope = 0.1;

    void validate() const;
    std::int64_t expected_param_count() const;
};

class HifiGanEnsemble {
public:
    HifiGanEnsemble(const EnsembleConfig& cfg, Rng& rng);

    struct SubOutput {
        Tensor3<float> score;
        std::vector<Tensor3<float>> features;
    };

    // wave: (batch, 1, time). One output per sub-discriminator, periods
    // first, then scales.
    std::vector<SubOutput> forward(const Tensor3<float>& wave) const;

    std::int64_t param_count() const { return waveud::param_count(params_); }
    const std::vector<NamedTensor<float>>& parameters() const { return params_; }
    int sub_discriminator_count() const {
        return static_cast<int>(cfg_.periods.size()) + cfg_.msd_scales;
    }
    const EnsembleConfig& config() const { return cfg_; }

private:
    struct ConvSpec {
        TensorPtr<float> w, b;
        int stride = 1, padding = 0, groups = 1;
    };

    SubOutput forward_period(const Tensor3<float>& wave, int period,
                             const std::vector<ConvSpec>& convs) const;
    SubOutput forward_scale(const Tensor3<float>& wave, const std::vector<ConvSpec>& convs) const;

    EnsembleConfig cfg_;
    std::vector<std::vector<ConvSpec>> period_convs_; // one list per period
    std::vector<std::vector<ConvSpec>> scale_convs_;  // one list per scale
    std::vector<NamedTensor<float>> params_;
};

} // namespace waveud
