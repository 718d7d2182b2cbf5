#include "waveud/waveunet.hpp"

#include <cmath>

namespace waveud {

namespace {

// Smallest padding with floor((time + 2p - k)/s) + 1 == time/s for time
// divisible by s.
int down_padding(int k, int s) { return (k - s + 1) / 2; }

std::int64_t conv_params(int out_ch, int in_ch, int k) {
    return static_cast<std::int64_t>(out_ch) * (static_cast<std::int64_t>(in_ch) * k + 1);
}

} // namespace

void WaveUNetConfig::validate() const {
    if (levels < 1) throw config_error("waveunet: levels must be >= 1");
    if (base_channels < 1) throw config_error("waveunet: base_channels must be >= 1");
    if (static_cast<int>(channel_multipliers.size()) != levels)
        throw config_error("waveunet: channel_multipliers must have one entry per level");
    if (static_cast<int>(down_strides.size()) != levels)
        throw config_error("waveunet: down_strides must have one entry per level");
    if (io_kernel < 1 || io_kernel % 2 == 0)
        throw config_error("waveunet: io_kernel must be odd and >= 1");
    if (block_kernel < 1 || block_kernel % 2 == 0)
        throw config_error("waveunet: block_kernel must be odd and >= 1");
    int prod = 1;
    for (const int s : down_strides) {
        if (s < 1) throw config_error("waveunet: strides must be >= 1");
        if (block_kernel < s)
            throw config_error("waveunet: block_kernel must be >= every stride");
        prod *= s;
    }
    if (prod != 256)
        throw config_error("waveunet: product of down_strides must be 256, got " +
                           std::to_string(prod));
    int prev = 1;
    for (const int m : channel_multipliers) {
        if (m < 1) throw config_error("waveunet: channel multipliers must be >= 1");
        if (m % prev != 0 && prev % m != 0)
            throw config_error("waveunet: consecutive channel multipliers must divide evenly");
        prev = m;
    }
}

int WaveUNetConfig::total_downsample() const {
    int prod = 1;
    for (const int s : down_strides) prod *= s;
    return prod;
}

std::int64_t WaveUNetConfig::expected_param_count() const {
    validate();
    std::int64_t total = conv_params(base_channels, 1, io_kernel);
    int in_ch = base_channels;
    for (int i = 0; i < levels; ++i) {
        const int out_ch = base_channels * channel_multipliers[i];
        total += conv_params(out_ch, in_ch, block_kernel);  // main1
        total += conv_params(out_ch, out_ch, block_kernel); // main2
        total += conv_params(in_ch, in_ch, block_kernel);   // shortcut
        in_ch = out_ch;
    }
    total += 2 * conv_params(in_ch, in_ch, block_kernel); // bottleneck
    for (int i = levels - 1; i >= 0; --i) {
        const int skip_ch = base_channels * channel_multipliers[i];
        const int cat_ch = in_ch + skip_ch;
        const int out_ch = i == 0 ? base_channels : base_channels * channel_multipliers[i - 1];
        total += static_cast<std::int64_t>(cat_ch) * out_ch * block_kernel + out_ch; // main1 (T)
        total += conv_params(out_ch, out_ch, block_kernel);                          // main2
        total += static_cast<std::int64_t>(out_ch) * out_ch * block_kernel + out_ch; // shortcut (T)
        in_ch = out_ch;
    }
    total += conv_params(1, in_ch, io_kernel);
    return total;
}

int WaveUNetConfig::receptive_field() const {
    std::int64_t jump = 1, rf = 1;
    rf += static_cast<std::int64_t>(io_kernel - 1) * jump;
    for (int i = 0; i < levels; ++i) {
        rf += static_cast<std::int64_t>(block_kernel - 1) * jump;
        jump *= down_strides[i];
        rf += static_cast<std::int64_t>(block_kernel - 1) * jump;
    }
    rf += 2 * static_cast<std::int64_t>(block_kernel - 1) * jump;
    for (int i = levels - 1; i >= 0; --i) {
        jump /= down_strides[i];
        rf += 2 * static_cast<std::int64_t>(block_kernel - 1) * jump;
    }
    rf += io_kernel - 1;
    return static_cast<int>(rf);
}

template <typename T>
TensorPtr<T> init_conv_weight(Rng& rng, int d0, int d1, int k, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return random_uniform<T>(rng, d0, d1, k, -bound, bound, true);
}

template TensorPtr<float> init_conv_weight<float>(Rng&, int, int, int, int);
template TensorPtr<double> init_conv_weight<double>(Rng&, int, int, int, int);

namespace {

template <typename T>
Conv1dLayer<T> make_conv(Rng& rng, std::vector<NamedTensor<T>>& params, const std::string& name,
                         int out_ch, int in_ch, int k, int stride, int padding) {
    Conv1dLayer<T> layer;
    layer.w = init_conv_weight<T>(rng, out_ch, in_ch, k, in_ch * k);
    layer.b = init_conv_weight<T>(rng, 1, out_ch, 1, in_ch * k);
    layer.stride = stride;
    layer.padding = padding;
    params.push_back({name + ".w", layer.w});
    params.push_back({name + ".b", layer.b});
    return layer;
}

template <typename T>
ConvT1dLayer<T> make_convt(Rng& rng, std::vector<NamedTensor<T>>& params, const std::string& name,
                           int in_ch, int out_ch, int k, int stride, int padding) {
    ConvT1dLayer<T> layer;
    layer.w = init_conv_weight<T>(rng, in_ch, out_ch, k, out_ch * k);
    layer.b = init_conv_weight<T>(rng, 1, out_ch, 1, out_ch * k);
    layer.stride = stride;
    layer.padding = padding;
    params.push_back({name + ".w", layer.w});
    params.push_back({name + ".b", layer.b});
    return layer;
}

} // namespace

template <typename T>
WaveUNetDiscriminator<T>::WaveUNetDiscriminator(const WaveUNetConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int k = cfg_.block_kernel;

    conv_in_ = make_conv<T>(rng, params_, "conv_in", cfg_.base_channels, 1, cfg_.io_kernel, 1,
                            (cfg_.io_kernel - 1) / 2);

    int in_ch = cfg_.base_channels;
    for (int i = 0; i < cfg_.levels; ++i) {
        const int out_ch = cfg_.base_channels * cfg_.channel_multipliers[i];
        const int s = cfg_.down_strides[i];
        const std::string base = "down." + std::to_string(i);
        DownBlock blk;
        blk.main1 = make_conv<T>(rng, params_, base + ".main1", out_ch, in_ch, k, s,
                                 down_padding(k, s));
        blk.main2 = make_conv<T>(rng, params_, base + ".main2", out_ch, out_ch, k, 1, (k - 1) / 2);
        blk.shortcut = make_conv<T>(rng, params_, base + ".shortcut", in_ch, in_ch, k, s,
                                    down_padding(k, s));
        blk.dup_factor = out_ch / in_ch;
        down_.push_back(std::move(blk));
        in_ch = out_ch;
    }

    neck_.main1 = make_conv<T>(rng, params_, "neck.main1", in_ch, in_ch, k, 1, (k - 1) / 2);
    neck_.main2 = make_conv<T>(rng, params_, "neck.main2", in_ch, in_ch, k, 1, (k - 1) / 2);

    for (int i = cfg_.levels - 1; i >= 0; --i) {
        const int skip_ch = cfg_.base_channels * cfg_.channel_multipliers[i];
        const int cat_ch = in_ch + skip_ch;
        const int out_ch =
            i == 0 ? cfg_.base_channels : cfg_.base_channels * cfg_.channel_multipliers[i - 1];
        const int s = cfg_.down_strides[i];
        const std::string base = "up." + std::to_string(cfg_.levels - 1 - i);
        UpBlock blk;
        blk.main1 = make_convt<T>(rng, params_, base + ".main1", cat_ch, out_ch, k, s, 0);
        blk.main2 = make_conv<T>(rng, params_, base + ".main2", out_ch, out_ch, k, 1, (k - 1) / 2);
        blk.shortcut = make_convt<T>(rng, params_, base + ".shortcut", out_ch, out_ch, k, s, 0);
        blk.mean_to = out_ch;
        if (cat_ch % out_ch != 0)
            throw config_error("waveunet: concat channels " + std::to_string(cat_ch) +
                               " not divisible by decoder channels " + std::to_string(out_ch));
        up_.push_back(std::move(blk));
        in_ch = out_ch;
    }

    conv_out_ = make_conv<T>(rng, params_, "conv_out", 1, in_ch, cfg_.io_kernel, 1,
                             (cfg_.io_kernel - 1) / 2);
}

template <typename T>
TensorPtr<T> WaveUNetDiscriminator<T>::run_down(Tape<T>* tape, const DownBlock& blk,
                                                const TensorPtr<T>& x) const {
    auto m = blk.main1.forward(tape, x);
    m = global_norm(tape, m);
    m = leaky_relu(tape, m, cfg_.lrelu_slope);
    m = blk.main2.forward(tape, m);
    m = global_norm(tape, m);
    m = leaky_relu(tape, m, cfg_.lrelu_slope);

    auto sc = blk.shortcut.forward(tape, x);
    if (blk.dup_factor > 1) sc = duplicate_channels(tape, sc, blk.dup_factor);
    return residual_combine(tape, m, sc, cfg_.residual_scale);
}

template <typename T>
TensorPtr<T> WaveUNetDiscriminator<T>::run_neck(Tape<T>* tape, const NeckBlock& blk,
                                                const TensorPtr<T>& x) const {
    auto m = blk.main1.forward(tape, x);
    m = global_norm(tape, m);
    m = leaky_relu(tape, m, cfg_.lrelu_slope);
    m = blk.main2.forward(tape, m);
    m = global_norm(tape, m);
    m = leaky_relu(tape, m, cfg_.lrelu_slope);
    return residual_combine(tape, m, x, cfg_.residual_scale);
}

template <typename T>
TensorPtr<T> WaveUNetDiscriminator<T>::run_up(Tape<T>* tape, const UpBlock& blk,
                                              const TensorPtr<T>& x, int target_time) const {
    auto m = blk.main1.forward(tape, x);
    m = trim_time(tape, m, target_time);
    m = global_norm(tape, m);
    m = leaky_relu(tape, m, cfg_.lrelu_slope);
    m = blk.main2.forward(tape, m);
    m = global_norm(tape, m);
    m = leaky_relu(tape, m, cfg_.lrelu_slope);

    auto sc = mean_channels(tape, x, blk.mean_to);
    sc = blk.shortcut.forward(tape, sc);
    sc = trim_time(tape, sc, target_time);
    return residual_combine(tape, m, sc, cfg_.residual_scale);
}

template <typename T>
DiscOutput<T> WaveUNetDiscriminator<T>::forward(Tape<T>* tape, const TensorPtr<T>& wave) const {
    if (wave->channels() != 1)
        throw shape_error("waveunet: expected 1 input channel, got " +
                          std::to_string(wave->channels()));
    const int in_time = wave->time();
    const int factor = cfg_.total_downsample();

    auto x = wave;
    if (in_time % factor != 0)
        x = zero_pad_time(tape, x, 0, factor - in_time % factor);

    DiscOutput<T> out;
    out.features.reserve(feature_count());

    x = conv_in_.forward(tape, x);
    out.features.push_back(x);

    std::vector<TensorPtr<T>> skips;
    for (const auto& blk : down_) {
        x = run_down(tape, blk, x);
        out.features.push_back(x);
        skips.push_back(x);
    }

    x = run_neck(tape, neck_, x);
    out.features.push_back(x);

    for (int i = 0; i < cfg_.levels; ++i) {
        const auto& skip = skips[cfg_.levels - 1 - i];
        x = concat_channels(tape, x, skip);
        const int target = i == cfg_.levels - 1
                               ? skip->time() * cfg_.down_strides[0]
                               : skips[cfg_.levels - 2 - i]->time();
        x = run_up(tape, up_[i], x, target);
        out.features.push_back(x);
    }

    x = conv_out_.forward(tape, x);
    out.features.push_back(x);

    out.score_map = trim_time(tape, x, in_time);
    return out;
}

template class WaveUNetDiscriminator<float>;
template class WaveUNetDiscriminator<double>;

} // namespace waveud
