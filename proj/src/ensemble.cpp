#include "waveud/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "waveud/errors.hpp"
#include "waveud/kernels.hpp"

namespace waveud {

namespace {

// Plain inference kernels; no tape involvement anywhere in this module.

void leaky_inplace(Tensor3<float>& x, float slope) {
    for (auto& v : x.values())
        if (v < 0.0f) v *= slope;
}

Tensor3<float> conv1d_grouped(const Tensor3<float>& x, const Tensor3<float>& w, const float* bias,
                              int stride, int padding, int groups) {
    const int batch = x.batch(), in_ch = x.channels(), time = x.time();
    const int out_ch = w.batch(), k = w.time();
    const int gin = in_ch / groups, gout = out_ch / groups;
    const int out_time = (time + 2 * padding - k) / stride + 1;
    if (out_time < 1) throw shape_error("ensemble conv: output time < 1");
    Tensor3<float> y(batch, out_ch, out_time);
    std::vector<float> cols(static_cast<std::size_t>(gin) * k * out_time);
    for (int b = 0; b < batch; ++b)
        for (int g = 0; g < groups; ++g) {
            kern::im2col(&x.at(b, g * gin, 0), gin, time, k, stride, padding, out_time,
                         cols.data());
            float* yr = &y.at(b, g * gout, 0);
            for (int og = 0; og < gout; ++og)
                std::fill_n(yr + static_cast<std::size_t>(og) * out_time, out_time,
                            bias ? bias[g * gout + og] : 0.0f);
            kern::mm_axpy_acc(w.data() + static_cast<std::size_t>(g) * gout * gin * k, cols.data(),
                              yr, gout, gin * k, out_time);
        }
    return y;
}

// cols[(c*kh + j)][h_out*W + w] = x[c][(h_out*stride + j - pad)*W + w]
void im2col_hw(const float* x, int channels, int height, int width, int kh, int stride, int pad,
               int out_height, float* cols) {
    const std::size_t row_len = static_cast<std::size_t>(out_height) * width;
    for (int c = 0; c < channels; ++c) {
        const float* xr = x + static_cast<std::size_t>(c) * height * width;
        for (int j = 0; j < kh; ++j) {
            float* row = cols + (static_cast<std::size_t>(c) * kh + j) * row_len;
            for (int h = 0; h < out_height; ++h) {
                const int src = h * stride + j - pad;
                float* dst = row + static_cast<std::size_t>(h) * width;
                if (src >= 0 && src < height)
                    std::copy_n(xr + static_cast<std::size_t>(src) * width, width, dst);
                else
                    std::fill_n(dst, width, 0.0f);
            }
        }
    }
}

// Conv2d with kernel (k, 1) and stride (s, 1) over data viewed as
// (batch, ch, height, width): a 1-D conv along height applied independently
// per width column, with full channel mixing.
Tensor3<float> conv2d_kx1(const Tensor3<float>& x, int height, int width, const Tensor3<float>& w,
                          const float* bias, int stride, int padding, int& out_height) {
    const int batch = x.batch(), in_ch = x.channels();
    const int out_ch = w.batch(), k = w.time();
    out_height = (height + 2 * padding - k) / stride + 1;
    if (out_height < 1) throw shape_error("ensemble conv2d: output height < 1");
    Tensor3<float> y(batch, out_ch, out_height * width);
    const std::size_t out_len = static_cast<std::size_t>(out_height) * width;
    std::vector<float> cols(static_cast<std::size_t>(in_ch) * k * out_len);
    for (int b = 0; b < batch; ++b) {
        im2col_hw(&x.at(b, 0, 0), in_ch, height, width, k, stride, padding, out_height,
                  cols.data());
        float* yr = &y.at(b, 0, 0);
        for (int oc = 0; oc < out_ch; ++oc)
            std::fill_n(yr + static_cast<std::size_t>(oc) * out_len, out_len,
                        bias ? bias[oc] : 0.0f);
        kern::mm_axpy_acc(w.data(), cols.data(), yr, out_ch, in_ch * k,
                          static_cast<int>(out_len));
    }
    return y;
}

// AvgPool1d(kernel 4, stride 2, padding 2), zeros counted in the mean.
Tensor3<float> avg_pool_half(const Tensor3<float>& x) {
    const int batch = x.batch(), ch = x.channels(), time = x.time();
    const int out_time = (time + 4 - 4) / 2 + 1;
    Tensor3<float> y(batch, ch, out_time);
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < ch; ++c) {
            const float* xr = &x.at(b, c, 0);
            float* yr = &y.at(b, c, 0);
            for (int t = 0; t < out_time; ++t) {
                float acc = 0.0f;
                for (int j = 0; j < 4; ++j) {
                    const int u = t * 2 + j - 2;
                    if (u >= 0 && u < time) acc += xr[u];
                }
                yr[t] = acc * 0.25f;
            }
        }
    return y;
}

// Right reflect padding to the next multiple of the period, then fold to
// (height = time/period, width = period).
Tensor3<float> fold_period(const Tensor3<float>& x, int period, int& height) {
    const int batch = x.batch(), time = x.time();
    if (time < period)
        throw shape_error("ensemble: input time " + std::to_string(time) +
                          " shorter than period " + std::to_string(period));
    const int rem = time % period;
    const int padded = rem == 0 ? time : time + (period - rem);
    height = padded / period;
    Tensor3<float> y(batch, 1, padded);
    for (int b = 0; b < batch; ++b) {
        const float* xr = &x.at(b, 0, 0);
        float* yr = &y.at(b, 0, 0);
        std::copy_n(xr, time, yr);
        for (int t = time; t < padded; ++t) yr[t] = xr[2 * time - 2 - t];
    }
    return y;
}

} // namespace

void EnsembleConfig::validate() const {
    if (periods.empty()) throw config_error("ensemble: periods must be non-empty");
    for (std::size_t i = 1; i < periods.size(); ++i)
        if (periods[i] <= periods[i - 1])
            throw config_error("ensemble: periods must be strictly increasing");
    if (periods.front() < 1) throw config_error("ensemble: periods must be >= 1");
    if (msd_scales < 1) throw config_error("ensemble: msd_scales must be >= 1");
    if (mpd_channels.empty() || msd_layers.empty())
        throw config_error("ensemble: layer tables must be non-empty");
    int in_ch = 1;
    for (const auto& l : msd_layers) {
        if (in_ch % l.groups != 0 || l.out_ch % l.groups != 0)
            throw config_error("ensemble: msd groups must divide channel counts");
        in_ch = l.out_ch;
    }
}

std::int64_t EnsembleConfig::expected_param_count() const {
    validate();
    std::int64_t per_period = 0;
    int in_ch = 1;
    for (const int out_ch : mpd_channels) {
        per_period += static_cast<std::int64_t>(out_ch) * in_ch * mpd_kernel + out_ch;
        in_ch = out_ch;
    }
    per_period +=
        static_cast<std::int64_t>(mpd_post_channels) * in_ch * mpd_kernel + mpd_post_channels;
    per_period += static_cast<std::int64_t>(1) * mpd_post_channels * 3 + 1;

    std::int64_t per_scale = 0;
    in_ch = 1;
    for (const auto& l : msd_layers) {
        per_scale +=
            static_cast<std::int64_t>(l.out_ch) * (in_ch / l.groups) * l.kernel + l.out_ch;
        in_ch = l.out_ch;
    }
    per_scale += static_cast<std::int64_t>(1) * in_ch * 3 + 1;

    return per_period * static_cast<std::int64_t>(periods.size()) +
           per_scale * static_cast<std::int64_t>(msd_scales);
}

HifiGanEnsemble::HifiGanEnsemble(const EnsembleConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();

    auto add_conv = [&](const std::string& name, int out_ch, int in_ch_per_group, int k, int stride,
                        int padding, int groups) {
        ConvSpec spec;
        const int fan_in = in_ch_per_group * k;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        spec.w = random_uniform<float>(rng, out_ch, in_ch_per_group, k, -bound, bound);
        spec.b = random_uniform<float>(rng, 1, out_ch, 1, -bound, bound);
        spec.stride = stride;
        spec.padding = padding;
        spec.groups = groups;
        params_.push_back({name + ".w", spec.w});
        params_.push_back({name + ".b", spec.b});
        return spec;
    };

    for (std::size_t p = 0; p < cfg_.periods.size(); ++p) {
        std::vector<ConvSpec> convs;
        const std::string base = "mpd." + std::to_string(cfg_.periods[p]);
        int in_ch = 1;
        int li = 0;
        for (const int out_ch : cfg_.mpd_channels) {
            convs.push_back(add_conv(base + ".conv." + std::to_string(li++), out_ch, in_ch,
                                     cfg_.mpd_kernel, cfg_.mpd_stride, (cfg_.mpd_kernel - 1) / 2,
                                     1));
            in_ch = out_ch;
        }
        convs.push_back(add_conv(base + ".conv." + std::to_string(li), cfg_.mpd_post_channels,
                                 in_ch, cfg_.mpd_kernel, 1, (cfg_.mpd_kernel - 1) / 2, 1));
        convs.push_back(add_conv(base + ".post", 1, cfg_.mpd_post_channels, 3, 1, 1, 1));
        period_convs_.push_back(std::move(convs));
    }

    for (int s = 0; s < cfg_.msd_scales; ++s) {
        std::vector<ConvSpec> convs;
        const std::string base = "msd." + std::to_string(s);
        int in_ch = 1;
        int li = 0;
        for (const auto& l : cfg_.msd_layers) {
            convs.push_back(add_conv(base + ".conv." + std::to_string(li++), l.out_ch,
                                     in_ch / l.groups, l.kernel, l.stride, l.padding, l.groups));
            in_ch = l.out_ch;
        }
        convs.push_back(add_conv(base + ".post", 1, in_ch, 3, 1, 1, 1));
        scale_convs_.push_back(std::move(convs));
    }
}

HifiGanEnsemble::SubOutput HifiGanEnsemble::forward_period(
    const Tensor3<float>& wave, int period, const std::vector<ConvSpec>& convs) const {
    int height = 0;
    Tensor3<float> x = fold_period(wave, period, height);
    SubOutput out{Tensor3<float>(1, 1, 1), {}};
    for (std::size_t i = 0; i < convs.size(); ++i) {
        const auto& c = convs[i];
        int out_height = 0;
        Tensor3<float> y =
            conv2d_kx1(x, height, period, *c.w, c.b->data(), c.stride, c.padding, out_height);
        height = out_height;
        if (i + 1 < convs.size()) leaky_inplace(y, static_cast<float>(cfg_.lrelu_slope));
        out.features.push_back(y);
        x = std::move(y);
    }
    out.score = std::move(x);
    return out;
}

HifiGanEnsemble::SubOutput HifiGanEnsemble::forward_scale(
    const Tensor3<float>& wave, const std::vector<ConvSpec>& convs) const {
    SubOutput out{Tensor3<float>(1, 1, 1), {}};
    Tensor3<float> x = wave;
    for (std::size_t i = 0; i < convs.size(); ++i) {
        const auto& c = convs[i];
        Tensor3<float> y = conv1d_grouped(x, *c.w, c.b->data(), c.stride, c.padding, c.groups);
        if (i + 1 < convs.size()) leaky_inplace(y, static_cast<float>(cfg_.lrelu_slope));
        out.features.push_back(y);
        x = std::move(y);
    }
    out.score = std::move(x);
    return out;
}

std::vector<HifiGanEnsemble::SubOutput> HifiGanEnsemble::forward(const Tensor3<float>& wave) const {
    if (wave.channels() != 1)
        throw shape_error("ensemble: expected 1 input channel, got " +
                          std::to_string(wave.channels()));
    std::vector<SubOutput> outputs;
    outputs.reserve(sub_discriminator_count());
    for (std::size_t p = 0; p < cfg_.periods.size(); ++p)
        outputs.push_back(forward_period(wave, cfg_.periods[p], period_convs_[p]));

    Tensor3<float> scaled = wave;
    for (int s = 0; s < cfg_.msd_scales; ++s) {
        if (s > 0) scaled = avg_pool_half(scaled);
        outputs.push_back(forward_scale(scaled, scale_convs_[s]));
    }
    return outputs;
}

} // namespace waveud
