#include "waveud/generator.hpp"

namespace waveud {

void GeneratorConfig::validate() const {
    if (mel_bands < 1) throw config_error("generator: mel_bands must be >= 1");
    if (base_channels < 2) throw config_error("generator: base_channels must be >= 2");
    if (up_strides.empty() || up_strides.size() != up_kernels.size())
        throw config_error("generator: up_strides and up_kernels must be non-empty and equal length");
    if (io_kernel < 1 || io_kernel % 2 == 0 || res_kernel < 1 || res_kernel % 2 == 0)
        throw config_error("generator: io_kernel and res_kernel must be odd");
    int prod = 1;
    int ch = base_channels;
    for (std::size_t i = 0; i < up_strides.size(); ++i) {
        const int s = up_strides[i], k = up_kernels[i];
        if (s < 1 || k < s) throw config_error("generator: need kernel >= stride >= 1 per stage");
        if ((k - s) % 2 != 0)
            throw config_error("generator: (kernel - stride) must be even for exact upsampling");
        if (ch % 2 != 0) throw config_error("generator: channels must stay divisible by 2");
        ch /= 2;
        prod *= s;
    }
    if (prod != 256)
        throw config_error("generator: product of up_strides must equal the mel hop 256, got " +
                           std::to_string(prod));
}

int GeneratorConfig::total_upsample() const {
    int prod = 1;
    for (const int s : up_strides) prod *= s;
    return prod;
}

std::int64_t GeneratorConfig::expected_param_count() const {
    validate();
    auto conv = [](int out_ch, int in_ch, int k) {
        return static_cast<std::int64_t>(out_ch) * (static_cast<std::int64_t>(in_ch) * k + 1);
    };
    std::int64_t total = conv(base_channels, mel_bands, io_kernel);
    int ch = base_channels;
    for (std::size_t i = 0; i < up_strides.size(); ++i) {
        const int out_ch = ch / 2;
        total += static_cast<std::int64_t>(ch) * out_ch * up_kernels[i] + out_ch;
        total += 2 * conv(out_ch, out_ch, res_kernel);
        ch = out_ch;
    }
    total += conv(1, ch, io_kernel);
    return total;
}

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
MelGenerator<T>::MelGenerator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    conv_in_ = make_conv<T>(rng, params_, "conv_in", cfg_.base_channels, cfg_.mel_bands,
                            cfg_.io_kernel, 1, (cfg_.io_kernel - 1) / 2);
    int ch = cfg_.base_channels;
    for (std::size_t i = 0; i < cfg_.up_strides.size(); ++i) {
        const int s = cfg_.up_strides[i], k = cfg_.up_kernels[i];
        const int out_ch = ch / 2;
        const std::string base = "stage." + std::to_string(i);
        Stage stage;
        stage.up = make_convt<T>(rng, params_, base + ".up", ch, out_ch, k, s, (k - s) / 2);
        stage.res1 = make_conv<T>(rng, params_, base + ".res1", out_ch, out_ch, cfg_.res_kernel, 1,
                                  (cfg_.res_kernel - 1) / 2);
        stage.res2 = make_conv<T>(rng, params_, base + ".res2", out_ch, out_ch, cfg_.res_kernel, 1,
                                  (cfg_.res_kernel - 1) / 2);
        stages_.push_back(std::move(stage));
        ch = out_ch;
    }
    conv_out_ = make_conv<T>(rng, params_, "conv_out", 1, ch, cfg_.io_kernel, 1,
                             (cfg_.io_kernel - 1) / 2);
}

template <typename T>
TensorPtr<T> MelGenerator<T>::forward(Tape<T>* tape, const TensorPtr<T>& mel) const {
    if (mel->channels() != cfg_.mel_bands)
        throw shape_error("generator: expected " + std::to_string(cfg_.mel_bands) +
                          " mel bands, got " + std::to_string(mel->channels()));
    auto x = conv_in_.forward(tape, mel);
    for (const auto& stage : stages_) {
        x = stage.up.forward(tape, x);
        auto r = leaky_relu(tape, x, cfg_.lrelu_slope);
        r = stage.res1.forward(tape, r);
        r = leaky_relu(tape, r, cfg_.lrelu_slope);
        r = stage.res2.forward(tape, r);
        x = add(tape, x, r);
    }
    x = conv_out_.forward(tape, x);
    return tanh_op(tape, x);
}

template class MelGenerator<float>;
template class MelGenerator<double>;

TensorPtr<float> mel_batch(const std::vector<const signal::MelSpectrogram*>& mels) {
    if (mels.empty()) throw shape_error("mel_batch: empty batch");
    const int bands = mels[0]->bands;
    const int frames = mels[0]->frames;
    auto out = make_tensor<float>(static_cast<int>(mels.size()), bands, frames);
    for (std::size_t i = 0; i < mels.size(); ++i) {
        if (mels[i]->bands != bands || mels[i]->frames != frames)
            throw shape_error("mel_batch: inconsistent mel shapes");
        std::copy(mels[i]->values.begin(), mels[i]->values.end(),
                  out->data() + i * static_cast<std::size_t>(bands) * frames);
    }
    return out;
}

} // namespace waveud
