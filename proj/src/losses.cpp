#include "waveud/losses.hpp"

#include <cmath>

namespace waveud {

template <typename T>
MelAnalyzer<T>::MelAnalyzer(const signal::MelConfig& cfg) : cfg_(cfg) {
    const int bins = cfg.fft / 2 + 1;
    const std::vector<double> win = signal::hann_window(cfg.win);

    dft_w_ = make_tensor<T>(2 * bins, 1, cfg.fft);
    constexpr double kPi = 3.14159265358979323846;
    for (int k = 0; k < bins; ++k)
        for (int n = 0; n < cfg.fft; ++n) {
            const double phase = 2.0 * kPi * k * n / cfg.fft;
            dft_w_->at(k, 0, n) = static_cast<T>(win[n] * std::cos(phase));
            dft_w_->at(bins + k, 0, n) = static_cast<T>(-win[n] * std::sin(phase));
        }

    const std::vector<double> fb = signal::mel_filterbank(cfg);
    mel_w_ = make_tensor<T>(cfg.n_mels, bins, 1);
    for (int m = 0; m < cfg.n_mels; ++m)
        for (int k = 0; k < bins; ++k)
            mel_w_->at(m, k, 0) = static_cast<T>(fb[static_cast<std::size_t>(m) * bins + k]);
}

template <typename T>
TensorPtr<T> MelAnalyzer<T>::log_mel(Tape<T>* tape, const TensorPtr<T>& wave) const {
    if (wave->channels() != 1)
        throw shape_error("log_mel: expected 1 channel, got " + std::to_string(wave->channels()));
    auto x = reflect_pad_time(tape, wave, cfg_.fft / 2, cfg_.fft / 2);
    x = conv1d(tape, x, dft_w_, TensorPtr<T>(), cfg_.hop, 0);
    x = stft_magnitude(tape, x);
    x = conv1d(tape, x, mel_w_, TensorPtr<T>(), 1, 0);
    return log_floor(tape, x, cfg_.log_floor);
}

template class MelAnalyzer<float>;
template class MelAnalyzer<double>;

template <typename T>
TensorPtr<T> adv_loss_d(Tape<T>* tape, const TensorPtr<T>& score_real,
                        const TensorPtr<T>& score_fake) {
    if (!score_real->same_shape(*score_fake))
        throw shape_error("adv_loss_d: score shapes differ: " + score_real->shape_str() + " vs " +
                          score_fake->shape_str());
    auto real_term = mean_all(tape, square(tape, add_scalar(tape, score_real, -1.0)));
    auto fake_term = mean_all(tape, square(tape, score_fake));
    return add(tape, real_term, fake_term);
}

template <typename T>
TensorPtr<T> adv_loss_g(Tape<T>* tape, const TensorPtr<T>& score_fake) {
    return mean_all(tape, square(tape, add_scalar(tape, score_fake, -1.0)));
}

template <typename T>
TensorPtr<T> feature_matching(Tape<T>* tape, const std::vector<TensorPtr<T>>& feats_real,
                              const std::vector<TensorPtr<T>>& feats_fake) {
    if (feats_real.size() != feats_fake.size())
        throw shape_error("feature_matching: layer counts differ: " +
                          std::to_string(feats_real.size()) + " vs " +
                          std::to_string(feats_fake.size()));
    if (feats_real.empty()) throw shape_error("feature_matching: empty feature lists");
    TensorPtr<T> total;
    for (std::size_t i = 0; i < feats_real.size(); ++i) {
        auto real = feats_real[i];
        if (!real->same_shape(*feats_fake[i]))
            throw shape_error("feature_matching: layer " + std::to_string(i) +
                              " shape mismatch: " + real->shape_str() + " vs " +
                              feats_fake[i]->shape_str());
        if (real->requires_grad()) real = detach(real);
        auto term = mean_all(tape, abs_op(tape, sub(tape, feats_fake[i], real)));
        total = total ? add(tape, total, term) : term;
    }
    return total;
}

template <typename T>
TensorPtr<T> mel_loss(Tape<T>* tape, const MelAnalyzer<T>& analyzer, const TensorPtr<T>& real_wave,
                      const TensorPtr<T>& fake_wave) {
    if (!real_wave->same_shape(*fake_wave))
        throw shape_error("mel_loss: wave shapes differ: " + real_wave->shape_str() + " vs " +
                          fake_wave->shape_str());
    auto real = real_wave;
    if (real->requires_grad()) real = detach(real);
    auto mel_real = analyzer.log_mel(tape, real);
    auto mel_fake = analyzer.log_mel(tape, fake_wave);
    return mean_all(tape, abs_op(tape, sub(tape, mel_fake, mel_real)));
}

template TensorPtr<float> adv_loss_d<float>(Tape<float>*, const TensorPtr<float>&,
                                            const TensorPtr<float>&);
template TensorPtr<double> adv_loss_d<double>(Tape<double>*, const TensorPtr<double>&,
                                              const TensorPtr<double>&);
template TensorPtr<float> adv_loss_g<float>(Tape<float>*, const TensorPtr<float>&);
template TensorPtr<double> adv_loss_g<double>(Tape<double>*, const TensorPtr<double>&);
template TensorPtr<float> feature_matching<float>(Tape<float>*,
                                                  const std::vector<TensorPtr<float>>&,
                                                  const std::vector<TensorPtr<float>>&);
template TensorPtr<double> feature_matching<double>(Tape<double>*,
                                                    const std::vector<TensorPtr<double>>&,
                                                    const std::vector<TensorPtr<double>>&);
template TensorPtr<float> mel_loss<float>(Tape<float>*, const MelAnalyzer<float>&,
                                          const TensorPtr<float>&, const TensorPtr<float>&);
template TensorPtr<double> mel_loss<double>(Tape<double>*, const MelAnalyzer<double>&,
                                            const TensorPtr<double>&, const TensorPtr<double>&);

} // namespace waveud
