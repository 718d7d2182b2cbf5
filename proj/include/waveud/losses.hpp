#pragma once

#include <vector>

#include "waveud/ops.hpp"
#include "waveud/signal.hpp"
#include "waveud/tape.hpp"
#include "waveud/tensor.hpp"

namespace waveud {

// Differentiable log-mel analysis built from the autodiff kernels: the DFT is
// a wide fixed-weight convolution (cos/sin rows of the windowed basis, hop as
// stride), the filterbank a 1x1 convolution. Constants are computed in double
// from the same tables signal::stft uses, so both paths agree.
template <typename T>
class MelAnalyzer {
public:
    explicit MelAnalyzer(const signal::MelConfig& cfg = {});

    // wave: (batch, 1, len) -> log-mel (batch, n_mels, len/hop + 1)
    TensorPtr<T> log_mel(Tape<T>* tape, const TensorPtr<T>& wave) const;

    const signal::MelConfig& config() const { return cfg_; }

private:
    signal::MelConfig cfg_;
    TensorPtr<T> dft_w_; // (2*bins, 1, fft)
    TensorPtr<T> mel_w_; // (n_mels, bins, 1)
};

// Least-squares adversarial losses over sample-wise score maps; the
// expectation is realized as the elementwise mean over batch and map.
template <typename T>
TensorPtr<T> adv_loss_d(Tape<T>* tape, const TensorPtr<T>& score_real,
                        const TensorPtr<T>& score_fake);

template <typename T>
TensorPtr<T> adv_loss_g(Tape<T>* tape, const TensorPtr<T>& score_fake);

// Sum over layers of mean |real_i - fake_i|; real features are treated as
// constants (detached if they arrive with gradients enabled).
template <typename T>
TensorPtr<T> feature_matching(Tape<T>* tape, const std::vector<TensorPtr<T>>& feats_real,
                              const std::vector<TensorPtr<T>>& feats_fake);

// L1 distance between the log-mels of both waves, mean over bins and frames.
template <typename T>
TensorPtr<T> mel_loss(Tape<T>* tape, const MelAnalyzer<T>& analyzer,
                      const TensorPtr<T>& real_wave, const TensorPtr<T>& fake_wave);

} // namespace waveud
