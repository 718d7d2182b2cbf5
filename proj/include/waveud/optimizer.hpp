#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "waveud/tensor.hpp"

namespace waveud {

// AdamW with decoupled weight decay: the decay multiplies the original
// weight separately from the bias-corrected adaptive step,
//   w <- w * (1 - lr*wd) - lr * m_hat / (sqrt(v_hat) + eps).
template <typename T>
class AdamW {
public:
    AdamW(double beta1 = 0.8, double beta2 = 0.99, double eps = 1e-8, double weight_decay = 0.01)
        : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    void attach(const std::vector<NamedTensor<T>>& params) {
        params_ = params;
        m_.clear();
        v_.clear();
        for (const auto& p : params_) {
            m_.emplace_back(p.tensor->size(), T(0));
            v_.emplace_back(p.tensor->size(), T(0));
        }
        step_count_ = 0;
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor->zero_grad();
    }

    void step(double lr) {
        ++step_count_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto& t = *params_[pi].tensor;
            if (!t.has_grad()) t.grad(); // zero gradient contributes decay only
            const T* g = t.grad_data();
            T* w = t.data();
            T* m = m_[pi].data();
            T* v = v_[pi].data();
            const std::size_t n = t.size();
            for (std::size_t i = 0; i < n; ++i) {
                m[i] = static_cast<T>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
                v[i] = static_cast<T>(beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i]);
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                const double update = lr * m_hat / (std::sqrt(v_hat) + eps_);
                w[i] = static_cast<T>(w[i] * (1.0 - lr * weight_decay_) - update);
            }
        }
    }

    std::int64_t step_count() const { return step_count_; }
    void set_step_count(std::int64_t n) { step_count_ = n; }
    std::vector<std::vector<T>>& first_moments() { return m_; }
    std::vector<std::vector<T>>& second_moments() { return v_; }
    const std::vector<std::vector<T>>& first_moments() const { return m_; }
    const std::vector<std::vector<T>>& second_moments() const { return v_; }
    const std::vector<NamedTensor<T>>& params() const { return params_; }

private:
    double beta1_, beta2_, eps_, weight_decay_;
    std::int64_t step_count_ = 0;
    std::vector<NamedTensor<T>> params_;
    std::vector<std::vector<T>> m_, v_;
};

// Exponential schedule: lr0 * decay^epoch.
inline double lr_at(double lr0, double decay, std::int64_t epoch) {
    return lr0 * std::pow(decay, static_cast<double>(epoch));
}

} // namespace waveud
