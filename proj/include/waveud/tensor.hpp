#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "waveud/errors.hpp"
#include "waveud/rng.hpp"

namespace waveud {

// Batched 1-D signal/feature block, laid out row-major as
// [batch][channel][time]. The universal currency of every kernel here.
// The gradient buffer is allocated lazily on first accumulation.
template <typename T>
class Tensor3 {
public:
    Tensor3(int batch, int channels, int time, bool requires_grad = false)
        : batch_(batch), channels_(channels), time_(time), requires_grad_(requires_grad) {
        if (batch < 1 || channels < 1 || time < 1)
            throw shape_error("tensor dimensions must be positive, got (" + std::to_string(batch) +
                              ", " + std::to_string(channels) + ", " + std::to_string(time) + ")");
        values_.assign(static_cast<std::size_t>(batch) * channels * time, T(0));
    }

    int batch() const { return batch_; }
    int channels() const { return channels_; }
    int time() const { return time_; }
    std::size_t size() const { return values_.size(); }

    T* data() { return values_.data(); }
    const T* data() const { return values_.data(); }
    std::vector<T>& values() { return values_; }
    const std::vector<T>& values() const { return values_; }

    T& at(int b, int c, int t) {
        return values_[(static_cast<std::size_t>(b) * channels_ + c) * time_ + t];
    }
    const T& at(int b, int c, int t) const {
        return values_[(static_cast<std::size_t>(b) * channels_ + c) * time_ + t];
    }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool rg) { requires_grad_ = rg; }

    bool has_grad() const { return !grad_.empty(); }

    // Allocates (zero-filled) on first use.
    std::vector<T>& grad() {
        if (grad_.empty()) grad_.assign(values_.size(), T(0));
        return grad_;
    }
    const std::vector<T>& grad_view() const { return grad_; }
    T* grad_data() { return grad().data(); }

    void zero_grad() {
        if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), T(0));
    }
    void drop_grad() { grad_.clear(); }

    bool same_shape(const Tensor3& other) const {
        return batch_ == other.batch_ && channels_ == other.channels_ && time_ == other.time_;
    }

    std::string shape_str() const {
        return "(" + std::to_string(batch_) + ", " + std::to_string(channels_) + ", " +
               std::to_string(time_) + ")";
    }

    bool all_finite() const {
        for (const T v : values_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    int batch_, channels_, time_;
    bool requires_grad_;
    std::vector<T> values_;
    std::vector<T> grad_;
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor3<T>>;

template <typename T>
TensorPtr<T> make_tensor(int batch, int channels, int time, bool requires_grad = false) {
    return std::make_shared<Tensor3<T>>(batch, channels, time, requires_grad);
}

template <typename T>
TensorPtr<T> tensor_from(std::vector<T> flat, int batch, int channels, int time,
                         bool requires_grad = false) {
    auto t = make_tensor<T>(batch, channels, time, requires_grad);
    if (flat.size() != t->size())
        throw shape_error("tensor_from: " + std::to_string(flat.size()) + " values for shape " +
                          t->shape_str());
    t->values() = std::move(flat);
    return t;
}

// Leaf copy of the values, cut off from any recorded graph.
template <typename T>
TensorPtr<T> detach(const TensorPtr<T>& x) {
    auto out = make_tensor<T>(x->batch(), x->channels(), x->time(), false);
    out->values() = x->values();
    return out;
}

template <typename T>
TensorPtr<T> random_uniform(Rng& rng, int batch, int channels, int time, double lo, double hi,
                            bool requires_grad = false) {
    auto t = make_tensor<T>(batch, channels, time, requires_grad);
    for (auto& v : t->values()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// A parameter tensor with its checkpoint path, e.g. "disc.down.0.main1.w".
template <typename T>
struct NamedTensor {
    std::string name;
    TensorPtr<T> tensor;
};

template <typename T>
std::int64_t param_count(const std::vector<NamedTensor<T>>& params) {
    std::int64_t n = 0;
    for (const auto& p : params) n += static_cast<std::int64_t>(p.tensor->size());
    return n;
}

} // namespace waveud
