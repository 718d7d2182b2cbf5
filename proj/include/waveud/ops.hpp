#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "waveud/kernels.hpp"
#include "waveud/tape.hpp"
#include "waveud/tensor.hpp"

// Reverse-mode differentiable kernels over Tensor3. Every op validates its
// shapes, computes the forward result, and (when a tape is given and any
// input requires grad) records one backward rule. Passing tape == nullptr
// runs pure inference. All loops are single-threaded with a fixed reduction
// order, so repeated runs are bit-identical.

namespace waveud {

namespace detail {

template <typename T>
bool track(const Tape<T>* tape, std::initializer_list<const TensorPtr<T>*> inputs) {
    if (!tape) return false;
    for (const auto* in : inputs)
        if (*in && (*in)->requires_grad()) return true;
    return false;
}

} // namespace detail

// ---------------------------------------------------------------------------
// conv1d: cross-correlation (no kernel flip), zero padding.
// weight shape (out_ch, in_ch, k); bias (1, out_ch, 1) or nullptr.
// out_time = floor((time + 2*padding - k) / stride) + 1
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> conv1d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& bias, int stride, int padding) {
    const int in_ch = w->channels();
    const int out_ch = w->batch();
    const int k = w->time();
    if (x->channels() != in_ch)
        throw shape_error("conv1d: input has " + std::to_string(x->channels()) +
                          " channels, weight expects " + std::to_string(in_ch));
    if (stride < 1 || padding < 0 || k < 1)
        throw shape_error("conv1d: invalid stride/padding/kernel");
    if (bias && (bias->channels() != out_ch || bias->batch() != 1 || bias->time() != 1))
        throw shape_error("conv1d: bias shape " + bias->shape_str() + " does not match " +
                          std::to_string(out_ch) + " output channels");
    const int time = x->time();
    const int out_time = (time + 2 * padding - k) / stride + 1;
    if (time + 2 * padding - k < 0 || out_time < 1)
        throw shape_error("conv1d: output time < 1 for input time " + std::to_string(time));

    const int batch = x->batch();
    auto out = make_tensor<T>(batch, out_ch, out_time);

    const std::size_t x_bs = static_cast<std::size_t>(x->channels()) * time;
    const std::size_t y_bs = static_cast<std::size_t>(out_ch) * out_time;
    const int ick = in_ch * k;

    {
        std::vector<T> cols(static_cast<std::size_t>(ick) * out_time);
        for (int b = 0; b < batch; ++b) {
            kern::im2col(x->data() + b * x_bs, in_ch, time, k, stride, padding, out_time,
                         cols.data());
            T* yr = out->data() + b * y_bs;
            for (int oc = 0; oc < out_ch; ++oc)
                std::fill_n(yr + static_cast<std::size_t>(oc) * out_time, out_time,
                            bias ? bias->data()[oc] : T(0));
            kern::mm_axpy_acc(w->data(), cols.data(), yr, out_ch, ick, out_time);
        }
    }

    if (detail::track(tape, {&x, &w, &bias})) {
        out->set_requires_grad(true);
        tape->record([x, w, bias, out, stride, padding, k, in_ch, out_ch, time, out_time, batch,
                      x_bs, y_bs, ick]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            if (bias && bias->requires_grad()) {
                T* gb = bias->grad_data();
                for (int oc = 0; oc < out_ch; ++oc) {
                    T acc = T(0);
                    for (int b = 0; b < batch; ++b) {
                        const T* gr = go + b * y_bs + static_cast<std::size_t>(oc) * out_time;
                        for (int t = 0; t < out_time; ++t) acc += gr[t];
                    }
                    gb[oc] += acc;
                }
            }
            std::vector<T> cols;
            if (w->requires_grad()) {
                cols.resize(static_cast<std::size_t>(ick) * out_time);
                T* gw = w->grad_data();
                for (int b = 0; b < batch; ++b) {
                    kern::im2col(x->data() + b * x_bs, in_ch, time, k, stride, padding, out_time,
                                 cols.data());
                    kern::mm_dot_bt_acc(go + b * y_bs, cols.data(), gw, out_ch, ick, out_time);
                }
            }
            if (x->requires_grad()) {
                std::vector<T> dcols(static_cast<std::size_t>(ick) * out_time);
                T* gx = x->grad_data();
                for (int b = 0; b < batch; ++b) {
                    std::fill(dcols.begin(), dcols.end(), T(0));
                    kern::mm_ta_axpy_acc(w->data(), go + b * y_bs, dcols.data(), ick, out_ch,
                                         out_time);
                    kern::col2im_add(dcols.data(), in_ch, time, k, stride, padding, out_time,
                                     gx + b * x_bs);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// conv_transpose1d: scatter-add adjoint of conv1d.
// weight shape (in_ch, out_ch, k); out_time = (time - 1)*stride + k - 2*padding
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> conv_transpose1d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                              const TensorPtr<T>& bias, int stride, int padding) {
    const int in_ch = w->batch();
    const int out_ch = w->channels();
    const int k = w->time();
    if (x->channels() != in_ch)
        throw shape_error("conv_transpose1d: input has " + std::to_string(x->channels()) +
                          " channels, weight expects " + std::to_string(in_ch));
    if (stride < 1 || padding < 0 || k < 1)
        throw shape_error("conv_transpose1d: invalid stride/padding/kernel");
    if (bias && (bias->channels() != out_ch || bias->batch() != 1 || bias->time() != 1))
        throw shape_error("conv_transpose1d: bias shape mismatch");
    const int time = x->time();
    const int out_time = (time - 1) * stride + k - 2 * padding;
    if (out_time < 1)
        throw shape_error("conv_transpose1d: output time < 1");

    const int batch = x->batch();
    auto out = make_tensor<T>(batch, out_ch, out_time);

    const std::size_t x_bs = static_cast<std::size_t>(in_ch) * time;
    const std::size_t y_bs = static_cast<std::size_t>(out_ch) * out_time;
    const int ock = out_ch * k;

    {
        // Scatter form: rows (oc, j) of W^T x, then col2im back onto the
        // output grid. Exactly the adjoint index map of conv1d's im2col.
        std::vector<T> tcols(static_cast<std::size_t>(ock) * time);
        for (int b = 0; b < batch; ++b) {
            std::fill(tcols.begin(), tcols.end(), T(0));
            kern::mm_ta_axpy_acc(w->data(), x->data() + b * x_bs, tcols.data(), ock, in_ch, time);
            T* yr = out->data() + b * y_bs;
            for (int oc = 0; oc < out_ch; ++oc)
                std::fill_n(yr + static_cast<std::size_t>(oc) * out_time, out_time,
                            bias ? bias->data()[oc] : T(0));
            kern::col2im_add(tcols.data(), out_ch, out_time, k, stride, padding, time, yr);
        }
    }

    if (detail::track(tape, {&x, &w, &bias})) {
        out->set_requires_grad(true);
        tape->record([x, w, bias, out, stride, padding, k, in_ch, out_ch, time, out_time, batch,
                      x_bs, y_bs, ock]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            if (bias && bias->requires_grad()) {
                T* gb = bias->grad_data();
                for (int oc = 0; oc < out_ch; ++oc) {
                    T acc = T(0);
                    for (int b = 0; b < batch; ++b) {
                        const T* gr = go + b * y_bs + static_cast<std::size_t>(oc) * out_time;
                        for (int u = 0; u < out_time; ++u) acc += gr[u];
                    }
                    gb[oc] += acc;
                }
            }
            if (!w->requires_grad() && !x->requires_grad()) return;
            std::vector<T> dcols(static_cast<std::size_t>(ock) * time);
            for (int b = 0; b < batch; ++b) {
                kern::im2col(go + b * y_bs, out_ch, out_time, k, stride, padding, time,
                             dcols.data());
                if (w->requires_grad())
                    kern::mm_dot_bt_acc(x->data() + b * x_bs, dcols.data(), w->grad_data(), in_ch,
                                        ock, time);
                if (x->requires_grad())
                    kern::mm_axpy_acc(w->data(), dcols.data(), x->grad_data() + b * x_bs, in_ch,
                                      ock, time);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops.
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> leaky_relu(Tape<T>* tape, const TensorPtr<T>& x, double slope = 0.1) {
    auto out = make_tensor<T>(x->batch(), x->channels(), x->time());
    const T s = static_cast<T>(slope);
    const T* xd = x->data();
    T* yd = out->data();
    const std::size_t n = x->size();
    for (std::size_t i = 0; i < n; ++i) yd[i] = xd[i] >= T(0) ? xd[i] : s * xd[i];
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, s, n]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            const T* xd = x->data();
            T* gx = x->grad_data();
            for (std::size_t i = 0; i < n; ++i) gx[i] += xd[i] >= T(0) ? go[i] : s * go[i];
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> tanh_op(Tape<T>* tape, const TensorPtr<T>& x) {
    auto out = make_tensor<T>(x->batch(), x->channels(), x->time());
    const T* xd = x->data();
    T* yd = out->data();
    const std::size_t n = x->size();
    for (std::size_t i = 0; i < n; ++i) yd[i] = std::tanh(xd[i]);
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, n]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            const T* yd = out->data();
            T* gx = x->grad_data();
            for (std::size_t i = 0; i < n; ++i) gx[i] += go[i] * (T(1) - yd[i] * yd[i]);
        });
    }
    return out;
}

// b = a / sqrt(mean(a_i^2) + eps), statistics over channels x time of each
// batch item separately. Parameter-free; no mean shift.
template <typename T>
TensorPtr<T> global_norm(Tape<T>* tape, const TensorPtr<T>& x, double eps = 1e-8) {
    const int batch = x->batch();
    const std::size_t n = static_cast<std::size_t>(x->channels()) * x->time();
    auto out = make_tensor<T>(x->batch(), x->channels(), x->time());
    std::vector<T> inv_rms(batch);
    const T* xd = x->data();
    T* yd = out->data();
    for (int b = 0; b < batch; ++b) {
        const T* xr = xd + b * n;
        T ms = T(0);
        for (std::size_t i = 0; i < n; ++i) ms += xr[i] * xr[i];
        ms = ms / static_cast<T>(n);
        const T r = std::sqrt(ms + static_cast<T>(eps));
        inv_rms[b] = T(1) / r;
        T* yr = yd + b * n;
        for (std::size_t i = 0; i < n; ++i) yr[i] = xr[i] * inv_rms[b];
    }
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, inv_rms = std::move(inv_rms), batch, n]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            const T* xd = x->data();
            T* gx = x->grad_data();
            for (int b = 0; b < batch; ++b) {
                const T* gr = go + b * n;
                const T* xr = xd + b * n;
                T* gxr = gx + b * n;
                const T ir = inv_rms[b];
                T dot = T(0);
                for (std::size_t i = 0; i < n; ++i) dot += gr[i] * xr[i];
                const T c = dot * ir * ir * ir / static_cast<T>(n);
                for (std::size_t i = 0; i < n; ++i) gxr[i] += gr[i] * ir - xr[i] * c;
            }
        });
    }
    return out;
}

// out = (main + shortcut) * scale
template <typename T>
TensorPtr<T> residual_combine(Tape<T>* tape, const TensorPtr<T>& main, const TensorPtr<T>& shortcut,
                              double scale = 0.4) {
    if (!main->same_shape(*shortcut))
        throw shape_error("residual_combine: shape mismatch " + main->shape_str() + " vs " +
                          shortcut->shape_str());
    auto out = make_tensor<T>(main->batch(), main->channels(), main->time());
    const T s = static_cast<T>(scale);
    const T* ad = main->data();
    const T* bd = shortcut->data();
    T* yd = out->data();
    const std::size_t n = main->size();
    for (std::size_t i = 0; i < n; ++i) yd[i] = (ad[i] + bd[i]) * s;
    if (detail::track(tape, {&main, &shortcut})) {
        out->set_requires_grad(true);
        tape->record([main, shortcut, out, s, n]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            if (main->requires_grad()) {
                T* g = main->grad_data();
                for (std::size_t i = 0; i < n; ++i) g[i] += go[i] * s;
            }
            if (shortcut->requires_grad()) {
                T* g = shortcut->grad_data();
                for (std::size_t i = 0; i < n; ++i) g[i] += go[i] * s;
            }
        });
    }
    return out;
}

// Whole-block channel tiling: output channel j equals input channel j mod C.
template <typename T>
TensorPtr<T> duplicate_channels(Tape<T>* tape, const TensorPtr<T>& x, int factor) {
    if (factor < 1) throw shape_error("duplicate_channels: factor must be >= 1");
    const int batch = x->batch(), ch = x->channels(), time = x->time();
    auto out = make_tensor<T>(batch, ch * factor, time);
    const T* xd = x->data();
    T* yd = out->data();
    const std::size_t row = static_cast<std::size_t>(time);
    for (int b = 0; b < batch; ++b)
        for (int f = 0; f < factor; ++f)
            for (int c = 0; c < ch; ++c)
                std::copy_n(xd + (static_cast<std::size_t>(b) * ch + c) * row, row,
                            yd + ((static_cast<std::size_t>(b) * factor + f) * ch + c) * row);
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, batch, ch, factor, row]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            T* gx = x->grad_data();
            for (int b = 0; b < batch; ++b)
                for (int f = 0; f < factor; ++f)
                    for (int c = 0; c < ch; ++c) {
                        const T* gr = go + ((static_cast<std::size_t>(b) * factor + f) * ch + c) * row;
                        T* gxr = gx + (static_cast<std::size_t>(b) * ch + c) * row;
                        for (std::size_t t = 0; t < row; ++t) gxr[t] += gr[t];
                    }
        });
    }
    return out;
}

// Group-mean channel reduction, adjoint-consistent with duplicate_channels:
// output channel j is the mean of input channels {j, j+out_ch, j+2*out_ch, ...}.
template <typename T>
TensorPtr<T> mean_channels(Tape<T>* tape, const TensorPtr<T>& x, int out_ch) {
    const int ch = x->channels();
    if (out_ch < 1 || ch % out_ch != 0)
        throw shape_error("mean_channels: " + std::to_string(ch) + " channels not divisible by " +
                          std::to_string(out_ch));
    const int factor = ch / out_ch;
    const int batch = x->batch(), time = x->time();
    auto out = make_tensor<T>(batch, out_ch, time);
    const T* xd = x->data();
    T* yd = out->data();
    const T inv = T(1) / static_cast<T>(factor);
    const std::size_t row = static_cast<std::size_t>(time);
    for (int b = 0; b < batch; ++b)
        for (int j = 0; j < out_ch; ++j) {
            T* yr = yd + (static_cast<std::size_t>(b) * out_ch + j) * row;
            std::fill_n(yr, row, T(0));
            for (int f = 0; f < factor; ++f) {
                const T* xr = xd + (static_cast<std::size_t>(b) * ch + j + f * out_ch) * row;
                for (std::size_t t = 0; t < row; ++t) yr[t] += xr[t];
            }
            for (std::size_t t = 0; t < row; ++t) yr[t] *= inv;
        }
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, batch, out_ch, ch, factor, inv, row]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            T* gx = x->grad_data();
            for (int b = 0; b < batch; ++b)
                for (int j = 0; j < out_ch; ++j) {
                    const T* gr = go + (static_cast<std::size_t>(b) * out_ch + j) * row;
                    for (int f = 0; f < factor; ++f) {
                        T* gxr = gx + (static_cast<std::size_t>(b) * ch + j + f * out_ch) * row;
                        for (std::size_t t = 0; t < row; ++t) gxr[t] += gr[t] * inv;
                    }
                }
        });
    }
    return out;
}

// Channel concatenation, a first.
template <typename T>
TensorPtr<T> concat_channels(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->batch() != b->batch() || a->time() != b->time())
        throw shape_error("concat_channels: batch/time mismatch " + a->shape_str() + " vs " +
                          b->shape_str());
    const int batch = a->batch(), ca = a->channels(), cb = b->channels(), time = a->time();
    auto out = make_tensor<T>(batch, ca + cb, time);
    const std::size_t row = static_cast<std::size_t>(time);
    for (int bi = 0; bi < batch; ++bi) {
        std::copy_n(a->data() + static_cast<std::size_t>(bi) * ca * row, ca * row,
                    out->data() + static_cast<std::size_t>(bi) * (ca + cb) * row);
        std::copy_n(b->data() + static_cast<std::size_t>(bi) * cb * row, cb * row,
                    out->data() + (static_cast<std::size_t>(bi) * (ca + cb) + ca) * row);
    }
    if (detail::track(tape, {&a, &b})) {
        out->set_requires_grad(true);
        tape->record([a, b, out, batch, ca, cb, row]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            for (int bi = 0; bi < batch; ++bi) {
                if (a->requires_grad()) {
                    T* ga = a->grad_data() + static_cast<std::size_t>(bi) * ca * row;
                    const T* gr = go + static_cast<std::size_t>(bi) * (ca + cb) * row;
                    for (std::size_t i = 0; i < ca * row; ++i) ga[i] += gr[i];
                }
                if (b->requires_grad()) {
                    T* gb = b->grad_data() + static_cast<std::size_t>(bi) * cb * row;
                    const T* gr = go + (static_cast<std::size_t>(bi) * (ca + cb) + ca) * row;
                    for (std::size_t i = 0; i < cb * row; ++i) gb[i] += gr[i];
                }
            }
        });
    }
    return out;
}

// Channels [begin, begin+count).
template <typename T>
TensorPtr<T> slice_channels(Tape<T>* tape, const TensorPtr<T>& x, int begin, int count) {
    if (begin < 0 || count < 1 || begin + count > x->channels())
        throw shape_error("slice_channels: range [" + std::to_string(begin) + ", " +
                          std::to_string(begin + count) + ") out of " +
                          std::to_string(x->channels()) + " channels");
    const int batch = x->batch(), ch = x->channels(), time = x->time();
    auto out = make_tensor<T>(batch, count, time);
    const std::size_t row = static_cast<std::size_t>(time);
    for (int b = 0; b < batch; ++b)
        std::copy_n(x->data() + (static_cast<std::size_t>(b) * ch + begin) * row, count * row,
                    out->data() + static_cast<std::size_t>(b) * count * row);
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, batch, ch, begin, count, row]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            T* gx = x->grad_data();
            for (int b = 0; b < batch; ++b) {
                T* gxr = gx + (static_cast<std::size_t>(b) * ch + begin) * row;
                const T* gr = go + static_cast<std::size_t>(b) * count * row;
                for (std::size_t i = 0; i < count * row; ++i) gxr[i] += gr[i];
            }
        });
    }
    return out;
}

// Keep the first new_time samples (right trim).
template <typename T>
TensorPtr<T> trim_time(Tape<T>* tape, const TensorPtr<T>& x, int new_time) {
    if (new_time < 1 || new_time > x->time())
        throw shape_error("trim_time: cannot trim " + x->shape_str() + " to time " +
                          std::to_string(new_time));
    if (new_time == x->time()) return x;
    const int batch = x->batch(), ch = x->channels(), time = x->time();
    auto out = make_tensor<T>(batch, ch, new_time);
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < ch; ++c)
            std::copy_n(x->data() + (static_cast<std::size_t>(b) * ch + c) * time, new_time,
                        out->data() + (static_cast<std::size_t>(b) * ch + c) * new_time);
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, batch, ch, time, new_time]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            T* gx = x->grad_data();
            for (int b = 0; b < batch; ++b)
                for (int c = 0; c < ch; ++c) {
                    T* gxr = gx + (static_cast<std::size_t>(b) * ch + c) * time;
                    const T* gr = go + (static_cast<std::size_t>(b) * ch + c) * new_time;
                    for (int t = 0; t < new_time; ++t) gxr[t] += gr[t];
                }
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> zero_pad_time(Tape<T>* tape, const TensorPtr<T>& x, int left, int right) {
    if (left < 0 || right < 0) throw shape_error("zero_pad_time: negative padding");
    if (left == 0 && right == 0) return x;
    const int batch = x->batch(), ch = x->channels(), time = x->time();
    const int nt = time + left + right;
    auto out = make_tensor<T>(batch, ch, nt);
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < ch; ++c)
            std::copy_n(x->data() + (static_cast<std::size_t>(b) * ch + c) * time, time,
                        out->data() + (static_cast<std::size_t>(b) * ch + c) * nt + left);
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, batch, ch, time, nt, left]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            T* gx = x->grad_data();
            for (int b = 0; b < batch; ++b)
                for (int c = 0; c < ch; ++c) {
                    T* gxr = gx + (static_cast<std::size_t>(b) * ch + c) * time;
                    const T* gr = go + (static_cast<std::size_t>(b) * ch + c) * nt + left;
                    for (int t = 0; t < time; ++t) gxr[t] += gr[t];
                }
        });
    }
    return out;
}

namespace detail {

// Mirror index into [0, n) without repeating the edge sample, folding as many
// times as needed (numpy "reflect" semantics), so pads wider than the signal
// stay well defined.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - m;
}

} // namespace detail

template <typename T>
TensorPtr<T> reflect_pad_time(Tape<T>* tape, const TensorPtr<T>& x, int left, int right) {
    if (left < 0 || right < 0) throw shape_error("reflect_pad_time: negative padding");
    if (left == 0 && right == 0) return x;
    const int batch = x->batch(), ch = x->channels(), time = x->time();
    const int nt = time + left + right;
    std::vector<int> src(nt);
    for (int t = 0; t < nt; ++t) src[t] = detail::reflect_index(t - left, time);
    auto out = make_tensor<T>(batch, ch, nt);
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < ch; ++c) {
            const T* xr = x->data() + (static_cast<std::size_t>(b) * ch + c) * time;
            T* yr = out->data() + (static_cast<std::size_t>(b) * ch + c) * nt;
            for (int t = 0; t < nt; ++t) yr[t] = xr[src[t]];
        }
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, src = std::move(src), batch, ch, time, nt]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            T* gx = x->grad_data();
            for (int b = 0; b < batch; ++b)
                for (int c = 0; c < ch; ++c) {
                    T* gxr = gx + (static_cast<std::size_t>(b) * ch + c) * time;
                    const T* gr = go + (static_cast<std::size_t>(b) * ch + c) * nt;
                    for (int t = 0; t < nt; ++t) gxr[src[t]] += gr[t];
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Arithmetic ops used by the losses.
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (!a->same_shape(*b))
        throw shape_error("add: shape mismatch " + a->shape_str() + " vs " + b->shape_str());
    auto out = make_tensor<T>(a->batch(), a->channels(), a->time());
    const std::size_t n = a->size();
    const T* ad = a->data();
    const T* bd = b->data();
    T* yd = out->data();
    for (std::size_t i = 0; i < n; ++i) yd[i] = ad[i] + bd[i];
    if (detail::track(tape, {&a, &b})) {
        out->set_requires_grad(true);
        tape->record([a, b, out, n]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            if (a->requires_grad()) {
                T* g = a->grad_data();
                for (std::size_t i = 0; i < n; ++i) g[i] += go[i];
            }
            if (b->requires_grad()) {
                T* g = b->grad_data();
                for (std::size_t i = 0; i < n; ++i) g[i] += go[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> sub(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (!a->same_shape(*b))
        throw shape_error("sub: shape mismatch " + a->shape_str() + " vs " + b->shape_str());
    auto out = make_tensor<T>(a->batch(), a->channels(), a->time());
    const std::size_t n = a->size();
    const T* ad = a->data();
    const T* bd = b->data();
    T* yd = out->data();
    for (std::size_t i = 0; i < n; ++i) yd[i] = ad[i] - bd[i];
    if (detail::track(tape, {&a, &b})) {
        out->set_requires_grad(true);
        tape->record([a, b, out, n]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            if (a->requires_grad()) {
                T* g = a->grad_data();
                for (std::size_t i = 0; i < n; ++i) g[i] += go[i];
            }
            if (b->requires_grad()) {
                T* g = b->grad_data();
                for (std::size_t i = 0; i < n; ++i) g[i] -= go[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> mul(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (!a->same_shape(*b))
        throw shape_error("mul: shape mismatch " + a->shape_str() + " vs " + b->shape_str());
    auto out = make_tensor<T>(a->batch(), a->channels(), a->time());
    const std::size_t n = a->size();
    const T* ad = a->data();
    const T* bd = b->data();
    T* yd = out->data();
    for (std::size_t i = 0; i < n; ++i) yd[i] = ad[i] * bd[i];
    if (detail::track(tape, {&a, &b})) {
        out->set_requires_grad(true);
        tape->record([a, b, out, n]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            if (a->requires_grad()) {
                T* g = a->grad_data();
                const T* bd = b->data();
                for (std::size_t i = 0; i < n; ++i) g[i] += go[i] * bd[i];
            }
            if (b->requires_grad()) {
                T* g = b->grad_data();
                const T* ad = a->data();
                for (std::size_t i = 0; i < n; ++i) g[i] += go[i] * ad[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> add_scalar(Tape<T>* tape, const TensorPtr<T>& x, double c) {
    auto out = make_tensor<T>(x->batch(), x->channels(), x->time());
    const std::size_t n = x->size();
    const T cv = static_cast<T>(c);
    const T* xd = x->data();
    T* yd = out->data();
    for (std::size_t i = 0; i < n; ++i) yd[i] = xd[i] + cv;
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, n]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            T* g = x->grad_data();
            for (std::size_t i = 0; i < n; ++i) g[i] += go[i];
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> mul_scalar(Tape<T>* tape, const TensorPtr<T>& x, double c) {
    auto out = make_tensor<T>(x->batch(), x->channels(), x->time());
    const std::size_t n = x->size();
    const T cv = static_cast<T>(c);
    const T* xd = x->data();
    T* yd = out->data();
    for (std::size_t i = 0; i < n; ++i) yd[i] = xd[i] * cv;
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, cv, n]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            T* g = x->grad_data();
            for (std::size_t i = 0; i < n; ++i) g[i] += go[i] * cv;
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> square(Tape<T>* tape, const TensorPtr<T>& x) {
    auto out = make_tensor<T>(x->batch(), x->channels(), x->time());
    const std::size_t n = x->size();
    const T* xd = x->data();
    T* yd = out->data();
    for (std::size_t i = 0; i < n; ++i) yd[i] = xd[i] * xd[i];
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, n]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            const T* xd = x->data();
            T* g = x->grad_data();
            for (std::size_t i = 0; i < n; ++i) g[i] += T(2) * xd[i] * go[i];
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> abs_op(Tape<T>* tape, const TensorPtr<T>& x) {
    auto out = make_tensor<T>(x->batch(), x->channels(), x->time());
    const std::size_t n = x->size();
    const T* xd = x->data();
    T* yd = out->data();
    for (std::size_t i = 0; i < n; ++i) yd[i] = std::abs(xd[i]);
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, n]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            const T* xd = x->data();
            T* g = x->grad_data();
            for (std::size_t i = 0; i < n; ++i)
                g[i] += xd[i] > T(0) ? go[i] : (xd[i] < T(0) ? -go[i] : T(0));
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> sum_all(Tape<T>* tape, const TensorPtr<T>& x) {
    auto out = make_tensor<T>(1, 1, 1);
    const std::size_t n = x->size();
    const T* xd = x->data();
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += xd[i];
    out->data()[0] = acc;
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, n]() {
            if (!out->has_grad()) return;
            const T go = out->grad_data()[0];
            T* g = x->grad_data();
            for (std::size_t i = 0; i < n; ++i) g[i] += go;
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> mean_all(Tape<T>* tape, const TensorPtr<T>& x) {
    auto out = make_tensor<T>(1, 1, 1);
    const std::size_t n = x->size();
    const T* xd = x->data();
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += xd[i];
    out->data()[0] = acc / static_cast<T>(n);
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, n]() {
            if (!out->has_grad()) return;
            const T go = out->grad_data()[0] / static_cast<T>(n);
            T* g = x->grad_data();
            for (std::size_t i = 0; i < n; ++i) g[i] += go;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Spectral helpers for the differentiable log-mel path.
// ---------------------------------------------------------------------------

// Input carries 2K channels (K real parts then K imaginary parts); output has
// K channels with mag = sqrt(re^2 + im^2). The backward rule guards the
// division so silent frames do not produce NaNs.
template <typename T>
TensorPtr<T> stft_magnitude(Tape<T>* tape, const TensorPtr<T>& x) {
    if (x->channels() % 2 != 0)
        throw shape_error("stft_magnitude: expected an even channel count, got " +
                          std::to_string(x->channels()));
    const int bins = x->channels() / 2;
    const int batch = x->batch(), time = x->time();
    auto out = make_tensor<T>(batch, bins, time);
    const std::size_t row = static_cast<std::size_t>(time);
    const T* xd = x->data();
    T* yd = out->data();
    for (int b = 0; b < batch; ++b)
        for (int kbin = 0; kbin < bins; ++kbin) {
            const T* re = xd + (static_cast<std::size_t>(b) * 2 * bins + kbin) * row;
            const T* im = xd + (static_cast<std::size_t>(b) * 2 * bins + bins + kbin) * row;
            T* yr = yd + (static_cast<std::size_t>(b) * bins + kbin) * row;
            for (std::size_t t = 0; t < row; ++t) yr[t] = std::sqrt(re[t] * re[t] + im[t] * im[t]);
        }
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, batch, bins, row]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            const T* yd = out->data();
            const T* xd = x->data();
            T* gx = x->grad_data();
            const T tiny = static_cast<T>(1e-12);
            for (int b = 0; b < batch; ++b)
                for (int kbin = 0; kbin < bins; ++kbin) {
                    const std::size_t ro = (static_cast<std::size_t>(b) * 2 * bins + kbin) * row;
                    const std::size_t io =
                        (static_cast<std::size_t>(b) * 2 * bins + bins + kbin) * row;
                    const std::size_t yo = (static_cast<std::size_t>(b) * bins + kbin) * row;
                    for (std::size_t t = 0; t < row; ++t) {
                        const T m = std::max(yd[yo + t], tiny);
                        const T g = go[yo + t] / m;
                        gx[ro + t] += g * xd[ro + t];
                        gx[io + t] += g * xd[io + t];
                    }
                }
        });
    }
    return out;
}

// y = log(max(x, floor)); gradient is 1/x above the floor and 0 at/below it.
template <typename T>
TensorPtr<T> log_floor(Tape<T>* tape, const TensorPtr<T>& x, double floor) {
    auto out = make_tensor<T>(x->batch(), x->channels(), x->time());
    const std::size_t n = x->size();
    const T fv = static_cast<T>(floor);
    const T* xd = x->data();
    T* yd = out->data();
    for (std::size_t i = 0; i < n; ++i) yd[i] = std::log(std::max(xd[i], fv));
    if (detail::track(tape, {&x})) {
        out->set_requires_grad(true);
        tape->record([x, out, fv, n]() {
            if (!out->has_grad()) return;
            const T* go = out->grad_data();
            const T* xd = x->data();
            T* g = x->grad_data();
            for (std::size_t i = 0; i < n; ++i)
                if (xd[i] > fv) g[i] += go[i] / xd[i];
        });
    }
    return out;
}

// Scalar-tensor readout.
template <typename T>
T scalar_value(const TensorPtr<T>& x) {
    if (x->size() != 1)
        throw usage_error("scalar_value: tensor is not scalar: " + x->shape_str());
    return x->data()[0];
}

} // namespace waveud
