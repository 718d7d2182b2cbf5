#pragma once

#include <algorithm>
#include <cstddef>

// Shared dense kernels behind the conv ops: im2col staging plus three matmul
// shapes whose inner loops all run over contiguous memory. Loop order is
// fixed, so results are bit-deterministic.

namespace waveud::kern {

// cols[(c*k + j)][t] = x[c][t*stride + j - padding], zero outside [0, time).
// cols is (channels*k) x out_time, row-major.
template <typename T>
void im2col(const T* x, int channels, int time, int k, int stride, int padding, int out_time,
            T* cols) {
    for (int c = 0; c < channels; ++c) {
        const T* xr = x + static_cast<std::size_t>(c) * time;
        for (int j = 0; j < k; ++j) {
            T* row = cols + (static_cast<std::size_t>(c) * k + j) * out_time;
            const int off = j - padding;
            int t_lo = off < 0 ? (-off + stride - 1) / stride : 0;
            t_lo = std::min(t_lo, out_time);
            int t_hi = std::min(off >= time ? 0 : (time - 1 - off) / stride + 1, out_time);
            t_hi = std::max(t_hi, t_lo);
            std::fill_n(row, t_lo, T(0));
            if (stride == 1) {
                std::copy_n(xr + t_lo + off, t_hi - t_lo, row + t_lo);
            } else {
                const T* xo = xr + off;
                for (int t = t_lo; t < t_hi; ++t) row[t] = xo[static_cast<std::size_t>(t) * stride];
            }
            std::fill(row + t_hi, row + out_time, T(0));
        }
    }
}

// x[c][t*stride + j - padding] += cols[(c*k + j)][t]; adjoint of im2col.
template <typename T>
void col2im_add(const T* cols, int channels, int time, int k, int stride, int padding,
                int out_time, T* x) {
    for (int c = 0; c < channels; ++c) {
        T* xr = x + static_cast<std::size_t>(c) * time;
        for (int j = 0; j < k; ++j) {
            const T* row = cols + (static_cast<std::size_t>(c) * k + j) * out_time;
            const int off = j - padding;
            int t_lo = off < 0 ? (-off + stride - 1) / stride : 0;
            t_lo = std::min(t_lo, out_time);
            int t_hi = std::min(off >= time ? 0 : (time - 1 - off) / stride + 1, out_time);
            t_hi = std::max(t_hi, t_lo);
            if (stride == 1) {
                T* xo = xr + off;
                for (int t = t_lo; t < t_hi; ++t) xo[t] += row[t];
            } else {
                T* xo = xr + off;
                for (int t = t_lo; t < t_hi; ++t) xo[static_cast<std::size_t>(t) * stride] += row[t];
            }
        }
    }
}

// C(M x N) += A(M x K) * B(K x N); all row-major, axpy over contiguous rows.
template <typename T>
void mm_axpy_acc(const T* A, const T* B, T* C, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        T* cr = C + static_cast<std::size_t>(m) * N;
        const T* ar = A + static_cast<std::size_t>(m) * K;
        for (int kk = 0; kk < K; ++kk) {
            const T a = ar[kk];
            if (a == T(0)) continue;
            const T* br = B + static_cast<std::size_t>(kk) * N;
            for (int n = 0; n < N; ++n) cr[n] += a * br[n];
        }
    }
}

// C(M x N) += A^T * B with A stored (K x M) row-major; used where the weight
// matrix is consumed transposed. The C row stays hot while B streams.
template <typename T>
void mm_ta_axpy_acc(const T* A, const T* B, T* C, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        T* cr = C + static_cast<std::size_t>(m) * N;
        for (int kk = 0; kk < K; ++kk) {
            const T a = A[static_cast<std::size_t>(kk) * M + m];
            if (a == T(0)) continue;
            const T* br = B + static_cast<std::size_t>(kk) * N;
            for (int n = 0; n < N; ++n) cr[n] += a * br[n];
        }
    }
}

// C(M x R) += A(M x N) * B(R x N)^T: C[m][r] += dot(A[m], B[r]).
template <typename T>
void mm_dot_bt_acc(const T* A, const T* B, T* C, int M, int R, int N) {
    for (int r = 0; r < R; ++r) {
        const T* br = B + static_cast<std::size_t>(r) * N;
        for (int m = 0; m < M; ++m) {
            const T* ar = A + static_cast<std::size_t>(m) * N;
            T acc = T(0);
            for (int n = 0; n < N; ++n) acc += ar[n] * br[n];
            C[static_cast<std::size_t>(m) * R + r] += acc;
        }
    }
}

} // namespace waveud::kern
