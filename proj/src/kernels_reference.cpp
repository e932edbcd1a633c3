// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>

#include "rescore/kernels.hpp"

namespace rescore::kernels::reference {

template <class T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      T s = 0;
      for (std::size_t k = 0; k < K; ++k) s += A[i * lda + k] * B[k * ldb + j];
      C[i * ldc + j] = accumulate ? C[i * ldc + j] + s : s;
    }
  }
}

template <class T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      T s = 0;
      for (std::size_t k = 0; k < K; ++k) s += A[i * lda + k] * B[j * ldb + k];
      C[i * ldc + j] = accumulate ? C[i * ldc + j] + s : s;
    }
  }
}

template <class T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      T s = 0;
      for (std::size_t k = 0; k < K; ++k) s += A[k * lda + i] * B[k * ldb + j];
      C[i * ldc + j] = accumulate ? C[i * ldc + j] + s : s;
    }
  }
}

template <class T>
void softmax_rows(T* x, std::size_t rows, std::size_t cols, std::size_t ld) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = x + r * ld;
    T mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
  }
}

template <class T>
void softmax_rows_backward(const T* P, T* dP, std::size_t rows, std::size_t cols, std::size_t ld) {
  for (std::size_t r = 0; r < rows; ++r) {
    T dot = 0;
    for (std::size_t c = 0; c < cols; ++c) dot += P[r * ld + c] * dP[r * ld + c];
    for (std::size_t c = 0; c < cols; ++c) dP[r * ld + c] = P[r * ld + c] * (dP[r * ld + c] - dot);
  }
}

template <class T>
void layer_norm(const T* x, std::size_t rows, std::size_t cols, const T* gamma, const T* beta, T eps,
                T* y, T* xhat, T* inv_std) {
  for (std::size_t r = 0; r < rows; ++r) {
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += x[r * cols + c];
    mean /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const T d = x[r * cols + c] - mean;
      var += d * d;
    }
    var /= static_cast<T>(cols);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (x[r * cols + c] - mean) * is;
      xhat[r * cols + c] = h;
      y[r * cols + c] = gamma[c] * h + beta[c];
    }
  }
}

template <class T>
void layer_norm_backward(const T* dy, const T* xhat, const T* inv_std, const T* gamma,
                         std::size_t rows, std::size_t cols, T* dx, T* dgamma, T* dbeta) {
  for (std::size_t r = 0; r < rows; ++r) {
    T sum_g = 0;
    T sum_gx = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const T g = dy[r * cols + c] * gamma[c];
      sum_g += g;
      sum_gx += g * xhat[r * cols + c];
      dgamma[c] += dy[r * cols + c] * xhat[r * cols + c];
      dbeta[c] += dy[r * cols + c];
    }
    const T n = static_cast<T>(cols);
    for (std::size_t c = 0; c < cols; ++c) {
      const T g = dy[r * cols + c] * gamma[c];
      dx[r * cols + c] = inv_std[r] * (g - sum_g / n - xhat[r * cols + c] * sum_gx / n);
    }
  }
}

template <class T>
void gelu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] / std::numbers::sqrt2_v<T>));
  }
}

template <class T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < n; ++i) {
    const T cdf = T(0.5) * (T(1) + std::erf(x[i] / std::numbers::sqrt2_v<T>));
    const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x[i] * x[i]);
    dx[i] = dy[i] * (cdf + x[i] * pdf);
  }
}

#define RESCORE_INSTANTIATE(T)                                                                   \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t,         \
                           const T*, std::size_t, T*, std::size_t, bool);                        \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t,         \
                           const T*, std::size_t, T*, std::size_t, bool);                        \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t,         \
                           const T*, std::size_t, T*, std::size_t, bool);                        \
  template void softmax_rows<T>(T*, std::size_t, std::size_t, std::size_t);                      \
  template void softmax_rows_backward<T>(const T*, T*, std::size_t, std::size_t, std::size_t);   \
  template void layer_norm<T>(const T*, std::size_t, std::size_t, const T*, const T*, T, T*, T*, \
                              T*);                                                               \
  template void layer_norm_backward<T>(const T*, const T*, const T*, const T*, std::size_t,      \
                                       std::size_t, T*, T*, T*);                                 \
  template void gelu<T>(const T*, T*, std::size_t);                                              \
  template void gelu_backward<T>(const T*, const T*, T*, std::size_t);

RESCORE_INSTANTIATE(float)
RESCORE_INSTANTIATE(double)

}  // namespace rescore::kernels::reference
