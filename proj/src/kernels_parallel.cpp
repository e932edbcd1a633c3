// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cmath>
#include <numbers>
#include <vector>

#include "rescore/kernels.hpp"

namespace rescore::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::kParallel};

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;
}  // namespace

void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }
Backend backend() { return g_backend.load(std::memory_order_relaxed); }

namespace parallel {

template <class T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(M);
#pragma omp parallel for schedule(static) if (M * N * K > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* c = C + i * ldc;
    if (!accumulate) {
      for (std::size_t j = 0; j < N; ++j) c[j] = 0;
    }
    const T* a = A + i * lda;
    for (std::size_t k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + k * ldb;
#pragma omp simd
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

template <class T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(M);
  const auto cols = static_cast<std::ptrdiff_t>(N);
#pragma omp parallel for collapse(2) schedule(static) if (M * N * K > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    for (std::ptrdiff_t jj = 0; jj < cols; ++jj) {
      const auto i = static_cast<std::size_t>(ii);
      const auto j = static_cast<std::size_t>(jj);
      const T* a = A + i * lda;
      const T* b = B + j * ldb;
      T s = 0;
#pragma omp simd reduction(+ : s)
      for (std::size_t k = 0; k < K; ++k) s += a[k] * b[k];
      C[i * ldc + j] = accumulate ? C[i * ldc + j] + s : s;
    }
  }
}

template <class T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(M);
#pragma omp parallel for schedule(static) if (M * N * K > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* c = C + i * ldc;
    if (!accumulate) {
      for (std::size_t j = 0; j < N; ++j) c[j] = 0;
    }
    for (std::size_t k = 0; k < K; ++k) {
      const T av = A[k * lda + i];
      if (av == T(0)) continue;
      const T* b = B + k * ldb;
#pragma omp simd
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

template <class T>
void softmax_rows(T* x, std::size_t rows, std::size_t cols, std::size_t ld) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    T* row = x + static_cast<std::size_t>(r) * ld;
    T mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    const T inv = T(1) / sum;
    for (std::size_t c = 0; c < cols; ++c) row[c] *= inv;
  }
}

template <class T>
void softmax_rows_backward(const T* P, T* dP, std::size_t rows, std::size_t cols, std::size_t ld) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t rr = 0; rr < n; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const T* p = P + r * ld;
    T* d = dP + r * ld;
    T dot = 0;
#pragma omp simd reduction(+ : dot)
    for (std::size_t c = 0; c < cols; ++c) dot += p[c] * d[c];
#pragma omp simd
    for (std::size_t c = 0; c < cols; ++c) d[c] = p[c] * (d[c] - dot);
  }
}

template <class T>
void layer_norm(const T* x, std::size_t rows, std::size_t cols, const T* gamma, const T* beta, T eps,
                T* y, T* xhat, T* inv_std) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t rr = 0; rr < n; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const T* xr = x + r * cols;
    T mean = 0;
#pragma omp simd reduction(+ : mean)
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<T>(cols);
    T var = 0;
#pragma omp simd reduction(+ : var)
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<T>(cols);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
#pragma omp simd
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (xr[c] - mean) * is;
      xhat[r * cols + c] = h;
      y[r * cols + c] = gamma[c] * h + beta[c];
    }
  }
}

template <class T>
void layer_norm_backward(const T* dy, const T* xhat, const T* inv_std, const T* gamma,
                         std::size_t rows, std::size_t cols, T* dx, T* dgamma, T* dbeta) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
  const bool par = rows * cols > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t rr = 0; rr < n; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    T sum_g = 0;
    T sum_gx = 0;
#pragma omp simd reduction(+ : sum_g, sum_gx)
    for (std::size_t c = 0; c < cols; ++c) {
      const T g = dy[r * cols + c] * gamma[c];
      sum_g += g;
      sum_gx += g * xhat[r * cols + c];
    }
    const T inv_n = T(1) / static_cast<T>(cols);
#pragma omp simd
    for (std::size_t c = 0; c < cols; ++c) {
      const T g = dy[r * cols + c] * gamma[c];
      dx[r * cols + c] = inv_std[r] * (g - sum_g * inv_n - xhat[r * cols + c] * sum_gx * inv_n);
    }
  }
  // Column reductions keep a fixed row order.
  const auto m = static_cast<std::ptrdiff_t>(cols);
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t cc = 0; cc < m; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    T g = 0;
    T b = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      g += dy[r * cols + c] * xhat[r * cols + c];
      b += dy[r * cols + c];
    }
    dgamma[c] += g;
    dbeta[c] += b;
  }
}

template <class T>
void gelu(const T* x, T* y, std::size_t n) {
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for simd schedule(static) if (n > kParallelWork)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] / std::numbers::sqrt2_v<T>));
  }
}

template <class T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for simd schedule(static) if (n > kParallelWork)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const T cdf = T(0.5) * (T(1) + std::erf(x[i] / std::numbers::sqrt2_v<T>));
    const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x[i] * x[i]);
    dx[i] = dy[i] * (cdf + x[i] * pdf);
  }
}

}  // namespace parallel

#define RESCORE_DISPATCH(name, params, args)                                 \
  template <class T>                                                         \
  void name params {                                                         \
    if (backend() == Backend::kReference) {                                  \
      reference::name<T> args;                                               \
    } else {                                                                 \
      parallel::name<T> args;                                                \
    }                                                                        \
  }

#define GEMM_PARAMS                                                                            \
  (std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,       \
   std::size_t ldb, T* C, std::size_t ldc, bool accumulate)
#define GEMM_ARGS (M, N, K, A, lda, B, ldb, C, ldc, accumulate)

RESCORE_DISPATCH(gemm_nn, GEMM_PARAMS, GEMM_ARGS)
RESCORE_DISPATCH(gemm_nt, GEMM_PARAMS, GEMM_ARGS)
RESCORE_DISPATCH(gemm_tn, GEMM_PARAMS, GEMM_ARGS)
RESCORE_DISPATCH(softmax_rows, (T * x, std::size_t rows, std::size_t cols, std::size_t ld),
                 (x, rows, cols, ld))
RESCORE_DISPATCH(softmax_rows_backward,
                 (const T* P, T* dP, std::size_t rows, std::size_t cols, std::size_t ld),
                 (P, dP, rows, cols, ld))
RESCORE_DISPATCH(layer_norm,
                 (const T* x, std::size_t rows, std::size_t cols, const T* gamma, const T* beta,
                  T eps, T* y, T* xhat, T* inv_std),
                 (x, rows, cols, gamma, beta, eps, y, xhat, inv_std))
RESCORE_DISPATCH(layer_norm_backward,
                 (const T* dy, const T* xhat, const T* inv_std, const T* gamma, std::size_t rows,
                  std::size_t cols, T* dx, T* dgamma, T* dbeta),
                 (dy, xhat, inv_std, gamma, rows, cols, dx, dgamma, dbeta))
RESCORE_DISPATCH(gelu, (const T* x, T* y, std::size_t n), (x, y, n))
RESCORE_DISPATCH(gelu_backward, (const T* x, const T* dy, T* dx, std::size_t n), (x, dy, dx, n))

#undef GEMM_PARAMS
#undef GEMM_ARGS
#undef RESCORE_DISPATCH

#define RESCORE_INSTANTIATE(NS, T)                                                               \
  template void NS gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t,      \
                              const T*, std::size_t, T*, std::size_t, bool);                     \
  template void NS gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t,      \
                              const T*, std::size_t, T*, std::size_t, bool);                     \
  template void NS gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t,      \
                              const T*, std::size_t, T*, std::size_t, bool);                     \
  template void NS softmax_rows<T>(T*, std::size_t, std::size_t, std::size_t);                   \
  template void NS softmax_rows_backward<T>(const T*, T*, std::size_t, std::size_t,              \
                                            std::size_t);                                        \
  template void NS layer_norm<T>(const T*, std::size_t, std::size_t, const T*, const T*, T, T*,  \
                                 T*, T*);                                                        \
  template void NS layer_norm_backward<T>(const T*, const T*, const T*, const T*, std::size_t,   \
                                          std::size_t, T*, T*, T*);                              \
  template void NS gelu<T>(const T*, T*, std::size_t);                                           \
  template void NS gelu_backward<T>(const T*, const T*, T*, std::size_t);

RESCORE_INSTANTIATE(parallel::, float)
RESCORE_INSTANTIATE(parallel::, double)
RESCORE_INSTANTIATE(, float)
RESCORE_INSTANTIATE(, double)

}  // namespace rescore::kernels
