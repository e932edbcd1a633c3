// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

// Dense kernels used by the encoder. Every kernel exists twice: an OpenMP
// version (`parallel`) and a plain serial version (`reference`) kept for
// testing. Parallel loops only split over output rows, so results do not
// depend on the thread count. The unqualified functions dispatch on the
// process-wide backend.
//
// Matrices are row-major with explicit leading dimensions.
//   gemm_nn: C[MxN] (+)= A[MxK]   * B[KxN]
//   gemm_nt: C[MxN] (+)= A[MxK]   * B[NxK]^T
//   gemm_tn: C[MxN] (+)= A[KxM]^T * B[KxN]

namespace rescore::kernels {

enum class Backend { kParallel, kReference };

void set_backend(Backend b);
Backend backend();

/// Restores the previous backend on destruction.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : saved_(backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(saved_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend saved_;
};

#define RESCORE_KERNEL_DECLS                                                                     \
  template <class T>                                                                             \
  void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,         \
               const T* B, std::size_t ldb, T* C, std::size_t ldc, bool accumulate);             \
  template <class T>                                                                             \
  void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,         \
               const T* B, std::size_t ldb, T* C, std::size_t ldc, bool accumulate);             \
  template <class T>                                                                             \
  void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,         \
               const T* B, std::size_t ldb, T* C, std::size_t ldc, bool accumulate);             \
  /* In-place row softmax over the first `cols` entries of each row. */                          \
  template <class T>                                                                             \
  void softmax_rows(T* x, std::size_t rows, std::size_t cols, std::size_t ld);                   \
  /* dS = P * (dP - rowsum(dP * P)); dP is overwritten with dS. */                               \
  template <class T>                                                                             \
  void softmax_rows_backward(const T* P, T* dP, std::size_t rows, std::size_t cols,              \
                             std::size_t ld);                                                    \
  /* y = gamma * xhat + beta with xhat = (x - mean) * inv_std. */                                \
  template <class T>                                                                             \
  void layer_norm(const T* x, std::size_t rows, std::size_t cols, const T* gamma, const T* beta, \
                  T eps, T* y, T* xhat, T* inv_std);                                             \
  /* dx written; dgamma and dbeta accumulated. */                                                \
  template <class T>                                                                             \
  void layer_norm_backward(const T* dy, const T* xhat, const T* inv_std, const T* gamma,         \
                           std::size_t rows, std::size_t cols, T* dx, T* dgamma, T* dbeta);      \
  /* Exact (erf) GELU. */                                                                        \
  template <class T>                                                                             \
  void gelu(const T* x, T* y, std::size_t n);                                                    \
  /* dx = dy * gelu'(x). */                                                                      \
  template <class T>                                                                             \
  void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n);

namespace parallel {
RESCORE_KERNEL_DECLS
}  // namespace parallel

namespace reference {
RESCORE_KERNEL_DECLS
}  // namespace reference

RESCORE_KERNEL_DECLS

#undef RESCORE_KERNEL_DECLS

}  // namespace rescore::kernels
