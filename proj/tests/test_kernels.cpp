// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <omp.h>

#include <cmath>
#include <vector>

#include "doctest.h"
#include "rescore/kernels.hpp"
#include "rescore/rng.hpp"

using namespace rescore;
namespace k = rescore::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct Ref {
  void gemm_nn(auto... a) { k::reference::gemm_nn<double>(a...); }
  void softmax(auto... a) { k::reference::softmax_rows<double>(a...); }
  void softmax_backward(auto... a) { k::reference::softmax_rows_backward<double>(a...); }
  void layer_norm(auto... a) { k::reference::layer_norm<double>(a...); }
  void layer_norm_backward(auto... a) { k::reference::layer_norm_backward<double>(a...); }
  void gelu(auto... a) { k::reference::gelu<double>(a...); }
  void gelu_backward(auto... a) { k::reference::gelu_backward<double>(a...); }
};
struct Par {
  void gemm_nn(auto... a) { k::parallel::gemm_nn<double>(a...); }
  void softmax(auto... a) { k::parallel::softmax_rows<double>(a...); }
  void softmax_backward(auto... a) { k::parallel::softmax_rows_backward<double>(a...); }
  void layer_norm(auto... a) { k::parallel::layer_norm<double>(a...); }
  void layer_norm_backward(auto... a) { k::parallel::layer_norm_backward<double>(a...); }
  void gelu(auto... a) { k::parallel::gelu<double>(a...); }
  void gelu_backward(auto... a) { k::parallel::gelu_backward<double>(a...); }
};

}  // namespace

TEST_CASE("gemm variants match a naive triple loop") {
  const std::size_t M = 7, N = 5, K = 9;
  const auto A = random_vec(M * K, 1), B = random_vec(K * N, 2), Bt = random_vec(N * K, 3),
             At = random_vec(K * M, 4);
  std::vector<double> nn(M * N, 0), nt(M * N, 0), tn(M * N, 0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t p = 0; p < K; ++p) {
        nn[i * N + j] += A[i * K + p] * B[p * N + j];
        nt[i * N + j] += A[i * K + p] * Bt[j * K + p];
        tn[i * N + j] += At[p * M + i] * B[p * N + j];
      }
  for (auto be : {k::Backend::kReference, k::Backend::kParallel}) {
    k::ScopedBackend scope(be);
    std::vector<double> C(M * N, 1.0);
    k::gemm_nn(M, N, K, A.data(), K, B.data(), N, C.data(), N, false);
    CHECK(max_diff(C, nn) < 1e-12);
    k::gemm_nt(M, N, K, A.data(), K, Bt.data(), K, C.data(), N, false);
    CHECK(max_diff(C, nt) < 1e-12);
    k::gemm_tn(M, N, K, At.data(), M, B.data(), N, C.data(), N, false);
    CHECK(max_diff(C, tn) < 1e-12);
    k::gemm_tn(M, N, K, At.data(), M, B.data(), N, C.data(), N, true);
    for (auto& x : tn) x *= 2;
    CHECK(max_diff(C, tn) < 1e-12);
    for (auto& x : tn) x /= 2;
  }
}

TEST_CASE("parallel kernels match the reference and ignore the thread count") {
  const std::size_t M = 33, N = 29, K = 41;
  const auto A = random_vec(M * K, 5), B = random_vec(K * N, 6);
  const auto x = random_vec(M * N, 7), g = random_vec(N, 8), b = random_vec(N, 9), dy = random_vec(M * N, 10);

  auto run = [&](auto ns) {
    std::vector<std::vector<double>> out;
    std::vector<double> C(M * N);
    ns.gemm_nn(M, N, K, A.data(), K, B.data(), N, C.data(), N, false);
    out.push_back(C);
    std::vector<double> S = x;
    ns.softmax(S.data(), M, N, N);
    out.push_back(S);
    std::vector<double> dS = dy;
    ns.softmax_backward(S.data(), dS.data(), M, N, N);
    out.push_back(dS);
    std::vector<double> y(M * N), xhat(M * N), inv(M), dx(M * N), dg(N, 0), db(N, 0);
    ns.layer_norm(x.data(), M, N, g.data(), b.data(), 1e-12, y.data(), xhat.data(), inv.data());
    out.push_back(y);
    ns.layer_norm_backward(dy.data(), xhat.data(), inv.data(), g.data(), M, N, dx.data(), dg.data(), db.data());
    out.push_back(dx);
    out.push_back(dg);
    out.push_back(db);
    std::vector<double> ge(M * N), gb(M * N);
    ns.gelu(x.data(), ge.data(), M * N);
    ns.gelu_backward(x.data(), dy.data(), gb.data(), M * N);
    out.push_back(ge);
    out.push_back(gb);
    return out;
  };
  const auto ref = run(Ref{});
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = run(Par{});
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(max_diff(one[i], ref[i]) < 1e-11);
  for (int threads : {2, 3, 4}) {
    omp_set_num_threads(threads);
    const auto par = run(Par{});
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(par[i] == one[i]);
  }
  omp_set_num_threads(saved);
}

TEST_CASE("softmax rows sum to one and gelu matches erf form") {
  auto x = random_vec(4 * 6, 11);
  const auto x0 = x;
  k::softmax_rows(x.data(), 4, 6, 6);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 6; ++c) s += x[r * 6 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  std::vector<double> y(x0.size());
  k::gelu(x0.data(), y.data(), x0.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(y[i] == doctest::Approx(0.5 * x0[i] * (1 + std::erf(x0[i] / std::sqrt(2.0)))).epsilon(1e-12));
  }
}
