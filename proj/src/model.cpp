// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rescore/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rescore/error.hpp"
#include "rescore/kernels.hpp"

namespace rescore {

namespace k = kernels;

void ModelConfig::validate(bool strict_grid) const {
  if (strict_grid) {
    if (layers != 4 && layers != 8 && layers != 12) {
      throw ConfigError("layers must be one of {4, 8, 12} (pass --unsafe-grid to override), got " +
                        std::to_string(layers));
    }
    if (ffn_dropout != 0.0 && ffn_dropout != 0.1) {
      throw ConfigError("ffn_dropout must be 0 or 0.1 (pass --unsafe-grid to override)");
    }
  }
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (heads < 1 || hidden < 1 || hidden % heads != 0) {
    throw ConfigError("hidden (" + std::to_string(hidden) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  if (ffn_dim < 1) throw ConfigError("ffn_dim must be >= 1");
  if (max_positions < 3 || max_positions > static_cast<int>(kMaxSeqLen)) {
    throw ConfigError("max_positions must be in [3, 256]");
  }
  if (vocab_size <= Vocabulary::kNumSpecial) throw ConfigError("vocab_size must exceed the 5 specials");
  if (!(ffn_dropout >= 0.0 && ffn_dropout < 1.0)) throw ConfigError("ffn_dropout must be in [0, 1)");
  if (segment_types != 2) throw ConfigError("segment_types must be 2");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"layers", layers},   {"heads", heads},
          {"hidden", hidden},   {"ffn_dim", ffn_dim},
          {"max_positions", max_positions}, {"vocab_size", vocab_size},
          {"ffn_dropout", ffn_dropout},     {"segment_types", segment_types}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.ffn_dropout = j.at("ffn_dropout").get<double>();
  c.segment_types = j.at("segment_types").get<int>();
  return c;
}

template <class T>
Parameters<T>::Parameters(const ModelConfig& config) : config_(config) {
  const auto H = static_cast<std::size_t>(config.hidden);
  const auto F = static_cast<std::size_t>(config.ffn_dim);
  const auto V = static_cast<std::size_t>(config.vocab_size);
  const auto P = static_cast<std::size_t>(config.max_positions);
  const auto S = static_cast<std::size_t>(config.segment_types);
  const auto add = [&](std::string name, std::vector<std::size_t> shape, ParamKind kind) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    tensors_.push_back({std::move(name), std::move(shape), kind, std::vector<T>(n, T(0))});
  };
  add("embeddings.token", {V, H}, ParamKind::kEmbedding);
  add("embeddings.position", {P, H}, ParamKind::kEmbedding);
  add("embeddings.segment", {S, H}, ParamKind::kEmbedding);
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = "layer." + std::to_string(l) + ".";
    add(p + "attention.query.weight", {H, H}, ParamKind::kWeight);
    add(p + "attention.query.bias", {H}, ParamKind::kBias);
    add(p + "attention.key.weight", {H, H}, ParamKind::kWeight);
    add(p + "attention.value.weight", {H, H}, ParamKind::kWeight);
    add(p + "attention.value.bias", {H}, ParamKind::kBias);
    add(p + "attention.output.weight", {H, H}, ParamKind::kWeight);
    add(p + "attention.output.bias", {H}, ParamKind::kBias);
    add(p + "attention.norm.gamma", {H}, ParamKind::kNorm);
    add(p + "attention.norm.beta", {H}, ParamKind::kNorm);
    add(p + "ffn.in.weight", {H, F}, ParamKind::kWeight);
    add(p + "ffn.in.bias", {F}, ParamKind::kBias);
    add(p + "ffn.out.weight", {F, H}, ParamKind::kWeight);
    add(p + "ffn.out.bias", {H}, ParamKind::kBias);
    add(p + "ffn.norm.gamma", {H}, ParamKind::kNorm);
    add(p + "ffn.norm.beta", {H}, ParamKind::kNorm);
  }
  add("mlm.transform.weight", {H, H}, ParamKind::kWeight);
  add("mlm.transform.bias", {H}, ParamKind::kBias);
  add("mlm.norm.gamma", {H}, ParamKind::kNorm);
  add("mlm.norm.beta", {H}, ParamKind::kNorm);
  add("mlm.output.bias", {V}, ParamKind::kBias);
  add("pair.weight", {H, 2}, ParamKind::kWeight);
  add("pair.bias", {2}, ParamKind::kBias);
}

template <class T>
std::size_t Parameters<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

template <class T>
void Parameters<T>::zero() {
  for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), T(0));
}

template <class T>
Parameters<T> init_parameters(const ModelConfig& config, std::uint64_t seed) {
  Parameters<T> p(config);
  constexpr double kStd = 0.02;
  for (auto& t : p.tensors()) {
    if (t.kind == ParamKind::kBias) continue;
    if (t.kind == ParamKind::kNorm) {
      if (t.name.ends_with("gamma")) std::fill(t.data.begin(), t.data.end(), T(1));
      continue;
    }
    Rng rng(mix_seed(seed, t.name));
    for (auto& v : t.data) v = static_cast<T>(std::clamp(kStd * rng.normal(), -2 * kStd, 2 * kStd));
  }
  return p;
}

std::vector<std::size_t> labelled_positions(const TrainingExample& example) {
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < example.attention_len; ++i) {
    if (example.mlm_labels[i] != kNoLabel) pos.push_back(i);
  }
  return pos;
}

namespace {

constexpr double kLayerNormEps = 1e-12;

template <class T>
struct LayerCache {
  std::vector<T> x;        // L x H, layer input
  std::vector<T> q, kx, v; // L x H
  std::vector<T> probs;    // heads x L x L
  std::vector<T> ctx;      // L x H
  std::vector<T> xhat1, inv1, h1;
  std::vector<T> f1;       // L x F, pre-activation
  std::vector<T> g;        // L x F, activation after dropout
  std::vector<T> mask1;    // L x F dropout multipliers (empty when inactive)
  std::vector<T> f2;       // L x H, pre-dropout
  std::vector<T> mask2;    // L x H
  std::vector<T> xhat2, inv2;
};

template <class T>
struct Cache {
  std::size_t L = 0;
  std::vector<LayerCache<T>> layers;
  std::vector<T> out;  // final hidden, L x H
  std::vector<std::size_t> positions;
  std::vector<T> hsel, t_pre, t_act, xhat_m, inv_m, t_norm;
  std::array<T, 2> pair_logits{};
};

template <class T>
void add_bias(T* y, const T* b, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] += b[c];
  }
}

template <class T>
void accumulate_row_sums(const T* dy, std::size_t rows, std::size_t cols, T* db) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) db[c] += dy[r * cols + c];
  }
}

template <class T>
void linear(const T* x, std::size_t rows, const Tensor<T>& w, const Tensor<T>& b, T* y) {
  const std::size_t in = w.shape[0];
  const std::size_t out = w.shape[1];
  k::gemm_nn<T>(rows, out, in, x, in, w.ptr(), out, y, out, false);
  add_bias(y, b.ptr(), rows, out);
}

/// dW += x^T dy, db += rowsum(dy), dx (+)= dy W^T.
template <class T>
void linear_backward(const T* x, const T* dy, std::size_t rows, const Tensor<T>& w, Tensor<T>& dw,
                     Tensor<T>& db, T* dx, bool accumulate_dx) {
  const std::size_t in = w.shape[0];
  const std::size_t out = w.shape[1];
  k::gemm_tn<T>(in, out, rows, x, in, dy, out, dw.ptr(), out, true);
  accumulate_row_sums(dy, rows, out, db.ptr());
  k::gemm_nt<T>(rows, in, out, dy, out, w.ptr(), out, dx, in, accumulate_dx);
}

template <class T>
void make_dropout_mask(std::vector<T>& mask, std::size_t n, double rate, Rng& rng) {
  mask.resize(n);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask) m = rng.uniform() < rate ? T(0) : keep_scale;
}

template <class T>
void check_input(const Parameters<T>& params, const TrainingExample& ex) {
  const auto& cfg = params.config();
  const std::size_t L = ex.attention_len;
  if (L < 3) throw ConfigError("attention_len must be >= 3, got " + std::to_string(L));
  if (L > static_cast<std::size_t>(cfg.max_positions)) {
    throw ConfigError("attention_len " + std::to_string(L) + " exceeds max_positions " +
                      std::to_string(cfg.max_positions));
  }
  for (std::size_t i = 0; i < L; ++i) {
    if (ex.ids[i] < 0 || ex.ids[i] >= cfg.vocab_size) {
      throw DataError("token id " + std::to_string(ex.ids[i]) + " at position " + std::to_string(i) +
                      " is outside the model vocabulary (" + std::to_string(cfg.vocab_size) + ")");
    }
    if (ex.segments[i] >= cfg.segment_types) {
      throw DataError("segment id at position " + std::to_string(i) + " is out of range");
    }
  }
}

template <class T>
void run_forward(const Parameters<T>& params, const TrainingExample& ex, Mode mode, Rng* rng,
                 std::vector<std::size_t> positions, Cache<T>& c, bool all_if_empty = true) {
  check_input(params, ex);
  const auto& cfg = params.config();
  const std::size_t L = ex.attention_len;
  const auto H = static_cast<std::size_t>(cfg.hidden);
  const auto F = static_cast<std::size_t>(cfg.ffn_dim);
  const auto NH = static_cast<std::size_t>(cfg.heads);
  const std::size_t D = H / NH;
  const T scale = T(1) / std::sqrt(static_cast<T>(D));
  const bool dropout = mode == Mode::kTrain && cfg.ffn_dropout > 0.0;
  if (dropout && rng == nullptr) throw ConfigError("train-mode dropout needs an rng");

  c.L = L;
  c.layers.resize(static_cast<std::size_t>(cfg.layers));

  // Embeddings.
  std::vector<T> x(L * H);
  const auto& tok = params.global(Parameters<T>::kTokEmb);
  const auto& pos = params.global(Parameters<T>::kPosEmb);
  const auto& seg = params.global(Parameters<T>::kSegEmb);
  for (std::size_t i = 0; i < L; ++i) {
    const T* te = tok.ptr() + static_cast<std::size_t>(ex.ids[i]) * H;
    const T* pe = pos.ptr() + i * H;
    const T* se = seg.ptr() + static_cast<std::size_t>(ex.segments[i]) * H;
    for (std::size_t h = 0; h < H; ++h) x[i * H + h] = te[h] + pe[h] + se[h];
  }

  for (std::size_t l = 0; l < c.layers.size(); ++l) {
    auto& lc = c.layers[l];
    using P = Parameters<T>;
    lc.x = std::move(x);
    lc.q.resize(L * H);
    lc.kx.resize(L * H);
    lc.v.resize(L * H);
    linear(lc.x.data(), L, params.layer(l, P::kWq), params.layer(l, P::kBq), lc.q.data());
    const auto& wk = params.layer(l, P::kWk);
    k::gemm_nn<T>(L, H, H, lc.x.data(), H, wk.ptr(), H, lc.kx.data(), H, false);
    linear(lc.x.data(), L, params.layer(l, P::kWv), params.layer(l, P::kBv), lc.v.data());

    lc.probs.resize(NH * L * L);
    lc.ctx.assign(L * H, T(0));
    for (std::size_t h = 0; h < NH; ++h) {
      T* S = lc.probs.data() + h * L * L;
      k::gemm_nt<T>(L, L, D, lc.q.data() + h * D, H, lc.kx.data() + h * D, H, S, L, false);
      for (std::size_t i = 0; i < L * L; ++i) S[i] *= scale;
      k::softmax_rows<T>(S, L, L, L);
      k::gemm_nn<T>(L, D, L, S, L, lc.v.data() + h * D, H, lc.ctx.data() + h * D, H, false);
    }

    std::vector<T> sum(L * H);
    linear(lc.ctx.data(), L, params.layer(l, P::kWo), params.layer(l, P::kBo), sum.data());
    for (std::size_t i = 0; i < L * H; ++i) sum[i] += lc.x[i];
    lc.xhat1.resize(L * H);
    lc.inv1.resize(L);
    lc.h1.resize(L * H);
    k::layer_norm<T>(sum.data(), L, H, params.layer(l, P::kLn1Gamma).ptr(),
                     params.layer(l, P::kLn1Beta).ptr(), static_cast<T>(kLayerNormEps), lc.h1.data(),
                     lc.xhat1.data(), lc.inv1.data());

    lc.f1.resize(L * F);
    lc.g.resize(L * F);
    linear(lc.h1.data(), L, params.layer(l, P::kW1), params.layer(l, P::kB1), lc.f1.data());
    k::gelu<T>(lc.f1.data(), lc.g.data(), L * F);
    lc.mask1.clear();
    lc.mask2.clear();
    if (dropout) {
      make_dropout_mask(lc.mask1, L * F, cfg.ffn_dropout, *rng);
      for (std::size_t i = 0; i < L * F; ++i) lc.g[i] *= lc.mask1[i];
    }
    lc.f2.resize(L * H);
    linear(lc.g.data(), L, params.layer(l, P::kW2), params.layer(l, P::kB2), lc.f2.data());
    if (dropout) make_dropout_mask(lc.mask2, L * H, cfg.ffn_dropout, *rng);
    for (std::size_t i = 0; i < L * H; ++i) {
      sum[i] = lc.h1[i] + (dropout ? lc.f2[i] * lc.mask2[i] : lc.f2[i]);
    }
    lc.xhat2.resize(L * H);
    lc.inv2.resize(L);
    x.resize(L * H);
    k::layer_norm<T>(sum.data(), L, H, params.layer(l, P::kLn2Gamma).ptr(),
                     params.layer(l, P::kLn2Beta).ptr(), static_cast<T>(kLayerNormEps), x.data(),
                     lc.xhat2.data(), lc.inv2.data());
  }
  c.out = std::move(x);

  // MLM head on the requested positions.
  using P = Parameters<T>;
  if (positions.empty() && all_if_empty) {
    positions.resize(L);
    for (std::size_t i = 0; i < L; ++i) positions[i] = i;
  }
  for (auto p : positions) {
    if (p >= L) throw ConfigError("MLM position " + std::to_string(p) + " is beyond attention_len");
  }
  c.positions = std::move(positions);
  const std::size_t n = c.positions.size();
  c.hsel.resize(n * H);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(c.out.data() + c.positions[r] * H, H, c.hsel.data() + r * H);
  }
  c.t_pre.resize(n * H);
  c.t_act.resize(n * H);
  c.xhat_m.resize(n * H);
  c.inv_m.resize(n);
  c.t_norm.resize(n * H);
  linear(c.hsel.data(), n, params.head(P::kMlmW), params.head(P::kMlmB), c.t_pre.data());
  k::gelu<T>(c.t_pre.data(), c.t_act.data(), n * H);
  k::layer_norm<T>(c.t_act.data(), n, H, params.head(P::kMlmLnGamma).ptr(),
                   params.head(P::kMlmLnBeta).ptr(), static_cast<T>(kLayerNormEps), c.t_norm.data(),
                   c.xhat_m.data(), c.inv_m.data());

  // Pair head on position 0.
  const auto& pw = params.head(P::kPairW);
  const auto& pb = params.head(P::kPairB);
  for (std::size_t o = 0; o < 2; ++o) {
    T s = pb.data[o];
    for (std::size_t h = 0; h < H; ++h) s += c.out[h] * pw.data[h * 2 + o];
    c.pair_logits[o] = s;
  }
}

template <class T>
void mlm_logits(const Parameters<T>& params, const Cache<T>& c, std::vector<T>& logits) {
  using P = Parameters<T>;
  const auto H = static_cast<std::size_t>(params.config().hidden);
  const auto V = static_cast<std::size_t>(params.config().vocab_size);
  const std::size_t n = c.positions.size();
  logits.resize(n * V);
  k::gemm_nt<T>(n, V, H, c.t_norm.data(), H, params.global(P::kTokEmb).ptr(), H, logits.data(), V, false);
  add_bias(logits.data(), params.head(P::kMlmBias).ptr(), n, V);
}

template <class T>
T log_sum_exp(std::span<const T> x) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : x) mx = std::max(mx, v);
  T s = 0;
  for (T v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

template <class T>
void run_backward(const Parameters<T>& params, const TrainingExample& ex, const Cache<T>& c,
                  const std::vector<T>& dlogits, const std::array<T, 2>& dpair, Parameters<T>& g) {
  using P = Parameters<T>;
  const auto& cfg = params.config();
  const std::size_t L = c.L;
  const auto H = static_cast<std::size_t>(cfg.hidden);
  const auto F = static_cast<std::size_t>(cfg.ffn_dim);
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto NH = static_cast<std::size_t>(cfg.heads);
  const std::size_t D = H / NH;
  const T scale = T(1) / std::sqrt(static_cast<T>(D));
  const std::size_t n = c.positions.size();

  std::vector<T> dx(L * H, T(0));

  // MLM head.
  if (n > 0) {
    accumulate_row_sums(dlogits.data(), n, V, g.head(P::kMlmBias).ptr());
    k::gemm_tn<T>(V, H, n, dlogits.data(), V, c.t_norm.data(), H, g.global(P::kTokEmb).ptr(), H, true);
    std::vector<T> dnorm(n * H);
    k::gemm_nn<T>(n, H, V, dlogits.data(), V, params.global(P::kTokEmb).ptr(), H, dnorm.data(), H, false);
    std::vector<T> dact(n * H);
    k::layer_norm_backward<T>(dnorm.data(), c.xhat_m.data(), c.inv_m.data(),
                              params.head(P::kMlmLnGamma).ptr(), n, H, dact.data(),
                              g.head(P::kMlmLnGamma).ptr(), g.head(P::kMlmLnBeta).ptr());
    std::vector<T> dpre(n * H);
    k::gelu_backward<T>(c.t_pre.data(), dact.data(), dpre.data(), n * H);
    std::vector<T> dsel(n * H);
    linear_backward(c.hsel.data(), dpre.data(), n, params.head(P::kMlmW), g.head(P::kMlmW),
                    g.head(P::kMlmB), dsel.data(), false);
    for (std::size_t r = 0; r < n; ++r) {
      T* dst = dx.data() + c.positions[r] * H;
      for (std::size_t h = 0; h < H; ++h) dst[h] += dsel[r * H + h];
    }
  }

  // Pair head.
  {
    auto& gw = g.head(P::kPairW);
    auto& gb = g.head(P::kPairB);
    const auto& pw = params.head(P::kPairW);
    for (std::size_t o = 0; o < 2; ++o) {
      gb.data[o] += dpair[o];
      for (std::size_t h = 0; h < H; ++h) gw.data[h * 2 + o] += c.out[h] * dpair[o];
    }
    for (std::size_t h = 0; h < H; ++h) dx[h] += pw.data[h * 2] * dpair[0] + pw.data[h * 2 + 1] * dpair[1];
  }

  std::vector<T> dsum(L * H), dh1(L * H), dg(L * F), df1(L * F), dctx(L * H), dq(L * H),
      dk(L * H), dv(L * H), dP(L * L), tmp(L * H);
  for (std::size_t li = c.layers.size(); li-- > 0;) {
    const auto& lc = c.layers[li];
    const bool dropout = !lc.mask1.empty();

    // out = LN2(h1 + dropout(f2))
    k::layer_norm_backward<T>(dx.data(), lc.xhat2.data(), lc.inv2.data(),
                              params.layer(li, P::kLn2Gamma).ptr(), L, H, dsum.data(),
                              g.layer(li, P::kLn2Gamma).ptr(), g.layer(li, P::kLn2Beta).ptr());
    dh1 = dsum;
    if (dropout) {
      for (std::size_t i = 0; i < L * H; ++i) dsum[i] *= lc.mask2[i];
    }
    linear_backward(lc.g.data(), dsum.data(), L, params.layer(li, P::kW2), g.layer(li, P::kW2),
                    g.layer(li, P::kB2), dg.data(), false);
    if (dropout) {
      for (std::size_t i = 0; i < L * F; ++i) dg[i] *= lc.mask1[i];
    }
    k::gelu_backward<T>(lc.f1.data(), dg.data(), df1.data(), L * F);
    linear_backward(lc.h1.data(), df1.data(), L, params.layer(li, P::kW1), g.layer(li, P::kW1),
                    g.layer(li, P::kB1), dh1.data(), true);

    // h1 = LN1(x + attn)
    k::layer_norm_backward<T>(dh1.data(), lc.xhat1.data(), lc.inv1.data(),
                              params.layer(li, P::kLn1Gamma).ptr(), L, H, dsum.data(),
                              g.layer(li, P::kLn1Gamma).ptr(), g.layer(li, P::kLn1Beta).ptr());
    linear_backward(lc.ctx.data(), dsum.data(), L, params.layer(li, P::kWo), g.layer(li, P::kWo),
                    g.layer(li, P::kBo), dctx.data(), false);

    for (std::size_t h = 0; h < NH; ++h) {
      const T* Ph = lc.probs.data() + h * L * L;
      const T* dch = dctx.data() + h * D;
      k::gemm_nt<T>(L, L, D, dch, H, lc.v.data() + h * D, H, dP.data(), L, false);
      k::gemm_tn<T>(L, D, L, Ph, L, dch, H, dv.data() + h * D, H, false);
      k::softmax_rows_backward<T>(Ph, dP.data(), L, L, L);
      for (std::size_t i = 0; i < L * L; ++i) dP[i] *= scale;
      k::gemm_nn<T>(L, D, L, dP.data(), L, lc.kx.data() + h * D, H, dq.data() + h * D, H, false);
      k::gemm_tn<T>(L, D, L, dP.data(), L, lc.q.data() + h * D, H, dk.data() + h * D, H, false);
    }

    // Residual path plus the three projections.
    dx = dsum;
    linear_backward(lc.x.data(), dq.data(), L, params.layer(li, P::kWq), g.layer(li, P::kWq),
                    g.layer(li, P::kBq), dx.data(), true);
    k::gemm_tn<T>(H, H, L, lc.x.data(), H, dk.data(), H, g.layer(li, P::kWk).ptr(), H, true);
    k::gemm_nt<T>(L, H, H, dk.data(), H, params.layer(li, P::kWk).ptr(), H, dx.data(), H, true);
    linear_backward(lc.x.data(), dv.data(), L, params.layer(li, P::kWv), g.layer(li, P::kWv),
                    g.layer(li, P::kBv), dx.data(), true);
  }

  auto& gtok = g.global(P::kTokEmb);
  auto& gpos = g.global(P::kPosEmb);
  auto& gseg = g.global(P::kSegEmb);
  for (std::size_t i = 0; i < L; ++i) {
    T* t = gtok.ptr() + static_cast<std::size_t>(ex.ids[i]) * H;
    T* p = gpos.ptr() + i * H;
    T* s = gseg.ptr() + static_cast<std::size_t>(ex.segments[i]) * H;
    for (std::size_t h = 0; h < H; ++h) {
      t[h] += dx[i * H + h];
      p[h] += dx[i * H + h];
      s[h] += dx[i * H + h];
    }
  }
}

}  // namespace

template <class T>
ForwardOutput<T> forward(const Parameters<T>& params, const TrainingExample& example, Mode mode,
                         Rng* dropout_rng, const ForwardOptions& options) {
  Cache<T> c;
  run_forward(params, example, mode, dropout_rng, options.mlm_positions, c, !options.skip_mlm);
  ForwardOutput<T> out;
  out.length = c.L;
  out.vocab_size = static_cast<std::size_t>(params.config().vocab_size);
  out.pair_logits = c.pair_logits;
  mlm_logits(params, c, out.mlm_logits);
  out.mlm_positions = c.positions;
  if (options.keep_hidden_states) {
    for (std::size_t l = 1; l < c.layers.size(); ++l) out.hidden_states.push_back(c.layers[l].x);
    out.hidden_states.push_back(c.out);
  }
  if (options.keep_attention) {
    for (auto& lc : c.layers) out.attention.push_back(lc.probs);
  }
  return out;
}

template <class T>
std::vector<ForwardOutput<T>> forward_batch(const Parameters<T>& params,
                                            std::span<const TrainingExample> examples) {
  std::vector<ForwardOutput<T>> out(examples.size());
  const auto n = static_cast<std::ptrdiff_t>(examples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = forward(params, examples[static_cast<std::size_t>(i)], Mode::kEval);
  }
  return out;
}

template <class T>
LossBreakdown<T> loss(const ForwardOutput<T>& output, const TrainingExample& example) {
  LossBreakdown<T> r;
  T mlm_sum = 0;
  for (std::size_t i = 0; i < output.mlm_positions.size(); ++i) {
    const auto label = example.mlm_labels[output.mlm_positions[i]];
    if (label == kNoLabel) continue;
    const auto logits = output.logits_at(i);
    mlm_sum += log_sum_exp(logits) - logits[static_cast<std::size_t>(label)];
    ++r.mlm_count;
    if (std::max_element(logits.begin(), logits.end()) - logits.begin() == label) ++r.mlm_correct;
  }
  const auto expected = labelled_positions(example).size();
  if (expected == 0) throw ConfigError("example has no labelled MLM positions");
  if (r.mlm_count != expected) throw ConfigError("forward output is missing logits for labelled positions");
  r.mlm = mlm_sum / static_cast<T>(r.mlm_count);
  const auto cls = static_cast<std::size_t>(example.pair_label);
  r.pair = log_sum_exp(std::span<const T>(output.pair_logits)) - output.pair_logits[cls];
  r.pair_correct = output.pair_logits[cls] > output.pair_logits[1 - cls];
  r.total = r.mlm + r.pair;
  return r;
}

template <class T>
LossBreakdown<T> forward_backward(const Parameters<T>& params, const TrainingExample& example,
                                  Mode mode, Rng* dropout_rng, Parameters<T>& grads, T scale) {
  Cache<T> c;
  auto positions = labelled_positions(example);
  if (positions.empty()) throw ConfigError("example has no labelled MLM positions");
  run_forward(params, example, mode, dropout_rng, positions, c);

  ForwardOutput<T> out;
  out.length = c.L;
  out.vocab_size = static_cast<std::size_t>(params.config().vocab_size);
  out.mlm_positions = c.positions;
  out.pair_logits = c.pair_logits;
  mlm_logits(params, c, out.mlm_logits);
  const auto result = loss(out, example);

  // d(mean CE)/dlogits = (softmax - onehot) / count, times the batch scale.
  const std::size_t V = out.vocab_size;
  const std::size_t n = c.positions.size();
  std::vector<T>& dlogits = out.mlm_logits;
  const T per_token = scale / static_cast<T>(n);
  for (std::size_t r = 0; r < n; ++r) {
    T* row = dlogits.data() + r * V;
    const T lse = log_sum_exp(std::span<const T>(row, V));
    for (std::size_t v = 0; v < V; ++v) row[v] = std::exp(row[v] - lse) * per_token;
    row[static_cast<std::size_t>(example.mlm_labels[c.positions[r]])] -= per_token;
  }
  std::array<T, 2> dpair{};
  const T lse = log_sum_exp(std::span<const T>(c.pair_logits));
  for (std::size_t o = 0; o < 2; ++o) dpair[o] = std::exp(c.pair_logits[o] - lse) * scale;
  dpair[static_cast<std::size_t>(example.pair_label)] -= scale;

  run_backward(params, example, c, dlogits, dpair, grads);
  return result;
}

template <class T>
T positive_log_prob(const ForwardOutput<T>& output) {
  return output.pair_logits[1] - log_sum_exp(std::span<const T>(output.pair_logits));
}

#define RESCORE_INSTANTIATE(T)                                                                        \
  template class Parameters<T>;                                                                       \
  template Parameters<T> init_parameters<T>(const ModelConfig&, std::uint64_t);                       \
  template ForwardOutput<T> forward<T>(const Parameters<T>&, const TrainingExample&, Mode, Rng*,      \
                                       const ForwardOptions&);                                        \
  template std::vector<ForwardOutput<T>> forward_batch<T>(const Parameters<T>&,                       \
                                                          std::span<const TrainingExample>);          \
  template LossBreakdown<T> loss<T>(const ForwardOutput<T>&, const TrainingExample&);                 \
  template LossBreakdown<T> forward_backward<T>(const Parameters<T>&, const TrainingExample&, Mode,   \
                                                Rng*, Parameters<T>&, T);                             \
  template T positive_log_prob<T>(const ForwardOutput<T>&);

RESCORE_INSTANTIATE(float)
RESCORE_INSTANTIATE(double)

}  // namespace rescore
