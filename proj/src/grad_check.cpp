// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "rescore/error.hpp"
#include "rescore/model.hpp"

namespace rescore {

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.layers = 2;
  c.heads = 4;
  c.hidden = 16;
  c.ffn_dim = 32;
  c.max_positions = 16;
  c.vocab_size = 50;
  c.ffn_dropout = 0.0;
  return c;
}

namespace {

TrainingExample synthetic_example(const ModelConfig& config, Rng& rng) {
  const std::size_t len = static_cast<std::size_t>(config.max_positions);
  const std::size_t len_a = (len - 3) / 2;
  const std::size_t len_b = len - 3 - len_a;
  std::vector<TokenId> a(len_a), b(len_b);
  const auto regular = static_cast<std::uint64_t>(config.vocab_size - Vocabulary::kNumSpecial);
  for (auto& t : a) t = Vocabulary::kNumSpecial + static_cast<TokenId>(rng.uniform_index(regular));
  for (auto& t : b) t = Vocabulary::kNumSpecial + static_cast<TokenId>(rng.uniform_index(regular));
  auto ex = *pack_pair(a, b, len);
  MaskingPolicy policy;
  policy.select_rate = 0.3;
  auto masked = mask_tokens(std::span<const TokenId>(ex.ids.data(), ex.attention_len), policy,
                            static_cast<std::size_t>(config.vocab_size), rng);
  std::copy(masked.ids.begin(), masked.ids.end(), ex.ids.begin());
  std::copy(masked.labels.begin(), masked.labels.end(), ex.mlm_labels.begin());
  ex.pair_label = rng.bernoulli(0.5) ? PairLabel::kPositive : PairLabel::kNegative;
  return ex;
}

// At the 0.02 init scale attention is almost uniform and the query/key
// gradients are ~1e-10, below finite-difference resolution. Checking at O(1)
// parameter scale exercises every path.
Parameters<double> check_parameters(const ModelConfig& config, Rng& rng) {
  Parameters<double> p(config);
  for (auto& t : p.tensors()) {
    const double fan_in = t.shape.size() == 2 && t.kind == ParamKind::kWeight
                              ? static_cast<double>(t.shape[0])
                              : 1.0;
    for (auto& v : t.data) {
      switch (t.kind) {
        case ParamKind::kWeight: v = rng.normal() / std::sqrt(fan_in); break;
        case ParamKind::kEmbedding: v = 0.5 * rng.normal(); break;
        case ParamKind::kBias: v = 0.1 * rng.normal(); break;
        case ParamKind::kNorm: v = (t.name.ends_with("gamma") ? 1.0 : 0.0) + 0.1 * rng.normal(); break;
      }
    }
  }
  return p;
}

}  // namespace

GradCheckResult grad_check(const ModelConfig& config, std::uint64_t seed,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0) || !std::isfinite(options.step)) {
    throw ConfigError("finite-difference step must be > 0");
  }
  config.validate(false);
  GradCheckResult result;
  if (options.force_dropout || config.ffn_dropout > 0.0) {
    result.skipped = true;
    result.message = "gradient check skipped: dropout makes the loss stochastic, so its gradient is undefined";
    return result;
  }

  Rng rng(mix_seed(seed, "grad-check"));
  const auto params = check_parameters(config, rng);
  const auto ex = synthetic_example(config, rng);

  Parameters<double> grads(config);
  const auto base = forward_backward<double>(params, ex, Mode::kEval, nullptr, grads, 1.0);
  if (!std::isfinite(base.total)) throw DataError("gradient check: non-finite loss");

  auto probe = params;
  const auto loss_at = [&](std::size_t t, std::size_t i, double value) {
    probe.tensors()[t].data[i] = value;
    const auto out = forward<double>(probe, ex, Mode::kEval, nullptr,
                                     ForwardOptions{labelled_positions(ex), false, false});
    const double l = loss(out, ex).total;
    if (!std::isfinite(l)) throw DataError("gradient check: non-finite loss");
    return l;
  };

  const std::size_t groups = params.tensors().size();
  const std::size_t per_group = std::max<std::size_t>(1, (options.coordinates + groups - 1) / groups);
  for (std::size_t t = 0; t < groups; ++t) {
    const auto& tensor = params.tensors()[t];
    for (std::size_t s = 0; s < per_group; ++s) {
      const std::size_t i = rng.uniform_index(tensor.size());
      const double orig = tensor.data[i];
      const double h = options.step;
      const double up2 = loss_at(t, i, orig + 2 * h);
      const double up = loss_at(t, i, orig + h);
      const double down = loss_at(t, i, orig - h);
      const double down2 = loss_at(t, i, orig - 2 * h);
      probe.tensors()[t].data[i] = orig;
      // Five-point central stencil; its O(h^4) truncation error stays far below
      // the O(h^2) error of the two-point form at the same step.
      const double fd = (-up2 + 8 * up - 8 * down + down2) / (12 * h);
      const double an = grads.tensors()[t].data[i];
      const double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      if (err > result.max_relative_error || result.worst_coordinate.empty()) {
        result.max_relative_error = std::max(result.max_relative_error, err);
        result.worst_coordinate = tensor.name + "[" + std::to_string(i) + "]";
      }
      ++result.coordinates;
    }
    ++result.groups_covered;
  }
  return result;
}

}  // namespace rescore
