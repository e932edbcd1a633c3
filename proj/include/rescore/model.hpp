// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rescore/pretrain_examples.hpp"
#include "rescore/rng.hpp"

namespace rescore {

/// Encoder architecture. The defaults are the full-size model; layers and
/// ffn_dropout are restricted to the experiment grid unless `strict_grid` is
/// off in validate().
struct ModelConfig {
  int layers = 4;
  int heads = 8;
  int hidden = 512;
  int ffn_dim = 2048;
  int max_positions = 256;
  int vocab_size = 8000;
  double ffn_dropout = 0.0;
  int segment_types = 2;

  void validate(bool strict_grid = true) const;
  int head_dim() const { return hidden / heads; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Weights and embeddings are decayed by AdamW; biases and layer norms are not.
enum class ParamKind { kWeight, kEmbedding, kBias, kNorm };

inline bool decays(ParamKind k) { return k == ParamKind::kWeight || k == ParamKind::kEmbedding; }

template <class T>
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  ParamKind kind = ParamKind::kWeight;
  std::vector<T> data;

  std::size_t size() const { return data.size(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
};

/// Named parameter tensors in a fixed order derived from the config:
/// embeddings (token, position, segment), 15 tensors per layer, then the MLM
/// and pair heads. The MLM output projection reuses the token embedding.
/// There is no key bias: it shifts every score in a softmax row equally and
/// so never changes the output.
template <class T>
class Parameters {
 public:
  enum Global : std::size_t { kTokEmb = 0, kPosEmb, kSegEmb, kNumEmbeddings };
  enum Layer : std::size_t {
    kWq = 0, kBq, kWk, kWv, kBv, kWo, kBo,
    kLn1Gamma, kLn1Beta, kW1, kB1, kW2, kB2, kLn2Gamma, kLn2Beta, kPerLayer
  };
  enum Head : std::size_t { kMlmW = 0, kMlmB, kMlmLnGamma, kMlmLnBeta, kMlmBias, kPairW, kPairB, kNumHead };

  Parameters() = default;
  /// Zero-filled tensors with the config's shapes.
  explicit Parameters(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::vector<Tensor<T>>& tensors() { return tensors_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }

  Tensor<T>& global(Global g) { return tensors_[g]; }
  const Tensor<T>& global(Global g) const { return tensors_[g]; }
  Tensor<T>& layer(std::size_t l, Layer t) { return tensors_[kNumEmbeddings + l * kPerLayer + t]; }
  const Tensor<T>& layer(std::size_t l, Layer t) const { return tensors_[kNumEmbeddings + l * kPerLayer + t]; }
  Tensor<T>& head(Head h) { return tensors_[head_base() + h]; }
  const Tensor<T>& head(Head h) const { return tensors_[head_base() + h]; }

  std::size_t parameter_count() const;
  void zero();

  template <class U>
  Parameters<U> cast() const {
    Parameters<U> out(config_);
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      for (std::size_t k = 0; k < tensors_[i].data.size(); ++k) {
        out.tensors()[i].data[k] = static_cast<U>(tensors_[i].data[k]);
      }
    }
    return out;
  }

 private:
  std::size_t head_base() const {
    return kNumEmbeddings + static_cast<std::size_t>(config_.layers) * kPerLayer;
  }

  ModelConfig config_;
  std::vector<Tensor<T>> tensors_;
};

/// Weights ~ N(0, 0.02) clipped to +-0.04, biases and shifts 0, scales 1. Each
/// tensor draws from its own stream keyed by (seed, name), so adding layers
/// leaves existing layers' initial values unchanged.
template <class T>
Parameters<T> init_parameters(const ModelConfig& config, std::uint64_t seed);

enum class Mode { kTrain, kEval };

struct ForwardOptions {
  /// Positions that get MLM logits. Empty means every non-PAD position.
  std::vector<std::size_t> mlm_positions;
  /// With no mlm_positions, compute no MLM logits at all.
  bool skip_mlm = false;
  bool keep_hidden_states = false;
  bool keep_attention = false;
};

template <class T>
struct ForwardOutput {
  std::size_t length = 0;  // non-PAD positions; PAD rows are never computed
  std::size_t vocab_size = 0;
  std::vector<std::size_t> mlm_positions;
  std::vector<T> mlm_logits;  // mlm_positions.size() x vocab_size
  std::array<T, 2> pair_logits{};
  std::vector<std::vector<T>> hidden_states;  // per layer, length x hidden
  std::vector<std::vector<T>> attention;      // per layer, heads x length x length

  std::span<const T> logits_at(std::size_t i) const {
    return {mlm_logits.data() + i * vocab_size, vocab_size};
  }
};

template <class T>
struct LossBreakdown {
  T total = 0;
  T mlm = 0;
  T pair = 0;
  std::size_t mlm_count = 0;
  std::size_t mlm_correct = 0;
  bool pair_correct = false;
};

/// Runs the encoder over positions [0, attention_len). Keys beyond
/// attention_len are excluded from attention, which is equivalent to an
/// additive -inf mask on PAD keys. `dropout_rng` is only read in train mode
/// with ffn_dropout > 0.
template <class T>
ForwardOutput<T> forward(const Parameters<T>& params, const TrainingExample& example, Mode mode,
                         Rng* dropout_rng = nullptr, const ForwardOptions& options = {});

/// Forward over a batch; outputs follow input order.
template <class T>
std::vector<ForwardOutput<T>> forward_batch(const Parameters<T>& params,
                                            std::span<const TrainingExample> examples);

/// Mean cross-entropy over labelled MLM positions plus pair cross-entropy.
/// The output must carry logits for every labelled position.
template <class T>
LossBreakdown<T> loss(const ForwardOutput<T>& output, const TrainingExample& example);

/// Forward, loss and backward for one example. Gradients are scaled by
/// `scale` and added into `grads`.
template <class T>
LossBreakdown<T> forward_backward(const Parameters<T>& params, const TrainingExample& example,
                                  Mode mode, Rng* dropout_rng, Parameters<T>& grads, T scale);

/// Labelled positions of an example, ascending.
std::vector<std::size_t> labelled_positions(const TrainingExample& example);

/// log softmax(pair_logits)[positive].
template <class T>
T positive_log_prob(const ForwardOutput<T>& output);

}  // namespace rescore

namespace rescore {

struct GradCheckOptions {
  double step = 1e-3;
  std::size_t coordinates = 256;
  /// Forces train mode with dropout; the check is then skipped.
  bool force_dropout = false;
};

struct GradCheckResult {
  bool skipped = false;
  std::string message;
  double max_relative_error = 0;
  std::size_t coordinates = 0;
  std::size_t groups_covered = 0;
  std::string worst_coordinate;
};

/// The small architecture used for gradient checks.
ModelConfig tiny_model_config();

/// Compares analytic gradients against five-point central finite differences in double
/// precision on a seeded synthetic example and O(1)-scale random parameters.
/// Coordinates are sampled from
/// every parameter tensor. Relative error is |g - fd| / max(|g|, |fd|, 1e-8).
GradCheckResult grad_check(const ModelConfig& config, std::uint64_t seed,
                           const GradCheckOptions& options = {});

}  // namespace rescore
