// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rescore/model.hpp"
#include "rescore/pretrain_examples.hpp"

namespace rescore {

/// AdamW and schedule settings; defaults are the full-size training setup.
struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-12;
  double weight_decay = 0.01;
  double initial_lr = 1e-6;
  double max_lr = 1e-4;
  double min_lr = 1e-6;
  double warmup_ratio = 0.10;
  int batch_size = 128;
  int epochs = 1;
  /// Global gradient-norm clipping; 0 disables it.
  double clip_norm = 0.0;

  void validate(bool strict_grid = true) const;
  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& j);
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// Number of warmup steps, round(warmup_ratio * total_steps).
std::size_t warmup_steps(std::size_t total_steps, const OptimizerConfig& cfg);

/// Linear warmup from initial_lr to max_lr over [0, W], then cosine decay to
/// min_lr at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, const OptimizerConfig& cfg);

/// One AdamW update of a single tensor. `step` counts updates from 1.
template <class T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                  std::size_t step, double lr, const OptimizerConfig& cfg, bool decay);

template <class T>
struct AdamState {
  Parameters<T> m;
  Parameters<T> v;
  explicit AdamState(const ModelConfig& c) : m(c), v(c) {}
};

/// AdamW over every tensor; biases and layer norms are not decayed. Throws
/// DataError naming the tensor when a gradient is not finite.
template <class T>
void adamw_step(Parameters<T>& params, const Parameters<T>& grads, AdamState<T>& state,
                std::size_t step, double lr, const OptimizerConfig& cfg);

struct StepRecord {
  double lr = 0;
  double total = 0;
  double mlm = 0;
  double pair = 0;
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelConfig model;
  OptimizerConfig optimizer;
  std::string objective = "nsp";
  std::uint64_t seed = 0;
  std::size_t step = 0;         // optimizer updates completed
  std::size_t total_steps = 0;  // schedule length
  Parameters<float> params;
  std::optional<AdamState<float>> moments;
  std::vector<StepRecord> history;
};

struct TrainOptions {
  ModelConfig model;
  OptimizerConfig optimizer;
  std::string objective = "nsp";
  std::uint64_t seed = 0;
  /// Caps the number of optimizer steps (desk scale); 0 runs the full epoch.
  std::size_t steps_override = 0;
  /// Stop after this many completed steps (0 = run to the end). The schedule
  /// still spans the full run, so training can be resumed later.
  std::size_t stop_after = 0;
  bool strict_grid = true;
  std::function<void(std::size_t step, const StepRecord&)> on_step;
};

/// Number of optimizer steps for `examples` examples.
std::size_t planned_steps(std::size_t examples, const TrainOptions& options);

/// One pass over `examples` in order with fixed-size batches (the last short
/// batch is kept). Gradients are the batch mean, reduced in index order.
/// Passing `resume` continues a run stopped with `stop_after`.
Checkpoint train(std::span<const TrainingExample> examples, const TrainOptions& options,
                 const Checkpoint* resume = nullptr);

/// Reads every shard, in order, and trains on the concatenation.
Checkpoint train(std::span<const std::filesystem::path> shards, const TrainOptions& options);

/// SHA-256 of the canonical JSON of a model config.
std::string config_hash(const ModelConfig& config);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
/// `expected`, when given, must hash equal to the stored model config.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);
Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& origin,
                                  const ModelConfig* expected = nullptr);

}  // namespace rescore
