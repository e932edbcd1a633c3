// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rescore/trainer.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rescore/error.hpp"

namespace rescore {

void OptimizerConfig::validate(bool strict_grid) const {
  auto fail = [](const std::string& m) { throw ConfigError("optimizer: " + m); };
  if (!(warmup_ratio > 0 && warmup_ratio < 1)) fail("warmup_ratio must be in (0, 1)");
  if (!(min_lr > 0 && min_lr <= initial_lr && initial_lr <= max_lr)) {
    fail("learning rates must satisfy 0 < min_lr <= initial_lr <= max_lr");
  }
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("betas must be in [0, 1)");
  if (!(epsilon > 0)) fail("epsilon must be positive");
  if (weight_decay < 0) fail("weight_decay must be >= 0");
  if (clip_norm < 0) fail("clip_norm must be >= 0");
  if (epochs != 1) fail("epochs must be 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (strict_grid && batch_size != 128 && batch_size != 256) {
    fail("batch_size must be 128 or 256 (pass --unsafe-grid for other values)");
  }
}

nlohmann::json OptimizerConfig::to_json() const {
  return {{"beta1", beta1},           {"beta2", beta2},       {"epsilon", epsilon},
          {"weight_decay", weight_decay}, {"initial_lr", initial_lr}, {"max_lr", max_lr},
          {"min_lr", min_lr},         {"warmup_ratio", warmup_ratio}, {"batch_size", batch_size},
          {"epochs", epochs},         {"clip_norm", clip_norm}};
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& j) {
  OptimizerConfig c;
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.initial_lr = j.value("initial_lr", c.initial_lr);
  c.max_lr = j.value("max_lr", c.max_lr);
  c.min_lr = j.value("min_lr", c.min_lr);
  c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  return c;
}

std::size_t warmup_steps(std::size_t total_steps, const OptimizerConfig& cfg) {
  return static_cast<std::size_t>(std::llround(cfg.warmup_ratio * static_cast<double>(total_steps)));
}

double lr_at(std::size_t step, std::size_t total_steps, const OptimizerConfig& cfg) {
  if (total_steps == 0) throw ConfigError("lr_at: total_steps must be > 0");
  if (step > total_steps) {
    throw ConfigError("lr_at: step " + std::to_string(step) + " > total_steps " +
                      std::to_string(total_steps));
  }
  const std::size_t w = warmup_steps(total_steps, cfg);
  if (step <= w) {
    if (w == 0) return cfg.max_lr;
    if (step == w) return cfg.max_lr;
    return cfg.initial_lr + (cfg.max_lr - cfg.initial_lr) * static_cast<double>(step) / static_cast<double>(w);
  }
  if (step == total_steps) return cfg.min_lr;
  const double t = static_cast<double>(step - w) / static_cast<double>(total_steps - w);
  return cfg.min_lr + 0.5 * (cfg.max_lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * t));
}

template <class T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                  std::size_t step, double lr, const OptimizerConfig& cfg, bool decay) {
  if (step == 0) throw ConfigError("adamw: step counts from 1");
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw ConfigError("adamw: shape mismatch");
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const double wd = decay ? cfg.weight_decay : 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double p = param[i];
    const double update = (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon) + wd * p;
    param[i] = static_cast<T>(p - lr * update);
  }
}

template <class T>
void adamw_step(Parameters<T>& params, const Parameters<T>& grads, AdamState<T>& state,
                std::size_t step, double lr, const OptimizerConfig& cfg) {
  auto& ps = params.tensors();
  const auto& gs = grads.tensors();
  if (gs.size() != ps.size() || state.m.tensors().size() != ps.size()) {
    throw ConfigError("adamw: parameter layout mismatch");
  }
  for (std::size_t t = 0; t < ps.size(); ++t) {
    for (T g : gs[t].data) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw DataError("non-finite gradient in parameter group " + ps[t].name);
      }
    }
  }
  for (std::size_t t = 0; t < ps.size(); ++t) {
    adamw_update<T>(ps[t].data, gs[t].data, state.m.tensors()[t].data, state.v.tensors()[t].data,
                    step, lr, cfg, decays(ps[t].kind));
  }
}

template void adamw_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                  std::span<float>, std::size_t, double, const OptimizerConfig&, bool);
template void adamw_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                   std::span<double>, std::size_t, double, const OptimizerConfig&, bool);
template void adamw_step<float>(Parameters<float>&, const Parameters<float>&, AdamState<float>&,
                                std::size_t, double, const OptimizerConfig&);
template void adamw_step<double>(Parameters<double>&, const Parameters<double>&, AdamState<double>&,
                                 std::size_t, double, const OptimizerConfig&);

namespace {

std::size_t batches_per_epoch(std::size_t n, int batch) {
  const auto b = static_cast<std::size_t>(batch);
  return (n + b - 1) / b;
}

void add_into(Parameters<float>& acc, const Parameters<float>& g) {
  for (std::size_t t = 0; t < acc.tensors().size(); ++t) {
    auto& a = acc.tensors()[t].data;
    const auto& b = g.tensors()[t].data;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  }
}

void clip(Parameters<float>& g, double max_norm) {
  double sq = 0;
  for (const auto& t : g.tensors()) {
    for (float x : t.data) sq += static_cast<double>(x) * x;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const auto f = static_cast<float>(max_norm / norm);
  for (auto& t : g.tensors()) {
    for (float& x : t.data) x *= f;
  }
}

}  // namespace

std::size_t planned_steps(std::size_t examples, const TrainOptions& options) {
  if (examples == 0) throw DataError("no training examples");
  const std::size_t natural = batches_per_epoch(examples, options.optimizer.batch_size) *
                              static_cast<std::size_t>(options.optimizer.epochs);
  return options.steps_override > 0 ? options.steps_override : natural;
}

Checkpoint train(std::span<const TrainingExample> examples, const TrainOptions& options,
                 const Checkpoint* resume) {
  options.model.validate(options.strict_grid);
  options.optimizer.validate(options.strict_grid);
  objective_from_string(options.objective);
  if (examples.empty()) throw DataError("train: no examples (empty shard set)");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    for (std::size_t p = 0; p < examples[i].attention_len; ++p) {
      if (examples[i].ids[p] < 0 || examples[i].ids[p] >= options.model.vocab_size) {
        throw DataError("example " + std::to_string(i) + " position " + std::to_string(p) +
                        ": token id " + std::to_string(examples[i].ids[p]) +
                        " >= vocab_size " + std::to_string(options.model.vocab_size));
      }
    }
  }

  const std::size_t total = planned_steps(examples.size(), options);
  const std::size_t per_epoch = batches_per_epoch(examples.size(), options.optimizer.batch_size);
  const auto B = static_cast<std::size_t>(options.optimizer.batch_size);

  Checkpoint ck;
  if (resume != nullptr) {
    if (!(resume->model == options.model) || !(resume->optimizer == options.optimizer) ||
        resume->seed != options.seed || resume->objective != options.objective ||
        resume->total_steps != total) {
      throw ConfigError("resume: checkpoint was written by a different run configuration");
    }
    if (!resume->moments) throw ConfigError("resume: checkpoint has no optimizer moments");
    ck = *resume;
  } else {
    ck.model = options.model;
    ck.optimizer = options.optimizer;
    ck.objective = options.objective;
    ck.seed = options.seed;
    ck.total_steps = total;
    ck.params = init_parameters<float>(options.model, mix_seed(options.seed, "init"));
    ck.moments.emplace(options.model);
  }

  const std::size_t end = options.stop_after > 0 ? std::min(total, options.stop_after) : total;
  const int threads = std::max(1, omp_get_max_threads());
  Parameters<float> acc(options.model);
  std::vector<Parameters<float>> slots(static_cast<std::size_t>(threads), Parameters<float>(options.model));
  const Mode mode = Mode::kTrain;
  const std::uint64_t dropout_base = mix_seed(options.seed, "dropout");

  for (std::size_t step = ck.step + 1; step <= end; ++step) {
    const std::size_t epoch_batch = (step - 1) % per_epoch;
    const std::size_t epoch = (step - 1) / per_epoch;
    const std::size_t lo = epoch_batch * B;
    const std::size_t hi = std::min(examples.size(), lo + B);
    const std::size_t n = hi - lo;
    const float scale = 1.0f / static_cast<float>(n);

    acc.zero();
    double sum_total = 0, sum_mlm = 0, sum_pair = 0;
    // Each example's gradient lands in its own zeroed slot and is then added
    // to the accumulator in index order, so the sum does not depend on the
    // thread count.
    for (std::size_t wave = lo; wave < hi; wave += slots.size()) {
      const std::size_t wn = std::min(slots.size(), hi - wave);
      std::vector<LossBreakdown<float>> losses(wn);
      std::exception_ptr failure;
#pragma omp parallel for schedule(static) num_threads(static_cast<int>(wn)) if (wn > 1)
      for (std::size_t k = 0; k < wn; ++k) {
        try {
          slots[k].zero();
          const std::size_t idx = wave + k;
          Rng rng(mix_seed(dropout_base, epoch * examples.size() + idx));
          losses[k] = forward_backward<float>(ck.params, examples[idx], mode, &rng, slots[k], scale);
        } catch (...) {
#pragma omp critical
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
      for (std::size_t k = 0; k < wn; ++k) {
        add_into(acc, slots[k]);
        sum_total += losses[k].total;
        sum_mlm += losses[k].mlm;
        sum_pair += losses[k].pair;
      }
    }
    if (options.optimizer.clip_norm > 0) clip(acc, options.optimizer.clip_norm);
    const double lr = lr_at(step, total, options.optimizer);
    adamw_step<float>(ck.params, acc, *ck.moments, step, lr, options.optimizer);
    ck.step = step;
    StepRecord rec{lr, sum_total / static_cast<double>(n), sum_mlm / static_cast<double>(n),
                   sum_pair / static_cast<double>(n)};
    ck.history.push_back(rec);
    if (options.on_step) options.on_step(step, rec);
  }
  return ck;
}

Checkpoint train(std::span<const std::filesystem::path> shards, const TrainOptions& options) {
  if (shards.empty()) throw DataError("train: empty shard set");
  std::vector<TrainingExample> all;
  for (const auto& p : shards) {
    auto part = read_shard(p);
    all.insert(all.end(), part.begin(), part.end());
  }
  return train(std::span<const TrainingExample>(all), options);
}

}  // namespace rescore
