// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <omp.h>

#include <cmath>

#include "doctest.h"
#include "rescore/error.hpp"
#include "rescore/io.hpp"
#include "rescore/synthetic.hpp"
#include "rescore/trainer.hpp"
#include "test_util.hpp"

using namespace rescore;

namespace {

struct Fixture {
  Vocabulary vocab;
  std::vector<TrainingExample> examples;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    SyntheticOptions so;
    so.target_bytes = 40000;
    so.seed = 4;
    const auto corpus = build_sentence_corpus(generate_corpus(so), {});
    VocabTrainingOptions vo;
    vo.target_size = 150;
    Fixture out{train_vocab(corpus, vo), {}};
    ExampleBuildOptions eo;
    eo.sampler.seed = 9;
    out.examples = make_examples(corpus, out.vocab, eo);
    out.examples.resize(200);
    return out;
  }();
  return f;
}

TrainOptions tiny_options() {
  TrainOptions o;
  o.model.layers = 1;
  o.model.heads = 2;
  o.model.hidden = 16;
  o.model.ffn_dim = 32;
  o.model.vocab_size = static_cast<int>(fixture().vocab.size());
  o.optimizer.batch_size = 16;
  o.optimizer.max_lr = 1e-3;
  o.strict_grid = false;
  o.seed = 21;
  return o;
}

bool same_params(const Parameters<float>& a, const Parameters<float>& b) {
  for (std::size_t i = 0; i < a.tensors().size(); ++i) {
    if (a.tensors()[i].data != b.tensors()[i].data) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  const OptimizerConfig cfg;
  const std::size_t T = 1000;
  CHECK(warmup_steps(T, cfg) == 100);
  CHECK(warmup_steps(7, cfg) == 1);
  CHECK(lr_at(0, T, cfg) == cfg.initial_lr);
  CHECK(lr_at(100, T, cfg) == cfg.max_lr);
  CHECK(lr_at(T, T, cfg) == doctest::Approx(cfg.min_lr).epsilon(1e-12));
  CHECK(lr_at(50, T, cfg) == doctest::Approx(0.5 * (cfg.initial_lr + cfg.max_lr)).epsilon(1e-12));
  // Cosine midpoint of the decay phase.
  CHECK(lr_at(550, T, cfg) == doctest::Approx(0.5 * (cfg.max_lr + cfg.min_lr)).epsilon(1e-12));
  for (std::size_t s = 1; s <= T; ++s) {
    const double a = lr_at(s - 1, T, cfg), b = lr_at(s, T, cfg);
    if (s <= 100) CHECK(b > a);
    else CHECK(b <= a);
    CHECK(std::abs(b - a) < 2e-6);  // no jumps
  }
  CHECK_THROWS_AS(lr_at(T + 1, T, cfg), ConfigError);
  CHECK_THROWS_AS(lr_at(0, 0, cfg), ConfigError);
}

TEST_CASE("optimizer config validation and json") {
  OptimizerConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 256;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 64;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(c.validate(false));
  c.max_lr = 3e-4;
  CHECK(OptimizerConfig::from_json(c.to_json()) == c);
}

TEST_CASE("adamw closed form and a two-step trace") {
  OptimizerConfig cfg;
  cfg.epsilon = 1e-8;
  std::vector<double> p = {0.5, -0.25, 0.0}, g = {0.2, -3.0, 0.0}, m(3, 0), v(3, 0);
  const auto p0 = p;
  adamw_update<double>(p, g, m, v, 1, 1e-3, cfg, true);
  for (std::size_t i = 0; i < 3; ++i) {
    const double expect = p0[i] - 1e-3 * (g[i] / (std::abs(g[i]) + 1e-8) + 0.01 * p0[i]);
    CHECK(std::abs(p[i] - expect) < 1e-15);
  }
  // Independent recurrence for step 2 without decay.
  const std::vector<double> g2 = {-0.1, 1.0, 0.3};
  std::vector<double> q = p, mq = m, vq = v;
  adamw_update<double>(q, g2, mq, vq, 2, 5e-4, cfg, false);
  for (std::size_t i = 0; i < 3; ++i) {
    const double m1 = 0.1 * g[i], v1 = 0.02 * g[i] * g[i];
    const double m2 = 0.9 * m1 + 0.1 * g2[i], v2 = 0.98 * v1 + 0.02 * g2[i] * g2[i];
    const double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.98 * 0.98);
    CHECK(std::abs(mq[i] - m2) < 1e-15);
    CHECK(std::abs(vq[i] - v2) < 1e-15);
    CHECK(std::abs(q[i] - (p[i] - 5e-4 * mh / (std::sqrt(vh) + 1e-8))) < 1e-12);
  }
  CHECK_THROWS_AS(adamw_update<double>(p, g, m, v, 0, 1e-3, cfg, true), ConfigError);
}

TEST_CASE("adamw_step skips decay on biases and norms and rejects non-finite gradients") {
  ModelConfig mc;
  mc.layers = 1;
  mc.hidden = 8;
  mc.heads = 2;
  mc.ffn_dim = 8;
  mc.vocab_size = 10;
  auto p = init_parameters<double>(mc, 1);
  Parameters<double> g(mc);
  AdamState<double> st(mc);
  const auto before = p;
  adamw_step(p, g, st, 1, 0.1, OptimizerConfig{});
  CHECK(p.layer(0, Parameters<double>::kLn1Gamma).data == before.layer(0, Parameters<double>::kLn1Gamma).data);
  CHECK(p.layer(0, Parameters<double>::kW1).data[0] ==
        doctest::Approx(before.layer(0, Parameters<double>::kW1).data[0] * (1 - 0.1 * 0.01)).epsilon(1e-12));
  g.layer(0, Parameters<double>::kB2).data[1] = std::nan("");
  try {
    adamw_step(p, g, st, 2, 0.1, OptimizerConfig{});
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(p.layer(0, Parameters<double>::kB2).name) != std::string::npos);
  }
}

TEST_CASE("step count, short final batch and batch-mean losses") {
  const auto& f = fixture();
  auto o = tiny_options();
  CHECK(planned_steps(200, o) == 13);
  const auto full = train(f.examples, o);
  REQUIRE(full.history.size() == 13);
  CHECK(full.step == 13);
  CHECK(full.history.back().lr == doctest::Approx(o.optimizer.min_lr).epsilon(1e-12));

  // Reproduce the final step's loss from the parameters after 12 steps: it is
  // the mean over the last 8 examples.
  o.stop_after = 12;
  const auto part = train(f.examples, o);
  double total = 0;
  for (std::size_t i = 192; i < 200; ++i) total += loss(forward(part.params, f.examples[i], Mode::kEval), f.examples[i]).total;
  CHECK(full.history.back().total == doctest::Approx(total / 8).epsilon(1e-5));

  // And the first update against a hand-rolled batch-mean step.
  o.stop_after = 1;
  const auto one = train(f.examples, o);
  auto p = init_parameters<float>(o.model, mix_seed(o.seed, "init"));
  Parameters<float> g(o.model);
  for (std::size_t i = 0; i < 16; ++i) forward_backward<float>(p, f.examples[i], Mode::kEval, nullptr, g, 1.0f / 16);
  AdamState<float> st(o.model);
  adamw_step(p, g, st, 1, lr_at(1, 13, o.optimizer), o.optimizer);
  for (std::size_t t = 0; t < p.tensors().size(); ++t) {
    for (std::size_t i = 0; i < p.tensors()[t].size(); ++i) {
      CHECK(std::abs(p.tensors()[t].data[i] - one.params.tensors()[t].data[i]) < 1e-6);
    }
  }
}

TEST_CASE("training is deterministic and independent of the thread count") {
  const auto& f = fixture();
  auto o = tiny_options();
  o.model.ffn_dropout = 0.1;
  o.steps_override = 4;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto a = train(f.examples, o);
  omp_set_num_threads(4);
  const auto b = train(f.examples, o);
  omp_set_num_threads(saved);
  CHECK(a.history == b.history);
  CHECK(same_params(a.params, b.params));
  o.seed = 22;
  CHECK(train(f.examples, o).history != a.history);
}

TEST_CASE("steps_override cycles through the data") {
  const auto& f = fixture();
  auto o = tiny_options();
  o.steps_override = 30;
  const auto c = train(std::span(f.examples).first(40), o);
  CHECK(c.history.size() == 30);
  CHECK(c.total_steps == 30);
}

TEST_CASE("token ids beyond the vocabulary are rejected") {
  auto o = tiny_options();
  o.model.vocab_size = 20;
  CHECK_THROWS_AS(train(fixture().examples, o), DataError);
  CHECK_THROWS_AS(train(std::span<const TrainingExample>{}, tiny_options()), DataError);
}

TEST_CASE("checkpoint round trip is byte-identical") {
  testing::TempDir dir("ckpt");
  auto o = tiny_options();
  o.steps_override = 3;
  const auto ck = train(fixture().examples, o);
  const std::string bytes = serialize_checkpoint(ck);
  const auto back = deserialize_checkpoint(bytes, "mem");
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.history == ck.history);
  CHECK(same_params(back.params, ck.params));
  save_checkpoint(ck, dir / "a.ckpt");
  CHECK(io::read_file(dir / "a.ckpt") == bytes);
  CHECK_NOTHROW(load_checkpoint(dir / "a.ckpt", &o.model));

  auto other = o.model;
  other.vocab_size += 1;
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt", &other), ConfigError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 5), "t"), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 6), "t"), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x", "t"), DataError);
  std::string bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad, "t"), DataError);
  bad = bytes;
  bad[4] = 2;
  CHECK_THROWS_AS(deserialize_checkpoint(bad, "t"), DataError);
  try {
    load_checkpoint(dir / "missing.ckpt");
    FAIL("expected an error");
  } catch (const MissingDependency& e) {
    CHECK(std::string(e.what()).find("run pretrain first") != std::string::npos);
  }
}

TEST_CASE("resume matches an unbroken run") {
  testing::TempDir dir("resume");
  const auto& f = fixture();
  auto o = tiny_options();
  o.model.ffn_dropout = 0.1;
  const auto full = train(f.examples, o);
  o.stop_after = 5;
  save_checkpoint(train(f.examples, o), dir / "half.ckpt");
  const auto half = load_checkpoint(dir / "half.ckpt");
  CHECK(half.step == 5);
  o.stop_after = 0;
  const auto resumed = train(f.examples, o, &half);
  CHECK(resumed.history == full.history);
  CHECK(same_params(resumed.params, full.params));
  CHECK(serialize_checkpoint(resumed) == serialize_checkpoint(full));

  o.seed = 99;
  CHECK_THROWS_AS(train(f.examples, o, &half), ConfigError);
}
