// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "rescore/error.hpp"
#include "rescore/kernels.hpp"
#include "rescore/model.hpp"

using namespace rescore;

namespace {

ModelConfig small_config(int layers = 2, double dropout = 0.0) {
  ModelConfig c;
  c.layers = layers;
  c.heads = 4;
  c.hidden = 32;
  c.ffn_dim = 64;
  c.max_positions = 64;
  c.vocab_size = 97;
  c.ffn_dropout = dropout;
  return c;
}

TrainingExample example(std::uint64_t seed, std::size_t a = 9, std::size_t b = 7) {
  Rng rng(seed);
  std::vector<TokenId> ta(a), tb(b);
  for (auto& t : ta) t = static_cast<TokenId>(5 + rng.uniform_index(92));
  for (auto& t : tb) t = static_cast<TokenId>(5 + rng.uniform_index(92));
  auto ex = *pack_pair(ta, tb, 64);
  ex.mlm_labels[2] = ex.ids[2];
  ex.ids[2] = Vocabulary::kMask;
  ex.mlm_labels[a + 3] = ex.ids[a + 3];
  ex.pair_label = PairLabel::kPositive;
  return ex;
}

template <class T>
bool same(const Parameters<T>& a, const Parameters<T>& b) {
  for (std::size_t i = 0; i < a.tensors().size(); ++i) {
    if (a.tensors()[i].data != b.tensors()[i].data) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config validation on the grid") {
  auto c = small_config(4);
  CHECK_NOTHROW(c.validate());
  c.layers = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(c.validate(false));
  c = small_config(4, 0.2);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config(4);
  c.heads = 5;
  CHECK_THROWS_AS(c.validate(false), ConfigError);
  CHECK(ModelConfig::from_json(small_config(8, 0.1).to_json()) == small_config(8, 0.1));
}

TEST_CASE("parameter layout and tied output embedding") {
  const auto c = small_config(3);
  Parameters<float> p(c);
  CHECK(p.tensors().size() == 3 + 15 * 3 + 7);
  std::size_t vocab_sized = 0;
  for (const auto& t : p.tensors()) {
    if (t.shape.size() == 2 && (t.shape[0] == 97 || t.shape[1] == 97)) ++vocab_sized;
  }
  CHECK(vocab_sized == 1);  // only the token embedding
  CHECK(p.head(Parameters<float>::kMlmBias).size() == 97);
}

TEST_CASE("init determinism and distribution") {
  ModelConfig c = small_config(4);
  c.hidden = 128;
  c.ffn_dim = 512;
  c.vocab_size = 2000;
  const auto a = init_parameters<float>(c, 5);
  CHECK(same(a, init_parameters<float>(c, 5)));
  CHECK(!same(a, init_parameters<float>(c, 6)));
  const auto& emb = a.global(Parameters<float>::kTokEmb).data;
  double sum = 0, sq = 0, mx = 0;
  for (float x : emb) {
    sum += x;
    sq += double(x) * x;
    mx = std::max(mx, std::abs(double(x)));
  }
  const double n = static_cast<double>(emb.size());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  CHECK(std::abs(sd - 0.02) <= 0.002);
  CHECK(mx <= 0.04 + 1e-7);
  for (std::size_t l = 0; l < 4; ++l) {
    for (float g : a.layer(l, Parameters<float>::kLn1Gamma).data) CHECK(g == 1.0f);
    for (float b : a.layer(l, Parameters<float>::kB1).data) CHECK(b == 0.0f);
  }
}

TEST_CASE("adding layers leaves existing initial values unchanged") {
  const auto p4 = init_parameters<double>(small_config(4), 9);
  const auto p8 = init_parameters<double>(small_config(8), 9);
  for (std::size_t t = 0; t < Parameters<double>::kPerLayer; ++t) {
    const auto lt = static_cast<Parameters<double>::Layer>(t);
    CHECK(p4.layer(0, lt).data == p8.layer(0, lt).data);
    CHECK(p4.layer(3, lt).data == p8.layer(3, lt).data);
  }
  CHECK(p4.global(Parameters<double>::kTokEmb).data == p8.global(Parameters<double>::kTokEmb).data);
}

TEST_CASE("zero parameters give uniform heads") {
  const auto c = small_config();
  Parameters<double> p(c);
  const auto ex = example(1);
  const auto out = forward(p, ex, Mode::kEval);
  const auto l = loss(out, ex);
  CHECK(l.mlm == doctest::Approx(std::log(97.0)).epsilon(1e-12));
  CHECK(l.pair == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(positive_log_prob(out) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("PAD content beyond attention_len never matters") {
  const auto p = init_parameters<double>(small_config(), 3);
  auto ex = example(2);
  const auto base = forward(p, ex, Mode::kEval);
  for (std::size_t i = ex.attention_len; i < ex.ids.size(); ++i) {
    ex.ids[i] = static_cast<TokenId>(5 + i % 50);
    ex.segments[i] = 1;
  }
  const auto other = forward(p, ex, Mode::kEval);
  CHECK(base.mlm_logits == other.mlm_logits);
  CHECK(base.pair_logits == other.pair_logits);
  CHECK(base.length == ex.attention_len);
}

TEST_CASE("eval determinism, dropout and train/eval agreement") {
  const auto ex = example(4);
  const auto p0 = init_parameters<double>(small_config(2, 0.0), 3);
  Rng r1(1);
  const auto e = forward(p0, ex, Mode::kEval);
  CHECK(forward(p0, ex, Mode::kEval).mlm_logits == e.mlm_logits);
  CHECK(forward(p0, ex, Mode::kTrain, &r1).mlm_logits == e.mlm_logits);

  const auto p1 = init_parameters<double>(small_config(2, 0.1), 3);
  CHECK(forward(p1, ex, Mode::kEval).mlm_logits == e.mlm_logits);
  Rng a(1), b(1), c(2);
  const auto ta = forward(p1, ex, Mode::kTrain, &a);
  CHECK(forward(p1, ex, Mode::kTrain, &b).mlm_logits == ta.mlm_logits);
  CHECK(forward(p1, ex, Mode::kTrain, &c).mlm_logits != ta.mlm_logits);
  CHECK(ta.mlm_logits != e.mlm_logits);
  CHECK_THROWS_AS(forward(p1, ex, Mode::kTrain, nullptr), ConfigError);
}

TEST_CASE("attention rows are distributions over non-PAD keys") {
  const auto p = init_parameters<double>(small_config(), 8);
  const auto ex = example(5);
  ForwardOptions o;
  o.keep_attention = true;
  o.keep_hidden_states = true;
  const auto out = forward(p, ex, Mode::kEval, nullptr, o);
  const std::size_t L = ex.attention_len;
  REQUIRE(out.attention.size() == 2);
  REQUIRE(out.attention[0].size() == 4 * L * L);
  CHECK(out.hidden_states[1].size() == L * 32);
  for (const auto& layer : out.attention) {
    for (std::size_t row = 0; row < 4 * L; ++row) {
      double s = 0;
      for (std::size_t k = 0; k < L; ++k) s += layer[row * L + k];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("float and double forward agree; backends agree") {
  const auto pd = init_parameters<double>(small_config(), 11);
  const auto pf = pd.cast<float>();
  const auto ex = example(6);
  const auto od = forward(pd, ex, Mode::kEval);
  const auto of = forward(pf, ex, Mode::kEval);
  for (std::size_t i = 0; i < od.mlm_logits.size(); ++i) {
    CHECK(std::abs(od.mlm_logits[i] - of.mlm_logits[i]) < 1e-4);
  }
  kernels::ScopedBackend ref(kernels::Backend::kReference);
  const auto oref = forward(pd, ex, Mode::kEval);
  for (std::size_t i = 0; i < od.mlm_logits.size(); ++i) {
    CHECK(std::abs(oref.mlm_logits[i] - od.mlm_logits[i]) < 1e-10);
  }
}

TEST_CASE("forward_backward accumulates scaled gradients") {
  const auto p = init_parameters<double>(small_config(), 12);
  const auto ex = example(7);
  Parameters<double> g1(p.config()), g2(p.config());
  const auto l1 = forward_backward(p, ex, Mode::kEval, nullptr, g1, 1.0);
  forward_backward(p, ex, Mode::kEval, nullptr, g2, 0.5);
  forward_backward(p, ex, Mode::kEval, nullptr, g2, 0.5);
  CHECK(l1.total == doctest::Approx(loss(forward(p, ex, Mode::kEval), ex).total).epsilon(1e-12));
  for (std::size_t t = 0; t < g1.tensors().size(); ++t) {
    for (std::size_t i = 0; i < g1.tensors()[t].size(); ++i) {
      CHECK(g1.tensors()[t].data[i] == doctest::Approx(g2.tensors()[t].data[i]).epsilon(1e-12));
    }
  }
  auto bad = ex;
  bad.mlm_labels.fill(kNoLabel);
  CHECK_THROWS_AS(forward_backward(p, bad, Mode::kEval, nullptr, g1, 1.0), ConfigError);
}

TEST_CASE("input validation") {
  const auto p = init_parameters<double>(small_config(), 1);
  auto ex = example(8);
  ex.ids[3] = 97;
  CHECK_THROWS_AS(forward(p, ex, Mode::kEval), DataError);
  ex = *pack_pair(std::vector<TokenId>(40, 7), std::vector<TokenId>(40, 8), 256);
  CHECK_THROWS_AS(forward(p, ex, Mode::kEval), ConfigError);  // longer than max_positions
}

TEST_CASE("finite-difference gradient check") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto r = grad_check(tiny_model_config(), seed);
    CHECK(!r.skipped);
    CHECK(r.coordinates >= 256);
    CHECK(r.groups_covered == Parameters<double>(tiny_model_config()).tensors().size());
    CHECK(r.max_relative_error < 1e-4);
  }
  GradCheckOptions o;
  o.force_dropout = true;
  CHECK(grad_check(tiny_model_config(), 1, o).skipped);
  auto c = tiny_model_config();
  c.ffn_dropout = 0.1;
  CHECK(grad_check(c, 1).skipped);
  o = {};
  o.step = 0;
  CHECK_THROWS_AS(grad_check(tiny_model_config(), 1, o), ConfigError);
}
