// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "doctest.h"
#include "rescore/error.hpp"
#include "rescore/evalrescore.hpp"
#include "rescore/synthetic.hpp"

using namespace rescore;

namespace {

/// Scores via a plain function of (a, option); context is ignored for cloze.
class FnScorer : public Scorer {
 public:
  explicit FnScorer(std::function<double(std::string_view)> f) : f_(std::move(f)) {}
  double continuation(std::string_view, std::string_view o) override { return f_(o); }
  double cloze(std::string_view, std::string_view o) override { return f_(o); }

 private:
  std::function<double(std::string_view)> f_;
};

std::vector<PromptItem> labelled_items(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PromptItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    PromptItem it;
    it.id = "item-" + std::to_string(100000 + i);
    it.task = i % 2 ? Task::kEntailment : Task::kFaithfulness;
    it.context = "context " + std::to_string(i);
    const bool gold_a = rng.bernoulli(0.5);
    it.option_a = (gold_a ? "good " : "bad ") + std::to_string(i);
    it.option_b = (gold_a ? "bad " : "good ") + std::to_string(i);
    it.label = gold_a ? Choice::kA : Choice::kB;
    items.push_back(it);
  }
  return items;
}

bool is_good(std::string_view o) { return o.starts_with("good"); }

struct ModelFixture {
  Vocabulary vocab;
  Parameters<float> params;
};

const ModelFixture& model_fixture() {
  static const ModelFixture f = [] {
    SyntheticOptions so;
    so.target_bytes = 30000;
    const auto corpus = build_sentence_corpus(generate_corpus(so), {});
    VocabTrainingOptions vo;
    vo.target_size = 300;
    auto vocab = train_vocab(corpus, vo);
    ModelConfig c;
    c.layers = 2;
    c.heads = 2;
    c.hidden = 16;
    c.ffn_dim = 32;
    c.vocab_size = static_cast<int>(vocab.size());
    // Random weights well above init scale, so predictions depend on context.
    auto p = init_parameters<double>(c, 3);
    Rng rng(17);
    for (auto& t : p.tensors()) {
      for (auto& x : t.data) x += 0.3 * rng.normal();
    }
    return ModelFixture{std::move(vocab), p.cast<float>()};
  }();
  return f;
}

double log_softmax(std::span<const float> logits, std::size_t k) {
  double mx = -1e300;
  for (float x : logits) mx = std::max(mx, double(x));
  double s = 0;
  for (float x : logits) s += std::exp(double(x) - mx);
  return double(logits[k]) - mx - std::log(s);
}

}  // namespace

TEST_CASE("oracle, anti-oracle and constant stubs") {
  const auto items = labelled_items(200, 1);
  FnScorer oracle([](std::string_view o) { return is_good(o) ? 1.0 : 0.0; });
  auto r = evaluate_task(oracle, items);
  CHECK(r.mean_accuracy == 1.0);
  CHECK(r.items.size() == 200);
  FnScorer anti([](std::string_view o) { return is_good(o) ? 0.0 : 1.0; });
  CHECK(evaluate_task(anti, items).mean_accuracy == 0.0);
  FnScorer flat([](std::string_view) { return -2.5; });
  r = evaluate_task(flat, items);
  CHECK(r.mean_accuracy == 0.5);
  for (const auto& [task, s] : r.tasks) {
    CHECK(s.ties == s.items);
    CHECK(s.correct == 0);
  }
  FnScorer near([](std::string_view o) { return is_good(o) ? 1e-10 : 0.0; });
  CHECK(evaluate_task(near, items).mean_accuracy == 0.5);
}

TEST_CASE("random stub scores 0.5 over 10000 items") {
  const auto items = labelled_items(10000, 2);
  FnScorer rnd([](std::string_view o) {
    Rng rng(mix_seed(99, o));
    return rng.uniform();
  });
  const auto r = evaluate_task(rnd, items);
  CHECK(std::abs(r.mean_accuracy - 0.5) < 0.02);
}

TEST_CASE("choices are invariant under monotone transforms of the scores") {
  const auto items = labelled_items(300, 3);
  auto base = [](std::string_view o) { return double(mix_seed(1, o) % 1000) / 1000.0 - 0.5; };
  FnScorer s1(base);
  FnScorer s2([&](std::string_view o) { return std::exp(3 * base(o)) + 7; });
  const auto r1 = evaluate_task(s1, items), r2 = evaluate_task(s2, items);
  REQUIRE(r1.items.size() == r2.items.size());
  for (std::size_t i = 0; i < r1.items.size(); ++i) CHECK(r1.items[i].chosen == r2.items[i].chosen);
}

TEST_CASE("report ordering, json schema and csv") {
  auto items = labelled_items(6, 4);
  items[0].task = Task::kWinograd;
  items[0].context = "a {MASK} b";
  items[0].option_a = "good";
  items[0].option_b = "bad";
  items[0].label = Choice::kA;
  std::reverse(items.begin(), items.end());
  FnScorer oracle([](std::string_view o) { return is_good(o) ? 1.0 : 0.0; });
  const auto r = evaluate_task(oracle, items);
  CHECK(std::is_sorted(r.items.begin(), r.items.end(), [](auto& a, auto& b) { return a.id < b.id; }));
  REQUIRE(r.tasks.size() == 3);
  CHECK(r.tasks[0].first == Task::kFaithfulness);
  CHECK(r.tasks[2].first == Task::kWinograd);
  auto j = report_to_json(r);
  CHECK(validate_report(j).empty());
  j["tasks"]["winograd"]["accuracy"] = 0.25;
  CHECK(!validate_report(j).empty());
  j = report_to_json(r);
  j.erase("schema");
  CHECK(!validate_report(j).empty());
  const auto csv = report_to_csv(r);
  CHECK(csv.starts_with("task,items,correct,ties,accuracy\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("prompt parsing collects rejects") {
  const std::string text =
      "{\"cue\": \"Briefly,\", \"language\": \"de\"}\n"
      "{\"id\": \"x1\", \"task\": \"faithfulness\", \"context\": \"c\", \"option_a\": \"a\", \"option_b\": \"b\", \"label\": \"a\"}\n"
      "{\"id\": \"x1\", \"task\": \"faithfulness\", \"context\": \"c\", \"option_a\": \"a\", \"option_b\": \"b\", \"label\": \"a\"}\n"
      "not json\n"
      "{\"id\": \"x2\", \"task\": \"winograd\", \"context\": \"no slot\", \"option_a\": \"a\", \"option_b\": \"b\", \"label\": \"b\"}\n"
      "{\"id\": \"x3\", \"task\": \"knowledge\", \"context\": \"a {MASK}\", \"option_a\": \"a\", \"option_b\": \"b\", \"label\": \"c\"}\n"
      "{\"id\": \"x4\", \"task\": \"astrology\", \"context\": \"c\", \"option_a\": \"a\", \"option_b\": \"b\", \"label\": \"a\"}\n"
      "\n";
  const auto pf = parse_prompts(text, "mem");
  CHECK(pf.cue == "Briefly,");
  CHECK(pf.language == "de");
  FnScorer flat([](std::string_view) { return 0.0; });
  const auto r = evaluate_task(flat, pf);
  CHECK(r.items.size() == 1);
  CHECK(r.rejects.size() == 5);
  CHECK(pf.uses_cue(Task::kFaithfulness));
  CHECK(!pf.uses_cue(Task::kEntailment));
}

TEST_CASE("cue placement follows the prompt file") {
  PromptFile pf;
  pf.items = labelled_items(2, 5);
  std::vector<std::string> seen;
  class Spy : public Scorer {
   public:
    explicit Spy(std::vector<std::string>& s) : s_(s) {}
    double continuation(std::string_view a, std::string_view) override {
      s_.emplace_back(a);
      return 0;
    }
    double cloze(std::string_view, std::string_view) override { return 0; }

   private:
    std::vector<std::string>& s_;
  } spy(seen);
  evaluate_task(spy, pf);
  REQUIRE(seen.size() == 4);
  std::sort(seen.begin(), seen.end());
  CHECK(seen[0] == "context 0 In short,");
  CHECK(seen[2] == "context 1");
}

TEST_CASE("bundled fixture loads cleanly") {
  const auto pf = load_prompts(std::filesystem::path(RESCORE_SOURCE_DIR) / "data/fixtures/prompts_en.jsonl");
  CHECK(pf.items.size() == 7);
  CHECK(pf.rejects.empty());
  CHECK(pf.cue == "In short,");
  std::size_t faith = 0;
  for (const auto& it : pf.items) faith += it.task == Task::kFaithfulness;
  CHECK(faith == 4);
  CHECK_THROWS_AS(load_prompts("/nonexistent/prompts.jsonl"), MissingDependency);
  const auto nb = load_nbest(std::filesystem::path(RESCORE_SOURCE_DIR) / "data/fixtures/nbest_en.jsonl");
  REQUIRE(nb.size() == 1);
  CHECK(nb[0].candidates.size() == 4);
}

TEST_CASE("zero parameters give ln 0.5 continuation and tied cloze scores") {
  const auto& f = model_fixture();
  Parameters<float> zero(f.params.config());
  ModelScorer s(zero, f.vocab);
  CHECK(s.pair_score("the storm came", "it rained") == doctest::Approx(std::log(0.5)).epsilon(1e-6));
  const double V = static_cast<double>(f.vocab.size());
  // Length-normalised: -ln V whatever the number of subwords.
  CHECK(s.cloze_multi_pass("the {MASK} came", "storm") == doctest::Approx(-std::log(V)).epsilon(1e-5));
  CHECK(s.cloze_multi_pass("the {MASK} came", "qqqqzz") == doctest::Approx(-std::log(V)).epsilon(1e-5));
  CHECK(s.pll_score("the storm came", "it rained hard") == doctest::Approx(-std::log(V)).epsilon(1e-5));
  CHECK(choose(s.cloze("the {MASK} came", "storm"), s.cloze("the {MASK} came", "market")) == Choice::kTie);
}

TEST_CASE("k-pass cloze matches a brute-force oracle and the fast path") {
  const auto& f = model_fixture();
  ModelScorer s(f.params, f.vocab);
  for (std::string_view option : {"storm", "market", "river town", "zqxv"}) {
    const std::string context = "the {MASK} came to the old harbor";
    // Independent input: [CLS] left MASK*k right [SEP].
    const auto left = encode("the ", f.vocab).ids;
    const auto target = encode(option, f.vocab).ids;
    const auto right = encode(" came to the old harbor", f.vocab).ids;
    TrainingExample ex;
    std::size_t p = 0;
    ex.ids[p++] = Vocabulary::kCls;
    for (auto t : left) ex.ids[p++] = t;
    const std::size_t first = p;
    for (std::size_t i = 0; i < target.size(); ++i) ex.ids[p++] = Vocabulary::kMask;
    for (auto t : right) ex.ids[p++] = t;
    ex.ids[p++] = Vocabulary::kSep;
    ex.attention_len = static_cast<std::uint16_t>(p);

    const auto [built, positions] = s.cloze_input(context, option);
    CHECK(built.ids == ex.ids);
    CHECK(built.attention_len == ex.attention_len);

    double sum = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
      TrainingExample pass = ex;  // every target position masked in every pass
      const auto out = forward<float>(f.params, pass, Mode::kEval);
      sum += log_softmax(out.logits_at(first + i), static_cast<std::size_t>(target[i]));
    }
    const double oracle = sum / static_cast<double>(target.size());
    CHECK(std::abs(s.cloze_multi_pass(context, option) - oracle) < 1e-6);
    CHECK(std::abs(s.cloze_fast(context, option) - oracle) < 1e-6);
  }
  CHECK_THROWS_AS(s.cloze_input("no placeholder", "x"), DataError);
  CHECK_THROWS_AS(s.cloze_input("{MASK} {MASK}", "x"), DataError);
  CHECK_THROWS_AS(s.cloze_input("a {MASK}", " "), DataError);
}

TEST_CASE("model scoring is deterministic and sensitive to content") {
  const auto& f = model_fixture();
  ModelScorer s(f.params, f.vocab);
  const double a = s.pair_score("the storm came to town", "people stayed home");
  CHECK(s.pair_score("the storm came to town", "people stayed home") == a);
  CHECK(s.pair_score("the storm came to town", "prices fell sharply") != a);
  CHECK(scorer_options_from_string("pll").continuation == ContinuationRule::kPll);
  CHECK(scorer_options_from_string("fast-cloze").cloze == ClozeRule::kFast);
  CHECK_THROWS_AS(scorer_options_from_string("magic"), ConfigError);
}

TEST_CASE("copeland ranking properties for N = 2..6") {
  Rng rng(8);
  for (std::size_t n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::string> cand;
      std::vector<double> scores;
      for (std::size_t i = 0; i < n; ++i) {
        cand.push_back("c" + std::to_string(i));
        scores.push_back(std::floor(rng.uniform() * 4));  // frequent ties
      }
      const auto ranked = copeland_rank(cand, scores);
      REQUIRE(ranked.size() == n);
      double total = 0;
      for (std::size_t r = 0; r < n; ++r) {
        total += ranked[r].copeland;
        CHECK(ranked[r].rank == r + 1);
        // Oracle Copeland score.
        double c = 0;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == ranked[r].index) continue;
          const double d = scores[ranked[r].index] - scores[k];
          c += d > 0 ? 1.0 : (std::abs(d) < kTieThreshold ? 0.5 : 0.0);
        }
        CHECK(ranked[r].copeland == c);
        if (r > 0) CHECK(ranked[r - 1].copeland >= ranked[r].copeland);
      }
      CHECK(total == doctest::Approx(double(n * (n - 1)) / 2));
      CHECK(scores[ranked[0].index] == *std::max_element(scores.begin(), scores.end()));

      // Permuting the input permutes nothing in the ranking's text order
      // except among exact ties, which fall back to input order.
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::reverse(perm.begin(), perm.end());
      std::vector<std::string> pc;
      std::vector<double> ps;
      for (auto k : perm) {
        pc.push_back(cand[k]);
        ps.push_back(scores[k]);
      }
      const auto pr = copeland_rank(pc, ps);
      for (std::size_t r = 0; r < n; ++r) {
        CHECK(pr[r].copeland == ranked[r].copeland);
        CHECK(pr[r].score == ranked[r].score);
      }
    }
  }
  const std::vector<std::string> distinct = {"a", "b", "c"};
  const auto pr = copeland_rank(distinct, {0.1, 0.3, 0.2});
  CHECK(pr[0].text == "b");
  CHECK(pr[1].text == "c");
  CHECK(pr[2].text == "a");
  CHECK_THROWS_AS(copeland_rank({"a"}, {1.0}), DataError);
  FnScorer flat([](std::string_view) { return 0.0; });
  CHECK_THROWS_AS(rerank_nbest(flat, NBestInput{"x", "ctx", "", {"a", "b", "a"}}), DataError);
  const auto rr = rerank_nbest(flat, NBestInput{"x", "ctx", "", {"a", "b", "c"}});
  CHECK(rr[0].copeland == 1.0);
  CHECK(rr[0].index == 0);
}
