// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <numeric>

#include "doctest.h"
#include "rescore/corpus.hpp"
#include "rescore/corpus_stats.hpp"
#include "rescore/error.hpp"
#include "rescore/rng.hpp"
#include "rescore/synthetic.hpp"
#include "rescore/tokenizer.hpp"
#include "rescore/utf8.hpp"
#include "test_util.hpp"

using namespace rescore;

namespace {

Document doc(std::string id, Source s, std::size_t chars) {
  Document d;
  d.id = std::move(id);
  d.source = s;
  d.text = std::string(chars, 'x');
  d.chars = chars;
  return d;
}

void write(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

}  // namespace

TEST_CASE("ingest keeps file order and numbers ids across files") {
  testing::TempDir dir("ingest");
  write(dir / "a.jsonl", "{\"text\":\"one\"}\n{\"text\":\"two\"}\n\n{\"text\":\"three\"}\n");
  write(dir / "b.jsonl", "{\"text\":\"four\"}\n{\"id\":\"x\",\"text\":\"five\"}\n");
  write(dir / "empty.jsonl", "");
  const std::vector<std::filesystem::path> paths = {dir / "a.jsonl", dir / "empty.jsonl", dir / "b.jsonl"};
  const auto docs = ingest(paths, Source::kNews);
  REQUIRE(docs.size() == 5);
  // Oracle: enumerate lines without an explicit id.
  std::vector<std::string> expect;
  std::size_t ordinal = 0;
  for (const char* t : {"one", "two", "three", "four"}) {
    (void)t;
    expect.push_back("news:" + std::to_string(ordinal++));
  }
  for (std::size_t i = 0; i < 4; ++i) CHECK(docs[i].id == expect[i]);
  CHECK(docs[4].id == "x");
  CHECK(docs[2].text == "three");
  CHECK(ingest(std::vector<std::filesystem::path>{dir / "empty.jsonl"}, Source::kWiki).empty());
}

TEST_CASE("ingest errors name file and line") {
  testing::TempDir dir("ingest-bad");
  write(dir / "bad.jsonl", "{\"text\":\"ok\"}\n{\"text\":\"  \"}\n");
  const std::vector<std::filesystem::path> p = {dir / "bad.jsonl"};
  try {
    ingest(p, Source::kWiki);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("bad.jsonl:2") != std::string::npos);
  }
  write(dir / "broken.jsonl", "{\"text\":\"ok\"}\n{not json\n");
  const std::vector<std::filesystem::path> q = {dir / "broken.jsonl"};
  CHECK_THROWS_AS(ingest(q, Source::kWiki), DataError);
}

TEST_CASE("soft cap keeps the crossing document") {
  const std::vector<Document> docs = {doc("w0", Source::kWiki, 100), doc("w1", Source::kWiki, 100),
                                      doc("w2", Source::kWiki, 100)};
  CapPolicy p;
  p.wiki_cap = 150;
  const auto kept = apply_caps(docs, p);
  REQUIRE(kept.size() == 2);
  CHECK(kept[1].id == "w1");

  p.wiki_cap = 1'000'000;
  CHECK(apply_caps(docs, p).size() == 3);
}

TEST_CASE("cap property holds per source on random corpora") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Document> docs;
    for (int i = 0; i < 200; ++i) {
      docs.push_back(doc("d" + std::to_string(i), rng.bernoulli(0.4) ? Source::kWiki : Source::kNews,
                         1 + rng.uniform_index(500)));
    }
    CapPolicy p;
    p.wiki_cap = 1 + rng.uniform_index(30000);
    p.news_cap = 1 + rng.uniform_index(60000);
    const auto kept = apply_caps(docs, p);
    for (Source s : {Source::kWiki, Source::kNews}) {
      // Oracle: greedy fold in stream order.
      std::size_t total = 0, last = 0, n_expected = 0;
      for (const auto& d : docs) {
        if (d.source != s || total >= p.cap_for(s)) continue;
        total += d.chars;
        last = d.chars;
        ++n_expected;
      }
      std::size_t got = 0, n_got = 0;
      for (const auto& d : kept) {
        if (d.source == s) got += d.chars, ++n_got;
      }
      CHECK(got == total);
      CHECK(n_got == n_expected);
      std::size_t available = 0;
      for (const auto& d : docs) {
        if (d.source == s) available += d.chars;
      }
      if (available >= p.cap_for(s)) {
        CHECK(total >= p.cap_for(s));
        CHECK(total - last < p.cap_for(s));
      }
    }
  }
}

TEST_CASE("caps count unicode scalars and never truncate") {
  const std::string text = "Tbilisi თბილისი";
  auto docs = ingest_buffer("{\"text\":\"" + text + "\"}\n", "mem", Source::kWiki);
  REQUIRE(docs.size() == 1);
  CHECK(docs[0].chars == 15);
  CapPolicy p;
  p.wiki_cap = 3;
  const auto kept = apply_caps(docs, p);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].text == text);
}

TEST_CASE("default caps keep a 1:2 wiki:news ratio") {
  CapPolicy p;
  CHECK(p.wiki_cap == 227'281'794u);
  CHECK(p.news_cap == 466'844'003u);
  CHECK(static_cast<double>(p.news_cap) / static_cast<double>(p.wiki_cap) == doctest::Approx(2.054).epsilon(0.001));
  p.wiki_cap = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("sentence splitter rules") {
  Document d;
  d.text = "A b. C d.";
  CHECK(split_sentences(d, {}) == std::vector<std::string>{"A b.", "C d."});
  d.text = "Dr. Smith left. He ran.";
  CHECK(split_sentences(d, {"Dr"}) == std::vector<std::string>{"Dr. Smith left.", "He ran."});
  d.text = "no terminal punctuation here";
  CHECK(split_sentences(d, {}).size() == 1);
  d.text = "It rose by 5. 7 more came! Why? Done… Next one.";
  CHECK(split_sentences(d, {}) ==
        std::vector<std::string>{"It rose by 5.", "7 more came!", "Why?", "Done…", "Next one."});
  d.text = "the end. lower case continues";
  CHECK(split_sentences(d, {}).size() == 1);
  d.text = "ქალაქი დიდია. ის ლამაზია.";
  CHECK(split_sentences(d, {}).size() == 2);
}

TEST_CASE("sentence reassembly on a generated 1000-sentence document") {
  Rng rng(5);
  const std::vector<std::string> words = {"alpha", "Beta", "gamma", "Dr.", "delta", "9", "epsilon"};
  Document d;
  for (int s = 0; s < 1000; ++s) {
    d.text += "Start";
    const auto n = 1 + rng.uniform_index(8);
    for (std::size_t w = 0; w < n; ++w) d.text += (rng.bernoulli(0.3) ? "  " : " ") + words[rng.uniform_index(words.size())];
    d.text += std::string(rng.bernoulli(0.5) ? "." : "?") + (rng.bernoulli(0.2) ? "\n " : " ");
  }
  const auto sentences = split_sentences(d, {"Dr"});
  CHECK(sentences.size() >= 900);
  std::string joined;
  for (const auto& s : sentences) {
    CHECK(!s.empty());
    joined += (joined.empty() ? "" : " ") + s;
  }
  CHECK(utf8::collapse_whitespace(joined) == utf8::collapse_whitespace(d.text));
}

TEST_CASE("corpus file round trip") {
  testing::TempDir dir("corpus-rt");
  SyntheticOptions so;
  so.target_bytes = 4000;
  const auto corpus = build_sentence_corpus(generate_corpus(so), {});
  write_corpus(corpus, dir / "c.jsonl");
  const auto back = read_corpus(dir / "c.jsonl");
  REQUIRE(back.documents.size() == corpus.documents.size());
  for (std::size_t i = 0; i < back.documents.size(); ++i) {
    CHECK(back.documents[i].id == corpus.documents[i].id);
    CHECK(back.documents[i].source == corpus.documents[i].source);
    CHECK(back.documents[i].sentences == corpus.documents[i].sentences);
  }
  CHECK_THROWS_AS(read_corpus(dir / "missing.jsonl"), MissingDependency);
}

TEST_CASE("abbreviation file parsing") {
  testing::TempDir dir("abbrev");
  write(dir / "a.txt", "# comment\nDr.\n\n  Prof  \nე.ი\n");
  const auto a = load_abbreviations(dir / "a.txt");
  CHECK(a == std::set<std::string>{"Dr", "Prof", "ე.ი"});
}

TEST_CASE("type-token ratio and IQR") {
  const std::vector<std::int32_t> aba = {7, 8, 7};
  CHECK(type_token_ratio(aba) == doctest::Approx(2.0 / 3.0));
  const std::vector<std::int32_t> distinct = {1, 2, 3, 4};
  CHECK(type_token_ratio(distinct) == 1.0);
  // Linear interpolation: Q1 at rank 0.75, Q3 at rank 2.25 of {1,2,3,4}.
  const std::vector<double> v = {4, 1, 3, 2};
  CHECK(interquartile_range(v) == doctest::Approx(3.25 - 1.75));
}

TEST_CASE("ttr_stats is deterministic and bounded") {
  SyntheticOptions so;
  so.target_bytes = 40000;
  const auto corpus = build_sentence_corpus(generate_corpus(so), {});
  VocabTrainingOptions vo;
  vo.target_size = 300;
  const auto vocab = train_vocab(corpus, vo);
  const auto a = ttr_stats(corpus, vocab, 100, 9);
  const auto b = ttr_stats(corpus, vocab, 100, 9);
  CHECK(to_json(a) == to_json(b));
  CHECK(a.mean_sentence_ttr > 0);
  CHECK(a.mean_sentence_ttr <= 1);
  CHECK(a.mean_pair_ttr > 0);
  CHECK(a.mean_pair_ttr <= 1);
  CHECK(a.sentence_iqr >= 0);
  CHECK(a.pair_iqr >= 0);
  try {
    ttr_stats(corpus, vocab, 1'000'000, 9);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("1000000") != std::string::npos);
  }
}

TEST_CASE("synthetic corpus size and source split") {
  SyntheticOptions so;
  so.target_bytes = 200000;
  so.seed = 4;
  const auto docs = generate_corpus(so);
  std::size_t bytes = 0, wiki = 0;
  for (const auto& d : docs) {
    bytes += d.text.size();
    wiki += d.source == Source::kWiki;
  }
  CHECK(bytes >= so.target_bytes);
  CHECK(bytes < so.target_bytes + 2000);
  CHECK(static_cast<double>(wiki) / static_cast<double>(docs.size()) == doctest::Approx(1.0 / 3.0).epsilon(0.15));
  const auto again = generate_corpus(so);
  REQUIRE(again.size() == docs.size());
  CHECK(again.back().text == docs.back().text);
}
