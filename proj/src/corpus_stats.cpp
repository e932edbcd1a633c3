// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rescore/corpus_stats.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "rescore/error.hpp"
#include "rescore/rng.hpp"

namespace rescore {

double type_token_ratio(std::span<const TokenId> ids) {
  if (ids.empty()) throw ConfigError("type-token ratio of an empty unit is undefined");
  const std::unordered_set<TokenId> types(ids.begin(), ids.end());
  return static_cast<double>(types.size()) / static_cast<double>(ids.size());
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// First `k` entries of a seeded partial Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

double interquartile_range(std::span<const double> values) {
  if (values.empty()) return 0.0;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile(sorted, 0.75) - quantile(sorted, 0.25);
}

TtrReport ttr_stats(const SentenceCorpus& corpus, const Vocabulary& vocab,
                    std::size_t sample_size, std::uint64_t seed) {
  if (sample_size == 0) throw ConfigError("TTR sample size must be > 0");
  std::vector<const std::string*> sentences;
  std::vector<std::pair<const std::string*, const std::string*>> pairs;
  for (const auto& d : corpus.documents) {
    for (std::size_t i = 0; i < d.sentences.size(); ++i) {
      sentences.push_back(&d.sentences[i]);
      if (i + 1 < d.sentences.size()) pairs.emplace_back(&d.sentences[i], &d.sentences[i + 1]);
    }
  }
  if (sentences.size() < sample_size) {
    throw ConfigError("TTR sampling needs " + std::to_string(sample_size) + " sentences, corpus has " +
                      std::to_string(sentences.size()));
  }
  if (pairs.size() < sample_size) {
    throw ConfigError("TTR sampling needs " + std::to_string(sample_size) +
                      " adjacent sentence pairs, corpus has " + std::to_string(pairs.size()));
  }

  Rng rng(mix_seed(seed, "ttr"));
  const auto sent_idx = sample_indices(sentences.size(), sample_size, rng);
  const auto pair_idx = sample_indices(pairs.size(), sample_size, rng);

  std::vector<double> sent_ttr(sample_size);
  std::vector<double> pair_ttr(sample_size);
  for (std::size_t i = 0; i < sample_size; ++i) {
    sent_ttr[i] = type_token_ratio(encode(*sentences[sent_idx[i]], vocab).ids);
    auto ids = encode(*pairs[pair_idx[i]].first, vocab).ids;
    const auto second = encode(*pairs[pair_idx[i]].second, vocab).ids;
    ids.insert(ids.end(), second.begin(), second.end());
    pair_ttr[i] = type_token_ratio(ids);
  }

  const auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  TtrReport r;
  r.sample_size = sample_size;
  r.mean_sentence_ttr = mean(sent_ttr);
  r.sentence_iqr = interquartile_range(sent_ttr);
  r.mean_pair_ttr = mean(pair_ttr);
  r.pair_iqr = interquartile_range(pair_ttr);
  return r;
}

nlohmann::json to_json(const TtrReport& r) {
  return {{"mean_sentence_ttr", r.mean_sentence_ttr},
          {"sentence_iqr", r.sentence_iqr},
          {"mean_pair_ttr", r.mean_pair_ttr},
          {"pair_iqr", r.pair_iqr},
          {"sample_size", r.sample_size}};
}

}  // namespace rescore
