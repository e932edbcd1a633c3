// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rescore/corpus.hpp"
#include "rescore/rng.hpp"
#include "rescore/tokenizer.hpp"

namespace rescore {

inline constexpr std::size_t kMaxSeqLen = 256;
inline constexpr std::int32_t kNoLabel = -1;

enum class Objective { kNsp, kSop };
std::string_view to_string(Objective o);
Objective objective_from_string(std::string_view s);

/// Pair-head class ids: 1 is "is next" under NSP and "in order" under SOP.
enum class PairLabel : std::uint8_t { kNegative = 0, kPositive = 1 };

struct MaskingPolicy {
  double select_rate = 0.15;
  double mask_rate = 0.80;
  double random_rate = 0.10;
  double keep_rate = 0.10;

  void validate() const;
};

struct TrainingExample {
  std::array<TokenId, kMaxSeqLen> ids{};
  std::array<std::uint8_t, kMaxSeqLen> segments{};
  std::array<std::int32_t, kMaxSeqLen> mlm_labels{};
  PairLabel pair_label = PairLabel::kNegative;
  std::uint16_t attention_len = 0;

  TrainingExample() { mlm_labels.fill(kNoLabel); }
  friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

struct PairSampler {
  Objective objective = Objective::kNsp;
  double positive_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SentenceRef {
  std::size_t doc = 0;
  std::size_t sentence = 0;
  friend bool operator==(const SentenceRef&, const SentenceRef&) = default;
};

struct SentencePair {
  SentenceRef a;
  SentenceRef b;
  PairLabel label = PairLabel::kPositive;
};

/// One candidate pair per adjacent sentence pair of every document, in
/// document order. NSP negatives replace B by a uniformly drawn sentence of a
/// different document; SOP negatives swap the pair. Under NSP a one-sentence
/// document contributes a negative (as A) with probability 1 - positive_fraction.
/// Each document draws from its own seed stream, so the result does not depend
/// on how documents are sharded.
std::vector<SentencePair> build_pairs(const SentenceCorpus& corpus, const PairSampler& sampler);

enum class MaskAction : std::uint8_t { kNone, kMask, kRandom, kKeep };

struct MaskResult {
  std::vector<TokenId> ids;
  std::vector<std::int32_t> labels;
  std::vector<MaskAction> actions;
};

/// Selects max(1, round(select_rate * maskable)) non-special positions without
/// replacement and corrupts them per the policy. Throws ConfigError when no
/// position is maskable.
MaskResult mask_tokens(std::span<const TokenId> ids, const MaskingPolicy& policy,
                       std::size_t vocab_size, Rng& rng);

/// Lays out [CLS] A [SEP] B [SEP] and pads to `max_len`, trimming the tail of
/// the longer segment until it fits. Returns nullopt when a segment is empty.
std::optional<TrainingExample> pack_pair(std::span<const TokenId> a, std::span<const TokenId> b,
                                         std::size_t max_len = kMaxSeqLen);

struct ExampleBuildOptions {
  PairSampler sampler;
  MaskingPolicy masking;
  bool shuffle = true;
};

struct ExampleBuildStats {
  std::size_t pairs = 0;
  std::size_t discarded = 0;
};

/// Pairs, packs and masks the whole corpus. Masking uses a seed stream per
/// example index; the final order is a seeded shuffle of the document-order
/// stream when `shuffle` is set.
std::vector<TrainingExample> make_examples(const SentenceCorpus& corpus, const Vocabulary& vocab,
                                           const ExampleBuildOptions& options,
                                           ExampleBuildStats* stats = nullptr);

void write_shard(const std::filesystem::path& path, std::span<const TrainingExample> examples);
std::vector<TrainingExample> read_shard(const std::filesystem::path& path);

}  // namespace rescore
