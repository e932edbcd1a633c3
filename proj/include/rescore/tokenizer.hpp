// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rescore/corpus.hpp"

namespace rescore {

using TokenId = std::int32_t;

/// Subword inventory. Ids are dense; ids 0-4 are the special tokens.
/// Non-initial subwords carry the "##" continuation prefix.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kCls = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kMask = 4;
  static constexpr TokenId kNumSpecial = 5;
  static constexpr std::string_view kContinuation = "##";

  /// Specials only.
  Vocabulary();
  /// Full token list, specials included at 0-4. Throws DataError on violations.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  /// Looks up a non-special token.
  std::optional<TokenId> find(std::string_view token) const;
  static bool is_special(TokenId id) { return id >= 0 && id < kNumSpecial; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Character span [begin, end) in unicode scalar values of the encoded text.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<Span> offsets;
};

struct VocabTrainingOptions {
  std::size_t target_size = 8000;
  std::size_t min_frequency = 2;
};

/// WordPiece training: starts from every observed character (word-initial and
/// "##"-continuation forms), then repeatedly merges the adjacent pair with the
/// highest count(ab) / (count(a) * count(b)) among pairs seen at least
/// `min_frequency` times. Ties go to the lexicographically smaller pair.
Vocabulary train_vocab(const SentenceCorpus& corpus, const VocabTrainingOptions& options);

/// Smallest target size train_vocab accepts for `corpus` (5 + alphabet size).
std::size_t minimum_vocab_size(const SentenceCorpus& corpus);

/// Whitespace pre-split then greedy longest-match-first per word. A word that
/// cannot be segmented becomes a single UNK covering the whole word.
TokenSequence encode(std::string_view text, const Vocabulary& vocab);

/// Drops specials, strips "##" and joins continuations without a space.
std::string decode(std::span<const TokenId> ids, const Vocabulary& vocab);

}  // namespace rescore
