// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rescore/corpus.hpp"

namespace rescore {

/// Toy corpus with two topics (a storm diary and a market day). Every topic is
/// a fixed cycle of sentence templates; a document starts somewhere in the
/// cycle, follows it in order and keeps one protagonist throughout. True
/// successors are therefore predictable from the preceding sentence, which
/// makes next-sentence prediction learnable by a small model.
struct SyntheticOptions {
  std::size_t target_bytes = 1u << 20;
  std::uint64_t seed = 0;
  /// Share of documents tagged wiki; the rest are news (1:2 by default).
  double wiki_fraction = 1.0 / 3.0;
  std::size_t min_sentences = 3;
  std::size_t max_sentences = 8;
};

/// Documents in generation order with ids "synthetic:<n>". Stops once the
/// UTF-8 byte total reaches target_bytes.
std::vector<Document> generate_corpus(const SyntheticOptions& options);

/// JSON Lines {"id", "text"}, one document per line.
std::string to_jsonl(const std::vector<Document>& docs);

/// Writes <dir>/wiki.jsonl and <dir>/news.jsonl.
void write_synthetic_corpus(const std::vector<Document>& docs, const std::filesystem::path& dir);

}  // namespace rescore
