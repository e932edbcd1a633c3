// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rescore {

enum class Source { kWiki, kNews };

std::string_view to_string(Source s);
Source source_from_string(std::string_view s);

struct Document {
  std::string id;
  Source source = Source::kWiki;
  std::string text;  // UTF-8
  /// Length in unicode scalar values, cached at ingestion.
  std::size_t chars = 0;
};

/// Per-source character caps. A cap is soft: the document that crosses it is
/// kept whole and inclusion for that source stops afterwards.
struct CapPolicy {
  static constexpr std::uint64_t kDefaultWikiCap = 227'281'794;
  static constexpr std::uint64_t kDefaultNewsCap = 466'844'003;

  std::uint64_t wiki_cap = kDefaultWikiCap;
  std::uint64_t news_cap = kDefaultNewsCap;

  void validate() const;
  std::uint64_t cap_for(Source s) const { return s == Source::kWiki ? wiki_cap : news_cap; }
};

struct SentenceDocument {
  std::string id;
  Source source = Source::kWiki;
  std::vector<std::string> sentences;
};

struct SentenceCorpus {
  std::vector<SentenceDocument> documents;
  std::set<std::string> abbreviations;

  std::size_t sentence_count() const;
};

/// Reads JSON Lines files ({"text": ..., "id": optional}) in order. Missing ids
/// become "<source>:<ordinal>" with the ordinal running across all files.
std::vector<Document> ingest(std::span<const std::filesystem::path> paths, Source source);

/// Parses one already-read JSON Lines buffer; `origin` names it in errors.
std::vector<Document> ingest_buffer(std::string_view buffer, std::string_view origin,
                                    Source source, std::size_t first_ordinal = 0);

std::vector<Document> apply_caps(std::span<const Document> docs, const CapPolicy& policy);

/// Rule-based splitting on terminal punctuation followed by whitespace and an
/// uppercase letter, a digit or a caseless-script letter. A period directly
/// after an abbreviation never ends a sentence.
std::vector<std::string> split_sentences(const Document& doc,
                                         const std::set<std::string>& abbreviations);

/// Splits every document; runs in parallel, output order follows `docs`.
SentenceCorpus build_sentence_corpus(std::span<const Document> docs,
                                     std::set<std::string> abbreviations);

/// One abbreviation per line; blank lines and '#' comments ignored; a trailing
/// period is stripped.
std::set<std::string> load_abbreviations(const std::filesystem::path& path);

void write_corpus(const SentenceCorpus& corpus, const std::filesystem::path& path);
SentenceCorpus read_corpus(const std::filesystem::path& path);

}  // namespace rescore
