// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rescore/corpus.hpp"
#include "rescore/io.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "rescore/error.hpp"
#include "rescore/utf8.hpp"

namespace rescore {

using nlohmann::json;

std::string_view to_string(Source s) { return s == Source::kWiki ? "wiki" : "news"; }

Source source_from_string(std::string_view s) {
  if (s == "wiki") return Source::kWiki;
  if (s == "news") return Source::kNews;
  throw DataError("unknown source '" + std::string(s) + "' (expected wiki or news)");
}

void CapPolicy::validate() const {
  if (wiki_cap == 0 || news_cap == 0) throw ConfigError("character caps must be > 0");
}

std::size_t SentenceCorpus::sentence_count() const {
  std::size_t n = 0;
  for (const auto& d : documents) n += d.sentences.size();
  return n;
}

std::vector<Document> ingest_buffer(std::string_view buffer, std::string_view origin,
                                    Source source, std::size_t first_ordinal) {
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < buffer.size()) {
    std::size_t end = buffer.find('\n', pos);
    if (end == std::string_view::npos) end = buffer.size();
    std::string_view line = buffer.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    const auto where = [&] { return std::string(origin) + ":" + std::to_string(line_no); };
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where() + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string()) {
      throw DataError(where() + ": expected an object with a string field 'text'");
    }
    Document d;
    d.source = source;
    d.text = obj["text"].get<std::string>();
    try {
      if (utf8::collapse_whitespace(d.text).empty()) {
        throw DataError(where() + ": empty 'text'");
      }
      d.chars = utf8::length(d.text);
    } catch (const DataError& e) {
      if (std::string_view(e.what()).starts_with(where())) throw;
      throw DataError(where() + ": " + e.what());
    }
    if (obj.contains("id") && !obj["id"].is_null()) {
      if (!obj["id"].is_string()) throw DataError(where() + ": 'id' must be a string");
      d.id = obj["id"].get<std::string>();
    } else {
      d.id = std::string(to_string(source)) + ":" + std::to_string(first_ordinal + docs.size());
    }
    if (!seen.insert(d.id).second) throw DataError(where() + ": duplicate id '" + d.id + "'");
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<Document> ingest(std::span<const std::filesystem::path> paths, Source source) {
  std::vector<Document> all;
  std::unordered_set<std::string> seen;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto docs = ingest_buffer(ss.str(), path.string(), source, all.size());
    for (auto& d : docs) {
      if (!seen.insert(d.id).second) {
        throw DataError(path.string() + ": duplicate id '" + d.id + "'");
      }
      all.push_back(std::move(d));
    }
  }
  return all;
}

std::vector<Document> apply_caps(std::span<const Document> docs, const CapPolicy& policy) {
  policy.validate();
  std::uint64_t totals[2] = {0, 0};
  std::vector<Document> kept;
  for (const auto& d : docs) {
    auto& total = totals[d.source == Source::kWiki ? 0 : 1];
    if (total >= policy.cap_for(d.source)) continue;
    total += d.chars;
    kept.push_back(d);
  }
  return kept;
}

namespace {

bool is_terminal(char32_t cp) { return cp == U'.' || cp == U'!' || cp == U'?' || cp == U'…'; }

bool is_closing(char32_t cp) {
  return cp == U'"' || cp == U'\'' || cp == U')' || cp == U']' || cp == U'”' || cp == U'’' ||
         cp == U'»';
}

bool is_opening(char32_t cp) {
  return cp == U'"' || cp == U'\'' || cp == U'(' || cp == U'[' || cp == U'“' || cp == U'„' ||
         cp == U'«' || cp == U'‘';
}

std::string trimmed(std::u32string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && utf8::is_space(s[b])) ++b;
  while (e > b && utf8::is_space(s[e - 1])) --e;
  return utf8::encode(s.substr(b, e - b));
}

}  // namespace

std::vector<std::string> split_sentences(const Document& doc,
                                         const std::set<std::string>& abbreviations) {
  const std::u32string text = utf8::decode(doc.text);
  const std::size_t n = text.size();
  std::vector<std::string> out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < n) {
    if (!is_terminal(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_terminal(text[j])) ++j;
    const bool single_period = (j == i + 1 && text[i] == U'.');
    while (j < n && is_closing(text[j])) ++j;
    if (j >= n || !utf8::is_space(text[j])) {
      i = j;
      continue;
    }
    std::size_t k = j;
    while (k < n && utf8::is_space(text[k])) ++k;
    std::size_t first = k;
    while (first < n && is_opening(text[first])) ++first;
    const bool starts_sentence = first < n && (utf8::is_upper(text[first]) ||
                                               utf8::is_digit(text[first]) ||
                                               utf8::is_caseless_letter(text[first]));
    bool abbreviation = false;
    if (single_period && !abbreviations.empty()) {
      std::size_t w = i;
      while (w > start && !utf8::is_space(text[w - 1])) --w;
      while (w < i && is_opening(text[w])) ++w;
      abbreviation = abbreviations.contains(utf8::encode(std::u32string_view(text).substr(w, i - w)));
    }
    if (starts_sentence && !abbreviation) {
      auto s = trimmed(std::u32string_view(text).substr(start, j - start));
      if (!s.empty()) out.push_back(std::move(s));
      start = k;
    }
    i = k;
  }
  auto tail = trimmed(std::u32string_view(text).substr(start));
  if (!tail.empty()) out.push_back(std::move(tail));
  return out;
}

SentenceCorpus build_sentence_corpus(std::span<const Document> docs,
                                     std::set<std::string> abbreviations) {
  SentenceCorpus corpus;
  corpus.abbreviations = std::move(abbreviations);
  corpus.documents.resize(docs.size());
  const auto n = static_cast<std::ptrdiff_t>(docs.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& out = corpus.documents[static_cast<std::size_t>(i)];
    out.id = docs[static_cast<std::size_t>(i)].id;
    out.source = docs[static_cast<std::size_t>(i)].source;
    out.sentences = split_sentences(docs[static_cast<std::size_t>(i)], corpus.abbreviations);
  }
  return corpus;
}

std::set<std::string> load_abbreviations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingDependency("cannot open abbreviation file " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto s = utf8::collapse_whitespace(line);
    if (s.empty() || s.front() == '#') continue;
    out.insert(s.back() == '.' ? s.substr(0, s.size() - 1) : s);
  }
  return out;
}

void write_corpus(const SentenceCorpus& corpus, const std::filesystem::path& path) {
  std::string out;
  for (const auto& d : corpus.documents) {
    json j = {{"id", d.id}, {"source", to_string(d.source)}, {"sentences", d.sentences}};
    out += j.dump();
    out += '\n';
  }
  io::atomic_write(path, out);
}

SentenceCorpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDependency("cannot open corpus " + path.string() + " (run build-corpus first)");
  SentenceCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      SentenceDocument d;
      d.id = j.at("id").get<std::string>();
      d.source = source_from_string(j.at("source").get<std::string>());
      d.sentences = j.at("sentences").get<std::vector<std::string>>();
      corpus.documents.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace rescore
