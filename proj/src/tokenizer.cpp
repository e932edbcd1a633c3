// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rescore/tokenizer.hpp"
#include "rescore/io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "rescore/error.hpp"
#include "rescore/utf8.hpp"

namespace rescore {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> kTokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  return kTokens;
}

constexpr std::size_t kMaxWordChars = 100;

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(special_tokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const auto& specials = special_tokens();
  if (tokens_.size() < specials.size()) throw DataError("vocabulary is missing special tokens");
  for (std::size_t i = 0; i < specials.size(); ++i) {
    if (tokens_[i] != specials[i]) {
      throw DataError("vocabulary line " + std::to_string(i) + " must be " + specials[i] +
                      ", found '" + tokens_[i] + "'");
    }
  }
  std::set<std::string> seen(specials.begin(), specials.end());
  for (std::size_t i = specials.size(); i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty() || t == kContinuation) {
      throw DataError("vocabulary token " + std::to_string(i) + " is empty");
    }
    if (!seen.insert(t).second) throw DataError("duplicate vocabulary token '" + t + "'");
    index_.emplace(t, static_cast<TokenId>(i));
  }
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  io::atomic_write(path, out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDependency("cannot open vocabulary " + path.string() + " (run train-vocab first)");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

namespace {

struct WordEntry {
  std::vector<int> units;  // symbol ids
  std::uint64_t freq = 0;
};

struct Trainer {
  std::vector<std::string> symbols;
  std::unordered_map<std::string, int> symbol_ids;
  std::vector<WordEntry> words;
  std::vector<std::uint64_t> unit_counts;
  std::unordered_map<std::uint64_t, std::uint64_t> pair_counts;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> pair_words;

  static std::uint64_t key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  }

  int intern(const std::string& s) {
    auto [it, inserted] = symbol_ids.emplace(s, static_cast<int>(symbols.size()));
    if (inserted) {
      symbols.push_back(s);
      unit_counts.push_back(0);
    }
    return it->second;
  }

  void add_word(std::uint32_t w, std::int64_t sign) {
    const auto& e = words[w];
    for (std::size_t i = 0; i < e.units.size(); ++i) {
      unit_counts[static_cast<std::size_t>(e.units[i])] += static_cast<std::uint64_t>(sign) * e.freq;
      if (i + 1 < e.units.size()) {
        const auto k = key(e.units[i], e.units[i + 1]);
        auto& c = pair_counts[k];
        c += static_cast<std::uint64_t>(sign) * e.freq;
        if (c == 0) {
          pair_counts.erase(k);
        } else if (sign > 0) {
          pair_words[k].push_back(w);
        }
      }
    }
  }
};

void count_words(const SentenceCorpus& corpus, std::map<std::u32string, std::uint64_t>& counts) {
  for (const auto& doc : corpus.documents) {
    for (const auto& s : doc.sentences) {
      for (auto& w : utf8::split_whitespace(utf8::decode(s))) ++counts[std::move(w)];
    }
  }
}

std::string unit_string(char32_t cp, bool initial) {
  std::string s = initial ? std::string() : std::string(Vocabulary::kContinuation);
  utf8::append(s, cp);
  return s;
}

std::set<std::string> alphabet_of(const std::map<std::u32string, std::uint64_t>& counts) {
  std::set<std::string> alphabet;
  for (const auto& [w, c] : counts) {
    for (std::size_t i = 0; i < w.size(); ++i) alphabet.insert(unit_string(w[i], i == 0));
  }
  return alphabet;
}

}  // namespace

std::size_t minimum_vocab_size(const SentenceCorpus& corpus) {
  std::map<std::u32string, std::uint64_t> counts;
  count_words(corpus, counts);
  return alphabet_of(counts).size() + static_cast<std::size_t>(Vocabulary::kNumSpecial);
}

Vocabulary train_vocab(const SentenceCorpus& corpus, const VocabTrainingOptions& options) {
  if (options.target_size < static_cast<std::size_t>(Vocabulary::kNumSpecial) + 1) {
    throw ConfigError("vocabulary target size must be at least 6");
  }
  std::map<std::u32string, std::uint64_t> counts;
  count_words(corpus, counts);
  if (counts.empty()) throw ConfigError("cannot train a vocabulary on an empty corpus");

  const auto alphabet = alphabet_of(counts);
  const std::size_t minimum = alphabet.size() + static_cast<std::size_t>(Vocabulary::kNumSpecial);
  if (options.target_size < minimum) {
    throw ConfigError("vocabulary target size " + std::to_string(options.target_size) +
                      " is below the minimum feasible size " + std::to_string(minimum) + " (" +
                      std::to_string(alphabet.size()) + " characters + 5 specials)");
  }

  std::vector<std::string> tokens = special_tokens();
  std::set<std::string> in_vocab(tokens.begin(), tokens.end());
  Trainer t;
  for (const auto& a : alphabet) {
    t.intern(a);
    tokens.push_back(a);
    in_vocab.insert(a);
  }
  // Words longer than the encoder's limit always become UNK; they take no part in merges.
  for (const auto& [w, c] : counts) {
    if (w.size() > kMaxWordChars) continue;
    WordEntry e;
    e.freq = c;
    for (std::size_t i = 0; i < w.size(); ++i) e.units.push_back(t.intern(unit_string(w[i], i == 0)));
    t.words.push_back(std::move(e));
  }
  for (std::uint32_t w = 0; w < t.words.size(); ++w) t.add_word(w, +1);

  std::vector<std::uint32_t> stamp(t.words.size(), 0);
  std::uint32_t iteration = 0;
  const std::uint64_t min_freq = std::max<std::uint64_t>(1, options.min_frequency);
  while (tokens.size() < options.target_size) {
    ++iteration;
    bool found = false;
    std::uint64_t best_key = 0;
    std::uint64_t best_count = 0;
    unsigned __int128 best_denom = 1;
    for (const auto& [k, c] : t.pair_counts) {
      if (c < min_freq) continue;
      const int a = static_cast<int>(k >> 32);
      const int b = static_cast<int>(k & 0xFFFFFFFFu);
      const unsigned __int128 denom = static_cast<unsigned __int128>(t.unit_counts[static_cast<std::size_t>(a)]) *
                                      t.unit_counts[static_cast<std::size_t>(b)];
      bool better = !found;
      if (found) {
        // c / denom vs best_count / best_denom, compared exactly.
        const unsigned __int128 lhs = static_cast<unsigned __int128>(c) * best_denom;
        const unsigned __int128 rhs = static_cast<unsigned __int128>(best_count) * denom;
        if (lhs != rhs) {
          better = lhs > rhs;
        } else {
          const int ba = static_cast<int>(best_key >> 32);
          const int bb = static_cast<int>(best_key & 0xFFFFFFFFu);
          const auto& sa = t.symbols[static_cast<std::size_t>(a)];
          const auto& sba = t.symbols[static_cast<std::size_t>(ba)];
          better = sa != sba ? sa < sba
                             : t.symbols[static_cast<std::size_t>(b)] < t.symbols[static_cast<std::size_t>(bb)];
        }
      }
      if (better) {
        found = true;
        best_key = k;
        best_count = c;
        best_denom = denom;
      }
    }
    if (!found) break;

    const int a = static_cast<int>(best_key >> 32);
    const int b = static_cast<int>(best_key & 0xFFFFFFFFu);
    std::string merged = t.symbols[static_cast<std::size_t>(a)];
    const auto& right = t.symbols[static_cast<std::size_t>(b)];
    merged += right.substr(right.starts_with(Vocabulary::kContinuation) ? 2 : 0);
    const int m = t.intern(merged);
    if (merged != Vocabulary::kContinuation && in_vocab.insert(merged).second) {
      tokens.push_back(merged);
    }

    auto affected = std::move(t.pair_words[best_key]);
    t.pair_words.erase(best_key);
    for (auto w : affected) {
      if (stamp[w] == iteration) continue;
      stamp[w] = iteration;
      auto& units = t.words[w].units;
      bool present = false;
      for (std::size_t i = 0; i + 1 < units.size(); ++i) {
        if (units[i] == a && units[i + 1] == b) {
          present = true;
          break;
        }
      }
      if (!present) continue;
      t.add_word(w, -1);
      std::vector<int> next;
      next.reserve(units.size());
      for (std::size_t i = 0; i < units.size(); ++i) {
        if (i + 1 < units.size() && units[i] == a && units[i + 1] == b) {
          next.push_back(m);
          ++i;
        } else {
          next.push_back(units[i]);
        }
      }
      units = std::move(next);
      t.add_word(w, +1);
    }
  }
  return Vocabulary(std::move(tokens));
}

TokenSequence encode(std::string_view text, const Vocabulary& vocab) {
  const std::u32string cps = utf8::decode(text);
  TokenSequence seq;
  std::size_t i = 0;
  std::string piece;
  while (i < cps.size()) {
    if (utf8::is_space(cps[i])) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < cps.size() && !utf8::is_space(cps[end])) ++end;
    const std::u32string_view word(cps.data() + i, end - i);

    const std::size_t ids_before = seq.ids.size();
    bool failed = word.size() > kMaxWordChars;
    std::size_t start = 0;
    while (!failed && start < word.size()) {
      std::optional<TokenId> match;
      std::size_t stop = word.size();
      for (; stop > start; --stop) {
        piece.assign(start > 0 ? Vocabulary::kContinuation : std::string_view());
        for (std::size_t k = start; k < stop; ++k) utf8::append(piece, word[k]);
        match = vocab.find(piece);
        if (match) break;
      }
      if (!match) {
        failed = true;
        break;
      }
      seq.ids.push_back(*match);
      seq.offsets.push_back({i + start, i + stop});
      start = stop;
    }
    if (failed) {
      seq.ids.resize(ids_before);
      seq.offsets.resize(ids_before);
      seq.ids.push_back(Vocabulary::kUnk);
      seq.offsets.push_back({i, end});
    }
    i = end;
  }
  return seq;
}

std::string decode(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t pos = 0; pos < ids.size(); ++pos) {
    const TokenId id = ids[pos];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw DataError("token id " + std::to_string(id) + " at position " + std::to_string(pos) +
                      " is outside the vocabulary (size " + std::to_string(vocab.size()) + ")");
    }
    if (Vocabulary::is_special(id)) continue;
    const auto& tok = vocab.token(id);
    if (tok.starts_with(Vocabulary::kContinuation)) {
      out += tok.substr(2);
    } else {
      if (!out.empty()) out.push_back(' ');
      out += tok;
    }
  }
  return out;
}

}  // namespace rescore
