// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rescore/pretrain_examples.hpp"
#include "rescore/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "rescore/error.hpp"

namespace rescore {

std::string_view to_string(Objective o) { return o == Objective::kNsp ? "nsp" : "sop"; }

Objective objective_from_string(std::string_view s) {
  if (s == "nsp") return Objective::kNsp;
  if (s == "sop") return Objective::kSop;
  throw ConfigError("unknown objective '" + std::string(s) + "' (expected nsp or sop)");
}

void MaskingPolicy::validate() const {
  if (!(select_rate > 0.0 && select_rate < 1.0)) throw ConfigError("select_rate must be in (0, 1)");
  if (mask_rate < 0 || random_rate < 0 || keep_rate < 0) {
    throw ConfigError("corruption rates must be non-negative");
  }
  if (std::abs(mask_rate + random_rate + keep_rate - 1.0) > 1e-9) {
    throw ConfigError("mask_rate + random_rate + keep_rate must equal 1");
  }
}

void PairSampler::validate() const {
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) {
    throw ConfigError("positive_fraction must be in (0, 1)");
  }
}

std::vector<SentencePair> build_pairs(const SentenceCorpus& corpus, const PairSampler& sampler) {
  sampler.validate();
  const auto& docs = corpus.documents;
  if (sampler.objective == Objective::kNsp && docs.size() < 2) {
    throw ConfigError("NSP pairs need at least 2 documents, corpus has " + std::to_string(docs.size()));
  }
  // Foreign-document draws are uniform over non-empty documents.
  std::vector<std::size_t> nonempty;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (!docs[d].sentences.empty()) nonempty.push_back(d);
  }

  std::vector<std::vector<SentencePair>> per_doc(docs.size());
  const auto n = static_cast<std::ptrdiff_t>(docs.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t di = 0; di < n; ++di) {
    const auto d = static_cast<std::size_t>(di);
    Rng rng(mix_seed(sampler.seed, d));
    const auto& sents = docs[d].sentences;
    auto& out = per_doc[d];
    const auto foreign = [&]() -> SentenceRef {
      // nonempty holds >= 2 entries whenever this is reached with another document available.
      std::size_t other = d;
      while (other == d) other = nonempty[rng.uniform_index(nonempty.size())];
      return {other, rng.uniform_index(docs[other].sentences.size())};
    };
    const bool has_foreign = nonempty.size() > 1 || (nonempty.size() == 1 && nonempty[0] != d);
    if (sents.size() == 1) {
      if (sampler.objective == Objective::kNsp && has_foreign &&
          !rng.bernoulli(sampler.positive_fraction)) {
        out.push_back({{d, 0}, foreign(), PairLabel::kNegative});
      }
      continue;
    }
    for (std::size_t i = 0; i + 1 < sents.size(); ++i) {
      const bool positive = rng.bernoulli(sampler.positive_fraction);
      if (positive) {
        out.push_back({{d, i}, {d, i + 1}, PairLabel::kPositive});
      } else if (sampler.objective == Objective::kSop) {
        out.push_back({{d, i + 1}, {d, i}, PairLabel::kNegative});
      } else if (has_foreign) {
        out.push_back({{d, i}, foreign(), PairLabel::kNegative});
      }
    }
  }
  std::vector<SentencePair> pairs;
  for (auto& v : per_doc) pairs.insert(pairs.end(), v.begin(), v.end());
  return pairs;
}

MaskResult mask_tokens(std::span<const TokenId> ids, const MaskingPolicy& policy,
                       std::size_t vocab_size, Rng& rng) {
  MaskResult r;
  r.ids.assign(ids.begin(), ids.end());
  r.labels.assign(ids.size(), kNoLabel);
  r.actions.assign(ids.size(), MaskAction::kNone);
  std::vector<std::size_t> maskable;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!Vocabulary::is_special(ids[i])) maskable.push_back(i);
  }
  if (maskable.empty()) throw ConfigError("sequence has no maskable positions");
  const auto target = static_cast<std::size_t>(
      std::max<double>(1.0, std::round(policy.select_rate * static_cast<double>(maskable.size()))));
  const std::size_t count = std::min(target, maskable.size());
  const auto num_regular = vocab_size - static_cast<std::size_t>(Vocabulary::kNumSpecial);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(maskable.size() - i));
    std::swap(maskable[i], maskable[j]);
    const std::size_t pos = maskable[i];
    r.labels[pos] = ids[pos];
    const double u = rng.uniform();
    if (u < policy.mask_rate) {
      r.ids[pos] = Vocabulary::kMask;
      r.actions[pos] = MaskAction::kMask;
    } else if (u < policy.mask_rate + policy.random_rate && num_regular > 0) {
      r.ids[pos] = static_cast<TokenId>(Vocabulary::kNumSpecial) +
                   static_cast<TokenId>(rng.uniform_index(num_regular));
      r.actions[pos] = MaskAction::kRandom;
    } else {
      r.actions[pos] = MaskAction::kKeep;
    }
  }
  return r;
}

std::optional<TrainingExample> pack_pair(std::span<const TokenId> a, std::span<const TokenId> b,
                                         std::size_t max_len) {
  if (max_len < 5 || max_len > kMaxSeqLen) throw ConfigError("max_len must be in [5, 256]");
  if (a.empty() || b.empty()) return std::nullopt;
  std::size_t len_a = a.size();
  std::size_t len_b = b.size();
  const std::size_t capacity = max_len - 3;
  while (len_a + len_b > capacity) {
    if (len_a > len_b) {
      --len_a;
    } else {
      --len_b;
    }
  }
  TrainingExample ex;
  std::size_t p = 0;
  ex.ids[p++] = Vocabulary::kCls;
  for (std::size_t i = 0; i < len_a; ++i) ex.ids[p++] = a[i];
  ex.ids[p++] = Vocabulary::kSep;
  const std::size_t seg_b = p;
  for (std::size_t i = 0; i < len_b; ++i) ex.ids[p++] = b[i];
  ex.ids[p++] = Vocabulary::kSep;
  for (std::size_t i = seg_b; i < p; ++i) ex.segments[i] = 1;
  ex.attention_len = static_cast<std::uint16_t>(p);
  return ex;
}

std::vector<TrainingExample> make_examples(const SentenceCorpus& corpus, const Vocabulary& vocab,
                                           const ExampleBuildOptions& options,
                                           ExampleBuildStats* stats) {
  options.masking.validate();
  const auto pairs = build_pairs(corpus, options.sampler);

  std::vector<std::vector<TokenId>> encoded;
  std::vector<std::size_t> doc_offset(corpus.documents.size() + 1, 0);
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    doc_offset[d + 1] = doc_offset[d] + corpus.documents[d].sentences.size();
  }
  encoded.resize(doc_offset.back());
  const auto ndocs = static_cast<std::ptrdiff_t>(corpus.documents.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t di = 0; di < ndocs; ++di) {
    const auto d = static_cast<std::size_t>(di);
    const auto& sents = corpus.documents[d].sentences;
    for (std::size_t s = 0; s < sents.size(); ++s) encoded[doc_offset[d] + s] = encode(sents[s], vocab).ids;
  }
  const auto lookup = [&](SentenceRef r) -> const std::vector<TokenId>& {
    return encoded[doc_offset[r.doc] + r.sentence];
  };

  std::vector<std::optional<TrainingExample>> built(pairs.size());
  const auto npairs = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pi = 0; pi < npairs; ++pi) {
    const auto i = static_cast<std::size_t>(pi);
    auto ex = pack_pair(lookup(pairs[i].a), lookup(pairs[i].b));
    if (!ex) continue;
    ex->pair_label = pairs[i].label;
    Rng rng(mix_seed(mix_seed(options.sampler.seed, "mask"), i));
    const std::span<const TokenId> live(ex->ids.data(), ex->attention_len);
    auto masked = mask_tokens(live, options.masking, vocab.size(), rng);
    std::copy(masked.ids.begin(), masked.ids.end(), ex->ids.begin());
    std::copy(masked.labels.begin(), masked.labels.end(), ex->mlm_labels.begin());
    built[i] = std::move(ex);
  }

  std::vector<TrainingExample> out;
  out.reserve(pairs.size());
  for (auto& ex : built) {
    if (ex) out.push_back(std::move(*ex));
  }
  if (stats) {
    stats->pairs = pairs.size();
    stats->discarded = pairs.size() - out.size();
  }
  if (options.shuffle) {
    Rng rng(mix_seed(options.sampler.seed, "shuffle"));
    for (std::size_t i = out.size(); i > 1; --i) {
      std::swap(out[i - 1], out[rng.uniform_index(i)]);
    }
  }
  return out;
}

namespace {

constexpr char kShardMagic[4] = {'R', 'L', 'E', 'X'};
constexpr std::uint32_t kShardVersion = 1;

template <class T>
void put_le(std::string& buf, T v) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<char>(u & 0xFF));
    if constexpr (sizeof(T) > 1) u = static_cast<U>(u >> 8);
  }
}

template <class T>
T get_le(const unsigned char* p) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) u = static_cast<U>((u << 8) | p[i]);
  return static_cast<T>(u);
}

constexpr std::size_t kRecordBytes = kMaxSeqLen * (2 + 1 + 4) + 1 + 2;

}  // namespace

void write_shard(const std::filesystem::path& path, std::span<const TrainingExample> examples) {
  std::string buf;
  buf.reserve(20 + examples.size() * kRecordBytes);
  buf.append(kShardMagic, 4);
  put_le<std::uint32_t>(buf, kShardVersion);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(kMaxSeqLen));
  put_le<std::uint64_t>(buf, examples.size());
  for (const auto& ex : examples) {
    for (auto id : ex.ids) {
      if (id < 0 || id > 0xFFFF) throw DataError("token id " + std::to_string(id) + " does not fit a u16 shard field");
      put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(id));
    }
    for (auto s : ex.segments) put_le<std::uint8_t>(buf, s);
    for (auto l : ex.mlm_labels) put_le<std::int32_t>(buf, l);
    put_le<std::uint8_t>(buf, static_cast<std::uint8_t>(ex.pair_label));
    put_le<std::uint16_t>(buf, ex.attention_len);
  }
  io::atomic_write(path, buf);
}

std::vector<TrainingExample> read_shard(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDependency("cannot open example shard " + path.string() + " (run make-examples first)");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 20 || std::memcmp(p, kShardMagic, 4) != 0) {
    throw DataError(path.string() + ": not an example shard (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(p + 4);
  if (version != kShardVersion) {
    throw DataError(path.string() + ": unsupported shard version " + std::to_string(version));
  }
  if (get_le<std::uint32_t>(p + 8) != kMaxSeqLen) throw DataError(path.string() + ": unexpected max_len");
  const auto count = get_le<std::uint64_t>(p + 12);
  if (buf.size() != 20 + count * kRecordBytes) {
    throw DataError(path.string() + ": truncated shard (" + std::to_string(buf.size()) + " bytes for " +
                    std::to_string(count) + " examples)");
  }
  std::vector<TrainingExample> out(count);
  const unsigned char* r = p + 20;
  for (auto& ex : out) {
    for (auto& id : ex.ids) {
      id = get_le<std::uint16_t>(r);
      r += 2;
    }
    for (auto& s : ex.segments) s = *r++;
    for (auto& l : ex.mlm_labels) {
      l = get_le<std::int32_t>(r);
      r += 4;
    }
    const auto label = *r++;
    if (label > 1) throw DataError(path.string() + ": invalid pair label");
    ex.pair_label = static_cast<PairLabel>(label);
    ex.attention_len = get_le<std::uint16_t>(r);
    r += 2;
    if (ex.attention_len > kMaxSeqLen) throw DataError(path.string() + ": attention_len exceeds max_len");
  }
  return out;
}

}  // namespace rescore
