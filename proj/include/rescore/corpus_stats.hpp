// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>

#include "json.hpp"
#include "rescore/corpus.hpp"
#include "rescore/tokenizer.hpp"

namespace rescore {

struct TtrReport {
  double mean_sentence_ttr = 0;
  double sentence_iqr = 0;
  double mean_pair_ttr = 0;
  double pair_iqr = 0;
  std::size_t sample_size = 1000;
};

/// Distinct ids over total ids. Throws ConfigError on an empty unit.
double type_token_ratio(std::span<const std::int32_t> ids);

/// Interquartile range with linear interpolation between order statistics.
double interquartile_range(std::span<const double> values);

/// Samples `sample_size` sentences and `sample_size` adjacent same-document
/// sentence pairs without replacement and reports mean TTR and IQR of each.
TtrReport ttr_stats(const SentenceCorpus& corpus, const Vocabulary& vocab,
                    std::size_t sample_size, std::uint64_t seed);

nlohmann::json to_json(const TtrReport& r);

}  // namespace rescore
