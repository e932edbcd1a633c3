// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rescore/model.hpp"
#include "rescore/tokenizer.hpp"

namespace rescore {

enum class Task { kFaithfulness, kKnowledge, kEntailment, kWinograd };
inline constexpr std::array<Task, 4> kAllTasks = {Task::kFaithfulness, Task::kKnowledge,
                                                  Task::kEntailment, Task::kWinograd};

std::string_view to_string(Task t);
Task task_from_string(std::string_view s);
/// Knowledge and Winograd items fill a "{MASK}" placeholder.
inline bool is_cloze(Task t) { return t == Task::kKnowledge || t == Task::kWinograd; }

inline constexpr std::string_view kPlaceholder = "{MASK}";
inline constexpr std::string_view kDefaultCue = "In short,";
inline constexpr double kTieThreshold = 1e-9;

enum class Choice { kA, kB, kTie };
std::string_view to_string(Choice c);

struct PromptItem {
  std::string id;
  Task task = Task::kFaithfulness;
  std::string context;
  std::string option_a;
  std::string option_b;
  Choice label = Choice::kA;  // kA or kB
  std::vector<std::string> tags;
};

/// Empty when the item is well formed, otherwise the reason it is not.
std::optional<std::string> validate_item(const PromptItem& item);

struct Reject {
  std::string where;  // "file:line" or item id
  std::string reason;
};

struct PromptFile {
  std::string cue{kDefaultCue};
  std::string language = "en";
  /// Per-task defaults from the header; only "cue" (bool) is read. Without a
  /// header entry the cue is used for faithfulness only.
  nlohmann::json task_defaults = nlohmann::json::object();
  std::vector<PromptItem> items;
  std::vector<Reject> rejects;

  bool uses_cue(Task t) const;
};

/// JSON Lines; an optional first line without "task" is the header
/// {"cue", "language", "task_defaults"}. Malformed items are collected in
/// `rejects` rather than thrown.
PromptFile parse_prompts(std::string_view buffer, const std::string& origin);
PromptFile load_prompts(const std::filesystem::path& path);

/// Scores one option. Higher is better.
class Scorer {
 public:
  virtual ~Scorer() = default;
  /// `segment_a` already carries the cue when the task uses one.
  virtual double continuation(std::string_view segment_a, std::string_view option) = 0;
  /// `context` holds exactly one placeholder.
  virtual double cloze(std::string_view context, std::string_view option) = 0;
  /// Whether items may be scored concurrently.
  virtual bool thread_safe() const { return false; }
};

enum class ContinuationRule { kPairHead, kPll };
enum class ClozeRule { kMultiPass, kFast };

struct ScorerOptions {
  ContinuationRule continuation = ContinuationRule::kPairHead;
  ClozeRule cloze = ClozeRule::kMultiPass;
};

/// "pair" (default), "pll" or "fast-cloze"; the latter keeps pair-head
/// continuation scoring.
ScorerOptions scorer_options_from_string(std::string_view name);

/// Zero-shot scoring with a pretrained encoder in eval mode.
class ModelScorer final : public Scorer {
 public:
  ModelScorer(const Parameters<float>& params, const Vocabulary& vocab, ScorerOptions options = {});

  double continuation(std::string_view segment_a, std::string_view option) override;
  double cloze(std::string_view context, std::string_view option) override;
  bool thread_safe() const override { return true; }

  /// log p(positive) from the pair head for [CLS] A [SEP] B [SEP].
  double pair_score(std::string_view segment_a, std::string_view option) const;
  /// Mean over option subwords of log p(subword) with that subword masked.
  double pll_score(std::string_view segment_a, std::string_view option) const;
  /// k passes; pass i reads subword i with all k positions masked.
  double cloze_multi_pass(std::string_view context, std::string_view option) const;
  /// One pass reading all k positions.
  double cloze_fast(std::string_view context, std::string_view option) const;

  /// [CLS] left [MASK]xk right [SEP] in segment 0, plus the masked positions.
  /// Throws DataError when the option has no subwords or the input is too long.
  std::pair<TrainingExample, std::vector<std::size_t>> cloze_input(std::string_view context,
                                                                   std::string_view option) const;

 private:
  const Parameters<float>& params_;
  const Vocabulary& vocab_;
  ScorerOptions options_;
};

struct ItemResult {
  std::string id;
  Task task = Task::kFaithfulness;
  double score_a = 0;
  double score_b = 0;
  Choice chosen = Choice::kTie;
  bool correct = false;
  bool tie = false;
  std::vector<std::string> tags;
};

struct TaskSummary {
  std::size_t items = 0;
  std::size_t correct = 0;  // excludes ties
  std::size_t ties = 0;
  double accuracy = 0;      // (correct + 0.5 ties) / items
};

struct ScoreReport {
  std::string language = "en";
  std::string cue{kDefaultCue};
  std::string scorer = "pair";
  std::vector<ItemResult> items;  // ordered by id
  std::vector<std::pair<Task, TaskSummary>> tasks;  // tasks present, fixed order
  double mean_accuracy = 0;  // mean over present tasks
  std::vector<Reject> rejects;
};

/// Scores both options of every item and aggregates per task.
ScoreReport evaluate_task(Scorer& scorer, const PromptFile& prompts);
ScoreReport evaluate_task(Scorer& scorer, const std::vector<PromptItem>& items);

/// Choice for a pair of scores with the tie threshold applied.
Choice choose(double score_a, double score_b);

nlohmann::json report_to_json(const ScoreReport& report);
/// One row per task plus a "mean" row.
std::string report_to_csv(const ScoreReport& report);
/// Structural and arithmetic checks; returns every violation found.
std::vector<std::string> validate_report(const nlohmann::json& report);

struct NBestInput {
  std::string id;
  std::string context;
  std::string cue{kDefaultCue};
  std::vector<std::string> candidates;
};

struct RankedCandidate {
  std::size_t index = 0;  // position in the input
  std::string text;
  double score = 0;
  double copeland = 0;
  std::size_t rank = 0;   // 1 = winner
};

/// Every unordered pair is a match: the higher score gets a point, a tie half
/// a point each. Ordered by Copeland score, then raw score, then input index.
std::vector<RankedCandidate> rerank_nbest(Scorer& scorer, const NBestInput& input);
/// Same ranking from precomputed scores.
std::vector<RankedCandidate> copeland_rank(const std::vector<std::string>& candidates,
                                           const std::vector<double>& scores);

/// JSON Lines of {"id"?, "context", "cue"?, "candidates"}.
std::vector<NBestInput> load_nbest(const std::filesystem::path& path);
nlohmann::json rerank_to_json(const NBestInput& input, const std::vector<RankedCandidate>& ranked);

struct PairAccuracy {
  std::size_t pairs = 0;
  std::size_t correct = 0;
  double accuracy() const { return pairs ? static_cast<double>(correct) / static_cast<double>(pairs) : 0; }
};

/// Classifies unmasked sentence pairs with the pair head (positive when
/// logit[positive] > logit[negative]).
PairAccuracy pair_head_accuracy(const Parameters<float>& params, const Vocabulary& vocab,
                                const SentenceCorpus& corpus, const PairSampler& sampler);

}  // namespace rescore
