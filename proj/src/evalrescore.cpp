// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rescore/evalrescore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <set>

#include "rescore/error.hpp"
#include "rescore/io.hpp"
#include "rescore/utf8.hpp"

namespace rescore {

std::string_view to_string(Task t) {
  switch (t) {
    case Task::kFaithfulness: return "faithfulness";
    case Task::kKnowledge: return "knowledge";
    case Task::kEntailment: return "entailment";
    case Task::kWinograd: return "winograd";
  }
  return "?";
}

Task task_from_string(std::string_view s) {
  for (Task t : kAllTasks) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown task '" + std::string(s) +
                    "' (expected faithfulness, knowledge, entailment or winograd)");
}

std::string_view to_string(Choice c) {
  switch (c) {
    case Choice::kA: return "a";
    case Choice::kB: return "b";
    case Choice::kTie: return "tie";
  }
  return "?";
}

namespace {

std::size_t count_placeholders(std::string_view s) {
  std::size_t n = 0;
  for (auto p = s.find(kPlaceholder); p != std::string_view::npos; p = s.find(kPlaceholder, p + 1)) ++n;
  return n;
}

double log_softmax_at(std::span<const float> logits, std::size_t index) {
  double mx = -INFINITY;
  for (float x : logits) mx = std::max(mx, static_cast<double>(x));
  double sum = 0;
  for (float x : logits) sum += std::exp(static_cast<double>(x) - mx);
  return static_cast<double>(logits[index]) - mx - std::log(sum);
}

bool has_space_prefix(std::string_view s) {
  if (s.empty()) return true;
  return utf8::is_space(utf8::decode(s).front());
}

}  // namespace

std::optional<std::string> validate_item(const PromptItem& item) {
  if (item.id.empty()) return "missing id";
  if (utf8::collapse_whitespace(item.context).empty()) return "empty context";
  if (utf8::collapse_whitespace(item.option_a).empty() || utf8::collapse_whitespace(item.option_b).empty()) {
    return "empty option";
  }
  if (item.option_a == item.option_b) return "options are identical";
  if (item.label == Choice::kTie) return "label must be a or b";
  if (count_placeholders(item.option_a) + count_placeholders(item.option_b) > 0) {
    return "options must not contain the placeholder";
  }
  const std::size_t n = count_placeholders(item.context);
  if (is_cloze(item.task) && n != 1) {
    return std::string(to_string(item.task)) + " context needs exactly one " + std::string(kPlaceholder) +
           " (found " + std::to_string(n) + ")";
  }
  if (!is_cloze(item.task) && n != 0) {
    return std::string(to_string(item.task)) + " context must not contain " + std::string(kPlaceholder);
  }
  return std::nullopt;
}

bool PromptFile::uses_cue(Task t) const {
  const std::string key(to_string(t));
  if (task_defaults.is_object() && task_defaults.contains(key) && task_defaults[key].is_object()) {
    const auto& d = task_defaults[key];
    if (d.contains("cue") && d["cue"].is_boolean()) return d["cue"].get<bool>();
  }
  return t == Task::kFaithfulness;
}

PromptFile parse_prompts(std::string_view buffer, const std::string& origin) {
  PromptFile file;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  bool first = true;
  std::size_t pos = 0;
  while (pos < buffer.size()) {
    auto end = buffer.find('\n', pos);
    if (end == std::string_view::npos) end = buffer.size();
    std::string_view line = buffer.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (utf8::collapse_whitespace(line).empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      file.rejects.push_back({where, std::string("invalid JSON: ") + e.what()});
      first = false;
      continue;
    }
    if (first && j.is_object() && !j.contains("task")) {
      first = false;
      try {
        file.cue = j.value("cue", std::string(kDefaultCue));
        file.language = j.value("language", std::string("en"));
        if (j.contains("task_defaults")) file.task_defaults = j["task_defaults"];
      } catch (const nlohmann::json::exception& e) {
        throw DataError(where + ": malformed header: " + e.what());
      }
      continue;
    }
    first = false;
    PromptItem item;
    try {
      if (!j.is_object()) throw DataError("item is not a JSON object");
      item.id = j.at("id").get<std::string>();
      item.task = task_from_string(j.at("task").get<std::string>());
      item.context = j.at("context").get<std::string>();
      item.option_a = j.at("option_a").get<std::string>();
      item.option_b = j.at("option_b").get<std::string>();
      const auto label = j.at("label").get<std::string>();
      if (label == "a") {
        item.label = Choice::kA;
      } else if (label == "b") {
        item.label = Choice::kB;
      } else {
        throw DataError("label must be \"a\" or \"b\"");
      }
      if (j.contains("tags")) item.tags = j["tags"].get<std::vector<std::string>>();
    } catch (const std::exception& e) {
      file.rejects.push_back({where, e.what()});
      continue;
    }
    if (auto bad = validate_item(item)) {
      file.rejects.push_back({where, *bad});
      continue;
    }
    if (!seen.insert(item.id).second) {
      file.rejects.push_back({where, "duplicate id " + item.id});
      continue;
    }
    file.items.push_back(std::move(item));
  }
  return file;
}

PromptFile load_prompts(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingDependency("prompt file " + path.string() + " not found");
  return parse_prompts(io::read_file(path), path.string());
}

ScorerOptions scorer_options_from_string(std::string_view name) {
  ScorerOptions o;
  if (name == "pair") return o;
  if (name == "pll") {
    o.continuation = ContinuationRule::kPll;
    return o;
  }
  if (name == "fast-cloze") {
    o.cloze = ClozeRule::kFast;
    return o;
  }
  throw ConfigError("unknown scorer '" + std::string(name) + "' (expected pair, pll or fast-cloze)");
}

ModelScorer::ModelScorer(const Parameters<float>& params, const Vocabulary& vocab, ScorerOptions options)
    : params_(params), vocab_(vocab), options_(options) {
  if (static_cast<std::size_t>(params.config().vocab_size) != vocab.size()) {
    throw ConfigError("checkpoint vocab_size " + std::to_string(params.config().vocab_size) +
                      " does not match vocabulary size " + std::to_string(vocab.size()));
  }
}

double ModelScorer::continuation(std::string_view segment_a, std::string_view option) {
  return options_.continuation == ContinuationRule::kPll ? pll_score(segment_a, option)
                                                         : pair_score(segment_a, option);
}

double ModelScorer::cloze(std::string_view context, std::string_view option) {
  return options_.cloze == ClozeRule::kFast ? cloze_fast(context, option)
                                            : cloze_multi_pass(context, option);
}

namespace {

std::size_t max_len_for(const ModelConfig& c) {
  return std::min<std::size_t>(kMaxSeqLen, static_cast<std::size_t>(c.max_positions));
}

TrainingExample pack_or_throw(const Vocabulary& vocab, const ModelConfig& config,
                              std::string_view a, std::string_view b) {
  const auto ea = encode(a, vocab);
  const auto eb = encode(b, vocab);
  auto ex = pack_pair(ea.ids, eb.ids, max_len_for(config));
  if (!ex) throw DataError("segment is empty after tokenization and trimming");
  return *ex;
}

}  // namespace

double ModelScorer::pair_score(std::string_view segment_a, std::string_view option) const {
  const auto ex = pack_or_throw(vocab_, params_.config(), segment_a, option);
  ForwardOptions fo;
  fo.skip_mlm = true;
  const auto out = forward<float>(params_, ex, Mode::kEval, nullptr, fo);
  return log_softmax_at(out.pair_logits, static_cast<std::size_t>(PairLabel::kPositive));
}

double ModelScorer::pll_score(std::string_view segment_a, std::string_view option) const {
  const auto ex = pack_or_throw(vocab_, params_.config(), segment_a, option);
  std::size_t b_begin = 0;
  while (ex.segments[b_begin] == 0) ++b_begin;
  const std::size_t b_end = ex.attention_len - 1;  // final SEP
  double sum = 0;
  for (std::size_t p = b_begin; p < b_end; ++p) {
    TrainingExample masked = ex;
    masked.ids[p] = Vocabulary::kMask;
    ForwardOptions fo;
    fo.mlm_positions = {p};
    const auto out = forward<float>(params_, masked, Mode::kEval, nullptr, fo);
    sum += log_softmax_at(out.logits_at(0), static_cast<std::size_t>(ex.ids[p]));
  }
  return sum / static_cast<double>(b_end - b_begin);
}

std::pair<TrainingExample, std::vector<std::size_t>> ModelScorer::cloze_input(std::string_view context,
                                                                              std::string_view option) const {
  const auto at = context.find(kPlaceholder);
  if (at == std::string_view::npos || count_placeholders(context) != 1) {
    throw DataError("cloze context needs exactly one " + std::string(kPlaceholder));
  }
  const auto left = encode(context.substr(0, at), vocab_).ids;
  const auto target = encode(option, vocab_).ids;
  if (target.empty()) throw DataError("option '" + std::string(option) + "' has no subwords");
  const std::string_view right_text = context.substr(at + kPlaceholder.size());
  auto right = encode(right_text, vocab_).ids;
  // Text glued to the placeholder (e.g. a final period) continues the word.
  if (!right.empty() && !has_space_prefix(right_text) && !Vocabulary::is_special(right[0])) {
    if (auto cont = vocab_.find(std::string(Vocabulary::kContinuation) + vocab_.token(right[0]))) {
      right[0] = *cont;
    }
  }
  const std::size_t len = 2 + left.size() + target.size() + right.size();
  if (len > max_len_for(params_.config())) {
    throw DataError("cloze input of " + std::to_string(len) + " tokens exceeds the " +
                    std::to_string(max_len_for(params_.config())) + "-token window");
  }
  TrainingExample ex;
  ex.mlm_labels.fill(kNoLabel);
  std::size_t p = 0;
  ex.ids[p++] = Vocabulary::kCls;
  for (auto id : left) ex.ids[p++] = id;
  std::vector<std::size_t> positions;
  for (auto id : target) {
    positions.push_back(p);
    ex.mlm_labels[p] = id;
    ex.ids[p++] = Vocabulary::kMask;
  }
  for (auto id : right) ex.ids[p++] = id;
  ex.ids[p++] = Vocabulary::kSep;
  ex.attention_len = static_cast<std::uint16_t>(p);
  return {ex, positions};
}

double ModelScorer::cloze_multi_pass(std::string_view context, std::string_view option) const {
  const auto [ex, positions] = cloze_input(context, option);
  double sum = 0;
  for (std::size_t p : positions) {
    ForwardOptions fo;
    fo.mlm_positions = {p};
    const auto out = forward<float>(params_, ex, Mode::kEval, nullptr, fo);
    sum += log_softmax_at(out.logits_at(0), static_cast<std::size_t>(ex.mlm_labels[p]));
  }
  return sum / static_cast<double>(positions.size());
}

double ModelScorer::cloze_fast(std::string_view context, std::string_view option) const {
  const auto [ex, positions] = cloze_input(context, option);
  ForwardOptions fo;
  fo.mlm_positions = positions;
  const auto out = forward<float>(params_, ex, Mode::kEval, nullptr, fo);
  double sum = 0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    sum += log_softmax_at(out.logits_at(i), static_cast<std::size_t>(ex.mlm_labels[positions[i]]));
  }
  return sum / static_cast<double>(positions.size());
}

Choice choose(double score_a, double score_b) {
  if (std::abs(score_a - score_b) < kTieThreshold) return Choice::kTie;
  return score_a > score_b ? Choice::kA : Choice::kB;
}

ScoreReport evaluate_task(Scorer& scorer, const PromptFile& prompts) {
  ScoreReport report;
  report.language = prompts.language;
  report.cue = prompts.cue;
  report.rejects = prompts.rejects;

  std::vector<const PromptItem*> valid;
  for (const auto& item : prompts.items) {
    if (auto bad = validate_item(item)) {
      report.rejects.push_back({item.id, *bad});
    } else {
      valid.push_back(&item);
    }
  }

  const std::size_t n = valid.size();
  std::vector<ItemResult> results(n);
  std::vector<std::string> errors(n);
  std::exception_ptr failure;
  auto score_one = [&](std::size_t i) {
    const PromptItem& item = *valid[i];
    ItemResult& r = results[i];
    r.id = item.id;
    r.task = item.task;
    r.tags = item.tags;
    try {
      if (is_cloze(item.task)) {
        r.score_a = scorer.cloze(item.context, item.option_a);
        r.score_b = scorer.cloze(item.context, item.option_b);
      } else {
        std::string a = item.context;
        if (prompts.uses_cue(item.task) && !prompts.cue.empty()) a += " " + prompts.cue;
        r.score_a = scorer.continuation(a, item.option_a);
        r.score_b = scorer.continuation(a, item.option_b);
      }
    } catch (const DataError& e) {
      errors[i] = e.what();
      return;
    }
    r.chosen = choose(r.score_a, r.score_b);
    r.tie = r.chosen == Choice::kTie;
    r.correct = r.chosen == item.label;
  };
  if (scorer.thread_safe()) {
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
      try {
        score_one(i);
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t i = 0; i < n; ++i) score_one(i);
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      report.rejects.push_back({valid[i]->id, errors[i]});
    } else {
      report.items.push_back(std::move(results[i]));
    }
  }
  std::stable_sort(report.items.begin(), report.items.end(),
                   [](const ItemResult& a, const ItemResult& b) { return a.id < b.id; });

  for (Task t : kAllTasks) {
    TaskSummary s;
    for (const auto& r : report.items) {
      if (r.task != t) continue;
      ++s.items;
      s.ties += r.tie;
      s.correct += r.correct;
    }
    if (s.items == 0) continue;
    s.accuracy = (static_cast<double>(s.correct) + 0.5 * static_cast<double>(s.ties)) /
                 static_cast<double>(s.items);
    report.tasks.emplace_back(t, s);
  }
  double sum = 0;
  for (const auto& [t, s] : report.tasks) sum += s.accuracy;
  report.mean_accuracy = report.tasks.empty() ? 0.0 : sum / static_cast<double>(report.tasks.size());
  return report;
}

ScoreReport evaluate_task(Scorer& scorer, const std::vector<PromptItem>& items) {
  PromptFile f;
  f.items = items;
  return evaluate_task(scorer, f);
}

nlohmann::json report_to_json(const ScoreReport& report) {
  nlohmann::json tasks = nlohmann::json::object();
  nlohmann::json order = nlohmann::json::array();
  for (const auto& [t, s] : report.tasks) {
    tasks[std::string(to_string(t))] = {
        {"items", s.items}, {"correct", s.correct}, {"ties", s.ties}, {"accuracy", s.accuracy}};
    order.push_back(to_string(t));
  }
  nlohmann::json items = nlohmann::json::array();
  for (const auto& r : report.items) {
    items.push_back({{"id", r.id},
                     {"task", to_string(r.task)},
                     {"score_a", r.score_a},
                     {"score_b", r.score_b},
                     {"chosen", to_string(r.chosen)},
                     {"correct", r.correct},
                     {"tie", r.tie},
                     {"tags", r.tags}});
  }
  nlohmann::json rejects = nlohmann::json::array();
  for (const auto& r : report.rejects) rejects.push_back({{"where", r.where}, {"reason", r.reason}});
  return {{"schema", "rescore-lab.report.v1"},
          {"language", report.language},
          {"cue", report.cue},
          {"scorer", report.scorer},
          {"task_order", order},
          {"tasks", tasks},
          {"mean_accuracy", report.mean_accuracy},
          {"rejects", rejects},
          {"items", items}};
}

std::string report_to_csv(const ScoreReport& report) {
  std::string out = "task,items,correct,ties,accuracy\n";
  char buf[64];
  for (const auto& [t, s] : report.tasks) {
    std::snprintf(buf, sizeof buf, "%.10g", s.accuracy);
    out += std::string(to_string(t)) + "," + std::to_string(s.items) + "," + std::to_string(s.correct) + "," +
           std::to_string(s.ties) + "," + buf + "\n";
  }
  std::snprintf(buf, sizeof buf, "%.10g", report.mean_accuracy);
  out += std::string("mean,,,,") + buf + "\n";
  return out;
}

std::vector<std::string> validate_report(const nlohmann::json& r) {
  std::vector<std::string> errs;
  auto need = [&](const nlohmann::json& obj, const char* key, auto pred, const char* type) {
    if (!obj.is_object() || !obj.contains(key) || !pred(obj[key])) {
      errs.push_back(std::string("field '") + key + "' missing or not " + type);
      return false;
    }
    return true;
  };
  auto is_str = [](const nlohmann::json& j) { return j.is_string(); };
  auto is_num = [](const nlohmann::json& j) { return j.is_number(); };
  auto is_uint = [](const nlohmann::json& j) { return j.is_number_unsigned(); };
  auto is_bool = [](const nlohmann::json& j) { return j.is_boolean(); };
  auto is_arr = [](const nlohmann::json& j) { return j.is_array(); };
  auto is_obj = [](const nlohmann::json& j) { return j.is_object(); };

  if (!r.is_object()) return {"report is not a JSON object"};
  if (need(r, "schema", is_str, "a string") && r["schema"] != "rescore-lab.report.v1") {
    errs.push_back("unknown schema " + r["schema"].get<std::string>());
  }
  need(r, "language", is_str, "a string");
  need(r, "cue", is_str, "a string");
  need(r, "scorer", is_str, "a string");
  need(r, "rejects", is_arr, "an array");
  const bool have_items = need(r, "items", is_arr, "an array");
  const bool have_tasks = need(r, "tasks", is_obj, "an object");
  const bool have_order = need(r, "task_order", is_arr, "an array");
  const bool have_mean = need(r, "mean_accuracy", is_num, "a number");

  std::map<std::string, std::array<std::size_t, 3>> counted;  // items, correct, ties
  if (have_items) {
    for (const auto& it : r["items"]) {
      const auto before = errs.size();
      need(it, "id", is_str, "a string");
      need(it, "task", is_str, "a string");
      need(it, "score_a", is_num, "a number");
      need(it, "score_b", is_num, "a number");
      need(it, "chosen", is_str, "a string");
      need(it, "correct", is_bool, "a boolean");
      need(it, "tie", is_bool, "a boolean");
      need(it, "tags", is_arr, "an array");
      if (errs.size() != before) continue;
      const auto chosen = it["chosen"].get<std::string>();
      if (chosen != "a" && chosen != "b" && chosen != "tie") errs.push_back("item chosen must be a, b or tie");
      if (it["tie"].get<bool>() != (chosen == "tie")) errs.push_back("item tie flag disagrees with chosen");
      if (it["tie"].get<bool>() && it["correct"].get<bool>()) errs.push_back("tied item marked correct");
      auto& c = counted[it["task"].get<std::string>()];
      ++c[0];
      c[1] += it["correct"].get<bool>();
      c[2] += it["tie"].get<bool>();
    }
  }
  if (have_tasks) {
    double sum = 0;
    for (const auto& [name, t] : r["tasks"].items()) {
      const auto before = errs.size();
      need(t, "items", is_uint, "a count");
      need(t, "correct", is_uint, "a count");
      need(t, "ties", is_uint, "a count");
      need(t, "accuracy", is_num, "a number");
      if (errs.size() != before) continue;
      const auto n = t["items"].get<std::size_t>();
      const auto c = t["correct"].get<std::size_t>();
      const auto ties = t["ties"].get<std::size_t>();
      const double acc = t["accuracy"].get<double>();
      sum += acc;
      if (n == 0 || c + ties > n) errs.push_back("task " + name + ": inconsistent counts");
      const double expect = n ? (static_cast<double>(c) + 0.5 * static_cast<double>(ties)) / static_cast<double>(n) : 0;
      if (std::abs(acc - expect) > 1e-12) errs.push_back("task " + name + ": accuracy != (correct + 0.5 ties) / items");
      if (have_items) {
        const auto it = counted.find(name);
        if (it == counted.end() || it->second != std::array<std::size_t, 3>{n, c, ties}) {
          errs.push_back("task " + name + ": counts disagree with items");
        }
      }
    }
    if (have_items && counted.size() != r["tasks"].size()) errs.push_back("items reference tasks without a summary");
    if (have_order && r["task_order"].size() != r["tasks"].size()) errs.push_back("task_order does not list every task");
    if (have_mean && !r["tasks"].empty()) {
      const double mean = sum / static_cast<double>(r["tasks"].size());
      if (std::abs(mean - r["mean_accuracy"].get<double>()) > 1e-12) errs.push_back("mean_accuracy is not the mean of task accuracies");
    }
  }
  return errs;
}

std::vector<RankedCandidate> copeland_rank(const std::vector<std::string>& candidates,
                                           const std::vector<double>& scores) {
  const std::size_t n = candidates.size();
  if (n < 2) throw DataError("N-best list needs at least 2 candidates");
  if (scores.size() != n) throw DataError("one score per candidate required");
  std::set<std::string> uniq(candidates.begin(), candidates.end());
  if (uniq.size() != n) throw DataError("duplicate candidates in N-best list");
  std::vector<RankedCandidate> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {i, candidates[i], scores[i], 0.0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      switch (choose(scores[i], scores[j])) {
        case Choice::kA: out[i].copeland += 1; break;
        case Choice::kB: out[j].copeland += 1; break;
        case Choice::kTie: out[i].copeland += 0.5; out[j].copeland += 0.5; break;
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.copeland != b.copeland) return a.copeland > b.copeland;
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
  });
  for (std::size_t r = 0; r < n; ++r) out[r].rank = r + 1;
  return out;
}

std::vector<RankedCandidate> rerank_nbest(Scorer& scorer, const NBestInput& input) {
  std::set<std::string> uniq(input.candidates.begin(), input.candidates.end());
  if (input.candidates.size() < 2) throw DataError("N-best list needs at least 2 candidates");
  if (uniq.size() != input.candidates.size()) throw DataError("duplicate candidates in N-best list");
  std::string a = input.context;
  if (!input.cue.empty()) a += " " + input.cue;
  std::vector<double> scores;
  for (const auto& c : input.candidates) scores.push_back(scorer.continuation(a, c));
  return copeland_rank(input.candidates, scores);
}

std::vector<NBestInput> load_nbest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingDependency("N-best file " + path.string() + " not found");
  const std::string text = io::read_file(path);
  std::vector<NBestInput> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (utf8::collapse_whitespace(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      NBestInput in;
      in.id = j.value("id", "nbest:" + std::to_string(out.size()));
      in.context = j.at("context").get<std::string>();
      in.cue = j.value("cue", std::string(kDefaultCue));
      in.candidates = j.at("candidates").get<std::vector<std::string>>();
      out.push_back(std::move(in));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json rerank_to_json(const NBestInput& input, const std::vector<RankedCandidate>& ranked) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : ranked) {
    rows.push_back({{"rank", r.rank}, {"index", r.index}, {"candidate", r.text}, {"score", r.score},
                    {"copeland", r.copeland}});
  }
  return {{"id", input.id}, {"winner", ranked.front().index}, {"ranking", rows}};
}

PairAccuracy pair_head_accuracy(const Parameters<float>& params, const Vocabulary& vocab,
                                const SentenceCorpus& corpus, const PairSampler& sampler) {
  const auto pairs = build_pairs(corpus, sampler);
  const std::size_t max_len = max_len_for(params.config());
  std::vector<signed char> verdict(pairs.size(), -1);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const auto a = encode(corpus.documents[p.a.doc].sentences[p.a.sentence], vocab);
    const auto b = encode(corpus.documents[p.b.doc].sentences[p.b.sentence], vocab);
    auto ex = pack_pair(a.ids, b.ids, max_len);
    if (!ex) continue;
    ForwardOptions fo;
    fo.skip_mlm = true;
    const auto out = forward<float>(params, *ex, Mode::kEval, nullptr, fo);
    const bool positive = out.pair_logits[1] > out.pair_logits[0];
    verdict[i] = positive == (p.label == PairLabel::kPositive);
  }
  PairAccuracy acc;
  for (auto v : verdict) {
    if (v < 0) continue;
    ++acc.pairs;
    acc.correct += static_cast<std::size_t>(v);
  }
  return acc;
}

}  // namespace rescore
