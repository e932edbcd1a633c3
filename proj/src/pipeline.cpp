// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rescore/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "rescore/error.hpp"
#include "rescore/io.hpp"
#include "rescore/tokenizer.hpp"

namespace rescore {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

json paths_json(const std::vector<Path>& ps) {
  json a = json::array();
  for (const auto& p : ps) a.push_back(p.generic_string());
  return a;
}

void require_file(const Path& p, const std::string& what, const std::string& producer) {
  if (std::filesystem::exists(p)) return;
  std::string msg = what + " " + p.string() + " not found";
  if (!producer.empty()) msg += "; run " + producer + " first";
  throw MissingDependency(msg);
}

json masking_json(const MaskingPolicy& m) {
  return {{"select_rate", m.select_rate}, {"mask_rate", m.mask_rate}, {"random_rate", m.random_rate},
          {"keep_rate", m.keep_rate}};
}

std::string percent(double acc) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * acc);
  return buf;
}

std::string dropout_label(double d) { return format_double(d) + " dr"; }

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

Path manifest_path_for(const Path& output) {
  const Path parent = output.parent_path();
  return (parent.empty() ? Path(".") : parent) / "manifest.json";
}

void record_manifest(const Path& manifest, const ManifestEntry& entry) {
  json doc = {{"entries", json::array()}};
  if (std::filesystem::exists(manifest)) {
    try {
      doc = json::parse(io::read_file(manifest));
    } catch (const json::exception& e) {
      throw DataError(manifest.string() + ": corrupt manifest: " + e.what());
    }
  }
  std::set<std::string> outs;
  for (const auto& p : entry.outputs) outs.insert(p.generic_string());
  json kept = json::array();
  for (const auto& e : doc.value("entries", json::array())) {
    bool overlaps = false;
    for (const auto& o : e.value("outputs", json::array())) overlaps |= outs.count(o.value("path", "")) > 0;
    if (!overlaps) kept.push_back(e);
  }
  auto hashed = [](const std::vector<Path>& ps) {
    json a = json::array();
    for (const auto& p : ps) a.push_back({{"path", p.generic_string()}, {"sha256", io::sha256_file(p)}});
    return a;
  };
  kept.push_back({{"command", entry.command},
                  {"config", entry.config},
                  {"config_hash", io::json_hash(entry.config)},
                  {"inputs", hashed(entry.inputs)},
                  {"outputs", hashed(entry.outputs)},
                  {"wall_seconds", entry.wall_seconds}});
  doc["entries"] = kept;
  io::atomic_write(manifest, doc.dump(2) + "\n");
}

json GenCorpusOptions::to_json() const {
  return {{"target_bytes", synthetic.target_bytes}, {"seed", synthetic.seed},
          {"wiki_fraction", synthetic.wiki_fraction}, {"min_sentences", synthetic.min_sentences},
          {"max_sentences", synthetic.max_sentences}, {"out_dir", out_dir.generic_string()}};
}

json BuildCorpusOptions::to_json() const {
  return {{"wiki", paths_json(wiki)},
          {"news", paths_json(news)},
          {"wiki_cap", caps.wiki_cap},
          {"news_cap", caps.news_cap},
          {"abbrev_file", abbrev_file ? json(abbrev_file->generic_string()) : json(nullptr)},
          {"out", out.generic_string()}};
}

json TrainVocabOptions::to_json() const {
  return {{"corpus", corpus.generic_string()}, {"vocab_size", vocab.target_size},
          {"min_frequency", vocab.min_frequency}, {"out", out.generic_string()}};
}

json MakeExamplesOptions::to_json() const {
  return {{"corpus", corpus.generic_string()}, {"vocab", vocab.generic_string()},
          {"objective", to_string(objective)},  {"seed", seed},
          {"positive_fraction", positive_fraction}, {"masking", masking_json(masking)},
          {"shard_size", shard_size},             {"max_len", kMaxSeqLen},
          {"out_dir", out_dir.generic_string()}};
}

json PretrainOptions::to_json() const {
  return {{"examples_dir", examples_dir.generic_string()},
          {"vocab", vocab.generic_string()},
          {"model", model.to_json()},
          {"optimizer", optimizer.to_json()},
          {"objective", objective},
          {"seed", seed},
          {"steps_override", steps_override},
          {"stop_after", stop_after},
          {"resume", resume ? json(resume->generic_string()) : json(nullptr)},
          {"unsafe_grid", unsafe_grid},
          {"out", out.generic_string()}};
}

json EvaluateOptions::to_json() const {
  return {{"checkpoint", checkpoint.generic_string()}, {"vocab", vocab.generic_string()},
          {"prompts", prompts.generic_string()},       {"scorer", scorer},
          {"format", format},                          {"out", out.generic_string()}};
}

json RescoreOptions::to_json() const {
  return {{"checkpoint", checkpoint.generic_string()}, {"vocab", vocab.generic_string()},
          {"nbest", nbest.generic_string()},           {"scorer", scorer},
          {"out", out.generic_string()}};
}

json StatsOptions::to_json() const {
  return {{"corpus", corpus.generic_string()}, {"vocab", vocab.generic_string()},
          {"sample_size", sample_size},        {"seed", seed},
          {"out", out.generic_string()}};
}

std::vector<Path> list_shards(const Path& dir) {
  std::vector<Path> out;
  if (std::filesystem::is_directory(dir)) {
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".rlex") out.push_back(e.path());
    }
  }
  if (out.empty()) {
    throw MissingDependency("no example shards in " + dir.string() + "; run make-examples first");
  }
  std::sort(out.begin(), out.end());
  return out;
}

void cmd_gen_corpus(const GenCorpusOptions& o) {
  const auto t0 = Clock::now();
  if (o.synthetic.target_bytes == 0) throw ConfigError("gen-corpus: --bytes must be > 0");
  if (!(o.synthetic.wiki_fraction > 0 && o.synthetic.wiki_fraction < 1)) {
    throw ConfigError("gen-corpus: --wiki-fraction must be in (0, 1)");
  }
  if (o.synthetic.min_sentences < 1 || o.synthetic.max_sentences < o.synthetic.min_sentences) {
    throw ConfigError("gen-corpus: need 1 <= min sentences <= max sentences");
  }
  write_synthetic_corpus(generate_corpus(o.synthetic), o.out_dir);
  record_manifest(o.out_dir / "manifest.json",
                  {"gen-corpus", o.to_json(), {}, {o.out_dir / "wiki.jsonl", o.out_dir / "news.jsonl"},
                   seconds_since(t0)});
}

void cmd_build_corpus(const BuildCorpusOptions& o) {
  const auto t0 = Clock::now();
  o.caps.validate();
  if (o.wiki.empty() && o.news.empty()) throw ConfigError("build-corpus: give --wiki and/or --news files");
  std::vector<Path> inputs;
  for (const auto& p : o.wiki) require_file(p, "input", ""), inputs.push_back(p);
  for (const auto& p : o.news) require_file(p, "input", ""), inputs.push_back(p);
  std::set<std::string> abbrev;
  if (o.abbrev_file) {
    require_file(*o.abbrev_file, "abbreviation file", "");
    abbrev = load_abbreviations(*o.abbrev_file);
    inputs.push_back(*o.abbrev_file);
  }
  auto docs = ingest(o.wiki, Source::kWiki);
  auto news = ingest(o.news, Source::kNews);
  docs.insert(docs.end(), std::make_move_iterator(news.begin()), std::make_move_iterator(news.end()));
  const auto kept = apply_caps(docs, o.caps);
  write_corpus(build_sentence_corpus(kept, std::move(abbrev)), o.out);
  record_manifest(manifest_path_for(o.out), {"build-corpus", o.to_json(), inputs, {o.out}, seconds_since(t0)});
}

void cmd_train_vocab(const TrainVocabOptions& o) {
  const auto t0 = Clock::now();
  require_file(o.corpus, "corpus", "build-corpus");
  const auto corpus = read_corpus(o.corpus);
  train_vocab(corpus, o.vocab).save(o.out);
  record_manifest(manifest_path_for(o.out), {"train-vocab", o.to_json(), {o.corpus}, {o.out}, seconds_since(t0)});
}

void cmd_make_examples(const MakeExamplesOptions& o) {
  const auto t0 = Clock::now();
  if (o.shard_size == 0) throw ConfigError("make-examples: --shard-size must be > 0");
  require_file(o.corpus, "corpus", "build-corpus");
  require_file(o.vocab, "vocabulary", "train-vocab");
  const auto corpus = read_corpus(o.corpus);
  const auto vocab = Vocabulary::load(o.vocab);
  ExampleBuildOptions bo;
  bo.sampler = {o.objective, o.positive_fraction, o.seed};
  bo.masking = o.masking;
  ExampleBuildStats stats;
  const auto examples = make_examples(corpus, vocab, bo, &stats);
  if (examples.empty()) throw DataError("make-examples: corpus produced no examples");

  std::filesystem::create_directories(o.out_dir);
  for (const auto& e : std::filesystem::directory_iterator(o.out_dir)) {
    if (e.path().extension() == ".rlex") std::filesystem::remove(e.path());
  }
  std::vector<Path> outputs;
  for (std::size_t i = 0, k = 0; i < examples.size(); i += o.shard_size, ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "shard-%05zu.rlex", k);
    const std::size_t n = std::min(o.shard_size, examples.size() - i);
    write_shard(o.out_dir / name, std::span<const TrainingExample>(examples).subspan(i, n));
    outputs.push_back(o.out_dir / name);
  }
  const json meta = {{"objective", to_string(o.objective)}, {"seed", o.seed},
                     {"examples", examples.size()},           {"pairs", stats.pairs},
                     {"discarded", stats.discarded},          {"vocab_size", vocab.size()},
                     {"vocab_sha256", io::sha256_file(o.vocab)}, {"shards", outputs.size()}};
  io::atomic_write(o.out_dir / "examples.json", meta.dump(2) + "\n");
  outputs.push_back(o.out_dir / "examples.json");
  record_manifest(o.out_dir / "manifest.json",
                  {"make-examples", o.to_json(), {o.corpus, o.vocab}, outputs, seconds_since(t0)});
}

std::string trace_csv(const std::vector<StepRecord>& history) {
  std::string out = "step,lr,total,mlm,pair\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& r = history[i];
    out += std::to_string(i + 1) + "," + format_double(r.lr) + "," + format_double(r.total) + "," +
           format_double(r.mlm) + "," + format_double(r.pair) + "\n";
  }
  return out;
}

Checkpoint cmd_pretrain(const PretrainOptions& o) {
  const auto t0 = Clock::now();
  const auto shards = list_shards(o.examples_dir);
  require_file(o.vocab, "vocabulary", "train-vocab");
  const auto vocab = Vocabulary::load(o.vocab);
  const Path meta_path = o.examples_dir / "examples.json";
  if (std::filesystem::exists(meta_path)) {
    const auto meta = json::parse(io::read_file(meta_path));
    if (meta.value("objective", o.objective) != o.objective) {
      throw ConfigError("pretrain: --objective " + o.objective + " but the examples were built for " +
                        meta.value("objective", std::string("?")));
    }
    if (meta.value("vocab_size", vocab.size()) != vocab.size()) {
      throw ConfigError("pretrain: examples were built with a different vocabulary");
    }
  }
  TrainOptions t;
  t.model = o.model;
  t.model.vocab_size = static_cast<int>(vocab.size());
  t.optimizer = o.optimizer;
  t.objective = o.objective;
  t.seed = o.seed;
  t.steps_override = o.steps_override;
  t.stop_after = o.stop_after;
  t.strict_grid = !o.unsafe_grid;
  t.on_step = o.on_step;

  std::vector<TrainingExample> examples;
  for (const auto& s : shards) {
    auto part = read_shard(s);
    examples.insert(examples.end(), part.begin(), part.end());
  }
  std::vector<Path> inputs = shards;
  inputs.push_back(o.vocab);
  std::optional<Checkpoint> resume;
  if (o.resume) {
    resume = load_checkpoint(*o.resume, &t.model);
    inputs.push_back(*o.resume);
  }
  Checkpoint ck = train(examples, t, resume ? &*resume : nullptr);
  save_checkpoint(ck, o.out);
  Path trace = o.trace.value_or(Path(o.out.string() + ".trace.csv"));
  io::atomic_write(trace, trace_csv(ck.history));
  json cfg = o.to_json();
  cfg["model"] = t.model.to_json();
  cfg["trace"] = trace.generic_string();
  record_manifest(manifest_path_for(o.out), {"pretrain", cfg, inputs, {o.out, trace}, seconds_since(t0)});
  return ck;
}

ScoreReport cmd_evaluate(const EvaluateOptions& o) {
  const auto t0 = Clock::now();
  if (o.format != "json" && o.format != "csv") throw ConfigError("evaluate: --format must be json or csv");
  const auto scorer_opts = scorer_options_from_string(o.scorer);
  require_file(o.checkpoint, "checkpoint", "pretrain");
  require_file(o.vocab, "vocabulary", "train-vocab");
  require_file(o.prompts, "prompt file", "");
  const auto vocab = Vocabulary::load(o.vocab);
  const auto ck = load_checkpoint(o.checkpoint);
  const auto prompts = load_prompts(o.prompts);
  ModelScorer scorer(ck.params, vocab, scorer_opts);
  auto report = evaluate_task(scorer, prompts);
  report.scorer = o.scorer;
  const json j = report_to_json(report);
  if (const auto errs = validate_report(j); !errs.empty()) {
    throw Error(ExitCode::kInternal, "report failed schema validation: " + errs.front());
  }
  io::atomic_write(o.out, o.format == "csv" ? report_to_csv(report) : j.dump(2) + "\n");
  record_manifest(manifest_path_for(o.out),
                  {"evaluate", o.to_json(), {o.checkpoint, o.vocab, o.prompts}, {o.out}, seconds_since(t0)});
  return report;
}

void cmd_rescore(const RescoreOptions& o) {
  const auto t0 = Clock::now();
  const auto scorer_opts = scorer_options_from_string(o.scorer);
  require_file(o.checkpoint, "checkpoint", "pretrain");
  require_file(o.vocab, "vocabulary", "train-vocab");
  const auto vocab = Vocabulary::load(o.vocab);
  const auto ck = load_checkpoint(o.checkpoint);
  const auto inputs = load_nbest(o.nbest);
  ModelScorer scorer(ck.params, vocab, scorer_opts);
  json results = json::array();
  for (const auto& in : inputs) results.push_back(rerank_to_json(in, rerank_nbest(scorer, in)));
  io::atomic_write(o.out, json{{"scorer", o.scorer}, {"results", results}}.dump(2) + "\n");
  record_manifest(manifest_path_for(o.out),
                  {"rescore", o.to_json(), {o.checkpoint, o.vocab, o.nbest}, {o.out}, seconds_since(t0)});
}

TtrReport cmd_stats(const StatsOptions& o) {
  const auto t0 = Clock::now();
  require_file(o.corpus, "corpus", "build-corpus");
  require_file(o.vocab, "vocabulary", "train-vocab");
  const auto report = ttr_stats(read_corpus(o.corpus), Vocabulary::load(o.vocab), o.sample_size, o.seed);
  io::atomic_write(o.out, to_json(report).dump(2) + "\n");
  record_manifest(manifest_path_for(o.out), {"stats", o.to_json(), {o.corpus, o.vocab}, {o.out}, seconds_since(t0)});
  return report;
}

std::string SweepCell::key() const {
  return objective + "-dr" + format_double(dropout) + "-L" + std::to_string(layers) + "-b" + std::to_string(batch);
}

std::vector<SweepCell> SweepSpec::cells() const {
  std::vector<SweepCell> out;
  for (const auto& o : objectives) {
    for (double d : dropouts) {
      for (int l : layers) {
        for (int b : batches) out.push_back({o, d, l, b});
      }
    }
  }
  return out;
}

void SweepSpec::validate(bool strict_grid) const {
  if (objectives.empty() || dropouts.empty() || layers.empty() || batches.empty()) {
    throw ConfigError("sweep: every grid axis needs at least one value");
  }
  auto unique = [](auto v) {
    std::sort(v.begin(), v.end());
    return std::adjacent_find(v.begin(), v.end()) == v.end();
  };
  if (!unique(objectives) || !unique(dropouts) || !unique(layers) || !unique(batches)) {
    throw ConfigError("sweep: grid axes must not repeat values");
  }
  for (const auto& o : objectives) objective_from_string(o);
  if (!strict_grid) return;
  for (double d : dropouts) {
    if (d != 0.0 && d != 0.1) throw ConfigError("sweep: dropout must be 0 or 0.1 (pass --unsafe-grid)");
  }
  for (int l : layers) {
    if (l != 4 && l != 8 && l != 12) throw ConfigError("sweep: layers must be 4, 8 or 12 (pass --unsafe-grid)");
  }
  for (int b : batches) {
    if (b != 128 && b != 256) throw ConfigError("sweep: batch must be 128 or 256 (pass --unsafe-grid)");
  }
}

json SweepSpec::to_json() const {
  return {{"objectives", objectives}, {"dropouts", dropouts}, {"layers", layers}, {"batches", batches}};
}

json SweepOptions::to_json() const {
  return {{"grid", grid.to_json()},
          {"corpus", corpus.generic_string()},
          {"vocab", vocab.generic_string()},
          {"prompts", prompts.generic_string()},
          {"out_dir", out_dir.generic_string()},
          {"model", model.to_json()},
          {"optimizer", optimizer.to_json()},
          {"seed", seed},
          {"steps_override", steps_override},
          {"scorer", scorer},
          {"unsafe_grid", unsafe_grid},
          {"parallel", parallel},
          {"fail_fast", fail_fast},
          {"batch_view_layers", batch_view_layers ? json(*batch_view_layers) : json(nullptr)}};
}

namespace {

std::vector<Task> tasks_present(const std::vector<CellResult>& results) {
  std::set<Task> seen;
  for (const auto& r : results) {
    for (const auto& [t, s] : r.tasks) seen.insert(t);
  }
  std::vector<Task> out;
  for (Task t : kAllTasks) {
    if (seen.count(t)) out.push_back(t);
  }
  return out;
}

const TaskSummary* find_task(const CellResult& r, Task t) {
  for (const auto& [task, s] : r.tasks) {
    if (task == t) return &s;
  }
  return nullptr;
}

const CellResult* find_cell(const std::vector<CellResult>& results, const std::string& obj, double d, int l, int b) {
  for (const auto& r : results) {
    if (r.cell.objective == obj && r.cell.dropout == d && r.cell.layers == l && r.cell.batch == b) return &r;
  }
  return nullptr;
}

std::string objective_title(const std::string& o) { return o == "sop" ? "MLM+SOP" : "MLM+NSP"; }

}  // namespace

std::string sweep_long_csv(const std::vector<CellResult>& results) {
  const auto tasks = tasks_present(results);
  std::string out = "objective,dropout,layers,batch,task,accuracy,ties\n";
  for (const auto& r : results) {
    for (Task t : tasks) {
      const auto* s = r.ok ? find_task(r, t) : nullptr;
      out += r.cell.objective + "," + format_double(r.cell.dropout) + "," + std::to_string(r.cell.layers) + "," +
             std::to_string(r.cell.batch) + "," + std::string(to_string(t)) + ",";
      if (s) out += format_double(s->accuracy) + "," + std::to_string(s->ties);
      else out += ",";
      out += "\n";
    }
  }
  return out;
}

std::string sweep_pivot_csv(const std::vector<CellResult>& results) {
  const auto tasks = tasks_present(results);
  std::string out = "objective,batch,dropout,layers";
  for (Task t : tasks) out += "," + std::string(to_string(t));
  out += ",mean\n";
  std::vector<const CellResult*> rows;
  for (const auto& r : results) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const CellResult* a, const CellResult* b) {
    return std::tie(a->cell.objective, a->cell.batch, a->cell.dropout, a->cell.layers) <
           std::tie(b->cell.objective, b->cell.batch, b->cell.dropout, b->cell.layers);
  });
  for (const auto* r : rows) {
    out += r->cell.objective + "," + std::to_string(r->cell.batch) + "," + format_double(r->cell.dropout) + "," +
           std::to_string(r->cell.layers);
    double sum = 0;
    std::size_t n = 0;
    for (Task t : tasks) {
      const auto* s = r->ok ? find_task(*r, t) : nullptr;
      out += ",";
      if (s) {
        out += format_double(s->accuracy);
        sum += s->accuracy;
        ++n;
      }
    }
    out += ",";
    if (n == tasks.size() && n > 0) out += format_double(sum / static_cast<double>(n));
    out += "\n";
  }
  return out;
}

std::string sweep_depth_tables(const std::vector<CellResult>& results, const SweepSpec& grid) {
  const auto tasks = tasks_present(results);
  const int batch = grid.batches.front();
  auto depths = grid.layers;
  std::sort(depths.rbegin(), depths.rend());
  const bool diff = grid.dropouts.size() == 2;
  std::string out;
  for (const auto& obj : grid.objectives) {
    out += objective_title(obj) + ", batch size " + std::to_string(batch) + "\n";
    out += "task,depth";
    for (double d : grid.dropouts) out += "," + dropout_label(d);
    if (diff) out += ",Diff";
    out += "\n";
    for (Task t : tasks) {
      for (int l : depths) {
        out += std::string(to_string(t)) + "," + std::to_string(l) + " layers";
        std::vector<const TaskSummary*> vals;
        for (double d : grid.dropouts) {
          const auto* c = find_cell(results, obj, d, l, batch);
          const auto* s = c && c->ok ? find_task(*c, t) : nullptr;
          vals.push_back(s);
          out += "," + (s ? percent(s->accuracy) : std::string("NA"));
        }
        if (diff) {
          out += ",";
          out += vals[0] && vals[1] ? percent(vals[1]->accuracy - vals[0]->accuracy) : std::string("NA");
        }
        out += "\n";
      }
    }
    out += "\n";
  }
  return out;
}

std::string sweep_batch_table(const std::vector<CellResult>& results, const SweepSpec& grid, int layers) {
  const auto tasks = tasks_present(results);
  std::string out;
  for (const auto& obj : grid.objectives) {
    out += objective_title(obj) + ", " + std::to_string(layers) + " layers\n";
    out += "task,batch";
    for (double d : grid.dropouts) out += "," + dropout_label(d);
    out += "\n";
    for (Task t : tasks) {
      for (int b : grid.batches) {
        out += std::string(to_string(t)) + "," + std::to_string(b);
        for (double d : grid.dropouts) {
          const auto* c = find_cell(results, obj, d, layers, b);
          const auto* s = c && c->ok ? find_task(*c, t) : nullptr;
          out += "," + (s ? percent(s->accuracy) : std::string("NA"));
        }
        out += "\n";
      }
    }
    out += "\n";
  }
  return out;
}

std::vector<CellResult> run_sweep(const SweepOptions& o, const CellRunner& runner) {
  const auto t0 = Clock::now();
  o.grid.validate(!o.unsafe_grid);
  if (o.parallel < 1) throw ConfigError("sweep: --parallel must be >= 1");
  const auto cells = o.grid.cells();
  std::vector<CellResult> results(cells.size());
  std::exception_ptr first_failure;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  auto work = [&] {
    for (std::size_t i; !stop && (i = next++) < cells.size();) {
      CellResult r;
      try {
        r = runner(cells[i]);
        r.ok = r.error.empty();
      } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
        if (o.fail_fast) {
          std::lock_guard lock(mu);
          if (!first_failure) first_failure = std::current_exception();
          stop = true;
        }
      }
      r.cell = cells[i];
      results[i] = std::move(r);
    }
  };
  if (o.parallel == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < o.parallel; ++k) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (first_failure) std::rethrow_exception(first_failure);

  int bl = o.batch_view_layers.value_or(*std::min_element(o.grid.layers.begin(), o.grid.layers.end()));
  const std::vector<Path> outputs = {o.out_dir / "sweep_long.csv", o.out_dir / "sweep_pivot.csv",
                                     o.out_dir / "tables_depth.txt", o.out_dir / "tables_batch.txt"};
  io::atomic_write(outputs[0], sweep_long_csv(results));
  io::atomic_write(outputs[1], sweep_pivot_csv(results));
  io::atomic_write(outputs[2], sweep_depth_tables(results, o.grid));
  io::atomic_write(outputs[3], sweep_batch_table(results, o.grid, bl));
  std::vector<Path> inputs;
  for (const auto& p : {o.corpus, o.vocab, o.prompts}) {
    if (!p.empty() && std::filesystem::exists(p)) inputs.push_back(p);
  }
  record_manifest(o.out_dir / "manifest.json", {"sweep", o.to_json(), inputs, outputs, seconds_since(t0)});
  return results;
}

std::vector<CellResult> cmd_sweep(const SweepOptions& o) {
  o.grid.validate(!o.unsafe_grid);
  require_file(o.corpus, "corpus", "build-corpus");
  require_file(o.vocab, "vocabulary", "train-vocab");
  require_file(o.prompts, "prompt file", "");
  for (const auto& obj : o.grid.objectives) {
    MakeExamplesOptions m;
    m.corpus = o.corpus;
    m.vocab = o.vocab;
    m.objective = objective_from_string(obj);
    m.seed = o.seed;
    m.out_dir = o.out_dir / ("examples-" + obj);
    cmd_make_examples(m);
  }
  auto runner = [&](const SweepCell& cell) {
    const Path dir = o.out_dir / "cells" / cell.key();
    PretrainOptions p;
    p.examples_dir = o.out_dir / ("examples-" + cell.objective);
    p.vocab = o.vocab;
    p.model = o.model;
    p.model.layers = cell.layers;
    p.model.ffn_dropout = cell.dropout;
    p.optimizer = o.optimizer;
    p.optimizer.batch_size = cell.batch;
    p.objective = cell.objective;
    p.seed = o.seed;
    p.steps_override = o.steps_override;
    p.unsafe_grid = o.unsafe_grid;
    p.out = dir / "model.rlck";
    cmd_pretrain(p);
    EvaluateOptions e;
    e.checkpoint = p.out;
    e.vocab = o.vocab;
    e.prompts = o.prompts;
    e.scorer = o.scorer;
    e.out = dir / "report.json";
    const auto report = cmd_evaluate(e);
    CellResult r;
    r.cell = cell;
    r.tasks = report.tasks;
    return r;
  };
  return run_sweep(o, runner);
}

}  // namespace rescore
