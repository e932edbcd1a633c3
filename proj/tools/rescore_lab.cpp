// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

// rescore-lab: corpus -> vocabulary -> examples -> pretraining -> zero-shot
// evaluation and N-best rescoring.

#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rescore/error.hpp"
#include "rescore/pipeline.hpp"

using namespace rescore;

namespace {

void add_model_flags(CLI::App* c, ModelConfig& m) {
  c->add_option("--layers", m.layers, "Encoder depth {4,8,12}")->capture_default_str();
  c->add_option("--dropout", m.ffn_dropout, "Feed-forward dropout {0,0.1}")->capture_default_str();
  c->add_option("--hidden", m.hidden, "Hidden size")->capture_default_str();
  c->add_option("--heads", m.heads, "Attention heads")->capture_default_str();
  c->add_option("--ffn", m.ffn_dim, "Feed-forward width")->capture_default_str();
  c->add_option("--max-positions", m.max_positions, "Position table size")->capture_default_str();
}

void add_optimizer_flags(CLI::App* c, OptimizerConfig& o) {
  c->add_option("--batch", o.batch_size, "Batch size {128,256}")->capture_default_str();
  c->add_option("--max-lr", o.max_lr, "Peak learning rate")->capture_default_str();
  c->add_option("--initial-lr", o.initial_lr, "Learning rate at step 0")->capture_default_str();
  c->add_option("--min-lr", o.min_lr, "Final learning rate")->capture_default_str();
  c->add_option("--warmup-ratio", o.warmup_ratio, "Warmup share of steps")->capture_default_str();
  c->add_option("--weight-decay", o.weight_decay, "AdamW weight decay")->capture_default_str();
  c->add_option("--clip-norm", o.clip_norm, "Global gradient-norm clip, 0 = off")->capture_default_str();
}

int run(int argc, char** argv) {
  CLI::App app{"rescore-lab: small-encoder pretraining and zero-shot rescoring"};
  app.set_config("--config", "", "TOML/INI file with flag values (sections per subcommand)");
  app.require_subcommand(1);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print the effective configuration as JSON and exit");

  GenCorpusOptions gen;
  auto* c_gen = app.add_subcommand("gen-corpus", "Write the synthetic two-topic corpus (wiki.jsonl, news.jsonl)");
  c_gen->add_option("--out", gen.out_dir, "Output directory")->required();
  c_gen->add_option("--bytes", gen.synthetic.target_bytes, "Approximate corpus size in bytes")->capture_default_str();
  c_gen->add_option("--seed", gen.synthetic.seed, "Generator seed")->capture_default_str();
  c_gen->add_option("--wiki-fraction", gen.synthetic.wiki_fraction, "Share of wiki documents")->capture_default_str();

  BuildCorpusOptions build;
  std::string abbrev;
  auto* c_build = app.add_subcommand("build-corpus", "Ingest, cap and sentence-split raw documents");
  c_build->add_option("--wiki", build.wiki, "Encyclopedic JSON Lines file (repeatable)");
  c_build->add_option("--news", build.news, "News JSON Lines file (repeatable)");
  c_build->add_option("--wiki-cap", build.caps.wiki_cap, "Wiki soft cap in characters")->capture_default_str();
  c_build->add_option("--news-cap", build.caps.news_cap, "News soft cap in characters")->capture_default_str();
  c_build->add_option("--abbrev-file", abbrev, "Abbreviations that never end a sentence");
  c_build->add_option("--out", build.out, "Output corpus (JSON Lines)")->required();

  TrainVocabOptions tv;
  auto* c_vocab = app.add_subcommand("train-vocab", "Train a WordPiece vocabulary");
  c_vocab->add_option("--corpus", tv.corpus, "Sentence corpus from build-corpus")->required();
  c_vocab->add_option("--vocab-size", tv.vocab.target_size, "Target vocabulary size")->capture_default_str();
  c_vocab->add_option("--min-freq", tv.vocab.min_frequency, "Minimum pair count for a merge")->capture_default_str();
  c_vocab->add_option("--out", tv.out, "Vocabulary file")->required();

  MakeExamplesOptions mk;
  std::string mk_objective = "nsp";
  auto* c_mk = app.add_subcommand("make-examples", "Build masked NSP/SOP example shards");
  c_mk->add_option("--corpus", mk.corpus, "Sentence corpus")->required();
  c_mk->add_option("--vocab", mk.vocab, "Vocabulary file")->required();
  c_mk->add_option("--objective", mk_objective, "nsp or sop")->capture_default_str();
  c_mk->add_option("--seed", mk.seed, "Seed")->capture_default_str();
  c_mk->add_option("--positive-fraction", mk.positive_fraction, "Share of positive pairs")->capture_default_str();
  c_mk->add_option("--select-rate", mk.masking.select_rate, "MLM selection rate")->capture_default_str();
  c_mk->add_option("--shard-size", mk.shard_size, "Examples per shard")->capture_default_str();
  c_mk->add_option("--out", mk.out_dir, "Output directory")->required();

  PretrainOptions pt;
  std::string resume;
  auto* c_pt = app.add_subcommand("pretrain", "Pretrain an encoder for one epoch");
  c_pt->add_option("--examples", pt.examples_dir, "Directory from make-examples")->required();
  c_pt->add_option("--vocab", pt.vocab, "Vocabulary file")->required();
  c_pt->add_option("--objective", pt.objective, "nsp or sop")->capture_default_str();
  add_model_flags(c_pt, pt.model);
  add_optimizer_flags(c_pt, pt.optimizer);
  c_pt->add_option("--seed", pt.seed, "Seed")->capture_default_str();
  c_pt->add_option("--steps-override", pt.steps_override, "Run exactly this many steps (0 = one epoch)")
      ->capture_default_str();
  c_pt->add_option("--stop-after", pt.stop_after, "Stop after this many steps, keeping the schedule");
  c_pt->add_option("--resume", resume, "Continue from a checkpoint written with --stop-after");
  c_pt->add_flag("--unsafe-grid", pt.unsafe_grid, "Allow values outside the experiment grid");
  c_pt->add_option("--out", pt.out, "Checkpoint file")->required();
  bool progress = false;
  c_pt->add_flag("--progress", progress, "Print per-step losses to stderr");

  EvaluateOptions ev;
  auto* c_ev = app.add_subcommand("evaluate", "Zero-shot binary-choice evaluation");
  c_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint from pretrain")->required();
  c_ev->add_option("--vocab", ev.vocab, "Vocabulary file")->required();
  c_ev->add_option("--prompts", ev.prompts, "Prompt file (JSON Lines)")->required();
  c_ev->add_option("--scorer", ev.scorer, "pair, pll or fast-cloze")->capture_default_str();
  c_ev->add_option("--format", ev.format, "json or csv")->capture_default_str();
  c_ev->add_option("--out", ev.out, "Report file")->required();

  RescoreOptions rs;
  auto* c_rs = app.add_subcommand("rescore", "Rerank N-best candidates by pairwise Copeland score");
  c_rs->add_option("--checkpoint", rs.checkpoint, "Checkpoint from pretrain")->required();
  c_rs->add_option("--vocab", rs.vocab, "Vocabulary file")->required();
  c_rs->add_option("--nbest", rs.nbest, "JSON Lines of {context, cue, candidates}")->required();
  c_rs->add_option("--scorer", rs.scorer, "pair or pll")->capture_default_str();
  c_rs->add_option("--out", rs.out, "Ranking file")->required();

  StatsOptions st;
  auto* c_st = app.add_subcommand("stats", "Type-token ratio statistics");
  c_st->add_option("--corpus", st.corpus, "Sentence corpus")->required();
  c_st->add_option("--vocab", st.vocab, "Vocabulary file")->required();
  c_st->add_option("--sample-size", st.sample_size, "Sentences and pairs to sample")->capture_default_str();
  c_st->add_option("--seed", st.seed, "Seed")->capture_default_str();
  c_st->add_option("--out", st.out, "Output JSON")->required();

  SweepOptions sw;
  std::string bv_layers;
  auto* c_sw = app.add_subcommand("sweep", "Train and evaluate every cell of the hyperparameter grid");
  c_sw->add_option("--corpus", sw.corpus, "Sentence corpus")->required();
  c_sw->add_option("--vocab", sw.vocab, "Vocabulary file")->required();
  c_sw->add_option("--prompts", sw.prompts, "Prompt file")->required();
  c_sw->add_option("--out", sw.out_dir, "Output directory")->required();
  c_sw->add_option("--objectives", sw.grid.objectives, "Objectives")->delimiter(',')->capture_default_str();
  c_sw->add_option("--dropouts", sw.grid.dropouts, "Dropout levels")->delimiter(',')->capture_default_str();
  c_sw->add_option("--layer-grid", sw.grid.layers, "Depths")->delimiter(',')->capture_default_str();
  c_sw->add_option("--batches", sw.grid.batches, "Batch sizes")->delimiter(',')->capture_default_str();
  c_sw->add_option("--hidden", sw.model.hidden, "Hidden size")->capture_default_str();
  c_sw->add_option("--heads", sw.model.heads, "Attention heads")->capture_default_str();
  c_sw->add_option("--ffn", sw.model.ffn_dim, "Feed-forward width")->capture_default_str();
  c_sw->add_option("--max-lr", sw.optimizer.max_lr, "Peak learning rate")->capture_default_str();
  c_sw->add_option("--seed", sw.seed, "Seed")->capture_default_str();
  c_sw->add_option("--steps-override", sw.steps_override, "Steps per cell (0 = one epoch)")->capture_default_str();
  c_sw->add_option("--scorer", sw.scorer, "pair, pll or fast-cloze")->capture_default_str();
  c_sw->add_option("--batch-view-layers", bv_layers, "Depth for the batch-size table");
  c_sw->add_option("--parallel", sw.parallel, "Cells run concurrently")->capture_default_str();
  c_sw->add_flag("--fail-fast", sw.fail_fast, "Abort on the first failed cell");
  c_sw->add_flag("--unsafe-grid", sw.unsafe_grid, "Allow values outside the experiment grid");

  std::uint64_t gc_seed = 0;
  std::size_t gc_coords = 256;
  auto* c_gc = app.add_subcommand("grad-check", "Finite-difference gradient check on the tiny model");
  c_gc->add_option("--seed", gc_seed, "Seed")->capture_default_str();
  c_gc->add_option("--coordinates", gc_coords, "Coordinates to check")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  if (const char* env = std::getenv("RESCORE_LAB_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) throw ConfigError("RESCORE_LAB_THREADS must be a positive integer");
    omp_set_num_threads(static_cast<int>(n));
  }

  auto emit = [&](const nlohmann::json& cfg) {
    std::cout << cfg.dump(2) << "\n";
    return 0;
  };

  if (*c_gen) {
    if (print_config) return emit(gen.to_json());
    cmd_gen_corpus(gen);
  } else if (*c_build) {
    if (!abbrev.empty()) build.abbrev_file = abbrev;
    if (print_config) return emit(build.to_json());
    cmd_build_corpus(build);
  } else if (*c_vocab) {
    if (print_config) return emit(tv.to_json());
    cmd_train_vocab(tv);
  } else if (*c_mk) {
    mk.objective = objective_from_string(mk_objective);
    if (print_config) return emit(mk.to_json());
    cmd_make_examples(mk);
  } else if (*c_pt) {
    objective_from_string(pt.objective);
    if (!resume.empty()) pt.resume = resume;
    if (progress) {
      pt.on_step = [](std::size_t s, const StepRecord& r) {
        std::fprintf(stderr, "step %zu lr %.3e total %.4f mlm %.4f pair %.4f\n", s, r.lr, r.total, r.mlm, r.pair);
      };
    }
    if (print_config) return emit(pt.to_json());
    cmd_pretrain(pt);
  } else if (*c_ev) {
    if (print_config) return emit(ev.to_json());
    const auto report = cmd_evaluate(ev);
    for (const auto& r : report.rejects) std::fprintf(stderr, "warning: skipped %s: %s\n", r.where.c_str(), r.reason.c_str());
    std::fprintf(stderr, "mean accuracy %.4f over %zu tasks\n", report.mean_accuracy, report.tasks.size());
  } else if (*c_rs) {
    if (print_config) return emit(rs.to_json());
    cmd_rescore(rs);
  } else if (*c_st) {
    if (print_config) return emit(st.to_json());
    cmd_stats(st);
  } else if (*c_sw) {
    if (!bv_layers.empty()) sw.batch_view_layers = std::stoi(bv_layers);
    if (print_config) return emit(sw.to_json());
    const auto results = cmd_sweep(sw);
    int failed = 0;
    for (const auto& r : results) {
      if (!r.ok) {
        ++failed;
        std::fprintf(stderr, "cell %s failed: %s\n", r.cell.key().c_str(), r.error.c_str());
      }
    }
    if (failed > 0) return static_cast<int>(ExitCode::kInternal);
  } else if (*c_gc) {
    GradCheckOptions g;
    g.coordinates = gc_coords;
    const auto r = grad_check(tiny_model_config(), gc_seed, g);
    if (r.skipped) {
      std::printf("skipped: %s\n", r.message.c_str());
      return 0;
    }
    std::printf("max relative error %.3e over %zu coordinates in %zu groups (worst: %s)\n", r.max_relative_error,
                r.coordinates, r.groups_covered, r.worst_coordinate.c_str());
    return r.max_relative_error < 1e-4 ? 0 : static_cast<int>(ExitCode::kInternal);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return static_cast<int>(ExitCode::kInternal);
  }
}
