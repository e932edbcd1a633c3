// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rescore/corpus.hpp"
#include "rescore/corpus_stats.hpp"
#include "rescore/evalrescore.hpp"
#include "rescore/model.hpp"
#include "rescore/pretrain_examples.hpp"
#include "rescore/synthetic.hpp"
#include "rescore/trainer.hpp"

namespace rescore {

using Path = std::filesystem::path;

/// Manifest entries live in <dir>/manifest.json where <dir> holds the
/// command's primary output. An entry is replaced when a later run writes the
/// same outputs, so each output is listed exactly once.
struct ManifestEntry {
  std::string command;
  nlohmann::json config;  // effective options, defaults included
  std::vector<Path> inputs;
  std::vector<Path> outputs;
  double wall_seconds = 0;
};

Path manifest_path_for(const Path& output);
void record_manifest(const Path& manifest, const ManifestEntry& entry);

/// Shortest decimal that reads back to the same double.
std::string format_double(double v);

struct GenCorpusOptions {
  SyntheticOptions synthetic;
  Path out_dir;
  nlohmann::json to_json() const;
};

struct BuildCorpusOptions {
  std::vector<Path> wiki;
  std::vector<Path> news;
  CapPolicy caps;
  std::optional<Path> abbrev_file;
  Path out;
  nlohmann::json to_json() const;
};

struct TrainVocabOptions {
  Path corpus;
  VocabTrainingOptions vocab;
  Path out;
  nlohmann::json to_json() const;
};

struct MakeExamplesOptions {
  Path corpus;
  Path vocab;
  Objective objective = Objective::kNsp;
  std::uint64_t seed = 0;
  double positive_fraction = 0.5;
  MaskingPolicy masking;
  std::size_t shard_size = 100000;
  Path out_dir;
  nlohmann::json to_json() const;
};

struct PretrainOptions {
  Path examples_dir;
  Path vocab;
  ModelConfig model;
  OptimizerConfig optimizer;
  std::string objective = "nsp";
  std::uint64_t seed = 0;
  std::size_t steps_override = 0;
  std::size_t stop_after = 0;
  std::optional<Path> resume;
  bool unsafe_grid = false;
  Path out;
  /// Loss trace CSV; defaults to <out>.trace.csv.
  std::optional<Path> trace;
  std::function<void(std::size_t, const StepRecord&)> on_step;
  nlohmann::json to_json() const;
};

struct EvaluateOptions {
  Path checkpoint;
  Path vocab;
  Path prompts;
  std::string scorer = "pair";
  std::string format = "json";
  Path out;
  nlohmann::json to_json() const;
};

struct RescoreOptions {
  Path checkpoint;
  Path vocab;
  Path nbest;
  std::string scorer = "pair";
  Path out;
  nlohmann::json to_json() const;
};

struct StatsOptions {
  Path corpus;
  Path vocab;
  std::size_t sample_size = 1000;
  std::uint64_t seed = 0;
  Path out;
  nlohmann::json to_json() const;
};

/// Shard files of an example directory in name order; throws
/// MissingDependency("... run make-examples first") when there are none.
std::vector<Path> list_shards(const Path& dir);

void cmd_gen_corpus(const GenCorpusOptions& o);
void cmd_build_corpus(const BuildCorpusOptions& o);
void cmd_train_vocab(const TrainVocabOptions& o);
void cmd_make_examples(const MakeExamplesOptions& o);
Checkpoint cmd_pretrain(const PretrainOptions& o);
ScoreReport cmd_evaluate(const EvaluateOptions& o);
void cmd_rescore(const RescoreOptions& o);
TtrReport cmd_stats(const StatsOptions& o);

std::string trace_csv(const std::vector<StepRecord>& history);

struct SweepCell {
  std::string objective;
  double dropout = 0;
  int layers = 4;
  int batch = 128;
  std::string key() const;
};

struct CellResult {
  SweepCell cell;
  bool ok = false;
  std::string error;
  std::vector<std::pair<Task, TaskSummary>> tasks;
};

struct SweepSpec {
  std::vector<std::string> objectives{"nsp", "sop"};
  std::vector<double> dropouts{0.0, 0.1};
  std::vector<int> layers{4, 8, 12};
  std::vector<int> batches{128, 256};

  /// Objective-major, then dropout, layers, batch; the CSV row order.
  std::vector<SweepCell> cells() const;
  void validate(bool strict_grid) const;
  nlohmann::json to_json() const;
};

struct SweepOptions {
  SweepSpec grid;
  Path corpus;
  Path vocab;
  Path prompts;
  Path out_dir;
  /// Settings shared by every cell; layers, dropout and batch are overridden.
  ModelConfig model;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  std::size_t steps_override = 0;
  std::string scorer = "pair";
  bool unsafe_grid = false;
  int parallel = 1;
  bool fail_fast = false;
  /// Depth used by the batch-size view; the shallowest grid depth if unset.
  std::optional<int> batch_view_layers;
  nlohmann::json to_json() const;
};

/// Long format: objective,dropout,layers,batch,task,accuracy,ties. Failed
/// cells are written with empty accuracy and ties.
std::string sweep_long_csv(const std::vector<CellResult>& results);
/// One row per (objective, batch, dropout, layers), a column per task, and
/// the mean across tasks.
std::string sweep_pivot_csv(const std::vector<CellResult>& results);
/// Per objective and task: depth rows (deepest first) by dropout columns,
/// plus a Diff column when exactly two dropout levels are present. Uses the
/// first batch size of the grid.
std::string sweep_depth_tables(const std::vector<CellResult>& results, const SweepSpec& grid);
/// Per objective and task: batch rows by dropout columns at one depth.
std::string sweep_batch_table(const std::vector<CellResult>& results, const SweepSpec& grid, int layers);

/// A runner fails a cell by throwing or by returning a non-empty error.
using CellRunner = std::function<CellResult(const SweepCell&)>;
/// Runs every cell (sequentially unless parallel > 1) and writes
/// sweep_long.csv, sweep_pivot.csv, tables_depth.txt and tables_batch.txt.
std::vector<CellResult> run_sweep(const SweepOptions& o, const CellRunner& runner);
/// The real runner: make-examples once per objective, then pretrain and
/// evaluate each cell under <out_dir>/cells/<key>/.
std::vector<CellResult> cmd_sweep(const SweepOptions& o);

}  // namespace rescore
