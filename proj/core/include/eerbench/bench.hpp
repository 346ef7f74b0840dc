#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "eerbench/harness.hpp"
#include "eerbench/nn.hpp"
#include "eerbench/preprocess.hpp"
#include "eerbench/split.hpp"

namespace eerbench::bench {

// One full grid run: every (dataset, task, model) cell trained under every
// seed. Model configs carry only tag + hyperparameters here; input dims and
// class count are filled in per dataset.
struct RunSpec {
  std::vector<std::string> dataset_paths;
  std::vector<split::TaskKind> tasks;
  std::vector<nn::ModelConfig> models;
  preprocess::FeatureConfig feature;  // applied when a dataset is still raw
  split::SplitStrategy strategy = split::SplitStrategy::ratio(0.6, 0.2, 0.2);
  harness::TrainConfig train;
  std::vector<std::uint64_t> seeds = {2024};
  std::string out_dir;
  int cross_subject_session = 0;
  int jobs = 1;
};

struct SubtaskOutcome {
  std::uint64_t seed = 0;
  harness::SubtaskResult result;
};

struct CellResult {
  std::string dataset, task, model;
  int evaluations = 0;  // (seed, subtask) pairs aggregated
  double acc_mean = 0, acc_std = 0, f1_mean = 0, f1_std = 0;
  bool failed = false;
  std::string note_id;  // e.g. "E1"; full text lives in report notes
  std::vector<SubtaskOutcome> subtasks;
};

// One ranking: methods compared on one value column.
struct RankingInput {
  std::string id;
  std::vector<std::pair<std::string, double>> values;  // NaN = missing
};

struct RankScore {
  std::vector<std::string> methods;  // ascending
  // (method, total points), best first; ties ordered by method name.
  std::vector<std::pair<std::string, double>> totals;
  // per ranking id: (method, points) in method order
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, double>>>>
      rankings;
  std::vector<std::string> notes;  // skipped rankings etc.
};

// Per ranking, methods are ordered by value descending (values rounded to
// 1e-4 first — two decimals in percent terms) and awarded n..1 points; tied
// methods share the mean of their positions' points. Rankings missing any
// method are skipped with a note.
RankScore rank_score(const std::vector<RankingInput>& rankings);

struct DatasetProvenance {
  std::string path;
  std::string name;
  std::string raw_manifest_hash;      // hex; empty when input was features
  std::string feature_manifest_hash;  // hex
};

struct BenchmarkReport {
  std::string version;
  RunSpec spec;
  std::vector<DatasetProvenance> datasets;
  std::vector<CellResult> cells;  // sorted by (dataset, task, model)
  RankScore rank;
  std::vector<std::string> notes;
};

// Executes the grid and writes everything under spec.out_dir: report.json,
// results.csv, plans/, logs/ (per-epoch streams) and a run_meta.json sidecar
// holding wall-clock data. All other outputs are byte-deterministic
// functions of the run spec and input data. Per-cell failures are recorded as
// notes; the grid always completes.
BenchmarkReport run_benchmark(const RunSpec& spec);

std::string report_to_json(const BenchmarkReport& r);
std::string results_csv(const BenchmarkReport& r);
void emit_report(const BenchmarkReport& r, const std::filesystem::path& out_dir);

// Rank-table CSV: header "method,<ranking id>,..."; cells are fractions in
// [0,1]; empty or "NA" marks a missing value.
std::vector<RankingInput> read_rank_table_csv(const std::filesystem::path& path);
std::string scores_csv(const RankScore& s);

}  // namespace eerbench::bench
