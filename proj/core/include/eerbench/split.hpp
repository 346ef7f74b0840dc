#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eerbench/corpus.hpp"

namespace eerbench::split {

// How evaluation data relates to training data. Sessions of one subject are
// treated as distinct subjects under subject_dependent; cross_subject holds
// out whole subjects; cross_session holds out whole sessions;
// subject_independent mixes samples freely.
enum class TaskKind {
  subject_dependent,
  cross_subject,
  cross_session,
  subject_independent,
};

std::string task_kind_str(TaskKind t);
TaskKind task_kind_from_str(const std::string& s);

struct SplitStrategy {
  enum class Kind { ratio, kfold };
  Kind kind = Kind::ratio;
  // ratio: positive weights, normalized to sum 1 on use
  double train = 0.6, val = 0.2, test = 0.2;
  // kfold: number of folds
  int folds = 5;

  static SplitStrategy ratio(double train, double val, double test);
  static SplitStrategy kfold(int n);
};

// One independently-splittable pool of units. The unit is the leakage
// boundary: trial ids (subject_dependent), subject ids (cross_subject),
// session ids (cross_session) or global sample indices (subject_independent).
struct Domain {
  std::string subtask_id;
  TaskKind task = TaskKind::subject_dependent;
  std::vector<std::int64_t> units;  // ascending
  std::vector<int> unit_labels;     // one per unit; -1 when mixed
};

struct Assignment {
  std::vector<std::int64_t> train, val, test;  // each ascending
};

struct SubtaskPlan {
  std::string subtask_id;
  Assignment units;
  bool stratified = false;
  std::vector<std::string> warnings;
};

struct SplitPlan {
  TaskKind task = TaskKind::subject_dependent;
  SplitStrategy strategy;
  std::uint64_t seed = 0;
  std::uint64_t manifest_hash = 0;
  int fold_index = -1;  // >= 0 on plans produced by kfold rotation
  std::vector<SubtaskPlan> subtasks;
};

// Builds the unit domains for a task. subject_dependent yields one domain
// per (session, subject); cross_subject one domain over subject ids (taken
// from `cross_subject_session` on multi-session corpora); cross_session one
// domain over session ids; subject_independent one domain over global sample
// indices (requires a windowed feature dataset). Throws when the task is
// impossible for the dataset shape.
std::vector<Domain> merge_to_part(const corpus::UniformDataset& d, TaskKind task,
                                  int cross_subject_session = 0);

// Deterministic seeded ratio split of every domain. Counts come from
// largest-remainder apportionment with at least one unit per set; units are
// shuffled by a generator derived from (seed, subtask id); label-stratified
// whenever labels are known and every class has >= 3 units, otherwise falls
// back with a warning. Requires >= 3 units per domain.
SplitPlan plan_split(const std::vector<Domain>& domains,
                     const SplitStrategy& strategy, std::uint64_t seed,
                     std::uint64_t manifest_hash);

// n rotated plans; each unit appears in exactly one test fold. The fold
// after the test fold serves as validation when n >= 3, otherwise the
// validation set is empty.
std::vector<SplitPlan> kfold_plan(const std::vector<Domain>& domains, int n,
                                  std::uint64_t seed, std::uint64_t manifest_hash);

// merge_to_part + plan_split against one dataset.
SplitPlan plan_for_dataset(const corpus::UniformDataset& d, TaskKind task,
                           const SplitStrategy& strategy, std::uint64_t seed,
                           int cross_subject_session = 0);

// One concrete sample: a trial plus a window index within it.
struct SampleRef {
  corpus::TrialKey trial;
  std::int64_t sample = 0;
  int label = 0;
};

struct SubtaskSpec {
  std::string subtask_id;
  std::vector<SampleRef> train, val, test;
};

// Expands plan membership to concrete samples and re-verifies the leakage
// invariants: manifest hash match, pairwise-disjoint unit sets, exact
// coverage of the domain. Requires a windowed feature dataset. Throws
// std::invalid_argument naming the violated invariant.
std::vector<SubtaskSpec> resolve(const SplitPlan& plan,
                                 const corpus::UniformDataset& d);

std::string plan_to_json(const SplitPlan& p);
SplitPlan plan_from_json(const std::string& text);

}  // namespace eerbench::split
