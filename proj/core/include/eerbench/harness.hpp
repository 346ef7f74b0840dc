#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "eerbench/corpus.hpp"
#include "eerbench/nn.hpp"
#include "eerbench/split.hpp"

namespace eerbench::harness {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double lr = 0.05;
  double weight_decay = 1e-4;
  std::string loss_kind;  // empty: use the model's default
  // "best_val_f1" | "last_epoch" | "early_plateau"
  std::string policy = "best_val_f1";
  int plateau_window = 10;
  double plateau_threshold = 0.01;
  std::uint64_t seed = 2024;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  // Validation loss backs the plateau policy; zero when the subtask has no
  // validation samples (selection then falls back to the last epoch).
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double val_f1 = 0.0;
  double test_accuracy = 0.0;
  double test_f1 = 0.0;
};

struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::int64_t> counts;  // row-major; rows true, columns predicted

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int k)
      : classes(k), counts(static_cast<std::size_t>(k) * k, 0) {}

  std::int64_t& at(int t, int p) {
    return counts[static_cast<std::size_t>(t) * classes + p];
  }
  std::int64_t at(int t, int p) const {
    return counts[static_cast<std::size_t>(t) * classes + p];
  }
  std::int64_t total() const;
};

// trace / total.
double accuracy(const ConfusionMatrix& cm);

// K=2: 2TP/(2TP+FP+FN) with class 1 as the positive class. K>2: unweighted
// macro mean of per-class one-vs-rest F1; 0/0 counts as 0.
double f1_score(const ConfusionMatrix& cm);

struct SubtaskResult {
  std::string subtask_id;
  int chosen_epoch = 0;
  double test_accuracy = 0.0;
  double test_f1 = 0.0;
  std::vector<EpochRecord> history;
  // Informational only; never part of deterministic outputs.
  double wall_seconds = 0.0;
};

// best_val_f1: argmax of validation F1, earliest on ties. last_epoch: final
// index. early_plateau: first epoch whose validation-loss improvement over
// the trailing `window` epochs falls below `threshold` (relative), else the
// final index.
int select_epoch(const std::vector<EpochRecord>& history,
                 const std::string& policy, int window = 10,
                 double threshold = 0.01);

// Copies one sample's feature values into out[channels * dim], channel-major.
void fill_sample(const corpus::UniformDataset& features,
                 const split::SampleRef& s, double* out);

// Argmax predictions (ties to the lowest class index) accumulated into a
// confusion matrix. Throws on an empty set or a feature/model shape mismatch.
ConfusionMatrix evaluate(const nn::Model& model,
                         const corpus::UniformDataset& features,
                         const std::vector<split::SampleRef>& samples);

// Mean loss of the model on a sample set, without gradients.
double evaluate_loss(const nn::Model& model,
                     const corpus::UniformDataset& features,
                     const std::vector<split::SampleRef>& samples,
                     const std::string& loss_kind);

// Mini-batch SGD over the subtask's train set with per-epoch shuffling from
// a generator derived from (config.seed, subtask id). Feature dimensions are
// standardized with statistics fitted on the train set only and the same
// transform is applied at validation and test time. Appends one
// EpochRecord per epoch and resolves the reported epoch via select_epoch.
// Bit-identical across runs with equal inputs. If `stream` is set, one JSON
// object per epoch plus a terminal summary object are written to it,
// newline-delimited. Throws std::runtime_error when the loss turns
// non-finite, naming the epoch.
SubtaskResult train(nn::Model& model, const split::SubtaskSpec& spec,
                    const corpus::UniformDataset& features,
                    const TrainConfig& config, std::ostream* stream = nullptr);

std::string epoch_record_json(const std::string& subtask_id, const EpochRecord& r);
std::string subtask_summary_json(const SubtaskResult& r);

}  // namespace eerbench::harness
