#include "eerbench/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "eerbench/rng.hpp"
#include "json.hpp"

namespace eerbench::harness {

using ordered_json = nlohmann::ordered_json;

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

double accuracy(const ConfusionMatrix& cm) {
  const std::int64_t n = cm.total();
  if (cm.classes == 0 || n == 0)
    throw std::invalid_argument("accuracy of an empty confusion matrix");
  std::int64_t diag = 0;
  for (int k = 0; k < cm.classes; ++k) diag += cm.at(k, k);
  return static_cast<double>(diag) / static_cast<double>(n);
}

static double binary_f1(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  const std::int64_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0
                    : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double f1_score(const ConfusionMatrix& cm) {
  if (cm.classes == 0 || cm.total() == 0)
    throw std::invalid_argument("f1 of an empty confusion matrix");
  if (cm.classes == 2)  // class 1 is the positive class
    return binary_f1(cm.at(1, 1), cm.at(0, 1), cm.at(1, 0));
  double sum = 0.0;
  for (int k = 0; k < cm.classes; ++k) {
    std::int64_t tp = cm.at(k, k), fp = 0, fn = 0;
    for (int o = 0; o < cm.classes; ++o) {
      if (o == k) continue;
      fp += cm.at(o, k);
      fn += cm.at(k, o);
    }
    sum += binary_f1(tp, fp, fn);
  }
  return sum / cm.classes;
}

int select_epoch(const std::vector<EpochRecord>& history,
                 const std::string& policy, int window, double threshold) {
  if (history.empty()) throw std::invalid_argument("empty epoch history");
  const int last = static_cast<int>(history.size()) - 1;
  if (policy == "last_epoch") return last;
  if (policy == "best_val_f1") {
    int best = 0;
    for (int e = 1; e <= last; ++e)
      if (history[e].val_f1 > history[best].val_f1) best = e;
    return best;
  }
  if (policy == "early_plateau") {
    for (int e = window; e <= last; ++e) {
      const double ref = history[e - window].val_loss;
      const double gain = ref - history[e].val_loss;
      if (gain < threshold * std::abs(ref)) return e;
    }
    return last;
  }
  throw std::invalid_argument("unknown evaluation policy '" + policy + "'");
}

void fill_sample(const corpus::UniformDataset& features,
                 const split::SampleRef& s, double* out) {
  const auto& fi = *features.manifest.feature_info;
  const auto& t = features.tensor(s.trial);
  const auto dim = static_cast<std::size_t>(fi.dim);
  const std::size_t base = static_cast<std::size_t>(s.sample) * dim;
  for (std::uint32_t ch = 0; ch < t.channels; ++ch)
    for (std::size_t k = 0; k < dim; ++k)
      out[ch * dim + k] = t.at(ch, base + k);
}

static void check_contract(const nn::Model& model,
                           const corpus::UniformDataset& features) {
  if (!features.manifest.feature_info)
    throw std::invalid_argument("evaluation needs a windowed feature dataset");
  const auto& cfg = model.config();
  const auto& fi = *features.manifest.feature_info;
  if (cfg.channels != features.manifest.n_channels || cfg.dim != fi.dim) {
    std::ostringstream os;
    os << "model expects " << cfg.channels << " channels x " << cfg.dim
       << " features, dataset provides " << features.manifest.n_channels << " x "
       << fi.dim;
    throw std::invalid_argument(os.str());
  }
  if (cfg.num_classes != features.manifest.label_scheme.class_count()) {
    std::ostringstream os;
    os << "model has " << cfg.num_classes << " classes, dataset has "
       << features.manifest.label_scheme.class_count();
    throw std::invalid_argument(os.str());
  }
}

namespace {
constexpr std::size_t kEvalBatch = 256;

// Per-dimension affine transform fitted on the training windows. Raw band
// features sit far from zero with uneven spreads; first-order training on
// them collapses to a constant predictor within an epoch.
struct Standardizer {
  std::vector<double> mean, inv_std;

  void fit(const corpus::UniformDataset& features,
           const std::vector<split::SampleRef>& refs, std::size_t flat) {
    mean.assign(flat, 0.0);
    inv_std.assign(flat, 0.0);
    std::vector<double> row(flat);
    for (const auto& s : refs) {
      fill_sample(features, s, row.data());
      for (std::size_t k = 0; k < flat; ++k) mean[k] += row[k];
    }
    const auto n = static_cast<double>(refs.size());
    for (auto& m : mean) m /= n;
    for (const auto& s : refs) {
      fill_sample(features, s, row.data());
      for (std::size_t k = 0; k < flat; ++k) {
        const double d = row[k] - mean[k];
        inv_std[k] += d * d;
      }
    }
    for (auto& v : inv_std) {
      const double sd = std::sqrt(v / n);
      v = sd < 1e-8 ? 0.0 : 1.0 / sd;  // a constant dim carries no signal
    }
  }

  void apply(Mat& batch) const {
    for (std::size_t r = 0; r < batch.rows; ++r) {
      double* row = batch.row(r);
      for (std::size_t k = 0; k < batch.cols; ++k)
        row[k] = (row[k] - mean[k]) * inv_std[k];
    }
  }
};

Mat gather(const corpus::UniformDataset& features,
           const std::vector<split::SampleRef>& samples, std::size_t begin,
           std::size_t end, std::size_t flat,
           const Standardizer* stats = nullptr) {
  Mat batch(end - begin, flat);
  for (std::size_t i = begin; i < end; ++i)
    fill_sample(features, samples[i], batch.row(i - begin));
  if (stats != nullptr) stats->apply(batch);
  return batch;
}

ConfusionMatrix evaluate_impl(const nn::Model& model,
                              const corpus::UniformDataset& features,
                              const std::vector<split::SampleRef>& samples,
                              const Standardizer* stats) {
  if (samples.empty()) throw std::invalid_argument("evaluate on an empty set");
  check_contract(model, features);
  const auto& cfg = model.config();
  const auto flat = static_cast<std::size_t>(cfg.channels) * cfg.dim;

  ConfusionMatrix cm(cfg.num_classes);
  for (std::size_t at = 0; at < samples.size(); at += kEvalBatch) {
    const std::size_t end = std::min(samples.size(), at + kEvalBatch);
    const nn::NodePtr logits =
        model.forward(gather(features, samples, at, end, flat, stats));
    for (std::size_t i = at; i < end; ++i) {
      const double* row = logits->value.row(i - at);
      int pred = 0;
      for (int k = 1; k < cfg.num_classes; ++k)
        if (row[k] > row[pred]) pred = k;  // ties keep the lowest index
      const int truth = samples[i].label;
      if (truth < 0 || truth >= cfg.num_classes)
        throw std::invalid_argument("sample label " + std::to_string(truth) +
                                    " outside the model's class range");
      ++cm.at(truth, pred);
    }
  }
  return cm;
}

double evaluate_loss_impl(const nn::Model& model,
                          const corpus::UniformDataset& features,
                          const std::vector<split::SampleRef>& samples,
                          const std::string& loss_kind,
                          const Standardizer* stats) {
  if (samples.empty()) throw std::invalid_argument("loss on an empty set");
  check_contract(model, features);
  const auto& cfg = model.config();
  const auto flat = static_cast<std::size_t>(cfg.channels) * cfg.dim;

  double total = 0.0;
  for (std::size_t at = 0; at < samples.size(); at += kEvalBatch) {
    const std::size_t end = std::min(samples.size(), at + kEvalBatch);
    std::vector<int> labels;
    labels.reserve(end - at);
    for (std::size_t i = at; i < end; ++i) labels.push_back(samples[i].label);
    const nn::NodePtr logits =
        model.forward(gather(features, samples, at, end, flat, stats));
    const nn::NodePtr l = nn::loss(loss_kind, logits, labels);
    total += l->value.v[0] * static_cast<double>(end - at);
  }
  return total / static_cast<double>(samples.size());
}
}  // namespace

ConfusionMatrix evaluate(const nn::Model& model,
                         const corpus::UniformDataset& features,
                         const std::vector<split::SampleRef>& samples) {
  return evaluate_impl(model, features, samples, nullptr);
}

double evaluate_loss(const nn::Model& model,
                     const corpus::UniformDataset& features,
                     const std::vector<split::SampleRef>& samples,
                     const std::string& loss_kind) {
  return evaluate_loss_impl(model, features, samples, loss_kind, nullptr);
}

SubtaskResult train(nn::Model& model, const split::SubtaskSpec& spec,
                    const corpus::UniformDataset& features,
                    const TrainConfig& config, std::ostream* stream) {
  if (config.epochs < 1 || config.batch_size < 1 || !(config.lr > 0.0))
    throw std::invalid_argument("train config: epochs >= 1, batch >= 1, lr > 0");
  if (spec.train.empty())
    throw std::invalid_argument("subtask '" + spec.subtask_id +
                                "' has no training samples");
  check_contract(model, features);

  const auto start = std::chrono::steady_clock::now();
  const std::string kind =
      config.loss_kind.empty() ? model.loss_kind() : config.loss_kind;
  const auto& cfg = model.config();
  const auto flat = static_cast<std::size_t>(cfg.channels) * cfg.dim;

  Standardizer stats;
  stats.fit(features, spec.train, flat);

  Rng rng(derive_seed(config.seed, "train/" + spec.subtask_id));
  std::vector<std::size_t> order(spec.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  SubtaskResult result;
  result.subtask_id = spec.subtask_id;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), at + static_cast<std::size_t>(config.batch_size));
      Mat batch(end - at, flat);
      std::vector<int> labels(end - at);
      for (std::size_t i = at; i < end; ++i) {
        const auto& s = spec.train[order[i]];
        fill_sample(features, s, batch.row(i - at));
        labels[i - at] = s.label;
      }
      stats.apply(batch);
      model.zero_grad();
      const nn::NodePtr l = nn::loss(kind, model.forward(batch), labels);
      if (!std::isfinite(l->value.v[0]))
        throw std::runtime_error("non-finite training loss at epoch " +
                                 std::to_string(epoch));
      nn::backward(l);
      model.sgd_step(config.lr, config.weight_decay);
      loss_sum += l->value.v[0] * static_cast<double>(end - at);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (!spec.val.empty()) {
      const ConfusionMatrix vcm = evaluate_impl(model, features, spec.val, &stats);
      rec.val_loss = evaluate_loss_impl(model, features, spec.val, kind, &stats);
      rec.val_accuracy = accuracy(vcm);
      rec.val_f1 = f1_score(vcm);
    }
    if (!spec.test.empty()) {
      const ConfusionMatrix tcm = evaluate_impl(model, features, spec.test, &stats);
      rec.test_accuracy = accuracy(tcm);
      rec.test_f1 = f1_score(tcm);
    }
    result.history.push_back(rec);
    if (stream) *stream << epoch_record_json(spec.subtask_id, rec) << "\n";
  }

  // Without validation samples there is nothing for the selection policies to
  // read, so fall back to the last epoch.
  const std::string policy = spec.val.empty() ? "last_epoch" : config.policy;
  result.chosen_epoch = select_epoch(result.history, policy,
                                     config.plateau_window,
                                     config.plateau_threshold);
  result.test_accuracy = result.history[result.chosen_epoch].test_accuracy;
  result.test_f1 = result.history[result.chosen_epoch].test_f1;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  if (stream) *stream << subtask_summary_json(result) << "\n";
  return result;
}

std::string epoch_record_json(const std::string& subtask_id,
                              const EpochRecord& r) {
  ordered_json j;
  j["type"] = "epoch";
  j["subtask"] = subtask_id;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  j["val_accuracy"] = r.val_accuracy;
  j["val_f1"] = r.val_f1;
  j["test_accuracy"] = r.test_accuracy;
  j["test_f1"] = r.test_f1;
  return j.dump();
}

std::string subtask_summary_json(const SubtaskResult& r) {
  ordered_json j;
  j["type"] = "summary";
  j["subtask"] = r.subtask_id;
  j["chosen_epoch"] = r.chosen_epoch;
  j["test_accuracy"] = r.test_accuracy;
  j["test_f1"] = r.test_f1;
  return j.dump();
}

}  // namespace eerbench::harness
