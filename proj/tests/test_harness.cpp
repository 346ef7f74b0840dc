#include <sstream>

#include "doctest.h"
#include "eerbench/corpus.hpp"
#include "eerbench/harness.hpp"
#include "eerbench/nn.hpp"
#include "eerbench/rng.hpp"
#include "eerbench/split.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace eerbench;

namespace {

// Two linearly separable blobs: class 0 around +1, class 1 around -1, in a
// feature dataset of `trials` single-subject trials with `windows` windows.
corpus::UniformDataset blobs(int trials, int windows, std::uint64_t seed) {
  const int channels = 2, dim = 2;
  std::vector<int> labels = {0, 1};
  auto m = corpus::make_dense_manifest(
      "blobs", 1, 1, trials, channels, 200.0,
      corpus::LabelScheme::discrete({"lo", "hi"}),
      static_cast<std::int64_t>(windows) * dim, windows * 1.0, labels);
  corpus::FeatureInfo fi;
  fi.kind = "de";
  fi.bands = {{0.5, 4.0}, {4.0, 8.0}};
  fi.dim = dim;
  m.feature_info = fi;

  corpus::UniformDataset ds;
  ds.manifest = std::move(m);
  Rng rng(seed);
  for (const auto& rec : ds.manifest.trials) {
    corpus::TrialTensor t(channels, static_cast<std::uint32_t>(windows * dim));
    const double center = rec.label == 0 ? 1.0 : -1.0;
    for (auto& v : t.data)
      v = static_cast<float>(center + 0.3 * rng.normal());
    ds.trials[{rec.session, rec.subject, rec.trial}] = std::move(t);
  }
  return ds;
}

harness::TrainConfig quick_config(int epochs = 15) {
  harness::TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 8;
  tc.lr = 0.1;
  return tc;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("accuracy and f1 on the textbook confusion matrix") {
  harness::ConfusionMatrix cm(2);
  cm.at(1, 1) = 3;  // TP
  cm.at(0, 0) = 4;  // TN
  cm.at(0, 1) = 2;  // FP
  cm.at(1, 0) = 1;  // FN
  CHECK(harness::accuracy(cm) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(harness::f1_score(cm) == doctest::Approx(6.0 / 9.0).epsilon(1e-12));
  CHECK(cm.total() == 10);

  harness::ConfusionMatrix empty(3);
  CHECK_THROWS_AS((void)harness::accuracy(empty), std::invalid_argument);
}

TEST_CASE("metrics equal brute-force recomputation") {
  Rng rng(31);
  for (int iter = 0; iter < 300; ++iter) {
    const int k = 2 + static_cast<int>(rng.below(5));
    const int n = 40 + static_cast<int>(rng.below(40));
    std::vector<int> truth(n), pred(n);
    harness::ConfusionMatrix cm(k);
    for (int i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.below(k));
      pred[i] = static_cast<int>(rng.below(k));
      ++cm.at(truth[i], pred[i]);
    }
    CHECK(harness::accuracy(cm) ==
          doctest::Approx(oracle::brute_accuracy(truth, pred)).epsilon(1e-12));
    CHECK(harness::f1_score(cm) ==
          doctest::Approx(oracle::brute_f1(truth, pred, k)).epsilon(1e-12));
  }
}

TEST_CASE("macro f1 counts unsupported classes as zero") {
  harness::ConfusionMatrix cm(3);
  cm.at(0, 0) = 5;
  cm.at(1, 1) = 5;  // class 2 never appears
  CHECK(harness::f1_score(cm) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("epoch selection policies") {
  auto rec = [](double val_loss, double val_f1, double test_acc) {
    harness::EpochRecord r;
    r.val_loss = val_loss;
    r.val_f1 = val_f1;
    r.test_accuracy = test_acc;
    return r;
  };
  const std::vector<harness::EpochRecord> hist = {
      rec(1.00, 0.50, 0.60), rec(0.90, 0.70, 0.65), rec(0.80, 0.60, 0.70)};

  CHECK(harness::select_epoch(hist, "best_val_f1") == 1);
  CHECK(harness::select_epoch(hist, "last_epoch") == 2);

  const std::vector<harness::EpochRecord> tied = {rec(1, 0.7, 0.1),
                                                  rec(1, 0.7, 0.9)};
  CHECK(harness::select_epoch(tied, "best_val_f1") == 0);  // earliest tie

  // Plateau: first epoch whose trailing-window relative improvement < 1%.
  const std::vector<harness::EpochRecord> plateau = {
      rec(1.000, 0, 0), rec(0.900, 0, 0), rec(0.800, 0, 0), rec(0.799, 0, 0),
      rec(0.7985, 0, 0), rec(0.798, 0, 0), rec(0.797, 0, 0)};
  CHECK(harness::select_epoch(plateau, "early_plateau", 3, 0.01) == 5);

  const std::vector<harness::EpochRecord> falling = {
      rec(1.0, 0, 0), rec(0.8, 0, 0), rec(0.6, 0, 0), rec(0.4, 0, 0)};
  CHECK(harness::select_epoch(falling, "early_plateau", 3, 0.01) == 3);  // none

  CHECK_THROWS_AS((void)harness::select_epoch({}, "best_val_f1"),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)harness::select_epoch(hist, "bogus"),
                  std::invalid_argument);
}

TEST_CASE("fill_sample reads windows channel major") {
  auto ds = blobs(3, 4, 1);
  const corpus::TrialKey key{0, 0, 1};
  const auto& t = ds.tensor(key);
  split::SampleRef ref;
  ref.trial = key;
  ref.sample = 2;
  std::vector<double> out(2 * 2, 0.0);
  harness::fill_sample(ds, ref, out.data());
  CHECK(out[0] == doctest::Approx(t.at(0, 4)));
  CHECK(out[1] == doctest::Approx(t.at(0, 5)));
  CHECK(out[2] == doctest::Approx(t.at(1, 4)));
  CHECK(out[3] == doctest::Approx(t.at(1, 5)));
}

TEST_CASE("training separates the blobs and is deterministic") {
  const auto ds = blobs(12, 5, 55);
  const auto plan = split::plan_for_dataset(
      ds, split::TaskKind::subject_dependent,
      split::SplitStrategy::ratio(0.6, 0.2, 0.2), 2024);
  const auto specs = split::resolve(plan, ds);
  REQUIRE(specs.size() == 1);

  nn::ModelConfig cfg;
  cfg.tag = "mlp";
  cfg.channels = 2;
  cfg.dim = 2;
  cfg.num_classes = 2;
  cfg.hidden = {8};

  auto model1 = nn::build_model(cfg, 7);
  std::ostringstream log1;
  const auto r1 = harness::train(model1, specs[0], ds, quick_config(), &log1);
  CHECK(r1.test_accuracy >= 0.9);
  CHECK(r1.history.size() == 15);
  CHECK(r1.chosen_epoch >= 0);
  CHECK(r1.chosen_epoch < 15);
  CHECK(r1.test_accuracy ==
        doctest::Approx(r1.history[r1.chosen_epoch].test_accuracy).epsilon(1e-15));

  auto model2 = nn::build_model(cfg, 7);
  std::ostringstream log2;
  const auto r2 = harness::train(model2, specs[0], ds, quick_config(), &log2);
  CHECK(log1.str() == log2.str());
  for (std::size_t e = 0; e < r1.history.size(); ++e) {
    CHECK(r1.history[e].train_loss == r2.history[e].train_loss);
    CHECK(r1.history[e].val_f1 == r2.history[e].val_f1);
    CHECK(r1.history[e].test_accuracy == r2.history[e].test_accuracy);
  }

  // The stream is newline-delimited JSON: one epoch object per epoch plus a
  // closing summary.
  std::istringstream lines(log1.str());
  std::string line;
  int epochs = 0, summaries = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("type") == "epoch") ++epochs;
    if (j.at("type") == "summary") {
      ++summaries;
      CHECK(j.at("chosen_epoch").get<int>() == r1.chosen_epoch);
    }
  }
  CHECK(epochs == 15);
  CHECK(summaries == 1);
}

TEST_CASE("empty validation sets force last-epoch selection") {
  const auto ds = blobs(8, 3, 66);
  const auto doms = split::merge_to_part(ds, split::TaskKind::subject_dependent);
  const auto plans = split::kfold_plan(doms, 2, 2024, corpus::manifest_hash(ds.manifest));
  const auto specs = split::resolve(plans[0], ds);
  REQUIRE(specs[0].val.empty());

  nn::ModelConfig cfg;
  cfg.tag = "linear_hinge";
  cfg.channels = 2;
  cfg.dim = 2;
  cfg.num_classes = 2;
  auto model = nn::build_model(cfg, 3);
  const auto r = harness::train(model, specs[0], ds, quick_config(6));
  CHECK(r.chosen_epoch == 5);
  for (const auto& e : r.history) {
    CHECK(e.val_accuracy == 0.0);
    CHECK(e.val_f1 == 0.0);
  }
}

TEST_CASE("argmax ties predict the lowest class") {
  const auto ds = blobs(4, 2, 9);
  nn::ModelConfig cfg;
  cfg.tag = "linear_hinge";
  cfg.channels = 2;
  cfg.dim = 2;
  cfg.num_classes = 2;
  auto model = nn::build_model(cfg, 4);
  for (const auto& [name, p] : model.parameters())
    for (auto& v : p->value.v) v = 0.0;  // all logits equal

  std::vector<split::SampleRef> refs;
  for (const auto& rec : ds.manifest.trials)
    for (int w = 0; w < 2; ++w) {
      split::SampleRef r;
      r.trial = {rec.session, rec.subject, rec.trial};
      r.sample = w;
      r.label = rec.label;
      refs.push_back(r);
    }
  const auto cm = harness::evaluate(model, ds, refs);
  for (int t = 0; t < 2; ++t) CHECK(cm.at(t, 1) == 0);
  CHECK(cm.total() == static_cast<std::int64_t>(refs.size()));

  CHECK_THROWS_AS((void)harness::evaluate(model, ds, {}), std::invalid_argument);
}

TEST_CASE("divergent training reports the epoch") {
  const auto ds = blobs(8, 3, 12);
  const auto plan = split::plan_for_dataset(
      ds, split::TaskKind::subject_dependent,
      split::SplitStrategy::ratio(0.6, 0.2, 0.2), 2024);
  const auto specs = split::resolve(plan, ds);
  nn::ModelConfig cfg;
  cfg.tag = "mlp";
  cfg.channels = 2;
  cfg.dim = 2;
  cfg.num_classes = 2;
  cfg.hidden = {8};
  auto model = nn::build_model(cfg, 5);
  auto tc = quick_config(10);
  tc.lr = 1e18;  // guaranteed overflow
  CHECK_THROWS_WITH_AS((void)harness::train(model, specs[0], ds, tc),
                       doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("train validates its inputs") {
  const auto ds = blobs(6, 2, 14);
  const auto plan = split::plan_for_dataset(
      ds, split::TaskKind::subject_dependent,
      split::SplitStrategy::ratio(0.6, 0.2, 0.2), 2024);
  const auto specs = split::resolve(plan, ds);

  nn::ModelConfig cfg;
  cfg.tag = "mlp";
  cfg.channels = 3;  // dataset has 2 channels
  cfg.dim = 2;
  cfg.num_classes = 2;
  auto wrong = nn::build_model(cfg, 1);
  CHECK_THROWS_AS((void)harness::train(wrong, specs[0], ds, quick_config()),
                  std::invalid_argument);

  cfg.channels = 2;
  auto ok_model = nn::build_model(cfg, 1);
  auto tc = quick_config();
  tc.epochs = 0;
  CHECK_THROWS_AS((void)harness::train(ok_model, specs[0], ds, tc),
                  std::invalid_argument);
}

}  // TEST_SUITE
