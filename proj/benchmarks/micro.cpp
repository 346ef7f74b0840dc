// Microbenchmarks for the hot paths: filtering, feature extraction,
// smoothing, artifact removal, split planning and one training epoch.

#include <benchmark/benchmark.h>

#include <vector>

#include "eerbench/corpus.hpp"
#include "eerbench/harness.hpp"
#include "eerbench/mat.hpp"
#include "eerbench/nn.hpp"
#include "eerbench/preprocess.hpp"
#include "eerbench/rng.hpp"
#include "eerbench/split.hpp"

using namespace eerbench;

namespace {

Mat noise_mat(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Mat m(rows, cols);
  Rng rng(seed);
  for (auto& v : m.v) v = rng.normal();
  return m;
}

// One 20 s trial at 200 Hz with a typical channel count.
void bm_bandpass_trial(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const Mat src = noise_mat(channels, 4000, 7);
  for (auto _ : state) {
    Mat work = src;
    preprocess::bandpass_filter(work, 0.3, 50.0, 200.0);
    benchmark::DoNotOptimize(work.v.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(channels));
}

void bm_band_energy_features(benchmark::State& state) {
  const Mat src = noise_mat(1, 200, 11);  // one 1 s window
  for (auto _ : state) {
    double de = preprocess::de_feature(src.row(0), src.cols);
    benchmark::DoNotOptimize(de);
  }
}

void bm_spectral_features(benchmark::State& state) {
  const Mat src = noise_mat(1, 200, 13);
  for (auto _ : state) {
    double psd = preprocess::psd_feature(src.row(0), src.cols, 8.0, 14.0, 200.0);
    benchmark::DoNotOptimize(psd);
  }
}

void bm_lds_smooth(benchmark::State& state) {
  Rng rng(17);
  std::vector<double> track(static_cast<std::size_t>(state.range(0)));
  double level = 0.0;
  for (auto& v : track) v = (level += 0.05 * rng.normal()) + rng.normal();
  for (auto _ : state) {
    auto out = preprocess::lds_smooth(track);
    benchmark::DoNotOptimize(out.data());
  }
}

void bm_artifact_removal(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const Mat src = noise_mat(channels, 4000, 23);
  for (auto _ : state) {
    auto res = preprocess::remove_artifacts_pca(src, 0.3);
    benchmark::DoNotOptimize(res.cleaned.v.data());
  }
}

corpus::UniformDataset feature_corpus(int subjects, int trials, int windows,
                                      int dim) {
  std::vector<int> labels(trials);
  for (int t = 0; t < trials; ++t) labels[t] = t % 3;
  auto m = corpus::make_dense_manifest(
      "bench", 1, subjects, trials, 8, 200.0,
      corpus::LabelScheme::discrete({"low", "mid", "high"}),
      static_cast<std::int64_t>(windows) * dim, windows * 1.0, labels);
  corpus::FeatureInfo fi;
  fi.kind = "de";
  fi.bands = preprocess::default_bands();
  fi.dim = dim;
  m.feature_info = fi;
  corpus::UniformDataset ds;
  ds.manifest = std::move(m);
  Rng rng(29);
  for (const auto& rec : ds.manifest.trials) {
    corpus::TrialTensor t(8, static_cast<std::uint32_t>(windows * dim));
    for (auto& v : t.data)
      v = static_cast<float>(rec.label + 0.5 * rng.normal());
    ds.trials[{rec.session, rec.subject, rec.trial}] = std::move(t);
  }
  return ds;
}

void bm_split_planning(benchmark::State& state) {
  const auto ds = feature_corpus(static_cast<int>(state.range(0)), 15, 10, 5);
  const auto strategy = split::SplitStrategy::ratio(0.6, 0.2, 0.2);
  for (auto _ : state) {
    auto plan = split::plan_for_dataset(ds, split::TaskKind::subject_dependent,
                                        strategy, 2024);
    benchmark::DoNotOptimize(plan.subtasks.data());
  }
}

void bm_train_epoch(benchmark::State& state) {
  const auto ds = feature_corpus(1, 30, 10, 5);
  const auto plan = split::plan_for_dataset(
      ds, split::TaskKind::subject_dependent,
      split::SplitStrategy::ratio(0.6, 0.2, 0.2), 2024);
  const auto specs = split::resolve(plan, ds);
  nn::ModelConfig cfg;
  cfg.tag = "mlp";
  cfg.channels = 8;
  cfg.dim = 5;
  cfg.num_classes = 3;
  cfg.hidden = {64};
  harness::TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 32;
  for (auto _ : state) {
    auto model = nn::build_model(cfg, 2024);
    auto result = harness::train(model, specs[0], ds, tc);
    benchmark::DoNotOptimize(result.test_accuracy);
  }
}

}  // namespace

BENCHMARK(bm_bandpass_trial)->Arg(8)->Arg(62)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_band_energy_features);
BENCHMARK(bm_spectral_features);
BENCHMARK(bm_lds_smooth)->Arg(20)->Arg(200);
BENCHMARK(bm_artifact_removal)->Arg(8)->Arg(62)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_split_planning)->Arg(5)->Arg(15);
BENCHMARK(bm_train_epoch)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
