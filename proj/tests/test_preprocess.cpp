#include <cmath>
#include <numeric>

#include "doctest.h"
#include "eerbench/corpus.hpp"
#include "eerbench/preprocess.hpp"
#include "eerbench/rng.hpp"
#include "oracles.hpp"

using namespace eerbench;

namespace {

std::vector<double> sine(double freq, double fs, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t)
    x[t] = amp * std::sin(2.0 * 3.14159265358979323846 * freq * t / fs);
  return x;
}

double rms(const double* x, std::size_t n) {
  double s = 0;
  for (std::size_t t = 0; t < n; ++t) s += x[t] * x[t];
  return std::sqrt(s / n);
}

double population_var(const std::vector<double>& z) {
  const double mean = std::accumulate(z.begin(), z.end(), 0.0) / z.size();
  double s = 0;
  for (double v : z) s += (v - mean) * (v - mean);
  return s / z.size();
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("differential entropy closed form") {
  // Known variance: unbiased var of {1,-1,...} (n=8) is 8/7.
  std::vector<double> x = {1, -1, 1, -1, 1, -1, 1, -1};
  const double expect = 0.5 * std::log(2.0 * 3.14159265358979323846 *
                                       std::exp(1.0) * (8.0 / 7.0));
  CHECK(preprocess::de_feature(x.data(), x.size()) == doctest::Approx(expect).epsilon(1e-12));

  Rng rng(7);
  std::vector<double> g(2000);
  for (auto& v : g) v = rng.normal();
  const double de = preprocess::de_feature(g.data(), g.size());
  CHECK(de == doctest::Approx(1.4189).epsilon(0.07));

  // Doubling the amplitude scales the variance by 4 exactly.
  std::vector<double> g2 = g;
  for (auto& v : g2) v *= 2.0;
  const double de2 = preprocess::de_feature(g2.data(), g2.size());
  CHECK(de2 - de == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("psd matches a direct dft periodogram") {
  Rng rng(11);
  const double fs = 200.0;
  std::vector<double> x(400);
  for (auto& v : x) v = rng.normal();
  for (const auto& [lo, hi] : preprocess::default_bands()) {
    const double mine = preprocess::psd_feature(x.data(), x.size(), lo, hi, fs);
    const double ref =
        std::log(std::max(oracle::band_power_sum(x.data(), x.size(), lo, hi, fs),
                          1e-10));
    CHECK(mine == doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("psd of a unit cosine at an exact bin is ln one half") {
  const double fs = 200.0;
  const std::size_t n = 200;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t)
    x[t] = std::cos(2.0 * 3.14159265358979323846 * 10.0 * t / fs);
  const double v = preprocess::psd_feature(x.data(), n, 8.0, 14.0, fs);
  CHECK(v == doctest::Approx(std::log(0.5)).epsilon(1e-9));
}

TEST_CASE("butterworth cascade endpoints") {
  const auto lp = preprocess::butterworth_lowpass(4, 30.0, 200.0);
  REQUIRE(lp.size() == 2);
  double dc = 1.0;
  for (const auto& s : lp)
    dc *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
  CHECK(dc == doctest::Approx(1.0).epsilon(1e-9));

  const auto hp = preprocess::butterworth_highpass(4, 1.0, 200.0);
  double nyq = 1.0;
  for (const auto& s : hp)
    nyq *= (s.b0 - s.b1 + s.b2) / (1.0 - s.a1 + s.a2);
  CHECK(nyq == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS((void)preprocess::butterworth_lowpass(3, 30.0, 200.0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)preprocess::butterworth_lowpass(4, 100.0, 200.0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)preprocess::butterworth_highpass(4, 0.0, 200.0),
                  std::invalid_argument);
}

TEST_CASE("bandpass keeps in-band sines and rejects out-of-band") {
  const double fs = 200.0;
  const std::size_t n = 2000;

  Mat pass(1, n);
  auto s10 = sine(10.0, fs, n);
  std::copy(s10.begin(), s10.end(), pass.row(0));
  preprocess::bandpass_filter(pass, 0.3, 50.0, fs);
  const double gain = rms(pass.row(0) + n / 4, n / 2) / rms(s10.data() + n / 4, n / 2);
  CHECK(gain > 0.95);
  CHECK(gain < 1.05);

  Mat stop(1, n);
  auto s80 = sine(80.0, fs, n);
  std::copy(s80.begin(), s80.end(), stop.row(0));
  preprocess::bandpass_filter(stop, 0.3, 50.0, fs);
  CHECK(rms(stop.row(0), n) / rms(s80.data(), n) <= 0.10);
}

TEST_CASE("bandpass has zero phase") {
  const double fs = 200.0;
  const std::size_t n = 1001;
  Mat m(1, n);
  m.at(0, n / 2) = 1.0;  // symmetric unit pulse
  preprocess::bandpass_filter(m, 0.3, 50.0, fs);
  std::size_t peak = 0;
  for (std::size_t t = 1; t < n; ++t)
    if (std::fabs(m.at(0, t)) > std::fabs(m.at(0, peak))) peak = t;
  CHECK(peak == n / 2);
}

TEST_CASE("bandpass input validation") {
  Mat m(1, 100);
  CHECK_THROWS_AS(preprocess::bandpass_filter(m, 0.3, 100.0, 200.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(preprocess::bandpass_filter(m, 50.0, 10.0, 200.0),
                  std::invalid_argument);
  Mat tiny(1, 8);
  CHECK_THROWS_AS(preprocess::bandpass_filter(tiny, 0.3, 50.0, 200.0),
                  std::invalid_argument);
}

TEST_CASE("pca artifact removal matches an independent eigensolver") {
  Rng rng(13);
  const std::size_t ch = 4, n = 120;
  Mat x(ch, n);
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t t = 0; t < n; ++t) x.at(c, t) = rng.normal();
  // Inject one dominant shared component.
  for (std::size_t t = 0; t < n; ++t) {
    const double a = 10.0 * std::sin(0.21 * t);
    for (std::size_t c = 0; c < ch; ++c) x.at(c, t) += a * (c + 1) / ch;
  }

  const double threshold = 0.3;
  const auto res = preprocess::remove_artifacts_pca(x, threshold);
  CHECK(res.removed_components >= 1);
  CHECK(!res.degenerate);
  CHECK(res.variance_share.size() == ch);
  CHECK(std::is_sorted(res.variance_share.rbegin(), res.variance_share.rend()));
  CHECK(std::accumulate(res.variance_share.begin(), res.variance_share.end(), 0.0) ==
        doctest::Approx(1.0).epsilon(1e-9));

  // Oracle: center rows, covariance eigvecs via Jacobi, zero the dominant
  // directions, reconstruct.
  std::vector<double> mean(ch, 0.0);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t t = 0; t < n; ++t) mean[c] += x.at(c, t);
    mean[c] /= n;
  }
  std::vector<std::vector<double>> cov(ch, std::vector<double>(ch, 0.0));
  for (std::size_t a = 0; a < ch; ++a)
    for (std::size_t b = 0; b < ch; ++b) {
      double s = 0;
      for (std::size_t t = 0; t < n; ++t)
        s += (x.at(a, t) - mean[a]) * (x.at(b, t) - mean[b]);
      cov[a][b] = s / (n - 1);
    }
  auto eig = oracle::jacobi_eig(cov);
  double total = 0;
  for (const auto& [lam, v] : eig) total += lam;
  Mat expect = x;
  for (const auto& [lam, v] : eig) {
    if (lam / total <= threshold) continue;
    // expect -= v (v^T centered)
    for (std::size_t t = 0; t < n; ++t) {
      double proj = 0;
      for (std::size_t c = 0; c < ch; ++c) proj += v[c] * (x.at(c, t) - mean[c]);
      for (std::size_t c = 0; c < ch; ++c) expect.at(c, t) -= v[c] * proj;
    }
  }
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t t = 0; t < n; ++t)
      CHECK(res.cleaned.at(c, t) == doctest::Approx(expect.at(c, t)).epsilon(1e-8));
}

TEST_CASE("pca artifact removal degenerate and invalid inputs") {
  Mat zeros(3, 50);
  const auto res = preprocess::remove_artifacts_pca(zeros, 0.3);
  CHECK(res.degenerate);
  CHECK(res.removed_components == 0);

  Mat fat(10, 5);  // fewer columns than rows
  CHECK_THROWS_AS((void)preprocess::remove_artifacts_pca(fat, 0.3),
                  std::invalid_argument);
  Mat ok(2, 50);
  CHECK_THROWS_AS((void)preprocess::remove_artifacts_pca(ok, 1.5),
                  std::invalid_argument);
}

TEST_CASE("lds smoothing equals the tridiagonal map estimate") {
  Rng rng(17);
  std::vector<double> z(60);
  double walk = 0;
  for (auto& v : z) {
    walk += 0.3 * rng.normal();
    v = walk + 0.5 * rng.normal();
  }
  const double r = population_var(z);
  const double q = 1e-3 * r;
  const auto mine = preprocess::lds_smooth(z);
  const auto ref = oracle::map_smooth(z, q, r);
  REQUIRE(mine.size() == ref.size());
  for (std::size_t t = 0; t < z.size(); ++t)
    CHECK(mine[t] == doctest::Approx(ref[t]).epsilon(1e-8));
}

TEST_CASE("lds smoothing passes constants through") {
  const std::vector<double> z(20, 3.25);
  CHECK(preprocess::lds_smooth(z) == z);
  const std::vector<double> one = {1.5};
  CHECK(preprocess::lds_smooth(one) == one);
}

TEST_CASE("window arithmetic") {
  CHECK(preprocess::window_step(200, 0.0) == 200);
  CHECK(preprocess::window_step(200, 0.5) == 100);
  CHECK(preprocess::window_step(200, 0.999) == 1);  // floored at one sample
  CHECK(preprocess::segment_count(1000, 200, 200) == 5);
  CHECK(preprocess::segment_count(999, 200, 200) == 4);
  CHECK(preprocess::segment_count(100, 200, 200) == 0);
  CHECK(preprocess::segment_count(1000, 200, 100) == 9);
}

TEST_CASE("pipeline produces five band features per window") {
  corpus::SynthConfig sc;
  sc.dataset_name = "pipe";
  sc.n_subjects = 1;
  sc.trials_per_class = 1;
  sc.n_channels = 3;
  sc.trial_seconds = 4.0;
  sc.class_signatures = {{0.6, 0.1, 0.1, 0.1, 0.1}, {0.1, 0.1, 0.1, 0.1, 0.6}};
  sc.master_seed = 5;
  const auto raw = corpus::generate_synthetic(sc);

  preprocess::FeatureConfig fc;  // de, five bands, 1 s windows
  const auto out = preprocess::run_pipeline(raw, fc);
  CHECK(out.warnings.empty());
  const auto& fi = out.dataset.manifest.feature_info;
  REQUIRE(fi.has_value());
  CHECK(fi->kind == "de");
  CHECK(fi->dim == 5);
  for (const auto& rec : out.dataset.manifest.trials)
    CHECK(rec.samples == 4 * 5);  // 4 windows x 5 bands
  for (const auto& [key, t] : out.dataset.trials) {
    CHECK(t.cols == 20u);
    CHECK(t.channels == 3u);
  }

  // Determinism and smoothing effect.
  const auto again = preprocess::run_pipeline(raw, fc);
  CHECK(again.dataset.trials.begin()->second.data ==
        out.dataset.trials.begin()->second.data);

  auto smooth_cfg = fc;
  smooth_cfg.smoothing = "lds";
  const auto smoothed = preprocess::run_pipeline(raw, smooth_cfg);
  CHECK(smoothed.dataset.trials.begin()->second.data !=
        out.dataset.trials.begin()->second.data);
  CHECK(smoothed.dataset.manifest.feature_info->smoothing == "lds");

  // Feature input cannot be preprocessed again.
  CHECK_THROWS_AS((void)preprocess::run_pipeline(out.dataset, fc),
                  corpus::DataError);
}

TEST_CASE("pipeline raw kind windows the signal verbatim") {
  corpus::SynthConfig sc;
  sc.dataset_name = "rawwin";
  sc.n_subjects = 1;
  sc.trials_per_class = 1;
  sc.n_channels = 2;
  sc.trial_seconds = 3.0;
  sc.class_signatures = {{0.6, 0.1, 0.1, 0.1, 0.1}, {0.1, 0.1, 0.1, 0.1, 0.6}};
  const auto raw = corpus::generate_synthetic(sc);

  preprocess::FeatureConfig fc;
  fc.kind = "raw";
  const auto out = preprocess::run_pipeline(raw, fc);
  REQUIRE(out.dataset.manifest.feature_info.has_value());
  CHECK(out.dataset.manifest.feature_info->dim == 200);  // 1 s at 200 Hz
  CHECK(out.dataset.manifest.feature_info->bands.empty());
  const auto& t0 = out.dataset.trials.begin()->second;
  const auto& r0 = raw.trials.begin()->second;
  CHECK(t0.cols == 600u);
  CHECK(t0.at(1, 0) == r0.at(1, 0));  // verbatim copy, window 0
  CHECK(t0.at(0, 201) == r0.at(0, 201));
}

TEST_CASE("pipeline warns when windows do not fit") {
  const auto scheme = corpus::LabelScheme::discrete({"a", "b"});
  auto m = corpus::make_dense_manifest("short", 1, 1, 2, 2, 200.0, scheme, 100,
                                       0.5, {0, 1});
  corpus::UniformDataset ds;
  ds.manifest = m;
  for (const auto& rec : m.trials) {
    corpus::TrialTensor t(2, 100);
    for (auto& v : t.data) v = 1.0f;
    ds.trials[{rec.session, rec.subject, rec.trial}] = std::move(t);
  }
  preprocess::FeatureConfig fc;
  fc.kind = "raw";  // 1 s windows = 200 samples > 100 available
  const auto out = preprocess::run_pipeline(ds, fc);
  CHECK(out.warnings.size() == 2);
  for (const auto& rec : out.dataset.manifest.trials) CHECK(rec.samples == 0);
}

TEST_CASE("feature config json round trip") {
  preprocess::FeatureConfig fc;
  fc.kind = "psd";
  fc.window_seconds = 3.0;
  fc.overlap_fraction = 0.25;
  fc.smoothing = "lds";
  fc.artifact_removal = true;
  const auto back =
      preprocess::feature_config_from_json(preprocess::feature_config_to_json(fc));
  CHECK(back.kind == "psd");
  CHECK(back.window_seconds == doctest::Approx(3.0));
  CHECK(back.overlap_fraction == doctest::Approx(0.25));
  CHECK(back.smoothing == "lds");
  CHECK(back.artifact_removal);
  CHECK(back.bands == fc.bands);
}

TEST_CASE("feature config validation") {
  preprocess::FeatureConfig fc;
  fc.window_seconds = -1.0;
  CHECK_THROWS_AS(preprocess::check_feature_config(fc, 200.0),
                  std::invalid_argument);
  fc = {};
  fc.kind = "nope";
  CHECK_THROWS_AS(preprocess::check_feature_config(fc, 200.0),
                  std::invalid_argument);
  fc = {};
  fc.overlap_fraction = 1.0;
  CHECK_THROWS_AS(preprocess::check_feature_config(fc, 200.0),
                  std::invalid_argument);
  fc = {};  // five-band default needs gamma under Nyquist
  CHECK_THROWS_AS(preprocess::check_feature_config(fc, 80.0),
                  std::invalid_argument);
}

}  // TEST_SUITE
