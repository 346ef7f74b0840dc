#include "eerbench/preprocess.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "json.hpp"

namespace eerbench::preprocess {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kVarFloor = 1e-10;
}  // namespace

std::vector<std::pair<double, double>> default_bands() {
  return {{0.5, 4.0}, {4.0, 8.0}, {8.0, 14.0}, {14.0, 30.0}, {30.0, 50.0}};
}

const std::vector<std::string>& band_names() {
  static const std::vector<std::string> names = {"delta", "theta", "alpha",
                                                 "beta", "gamma"};
  return names;
}

// ---------------------------------------------------------------------------
// Filters

static void check_cutoff(int order, double cutoff_hz, double fs) {
  if (order < 2 || order % 2 != 0)
    throw std::invalid_argument("filter order must be a positive even number");
  if (!(fs > 0.0)) throw std::invalid_argument("sampling rate must be positive");
  if (!(cutoff_hz > 0.0) || cutoff_hz >= fs / 2.0) {
    std::ostringstream os;
    os << "cutoff " << cutoff_hz << " Hz outside (0, " << fs / 2.0
       << ") for fs=" << fs;
    throw std::invalid_argument(os.str());
  }
}

// Butterworth pole-pair Q factors: Q_k = 1 / (2 sin((2k-1) pi / (2 order))).
static std::vector<double> butterworth_q(int order) {
  std::vector<double> q;
  for (int k = 1; k <= order / 2; ++k)
    q.push_back(1.0 / (2.0 * std::sin((2.0 * k - 1.0) * kPi / (2.0 * order))));
  return q;
}

std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double fs) {
  check_cutoff(order, cutoff_hz, fs);
  const double K = std::tan(kPi * cutoff_hz / fs);  // prewarped
  std::vector<Biquad> out;
  for (double Q : butterworth_q(order)) {
    const double norm = 1.0 / (1.0 + K / Q + K * K);
    Biquad s;
    s.b0 = K * K * norm;
    s.b1 = 2.0 * s.b0;
    s.b2 = s.b0;
    s.a1 = 2.0 * (K * K - 1.0) * norm;
    s.a2 = (1.0 - K / Q + K * K) * norm;
    out.push_back(s);
  }
  return out;
}

std::vector<Biquad> butterworth_highpass(int order, double cutoff_hz, double fs) {
  check_cutoff(order, cutoff_hz, fs);
  const double K = std::tan(kPi * cutoff_hz / fs);
  std::vector<Biquad> out;
  for (double Q : butterworth_q(order)) {
    const double norm = 1.0 / (1.0 + K / Q + K * K);
    Biquad s;
    s.b0 = norm;
    s.b1 = -2.0 * norm;
    s.b2 = norm;
    s.a1 = 2.0 * (K * K - 1.0) * norm;
    s.a2 = (1.0 - K / Q + K * K) * norm;
    out.push_back(s);
  }
  return out;
}

static double dc_gain(const Biquad& s) {
  return (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
}

// Direct form II transposed, with the state preloaded to its steady-state
// response to a constant input equal to the cascade's first sample. This
// suppresses the start-up transient the same way scipy's filtfilt does.
static void run_cascade(std::vector<double>& x, const std::vector<Biquad>& sections) {
  if (x.empty()) return;
  double steady = x.front();
  for (const auto& s : sections) {
    const double g = dc_gain(s);
    const double z2u = s.b2 - s.a2 * g;
    const double z1u = s.b1 - s.a1 * g + z2u;
    double z1 = z1u * steady;
    double z2 = z2u * steady;
    for (double& v : x) {
      const double y = s.b0 * v + z1;
      z1 = s.b1 * v - s.a1 * y + z2;
      z2 = s.b2 * v - s.a2 * y;
      v = y;
    }
    steady *= g;
  }
}

void filtfilt(double* x, std::size_t n, const std::vector<Biquad>& sections,
              std::size_t pad_len) {
  if (n < 2) return;
  const std::size_t pad = std::min(pad_len, n - 1);

  // Odd reflection about both endpoints.
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x, x + n);
  for (std::size_t i = 1; i <= pad; ++i)
    ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  run_cascade(ext, sections);
  std::reverse(ext.begin(), ext.end());
  run_cascade(ext, sections);
  std::reverse(ext.begin(), ext.end());

  for (std::size_t i = 0; i < n; ++i) x[i] = ext[pad + i];
}

// Three lengths of the cascade's effective transfer function, the classic
// reflect-pad size. Longer pads measurably hurt: the pad's phase-reversal
// kink then has room to excite a sub-hertz highpass's slow modes before the
// backward pass reaches the data.
static std::size_t pad_for(const std::vector<Biquad>& sections) {
  return 3 * (2 * sections.size() + 1);
}

// Reflection padding turns an endpoint offset into a step at the pad
// boundary, and a sub-hertz highpass rings for hundreds of samples after a
// step. Filtering with the endpoint-anchored line removed keeps the edges
// clean; the line is restored only where it is passband (the lowpass stage).
struct EndLine {
  double x0 = 0.0, slope = 0.0;
};

static EndLine remove_end_line(double* x, std::size_t n) {
  EndLine line{x[0], (x[n - 1] - x[0]) / static_cast<double>(n - 1)};
  for (std::size_t t = 0; t < n; ++t)
    x[t] -= line.x0 + line.slope * static_cast<double>(t);
  return line;
}

static void add_end_line(double* x, std::size_t n, const EndLine& line) {
  for (std::size_t t = 0; t < n; ++t)
    x[t] += line.x0 + line.slope * static_cast<double>(t);
}

void bandpass_filter(Mat& signal, double low_hz, double high_hz, double fs) {
  if (!(high_hz > 0.0) || high_hz >= fs / 2.0)
    throw std::invalid_argument("band edge at or above Nyquist");
  if (low_hz > 0.0 && low_hz >= high_hz)
    throw std::invalid_argument("band low edge above high edge");
  if (signal.cols < 12)
    throw std::invalid_argument("signal too short to filter (need >= 12 samples)");

  const auto lp = butterworth_lowpass(4, high_hz, fs);
  if (low_hz > 0.0) {
    const auto hp = butterworth_highpass(4, low_hz, fs);
    for (std::size_t r = 0; r < signal.rows; ++r) {
      (void)remove_end_line(signal.row(r), signal.cols);  // stopband: drop it
      filtfilt(signal.row(r), signal.cols, hp, pad_for(hp));
    }
  }
  for (std::size_t r = 0; r < signal.rows; ++r) {
    const EndLine line = remove_end_line(signal.row(r), signal.cols);
    filtfilt(signal.row(r), signal.cols, lp, pad_for(lp));
    add_end_line(signal.row(r), signal.cols, line);
  }
}

// ---------------------------------------------------------------------------
// PCA artifact removal

ArtifactResult remove_artifacts_pca(const Mat& signal,
                                    double variance_share_threshold) {
  if (!(variance_share_threshold > 0.0 && variance_share_threshold < 1.0))
    throw std::invalid_argument("variance share threshold must be in (0, 1)");
  if (signal.cols <= signal.rows)
    throw std::invalid_argument("need more time samples than channels");

  ArtifactResult res;
  res.cleaned = signal;

  const auto C = static_cast<Eigen::Index>(signal.rows);
  const auto T = static_cast<Eigen::Index>(signal.cols);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      X(signal.v.data(), C, T);

  const Eigen::VectorXd means = X.rowwise().mean();
  const Eigen::MatrixXd Xc = X.colwise() - means;
  const Eigen::MatrixXd cov = Xc * Xc.transpose() / static_cast<double>(T - 1);
  const double total_var = cov.trace();
  if (!(total_var > 1e-30)) {
    res.degenerate = true;
    return res;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed");

  // Eigen delivers eigenvalues ascending; report shares descending.
  std::vector<int> removed;
  for (Eigen::Index i = C - 1; i >= 0; --i) {
    const double share = std::max(0.0, es.eigenvalues()(i)) / total_var;
    res.variance_share.push_back(share);
    if (share > variance_share_threshold) removed.push_back(static_cast<int>(i));
  }
  res.removed_components = static_cast<int>(removed.size());
  if (removed.empty()) return res;

  Eigen::MatrixXd Xr = Xc;
  for (int i : removed) {
    const Eigen::VectorXd v = es.eigenvectors().col(i);
    Xr.noalias() -= v * (v.transpose() * Xc);
  }
  Xr.colwise() += means;
  for (Eigen::Index r = 0; r < C; ++r)
    for (Eigen::Index c = 0; c < T; ++c)
      res.cleaned.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
          Xr(r, c);
  return res;
}

// ---------------------------------------------------------------------------
// Features

std::vector<Mat> band_decompose(const Mat& signal,
                                const std::vector<std::pair<double, double>>& bands,
                                double fs) {
  std::vector<Mat> out;
  out.reserve(bands.size());
  for (const auto& [lo, hi] : bands) {
    Mat m = signal;
    bandpass_filter(m, lo, hi, fs);
    out.push_back(std::move(m));
  }
  return out;
}

double de_feature(const double* x, std::size_t n) {
  if (n < 2) throw std::invalid_argument("window needs at least 2 samples");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean;
    ss += d * d;
  }
  const double var = std::max(ss / static_cast<double>(n - 1), kVarFloor);
  return 0.5 * std::log(2.0 * kPi * std::exp(1.0) * var);
}

double psd_feature(const double* x, std::size_t n, double low_hz, double high_hz,
                   double fs) {
  if (n < 2) throw std::invalid_argument("window needs at least 2 samples");
  if (!(low_hz < high_hz)) throw std::invalid_argument("empty band");
  const auto W = static_cast<double>(n);
  const std::size_t k_nyq = n / 2;
  auto k_lo = static_cast<long long>(std::ceil(low_hz * W / fs - 1e-9));
  auto k_hi = static_cast<long long>(std::floor(high_hz * W / fs + 1e-9));
  k_lo = std::max<long long>(k_lo, 0);
  k_hi = std::min<long long>(k_hi, static_cast<long long>(k_nyq));

  double power = 0.0;
  for (long long k = k_lo; k <= k_hi; ++k) {
    // Incremental rotation instead of per-sample trig calls.
    const double step = -2.0 * kPi * static_cast<double>(k) / W;
    const double cs = std::cos(step), sn = std::sin(step);
    double re = 0.0, im = 0.0, wr = 1.0, wi = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      re += x[t] * wr;
      im += x[t] * wi;
      const double nwr = wr * cs - wi * sn;
      wi = wr * sn + wi * cs;
      wr = nwr;
    }
    // One-sided periodogram: interior bins carry the conjugate pair's power.
    const bool edge = (k == 0) || (n % 2 == 0 && k == static_cast<long long>(k_nyq));
    power += (edge ? 1.0 : 2.0) * (re * re + im * im) / (W * W);
  }
  return std::log(std::max(power, kVarFloor));
}

std::vector<double> lds_smooth(const std::vector<double>& series) {
  const std::size_t n = series.size();
  if (n <= 1) return series;

  double mean = 0.0;
  for (double z : series) mean += z;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double z : series) var += (z - mean) * (z - mean);
  var /= static_cast<double>(n);
  if (!(var > 1e-30)) return series;  // constants are fixed points

  const double q = 1e-3 * var;
  const double r = var;

  std::vector<double> xf(n), pf(n);
  xf[0] = series[0];
  pf[0] = r;
  for (std::size_t t = 1; t < n; ++t) {
    const double xp = xf[t - 1];
    const double pp = pf[t - 1] + q;
    const double gain = pp / (pp + r);
    xf[t] = xp + gain * (series[t] - xp);
    pf[t] = (1.0 - gain) * pp;
  }

  std::vector<double> xs(n);
  xs[n - 1] = xf[n - 1];
  for (std::size_t t = n - 1; t-- > 0;) {
    const double pp = pf[t] + q;
    const double c = pf[t] / pp;
    xs[t] = xf[t] + c * (xs[t + 1] - xf[t]);
  }
  return xs;
}

// ---------------------------------------------------------------------------
// Segmentation

std::int64_t window_step(std::int64_t window_samples, double overlap_fraction) {
  const auto s = std::llround(static_cast<double>(window_samples) *
                              (1.0 - overlap_fraction));
  return std::max<std::int64_t>(1, s);
}

std::int64_t segment_count(std::int64_t total_samples, std::int64_t window_samples,
                           std::int64_t step) {
  if (window_samples > total_samples) return 0;
  return (total_samples - window_samples) / step + 1;
}

// ---------------------------------------------------------------------------
// Pipeline

void check_feature_config(const FeatureConfig& c, double fs) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("feature config: " + msg);
  };
  if (c.kind != "de" && c.kind != "psd" && c.kind != "raw")
    fail("unknown feature kind '" + c.kind + "'");
  if (c.smoothing != "none" && c.smoothing != "lds")
    fail("unknown smoothing '" + c.smoothing + "'");
  if (!(c.overlap_fraction >= 0.0 && c.overlap_fraction < 1.0))
    fail("overlap fraction must be in [0, 1)");
  if (c.window_seconds * fs < 2.0) fail("window shorter than 2 samples");
  if (c.kind != "raw") {
    if (c.bands.empty()) fail("no bands configured");
    for (const auto& [lo, hi] : c.bands) {
      if (!(lo > 0.0 && lo < hi && hi < fs / 2.0)) {
        std::ostringstream os;
        os << "band [" << lo << ", " << hi << "] invalid for fs=" << fs;
        fail(os.str());
      }
    }
    if (!(c.broadband_low_hz > 0.0 && c.broadband_low_hz < c.broadband_high_hz &&
          c.broadband_high_hz < fs / 2.0))
      fail("broadband range invalid for this sampling rate");
    if (c.artifact_removal &&
        !(c.artifact_threshold > 0.0 && c.artifact_threshold < 1.0))
      fail("artifact variance-share threshold must be in (0, 1)");
  }
}

std::string feature_config_to_json(const FeatureConfig& c) {
  nlohmann::ordered_json j;
  j["kind"] = c.kind;
  nlohmann::ordered_json bands = nlohmann::ordered_json::array();
  for (const auto& [lo, hi] : c.bands) bands.push_back({lo, hi});
  j["bands"] = std::move(bands);
  j["window_seconds"] = c.window_seconds;
  j["overlap_fraction"] = c.overlap_fraction;
  j["smoothing"] = c.smoothing;
  j["broadband_low_hz"] = c.broadband_low_hz;
  j["broadband_high_hz"] = c.broadband_high_hz;
  j["artifact_removal"] = c.artifact_removal;
  j["artifact_threshold"] = c.artifact_threshold;
  return j.dump(2);
}

FeatureConfig feature_config_from_json(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("feature config: invalid JSON: ") +
                                e.what());
  }
  FeatureConfig c;
  try {
    if (j.contains("kind")) c.kind = j["kind"].get<std::string>();
    if (j.contains("bands")) {
      c.bands.clear();
      for (const auto& b : j["bands"])
        c.bands.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
    }
    if (j.contains("window_seconds")) c.window_seconds = j["window_seconds"].get<double>();
    if (j.contains("overlap_fraction"))
      c.overlap_fraction = j["overlap_fraction"].get<double>();
    if (j.contains("smoothing")) c.smoothing = j["smoothing"].get<std::string>();
    if (j.contains("broadband_low_hz"))
      c.broadband_low_hz = j["broadband_low_hz"].get<double>();
    if (j.contains("broadband_high_hz"))
      c.broadband_high_hz = j["broadband_high_hz"].get<double>();
    if (j.contains("artifact_removal"))
      c.artifact_removal = j["artifact_removal"].get<bool>();
    if (j.contains("artifact_threshold"))
      c.artifact_threshold = j["artifact_threshold"].get<double>();
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("feature config: malformed field: ") +
                                e.what());
  }
  return c;
}

PipelineResult run_pipeline(const corpus::UniformDataset& raw,
                            const FeatureConfig& config) {
  using corpus::TrialKey;
  using corpus::TrialTensor;

  const double fs = raw.manifest.sampling_rate_hz;
  check_feature_config(config, fs);
  if (raw.manifest.feature_info)
    throw corpus::DataError("input dataset already holds features");
  {
    const auto violations = corpus::validate_dataset(raw);
    if (!violations.empty())
      throw corpus::DataError("input dataset invalid: " +
                              violations.front().where + ": " +
                              violations.front().message);
  }

  const auto W = static_cast<std::int64_t>(std::llround(config.window_seconds * fs));
  const std::int64_t S = window_step(W, config.overlap_fraction);
  const bool is_raw = config.kind == "raw";
  const int dim = is_raw ? static_cast<int>(W) : static_cast<int>(config.bands.size());

  PipelineResult out;
  out.dataset.manifest = raw.manifest;
  corpus::FeatureInfo fi;
  fi.kind = config.kind;
  fi.bands = is_raw ? std::vector<std::pair<double, double>>{} : config.bands;
  fi.window_seconds = config.window_seconds;
  fi.overlap_fraction = config.overlap_fraction;
  fi.smoothing = is_raw ? "none" : config.smoothing;
  fi.dim = dim;
  out.dataset.manifest.feature_info = fi;

  std::map<TrialKey, std::size_t> record_index;
  for (std::size_t i = 0; i < raw.manifest.trials.size(); ++i) {
    const auto& r = raw.manifest.trials[i];
    record_index[{r.session, r.subject, r.trial}] = i;
  }

  std::vector<std::string> failures;
  for (const auto& [key, tensor] : raw.trials) {
    try {
      const auto T = static_cast<std::int64_t>(tensor.cols);
      const std::int64_t count = segment_count(T, W, S);
      if (count == 0) {
        std::ostringstream os;
        os << "trial " << corpus::trial_key_str(key) << ": window (" << W
           << " samples) longer than trial (" << T << "); produced 0 samples";
        out.warnings.push_back(os.str());
      }
      TrialTensor ft(tensor.channels,
                     static_cast<std::uint32_t>(count * dim));

      if (is_raw) {
        for (std::int64_t w = 0; w < count; ++w) {
          const std::int64_t start = w * S;
          for (std::uint32_t ch = 0; ch < tensor.channels; ++ch)
            for (std::int64_t i = 0; i < W; ++i)
              ft.at(ch, static_cast<std::size_t>(w * dim + i)) =
                  tensor.at(ch, static_cast<std::size_t>(start + i));
        }
      } else if (count > 0) {
        Mat sig(tensor.channels, static_cast<std::size_t>(T));
        for (std::uint32_t ch = 0; ch < tensor.channels; ++ch)
          for (std::int64_t t = 0; t < T; ++t)
            sig.at(ch, static_cast<std::size_t>(t)) =
                tensor.at(ch, static_cast<std::size_t>(t));

        bandpass_filter(sig, config.broadband_low_hz, config.broadband_high_hz, fs);
        if (config.artifact_removal) {
          auto res = remove_artifacts_pca(sig, config.artifact_threshold);
          if (res.degenerate)
            out.warnings.push_back("trial " + corpus::trial_key_str(key) +
                                   ": degenerate signal, artifact removal skipped");
          sig = std::move(res.cleaned);
        }
        const std::vector<Mat> per_band = band_decompose(sig, config.bands, fs);

        std::vector<double> series(static_cast<std::size_t>(count));
        for (std::uint32_t ch = 0; ch < tensor.channels; ++ch) {
          for (int b = 0; b < dim; ++b) {
            const Mat& bm = per_band[static_cast<std::size_t>(b)];
            for (std::int64_t w = 0; w < count; ++w) {
              const double* win = bm.row(ch) + w * S;
              const auto wn = static_cast<std::size_t>(W);
              series[static_cast<std::size_t>(w)] =
                  config.kind == "de"
                      ? de_feature(win, wn)
                      : psd_feature(win, wn, config.bands[b].first,
                                    config.bands[b].second, fs);
            }
            if (config.smoothing == "lds") series = lds_smooth(series);
            for (std::int64_t w = 0; w < count; ++w)
              ft.at(ch, static_cast<std::size_t>(w * dim + b)) =
                  static_cast<float>(series[static_cast<std::size_t>(w)]);
          }
        }
      }

      out.dataset.manifest.trials[record_index.at(key)].samples =
          static_cast<std::int64_t>(count) * dim;
      out.dataset.trials.emplace(key, std::move(ft));
    } catch (const std::exception& e) {
      failures.push_back(corpus::trial_key_str(key) + ": " + e.what());
    }
  }

  if (!failures.empty()) {
    std::ostringstream os;
    os << "preprocessing failed for " << failures.size() << " trial(s): ";
    for (std::size_t i = 0; i < failures.size(); ++i) {
      if (i) os << "; ";
      os << failures[i];
    }
    throw corpus::DataError(os.str());
  }
  return out;
}

}  // namespace eerbench::preprocess
