#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eerbench/corpus.hpp"
#include "eerbench/mat.hpp"

namespace eerbench::preprocess {

// The standard five bands, in order: delta, theta, alpha, beta, gamma.
std::vector<std::pair<double, double>> default_bands();
const std::vector<std::string>& band_names();

// Second-order IIR section with a0 normalized to 1.
struct Biquad {
  double b0 = 0, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

// Even-order Butterworth designs as biquad cascades (bilinear transform with
// frequency prewarping). Throws std::invalid_argument for odd/nonpositive
// order or a cutoff outside (0, fs/2).
std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double fs);
std::vector<Biquad> butterworth_highpass(int order, double cutoff_hz, double fs);

// Zero-phase forward-backward filtering in place. Edge transients are tamed
// by odd-reflection padding (pad_len samples each side, capped at n-1) and
// steady-state initial conditions scaled to the first padded sample.
void filtfilt(double* x, std::size_t n, const std::vector<Biquad>& sections,
              std::size_t pad_len);

// 4th-order Butterworth band filter (highpass at low_hz + lowpass at
// high_hz), each stage applied forward-backward per channel row. low_hz <= 0
// skips the highpass stage so [0, hi] acts as a pure lowpass.
void bandpass_filter(Mat& signal, double low_hz, double high_hz, double fs);

struct ArtifactResult {
  Mat cleaned;
  int removed_components = 0;
  std::vector<double> variance_share;  // descending, one entry per component
  bool degenerate = false;             // rank-0 input returned unchanged
};

// Zeroes principal components whose variance share exceeds the threshold and
// reconstructs the signal in the original channel basis.
ArtifactResult remove_artifacts_pca(const Mat& signal,
                                    double variance_share_threshold);

// One bandpass_filter output per band, order preserved.
std::vector<Mat> band_decompose(const Mat& signal,
                                const std::vector<std::pair<double, double>>& bands,
                                double fs);

// Gaussian differential entropy 0.5*ln(2*pi*e*var) with unbiased variance,
// clamped below by 1e-10.
double de_feature(const double* x, std::size_t n);

// Natural log of the one-sided periodogram power summed over bins whose
// frequency lies in [low_hz, high_hz], clamped below by 1e-10. For a
// full-power in-band signal this is ln(mean signal power).
double psd_feature(const double* x, std::size_t n, double low_hz, double high_hz,
                   double fs);

// Fixed-parameter scalar Kalman forward pass + RTS backward smoother.
// Transition and observation are 1; q = 1e-3 * series variance, r = series
// variance; state starts at the first observation with covariance r.
// Constant series pass through unchanged.
std::vector<double> lds_smooth(const std::vector<double>& series);

// Segmentation arithmetic: step = round(window * (1 - overlap)), floored at
// 1; count = floor((total - window) / step) + 1, or 0 when window > total.
std::int64_t window_step(std::int64_t window_samples, double overlap_fraction);
std::int64_t segment_count(std::int64_t total_samples, std::int64_t window_samples,
                           std::int64_t step);

struct FeatureConfig {
  std::string kind = "de";  // "de" | "psd" | "raw"
  std::vector<std::pair<double, double>> bands = default_bands();
  double window_seconds = 1.0;
  double overlap_fraction = 0.0;
  std::string smoothing = "none";  // "none" | "lds"
  double broadband_low_hz = 0.3;
  double broadband_high_hz = 50.0;
  bool artifact_removal = false;
  double artifact_threshold = 0.3;
};

// Throws std::invalid_argument with a reason when the config cannot be
// applied at this sampling rate.
void check_feature_config(const FeatureConfig& c, double sampling_rate_hz);

// Canonical JSON round-trip; the serialized form keys preprocessing caches.
std::string feature_config_to_json(const FeatureConfig& c);
FeatureConfig feature_config_from_json(const std::string& text);

struct PipelineResult {
  corpus::UniformDataset dataset;
  std::vector<std::string> warnings;
};

// Per trial: broadband filter -> optional artifact removal -> band
// decomposition -> per-window feature -> optional smoothing over the window
// sequence. Raw kind goes straight to segmentation. Output tensors keep
// channels as rows; column = window * dim + component. Deterministic:
// identical input and config give bit-identical tensors. Per-trial failures
// are aggregated into one DataError naming every failed trial.
PipelineResult run_pipeline(const corpus::UniformDataset& raw,
                            const FeatureConfig& config);

}  // namespace eerbench::preprocess
