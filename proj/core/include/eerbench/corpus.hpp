#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace eerbench::corpus {

// Thrown for I/O and integrity failures on dataset directories. The CLI maps
// it to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LabelKind { discrete, dimensional };

// Discrete schemes carry class names directly. Dimensional schemes carry
// rating axes (e.g. valence, arousal) on a [rating_min, rating_max] scale;
// classes are the per-axis low/high product, cut at `threshold` (rating >=
// threshold is high). Trial labels are always stored as class indices.
struct LabelScheme {
  LabelKind kind = LabelKind::discrete;
  std::vector<std::string> class_names;
  std::vector<std::string> axes;  // dimensional only
  double rating_min = 1.0;
  double rating_max = 9.0;
  double threshold = 5.0;

  static LabelScheme discrete(std::vector<std::string> names);
  static LabelScheme dimensional(std::vector<std::string> axes,
                                 double threshold = 5.0,
                                 double rating_min = 1.0,
                                 double rating_max = 9.0);

  int class_count() const { return static_cast<int>(class_names.size()); }

  // Maps one rating per axis to a class index. Axis 0 is the least
  // significant bit of the quadrant code.
  int classify(const std::vector<double>& ratings) const;
};

struct TrialRecord {
  int session = 0;
  int subject = 0;
  int trial = 0;
  int channels = 0;
  // Stored tensor columns per channel: time samples for raw trials,
  // windows * feature_dim after preprocessing.
  std::int64_t samples = 0;
  int label = 0;
  double duration_seconds = 0.0;
};

// Set on datasets produced by the preprocessing pipeline; absent on raw ones.
struct FeatureInfo {
  std::string kind;  // "de" | "psd" | "raw"
  std::vector<std::pair<double, double>> bands;
  double window_seconds = 1.0;
  double overlap_fraction = 0.0;
  std::string smoothing = "none";  // "none" | "lds"
  int dim = 0;                     // feature values per (window, channel)
};

struct Manifest {
  std::string dataset_name;
  int n_sessions = 0;
  int n_subjects = 0;
  int trials_per_subject = 0;
  int n_channels = 0;
  double sampling_rate_hz = 0.0;
  LabelScheme label_scheme;
  std::optional<FeatureInfo> feature_info;
  std::vector<TrialRecord> trials;
};

struct Violation {
  std::string where;    // offending record, e.g. "trial s0/p0/t3"
  std::string message;
};

// Empty result iff every manifest invariant holds. Violations are data, not
// errors; write_dataset refuses to write when any are present.
std::vector<Violation> validate_manifest(const Manifest& m);

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);

// FNV-1a over the canonical JSON serialization.
std::uint64_t manifest_hash(const Manifest& m);

struct TrialKey {
  int session = 0;
  int subject = 0;
  int trial = 0;
  auto operator<=>(const TrialKey&) const = default;
};

std::string trial_key_str(const TrialKey& k);

// One trial's stored tensor, in the on-disk layout: channel-major rows of
// `cols` float32 values. Raw trials: cols = time samples. Feature trials:
// cols = windows * dim, column index = window * dim + component.
struct TrialTensor {
  std::uint32_t channels = 0;
  std::uint32_t cols = 0;
  std::vector<float> data;

  TrialTensor() = default;
  TrialTensor(std::uint32_t ch, std::uint32_t c)
      : channels(ch), cols(c), data(static_cast<std::size_t>(ch) * c, 0.0f) {}

  float& at(std::size_t ch, std::size_t col) { return data[ch * cols + col]; }
  float at(std::size_t ch, std::size_t col) const { return data[ch * cols + col]; }
};

// The uniform corpus object: a manifest plus one tensor per trial record.
// std::map keys give the canonical ascending (session, subject, trial)
// iteration order. Immutable after load by convention.
struct UniformDataset {
  Manifest manifest;
  std::map<TrialKey, TrialTensor> trials;

  const TrialTensor& tensor(const TrialKey& k) const;
  const TrialRecord& record(const TrialKey& k) const;
};

// Structural check of a whole dataset: manifest invariants plus tensor/record
// agreement (key sets equal, per-trial dims match).
std::vector<Violation> validate_dataset(const UniformDataset& d);

// Directory layout: manifest.json at the root, tensors at
// data/s{session}/p{subject}/t{trial}.eer. Refuses to write anything if
// validation fails. Re-reading yields a bit-identical dataset.
void write_dataset(const UniformDataset& d, const std::filesystem::path& dir);

// Throws DataError on missing/corrupt tensors, header/manifest mismatches and
// non-finite values; messages name the offending trial.
UniformDataset read_dataset(const std::filesystem::path& dir);

// Synthetic EEG generator. Each trial is a sum of band-limited oscillators
// whose relative band powers follow the trial's class signature; a
// deterministic per-subject log-normal drift perturbs band amplitudes and
// white noise is added on top. Pure function of the config, including the
// seed. The signature contract (relative band power within 10% per band)
// holds for moderate drift (<= 0.05) and noise (<= ~20% of signal RMS).
struct SynthConfig {
  std::string dataset_name = "synth";
  int n_subjects = 1;
  int n_sessions = 1;
  int trials_per_class = 1;
  int n_channels = 8;
  double sampling_rate_hz = 200.0;
  double trial_seconds = 20.0;
  std::vector<std::string> class_names;  // optional; defaults to class_<k>
  // One row per class, one entry per band of the standard five-band set;
  // rows must sum to 1.
  std::vector<std::vector<double>> class_signatures;
  double subject_drift = 0.05;   // stddev of per-(subject, band) log amplitude
  double noise_amplitude = 0.5;  // white noise sigma, same unit as signal
  double base_amplitude = 30.0;  // overall signal RMS target (microvolts)
  int oscillators_per_band = 3;
  std::uint64_t master_seed = 2024;
};

std::string synth_config_to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const std::string& text);

UniformDataset generate_synthetic(const SynthConfig& config);

// Convenience manifest builders used by tests and the synthetic generator.
Manifest make_dense_manifest(const std::string& name, int sessions, int subjects,
                             int trials_per_subject, int channels, double rate_hz,
                             const LabelScheme& scheme,
                             std::int64_t samples_per_trial,
                             double duration_seconds,
                             const std::vector<int>& trial_labels);

}  // namespace eerbench::corpus
