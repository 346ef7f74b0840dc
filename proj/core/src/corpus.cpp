#include "eerbench/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "eerbench/rng.hpp"
#include "json.hpp"

namespace eerbench::corpus {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// LabelScheme

LabelScheme LabelScheme::discrete(std::vector<std::string> names) {
  LabelScheme s;
  s.kind = LabelKind::discrete;
  s.class_names = std::move(names);
  return s;
}

LabelScheme LabelScheme::dimensional(std::vector<std::string> axes,
                                     double threshold, double rating_min,
                                     double rating_max) {
  LabelScheme s;
  s.kind = LabelKind::dimensional;
  s.axes = std::move(axes);
  s.threshold = threshold;
  s.rating_min = rating_min;
  s.rating_max = rating_max;
  // Quadrant-product class names: low/high per axis, axis 0 least
  // significant. One axis gives {LV, HV}; two give {LVLA, HVLA, LVHA, HVHA}.
  const int n = 1 << s.axes.size();
  for (int code = 0; code < n; ++code) {
    std::string name;
    for (std::size_t a = 0; a < s.axes.size(); ++a) {
      name += ((code >> a) & 1) ? 'H' : 'L';
      name += static_cast<char>(std::toupper(
          static_cast<unsigned char>(s.axes[a].empty() ? 'x' : s.axes[a][0])));
    }
    s.class_names.push_back(name);
  }
  return s;
}

int LabelScheme::classify(const std::vector<double>& ratings) const {
  if (kind != LabelKind::dimensional)
    throw std::invalid_argument("classify: scheme is not dimensional");
  if (ratings.size() != axes.size())
    throw std::invalid_argument("classify: expected one rating per axis");
  int code = 0;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    if (ratings[a] >= threshold) code |= 1 << a;
  }
  return code;
}

// ---------------------------------------------------------------------------
// Validation

std::string trial_key_str(const TrialKey& k) {
  std::ostringstream os;
  os << "s" << k.session << "/p" << k.subject << "/t" << k.trial;
  return os.str();
}

static std::string record_where(const TrialRecord& r) {
  return "trial " + trial_key_str({r.session, r.subject, r.trial});
}

std::vector<Violation> validate_manifest(const Manifest& m) {
  std::vector<Violation> out;
  auto add = [&out](std::string where, std::string msg) {
    out.push_back({std::move(where), std::move(msg)});
  };

  if (m.n_sessions < 1) add("manifest", "n_sessions must be positive");
  if (m.n_subjects < 1) add("manifest", "n_subjects must be positive");
  if (m.trials_per_subject < 1) add("manifest", "trials_per_subject must be positive");
  if (m.n_channels < 1) add("manifest", "n_channels must be positive");
  if (!(m.sampling_rate_hz > 0.0)) add("manifest", "sampling_rate_hz must be positive");

  const auto& ls = m.label_scheme;
  if (ls.class_count() < 2) add("label_scheme", "fewer than 2 classes");
  if (ls.kind == LabelKind::dimensional) {
    if (ls.axes.empty()) add("label_scheme", "dimensional scheme without axes");
    if (!(ls.threshold >= ls.rating_min && ls.threshold <= ls.rating_max))
      add("label_scheme", "threshold outside rating range");
    if (ls.class_count() != (1 << ls.axes.size()))
      add("label_scheme", "class count does not match axis product");
  }

  if (m.feature_info) {
    const auto& fi = *m.feature_info;
    if (fi.dim < 1) add("feature_info", "feature dim must be positive");
    if (fi.kind != "de" && fi.kind != "psd" && fi.kind != "raw")
      add("feature_info", "unknown feature kind '" + fi.kind + "'");
  }

  const std::int64_t expected =
      static_cast<std::int64_t>(m.n_sessions) * m.n_subjects * m.trials_per_subject;
  if (static_cast<std::int64_t>(m.trials.size()) != expected) {
    std::ostringstream os;
    os << "expected " << expected << " trial records, found " << m.trials.size();
    add("manifest", os.str());
  }

  std::set<TrialKey> seen;
  for (const auto& r : m.trials) {
    const std::string where = record_where(r);
    const TrialKey key{r.session, r.subject, r.trial};
    if (!seen.insert(key).second) add(where, "duplicate (session, subject, trial) key");
    if (r.session < 0 || r.session >= m.n_sessions)
      add(where, "session id out of range");
    if (r.subject < 0 || r.subject >= m.n_subjects)
      add(where, "subject id out of range");
    if (r.trial < 0 || r.trial >= m.trials_per_subject)
      add(where, "trial id out of range");
    if (r.channels != m.n_channels) {
      std::ostringstream os;
      os << "record claims " << r.channels << " channels, manifest has "
         << m.n_channels;
      add(where, os.str());
    }
    if (r.label < 0 || r.label >= ls.class_count())
      add(where, "label index " + std::to_string(r.label) +
                     " invalid under a " + std::to_string(ls.class_count()) +
                     "-class scheme");
    if (m.feature_info) {
      // Zero columns is legal here: a window longer than the trial yields an
      // empty feature stream but keeps the record.
      if (r.samples < 0) add(where, "negative sample count");
      if (m.feature_info->dim > 0 && r.samples % m.feature_info->dim != 0)
        add(where, "stored columns not divisible by feature dim");
    } else {
      if (r.samples < 1) add(where, "sample count must be positive");
      // duration * rate must agree with the stored sample count (+-1 sample)
      const double expected_samples = r.duration_seconds * m.sampling_rate_hz;
      if (std::abs(expected_samples - static_cast<double>(r.samples)) > 1.0 + 1e-9)
        add(where, "duration inconsistent with stored sample count");
    }
  }
  return out;
}

const TrialTensor& UniformDataset::tensor(const TrialKey& k) const {
  auto it = trials.find(k);
  if (it == trials.end())
    throw DataError("no tensor for " + trial_key_str(k));
  return it->second;
}

const TrialRecord& UniformDataset::record(const TrialKey& k) const {
  for (const auto& r : manifest.trials) {
    if (TrialKey{r.session, r.subject, r.trial} == k) return r;
  }
  throw DataError("no manifest record for " + trial_key_str(k));
}

std::vector<Violation> validate_dataset(const UniformDataset& d) {
  std::vector<Violation> out = validate_manifest(d.manifest);
  std::set<TrialKey> record_keys;
  for (const auto& r : d.manifest.trials)
    record_keys.insert({r.session, r.subject, r.trial});
  for (const auto& r : d.manifest.trials) {
    const TrialKey key{r.session, r.subject, r.trial};
    auto it = d.trials.find(key);
    if (it == d.trials.end()) {
      out.push_back({record_where(r), "no tensor stored for this record"});
      continue;
    }
    const auto& t = it->second;
    if (t.channels != static_cast<std::uint32_t>(r.channels) ||
        t.cols != static_cast<std::uint64_t>(r.samples)) {
      std::ostringstream os;
      os << "tensor is " << t.channels << "x" << t.cols << ", record says "
         << r.channels << "x" << r.samples;
      out.push_back({record_where(r), os.str()});
    }
  }
  for (const auto& [key, t] : d.trials) {
    (void)t;
    if (!record_keys.count(key))
      out.push_back({"trial " + trial_key_str(key), "tensor without manifest record"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest JSON

static ordered_json scheme_to_json(const LabelScheme& s) {
  ordered_json j;
  j["kind"] = s.kind == LabelKind::discrete ? "discrete" : "dimensional";
  j["class_names"] = s.class_names;
  if (s.kind == LabelKind::dimensional) {
    j["axes"] = s.axes;
    j["rating_min"] = s.rating_min;
    j["rating_max"] = s.rating_max;
    j["threshold"] = s.threshold;
  }
  return j;
}

static LabelScheme scheme_from_json(const ordered_json& j) {
  LabelScheme s;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "discrete") {
    s.kind = LabelKind::discrete;
  } else if (kind == "dimensional") {
    s.kind = LabelKind::dimensional;
  } else {
    throw DataError("manifest: unknown label scheme kind '" + kind + "'");
  }
  s.class_names = j.at("class_names").get<std::vector<std::string>>();
  if (s.kind == LabelKind::dimensional) {
    s.axes = j.at("axes").get<std::vector<std::string>>();
    s.rating_min = j.at("rating_min").get<double>();
    s.rating_max = j.at("rating_max").get<double>();
    s.threshold = j.at("threshold").get<double>();
  }
  return s;
}

static ordered_json feature_info_to_json(const FeatureInfo& f) {
  ordered_json j;
  j["kind"] = f.kind;
  ordered_json bands = ordered_json::array();
  for (const auto& [lo, hi] : f.bands) bands.push_back({lo, hi});
  j["bands"] = bands;
  j["window_seconds"] = f.window_seconds;
  j["overlap_fraction"] = f.overlap_fraction;
  j["smoothing"] = f.smoothing;
  j["dim"] = f.dim;
  return j;
}

static FeatureInfo feature_info_from_json(const ordered_json& j) {
  FeatureInfo f;
  f.kind = j.at("kind").get<std::string>();
  for (const auto& b : j.at("bands"))
    f.bands.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
  f.window_seconds = j.at("window_seconds").get<double>();
  f.overlap_fraction = j.at("overlap_fraction").get<double>();
  f.smoothing = j.at("smoothing").get<std::string>();
  f.dim = j.at("dim").get<int>();
  return f;
}

std::string manifest_to_json(const Manifest& m) {
  ordered_json j;
  j["format_version"] = 1;
  j["dataset_name"] = m.dataset_name;
  j["n_sessions"] = m.n_sessions;
  j["n_subjects"] = m.n_subjects;
  j["trials_per_subject"] = m.trials_per_subject;
  j["n_channels"] = m.n_channels;
  j["sampling_rate_hz"] = m.sampling_rate_hz;
  j["label_scheme"] = scheme_to_json(m.label_scheme);
  if (m.feature_info)
    j["feature_info"] = feature_info_to_json(*m.feature_info);
  else
    j["feature_info"] = nullptr;
  ordered_json trials = ordered_json::array();
  for (const auto& r : m.trials) {
    ordered_json t;
    t["session"] = r.session;
    t["subject"] = r.subject;
    t["trial"] = r.trial;
    t["channels"] = r.channels;
    t["samples"] = r.samples;
    t["label"] = r.label;
    t["duration_seconds"] = r.duration_seconds;
    trials.push_back(std::move(t));
  }
  j["trials"] = std::move(trials);
  return j.dump(2);
}

Manifest manifest_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string("manifest: invalid JSON: ") + e.what());
  }
  try {
    Manifest m;
    const int version = j.at("format_version").get<int>();
    if (version != 1)
      throw DataError("manifest: unsupported format_version " +
                      std::to_string(version));
    m.dataset_name = j.at("dataset_name").get<std::string>();
    m.n_sessions = j.at("n_sessions").get<int>();
    m.n_subjects = j.at("n_subjects").get<int>();
    m.trials_per_subject = j.at("trials_per_subject").get<int>();
    m.n_channels = j.at("n_channels").get<int>();
    m.sampling_rate_hz = j.at("sampling_rate_hz").get<double>();
    m.label_scheme = scheme_from_json(j.at("label_scheme"));
    if (j.contains("feature_info") && !j.at("feature_info").is_null())
      m.feature_info = feature_info_from_json(j.at("feature_info"));
    for (const auto& t : j.at("trials")) {
      TrialRecord r;
      r.session = t.at("session").get<int>();
      r.subject = t.at("subject").get<int>();
      r.trial = t.at("trial").get<int>();
      r.channels = t.at("channels").get<int>();
      r.samples = t.at("samples").get<std::int64_t>();
      r.label = t.at("label").get<int>();
      r.duration_seconds = t.at("duration_seconds").get<double>();
      m.trials.push_back(r);
    }
    return m;
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(std::string("manifest: missing or malformed field: ") + e.what());
  }
}

std::uint64_t manifest_hash(const Manifest& m) {
  return fnv1a(manifest_to_json(m));
}

// ---------------------------------------------------------------------------
// Binary tensor files
//
// 20-byte header: magic "EERB", u32 version (=1), u32 channels, u32 cols,
// u32 reserved (=0), all little-endian, followed by channels*cols float32
// values, channel-major.

static constexpr char kMagic[4] = {'E', 'E', 'R', 'B'};
static constexpr std::uint32_t kFormatVersion = 1;

static void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

static std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

static void write_tensor_file(const fs::path& path, const TrialTensor& t) {
  std::string header;
  header.append(kMagic, 4);
  put_u32(header, kFormatVersion);
  put_u32(header, t.channels);
  put_u32(header, t.cols);
  put_u32(header, 0);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for write: " + path.string());
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  static_assert(sizeof(float) == 4);
  if (std::endian::native == std::endian::little) {
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * 4));
  } else {
    std::string buf;
    buf.reserve(t.data.size() * 4);
    for (float x : t.data) {
      std::uint32_t u;
      std::memcpy(&u, &x, 4);
      put_u32(buf, u);
    }
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!f) throw DataError("write failed: " + path.string());
}

static TrialTensor read_tensor_file(const fs::path& path, const std::string& where) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError(where + ": missing tensor file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 20) throw DataError(where + ": tensor file truncated (header)");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(p, kMagic, 4) != 0)
    throw DataError(where + ": bad magic bytes");
  const std::uint32_t version = get_u32(p + 4);
  if (version != kFormatVersion)
    throw DataError(where + ": unsupported tensor format version " +
                    std::to_string(version));
  TrialTensor t;
  t.channels = get_u32(p + 8);
  t.cols = get_u32(p + 12);
  const std::uint64_t n = static_cast<std::uint64_t>(t.channels) * t.cols;
  if (bytes.size() != 20 + n * 4) {
    std::ostringstream os;
    os << where << ": tensor file truncated or oversized (expected "
       << 20 + n * 4 << " bytes, got " << bytes.size() << ")";
    throw DataError(os.str());
  }
  t.data.resize(n);
  if (std::endian::native == std::endian::little) {
    std::memcpy(t.data.data(), bytes.data() + 20, n * 4);
  } else {
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::uint32_t u = get_u32(p + 20 + i * 4);
      std::memcpy(&t.data[i], &u, 4);
    }
  }
  for (float x : t.data) {
    if (!std::isfinite(x))
      throw DataError(where + ": non-finite value in tensor file");
  }
  return t;
}

static fs::path tensor_path(const fs::path& dir, const TrialKey& k) {
  return dir / "data" / ("s" + std::to_string(k.session)) /
         ("p" + std::to_string(k.subject)) / ("t" + std::to_string(k.trial) + ".eer");
}

void write_dataset(const UniformDataset& d, const fs::path& dir) {
  const auto violations = validate_dataset(d);
  if (!violations.empty()) {
    std::ostringstream os;
    os << "refusing to write invalid dataset: " << violations.front().where << ": "
       << violations.front().message;
    if (violations.size() > 1) os << " (+" << violations.size() - 1 << " more)";
    throw DataError(os.str());
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());

  {
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    if (!f) throw DataError("cannot write manifest.json in " + dir.string());
    const std::string text = manifest_to_json(d.manifest);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    f << "\n";
  }
  for (const auto& [key, tensor] : d.trials) {
    const fs::path path = tensor_path(dir, key);
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw DataError("cannot create " + path.parent_path().string());
    write_tensor_file(path, tensor);
  }
}

UniformDataset read_dataset(const fs::path& dir) {
  std::ifstream f(dir / "manifest.json", std::ios::binary);
  if (!f) throw DataError("no manifest.json in " + dir.string());
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  UniformDataset d;
  d.manifest = manifest_from_json(text);
  const auto violations = validate_manifest(d.manifest);
  if (!violations.empty())
    throw DataError("invalid manifest: " + violations.front().where + ": " +
                    violations.front().message);
  for (const auto& r : d.manifest.trials) {
    const TrialKey key{r.session, r.subject, r.trial};
    const std::string where = trial_key_str(key);
    TrialTensor t = read_tensor_file(tensor_path(dir, key), where);
    if (t.channels != static_cast<std::uint32_t>(r.channels) ||
        t.cols != static_cast<std::uint64_t>(r.samples)) {
      std::ostringstream os;
      os << where << ": header says " << t.channels << "x" << t.cols
         << ", manifest record says " << r.channels << "x" << r.samples;
      throw DataError(os.str());
    }
    d.trials.emplace(key, std::move(t));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Synthetic generator

Manifest make_dense_manifest(const std::string& name, int sessions, int subjects,
                             int trials_per_subject, int channels, double rate_hz,
                             const LabelScheme& scheme,
                             std::int64_t samples_per_trial,
                             double duration_seconds,
                             const std::vector<int>& trial_labels) {
  Manifest m;
  m.dataset_name = name;
  m.n_sessions = sessions;
  m.n_subjects = subjects;
  m.trials_per_subject = trials_per_subject;
  m.n_channels = channels;
  m.sampling_rate_hz = rate_hz;
  m.label_scheme = scheme;
  for (int s = 0; s < sessions; ++s) {
    for (int p = 0; p < subjects; ++p) {
      for (int t = 0; t < trials_per_subject; ++t) {
        TrialRecord r;
        r.session = s;
        r.subject = p;
        r.trial = t;
        r.channels = channels;
        r.samples = samples_per_trial;
        r.label = trial_labels.empty()
                      ? 0
                      : trial_labels[static_cast<std::size_t>(t) % trial_labels.size()];
        r.duration_seconds = duration_seconds;
        m.trials.push_back(r);
      }
    }
  }
  return m;
}

// The five standard bands; kept in sync with preprocess::default_bands().
static constexpr double kBands[5][2] = {
    {0.5, 4.0}, {4.0, 8.0}, {8.0, 14.0}, {14.0, 30.0}, {30.0, 50.0}};

static void check_synth_config(const SynthConfig& c) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("SynthConfig: " + msg);
  };
  if (c.n_subjects < 1 || c.n_sessions < 1 || c.trials_per_class < 1 ||
      c.n_channels < 1)
    fail("counts must be positive");
  if (!(c.sampling_rate_hz > 0.0)) fail("sampling_rate_hz must be positive");
  if (c.trial_seconds < 1.0) fail("trial_seconds must be at least 1");
  if (c.class_signatures.size() < 2) fail("need at least 2 class signatures");
  for (const auto& row : c.class_signatures) {
    if (row.size() != 5) fail("each signature needs one entry per band");
    double sum = 0.0;
    for (double x : row) {
      if (x < 0.0) fail("signature entries must be non-negative");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail("signature rows must sum to 1");
  }
  if (!c.class_names.empty() &&
      c.class_names.size() != c.class_signatures.size())
    fail("class_names must match class_signatures");
  if (c.oscillators_per_band < 1) fail("oscillators_per_band must be positive");
  if (c.noise_amplitude < 0.0 || c.subject_drift < 0.0 || c.base_amplitude <= 0.0)
    fail("amplitudes must be non-negative, base_amplitude positive");
  const double nyquist = c.sampling_rate_hz / 2.0;
  if (nyquist <= kBands[4][1])
    fail("sampling rate too low for the gamma band");
}

UniformDataset generate_synthetic(const SynthConfig& c) {
  check_synth_config(c);

  const int n_classes = static_cast<int>(c.class_signatures.size());
  std::vector<std::string> names = c.class_names;
  if (names.empty()) {
    for (int k = 0; k < n_classes; ++k) names.push_back("class_" + std::to_string(k));
  }
  const int trials_per_subject = c.trials_per_class * n_classes;
  const auto T = static_cast<std::int64_t>(
      std::llround(c.trial_seconds * c.sampling_rate_hz));

  std::vector<int> labels(trials_per_subject);
  for (int t = 0; t < trials_per_subject; ++t) labels[t] = t % n_classes;

  UniformDataset d;
  d.manifest = make_dense_manifest(
      c.dataset_name, c.n_sessions, c.n_subjects, trials_per_subject,
      c.n_channels, c.sampling_rate_hz, LabelScheme::discrete(names), T,
      c.trial_seconds, labels);

  // Per-(subject, band) amplitude drift, deterministic from the master seed
  // and independent of session/trial ordering.
  std::vector<std::vector<double>> drift(c.n_subjects, std::vector<double>(5, 1.0));
  for (int p = 0; p < c.n_subjects; ++p) {
    Rng r(derive_seed(c.master_seed, "drift/p" + std::to_string(p)));
    for (int b = 0; b < 5; ++b) drift[p][b] = std::exp(c.subject_drift * r.normal());
  }

  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int s = 0; s < c.n_sessions; ++s) {
    for (int p = 0; p < c.n_subjects; ++p) {
      for (int t = 0; t < trials_per_subject; ++t) {
        const TrialKey key{s, p, t};
        Rng rng(derive_seed(c.master_seed, "trial/" + trial_key_str(key)));
        const auto& sig = c.class_signatures[labels[t]];

        // Oscillator frequencies are drawn inside the central 70% of each
        // band so the band filters used downstream see the full power.
        const int K = c.oscillators_per_band;
        std::vector<double> freq(5 * K);
        for (int b = 0; b < 5; ++b) {
          const double width = kBands[b][1] - kBands[b][0];
          for (int k = 0; k < K; ++k) {
            freq[b * K + k] = rng.uniform(kBands[b][0] + 0.15 * width,
                                          kBands[b][1] - 0.15 * width);
          }
        }

        TrialTensor tensor(static_cast<std::uint32_t>(c.n_channels),
                           static_cast<std::uint32_t>(T));
        const double total_power = c.base_amplitude * c.base_amplitude;
        std::vector<double> row(T);
        for (int ch = 0; ch < c.n_channels; ++ch) {
          std::fill(row.begin(), row.end(), 0.0);
          for (int b = 0; b < 5; ++b) {
            const double band_power =
                sig[b] * total_power * drift[p][b] * drift[p][b];
            const double amp = std::sqrt(2.0 * band_power / K);
            for (int k = 0; k < K; ++k) {
              const double f = freq[b * K + k];
              const double phase = rng.uniform(0.0, two_pi);
              const double w = two_pi * f / c.sampling_rate_hz;
              for (std::int64_t n = 0; n < T; ++n)
                row[n] += amp * std::sin(w * static_cast<double>(n) + phase);
            }
          }
          for (std::int64_t n = 0; n < T; ++n)
            row[n] += c.noise_amplitude * rng.normal();
          for (std::int64_t n = 0; n < T; ++n)
            tensor.at(ch, static_cast<std::size_t>(n)) = static_cast<float>(row[n]);
        }
        d.trials.emplace(key, std::move(tensor));
      }
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// SynthConfig JSON

std::string synth_config_to_json(const SynthConfig& c) {
  ordered_json j;
  j["dataset_name"] = c.dataset_name;
  j["n_subjects"] = c.n_subjects;
  j["n_sessions"] = c.n_sessions;
  j["trials_per_class"] = c.trials_per_class;
  j["n_channels"] = c.n_channels;
  j["sampling_rate_hz"] = c.sampling_rate_hz;
  j["trial_seconds"] = c.trial_seconds;
  j["class_names"] = c.class_names;
  j["class_signatures"] = c.class_signatures;
  j["subject_drift"] = c.subject_drift;
  j["noise_amplitude"] = c.noise_amplitude;
  j["base_amplitude"] = c.base_amplitude;
  j["oscillators_per_band"] = c.oscillators_per_band;
  j["master_seed"] = c.master_seed;
  return j.dump(2);
}

SynthConfig synth_config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string("synth config: invalid JSON: ") + e.what());
  }
  SynthConfig c;
  try {
    if (j.contains("dataset_name")) c.dataset_name = j["dataset_name"].get<std::string>();
    if (j.contains("n_subjects")) c.n_subjects = j["n_subjects"].get<int>();
    if (j.contains("n_sessions")) c.n_sessions = j["n_sessions"].get<int>();
    if (j.contains("trials_per_class")) c.trials_per_class = j["trials_per_class"].get<int>();
    if (j.contains("n_channels")) c.n_channels = j["n_channels"].get<int>();
    if (j.contains("sampling_rate_hz")) c.sampling_rate_hz = j["sampling_rate_hz"].get<double>();
    if (j.contains("trial_seconds")) c.trial_seconds = j["trial_seconds"].get<double>();
    if (j.contains("class_names")) c.class_names = j["class_names"].get<std::vector<std::string>>();
    if (j.contains("class_signatures"))
      c.class_signatures = j["class_signatures"].get<std::vector<std::vector<double>>>();
    if (j.contains("subject_drift")) c.subject_drift = j["subject_drift"].get<double>();
    if (j.contains("noise_amplitude")) c.noise_amplitude = j["noise_amplitude"].get<double>();
    if (j.contains("base_amplitude")) c.base_amplitude = j["base_amplitude"].get<double>();
    if (j.contains("oscillators_per_band"))
      c.oscillators_per_band = j["oscillators_per_band"].get<int>();
    if (j.contains("master_seed")) c.master_seed = j["master_seed"].get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw DataError(std::string("synth config: malformed field: ") + e.what());
  }
  return c;
}

}  // namespace eerbench::corpus
