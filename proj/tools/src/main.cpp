// eerbench command line: synth | preprocess | run | score | validate.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 run failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "eerbench/bench.hpp"
#include "eerbench/corpus.hpp"
#include "eerbench/harness.hpp"
#include "eerbench/nn.hpp"
#include "eerbench/preprocess.hpp"
#include "eerbench/split.hpp"
#include "eerbench/version.hpp"

namespace fs = std::filesystem;
using namespace eerbench;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw corpus::DataError("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::vector<std::pair<double, double>> parse_bands(const std::string& text) {
  if (text == "default") return preprocess::default_bands();
  std::vector<std::pair<double, double>> bands;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos)
      throw std::invalid_argument("--bands expects 'default' or a list like "
                                  "'0.5-4,4-8': bad entry '" + item + "'");
    bands.emplace_back(std::stod(item.substr(0, dash)),
                       std::stod(item.substr(dash + 1)));
  }
  if (bands.empty())
    throw std::invalid_argument("--bands: no bands given");
  return bands;
}

std::string model_tag(const std::string& name) {
  if (name == "linear" || name == "linear_hinge") return "linear_hinge";
  if (name == "mlp" || name == "graphconv") return name;
  throw std::invalid_argument("unknown model '" + name +
                              "' (expected linear, mlp or graphconv)");
}

struct FeatureFlags {
  std::string feature = "de";
  std::string bands = "default";
  double window = 1.0;
  double overlap = 0.0;
  std::string smooth = "none";
  double broadband_low = 0.3;
  double broadband_high = 50.0;
  bool artifact_removal = false;
  double artifact_threshold = 0.3;

  preprocess::FeatureConfig to_config() const {
    preprocess::FeatureConfig c;
    c.kind = feature;
    c.bands = parse_bands(bands);
    c.window_seconds = window;
    c.overlap_fraction = overlap;
    c.smoothing = smooth;
    c.broadband_low_hz = broadband_low;
    c.broadband_high_hz = broadband_high;
    c.artifact_removal = artifact_removal;
    c.artifact_threshold = artifact_threshold;
    return c;
  }
};

void add_feature_flags(CLI::App* cmd, FeatureFlags& f) {
  cmd->add_option("--feature", f.feature, "Feature kind: de, psd or raw")
      ->check(CLI::IsMember({"de", "psd", "raw"}));
  cmd->add_option("--bands", f.bands,
                  "'default' (delta..gamma) or a list like '0.5-4,4-8'");
  cmd->add_option("--window", f.window, "Window length in seconds");
  cmd->add_option("--overlap", f.overlap, "Window overlap fraction [0,1)");
  cmd->add_option("--smooth", f.smooth, "Feature smoothing: none or lds")
      ->check(CLI::IsMember({"none", "lds"}));
  cmd->add_option("--broadband-low", f.broadband_low,
                  "Broadband highpass cutoff in Hz (0 disables)");
  cmd->add_option("--broadband-high", f.broadband_high,
                  "Broadband lowpass cutoff in Hz");
  cmd->add_flag("--artifact-removal", f.artifact_removal,
                "Drop dominant principal components before banding");
  cmd->add_option("--artifact-threshold", f.artifact_threshold,
                  "Variance share above which a component is dropped");
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  const auto cfg = corpus::synth_config_from_json(read_file(config_path));
  const auto ds = corpus::generate_synthetic(cfg);
  corpus::write_dataset(ds, out_dir);
  std::cout << "wrote " << ds.trials.size() << " trials ("
            << ds.manifest.n_channels << " channels, "
            << ds.manifest.sampling_rate_hz << " Hz) to " << out_dir << "\n";
  return 0;
}

int cmd_preprocess(const std::string& data_dir, const FeatureFlags& flags,
                   const std::string& out_dir) {
  const auto raw = corpus::read_dataset(data_dir);
  const auto result = preprocess::run_pipeline(raw, flags.to_config());
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  corpus::write_dataset(result.dataset, out_dir);
  const auto& fi = *result.dataset.manifest.feature_info;
  std::cout << "wrote " << result.dataset.trials.size() << " trials ("
            << fi.kind << ", dim " << fi.dim << ") to " << out_dir << "\n";
  return 0;
}

int cmd_validate(const std::string& data_dir) {
  const fs::path dir(data_dir);
  auto manifest = corpus::manifest_from_json(read_file(dir / "manifest.json"));
  auto violations = corpus::validate_manifest(manifest);
  if (violations.empty()) {
    const auto ds = corpus::read_dataset(dir);
    violations = corpus::validate_dataset(ds);
  }
  if (!violations.empty()) {
    for (const auto& v : violations)
      std::cerr << v.where << ": " << v.message << "\n";
    throw corpus::DataError("dataset invalid: " +
                            std::to_string(violations.size()) + " violation(s)");
  }
  std::cout << "ok: " << manifest.dataset_name << ": " << manifest.trials.size()
            << " trials, " << manifest.n_channels << " channels, "
            << (manifest.feature_info ? manifest.feature_info->kind : "raw")
            << "\n";
  return 0;
}

int cmd_score(const std::vector<std::string>& tables, const std::string& out) {
  std::vector<bench::RankingInput> rankings;
  for (const auto& t : tables) {
    auto part = bench::read_rank_table_csv(t);
    rankings.insert(rankings.end(), std::make_move_iterator(part.begin()),
                    std::make_move_iterator(part.end()));
  }
  const auto score = bench::rank_score(rankings);
  for (const auto& n : score.notes) std::cerr << "warning: " << n << "\n";
  std::ofstream f(out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << bench::scores_csv(score);
  int place = 1;
  for (const auto& [method, total] : score.totals)
    std::cout << place++ << ". " << method << " " << total << "\n";
  return 0;
}

struct RunFlags {
  std::vector<std::string> data;
  std::vector<std::string> tasks = {"subject-dependent"};
  std::vector<std::string> models = {"linear", "mlp", "graphconv"};
  std::vector<std::uint64_t> seeds = {2024};
  std::vector<double> split = {0.6, 0.2, 0.2};
  int kfold = 0;
  std::vector<int> hidden = {64};
  std::string out;
  FeatureFlags feature;
  harness::TrainConfig train;
  int cross_subject_session = 0;
  int jobs = 1;
};

int cmd_run(const RunFlags& f) {
  bench::RunSpec spec;
  spec.dataset_paths = f.data;
  for (const auto& t : f.tasks) spec.tasks.push_back(split::task_kind_from_str(t));
  for (const auto& m : f.models) {
    nn::ModelConfig mc;
    mc.tag = model_tag(m);
    mc.hidden = f.hidden;
    spec.models.push_back(std::move(mc));
  }
  spec.feature = f.feature.to_config();
  if (f.kfold > 0) {
    spec.strategy = split::SplitStrategy::kfold(f.kfold);
  } else {
    if (f.split.size() != 3)
      throw std::invalid_argument("--split expects three ratios, e.g. 0.6,0.2,0.2");
    spec.strategy = split::SplitStrategy::ratio(f.split[0], f.split[1], f.split[2]);
  }
  spec.train = f.train;
  spec.seeds = f.seeds;
  spec.out_dir = f.out;
  spec.cross_subject_session = f.cross_subject_session;
  spec.jobs = f.jobs;

  const auto report = bench::run_benchmark(spec);
  int failed = 0;
  for (const auto& c : report.cells) {
    std::cout << c.dataset << " " << c.task << " " << c.model << ": ";
    if (c.failed) {
      std::cout << "FAILED (" << c.note_id << ")\n";
      ++failed;
    } else {
      std::cout << "acc " << c.acc_mean << " f1 " << c.f1_mean << " ("
                << c.evaluations << " evaluations)\n";
    }
  }
  for (const auto& n : report.notes) std::cerr << "note: " << n << "\n";
  std::cout << "report written to " << f.out << "\n";
  if (failed == static_cast<int>(report.cells.size()))
    throw std::runtime_error("every cell failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG emotion-recognition benchmarking toolkit"};
  app.set_version_flag("--version", std::string("eerbench ") + kVersion);
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_config, synth_out;
  synth->add_option("--config", synth_config, "Synthesis config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output dataset directory")->required();

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "Extract windowed features");
  std::string prep_data, prep_out;
  FeatureFlags prep_flags;
  prep->add_option("--data", prep_data, "Input dataset directory")->required();
  add_feature_flags(prep, prep_flags);
  prep->add_option("--out", prep_out, "Output dataset directory")->required();
  prep->set_config("--config", "", "Read defaults from a config file");

  // run
  auto* run = app.add_subcommand("run", "Run a benchmark grid");
  RunFlags rf;
  run->add_option("--data", rf.data, "Dataset directory (repeatable)")
      ->required()
      ->delimiter(',');
  run->add_option("--task", rf.tasks,
                  "Comma-separated: subject-dependent, cross-subject, "
                  "cross-session, subject-independent")
      ->delimiter(',');
  run->add_option("--model", rf.models,
                  "Comma-separated: linear, mlp, graphconv")
      ->delimiter(',');
  run->add_option("--seed", rf.seeds, "Comma-separated seeds")->delimiter(',');
  run->add_option("--split", rf.split, "train,val,test ratios")->delimiter(',');
  run->add_option("--kfold", rf.kfold, "Use k-fold rotation instead of ratios");
  run->add_option("--hidden", rf.hidden, "Hidden layer widths")->delimiter(',');
  add_feature_flags(run, rf.feature);
  run->add_option("--epochs", rf.train.epochs, "Training epochs");
  run->add_option("--batch", rf.train.batch_size, "Mini-batch size");
  run->add_option("--lr", rf.train.lr, "Learning rate");
  run->add_option("--weight-decay", rf.train.weight_decay, "L2 penalty");
  run->add_option("--loss", rf.train.loss_kind,
                  "Override loss: cross_entropy, hinge or multiclass_hinge");
  run->add_option("--policy", rf.train.policy,
                  "Epoch selection: best_val_f1, last_epoch or early_plateau")
      ->check(CLI::IsMember({"best_val_f1", "last_epoch", "early_plateau"}));
  run->add_option("--plateau-window", rf.train.plateau_window,
                  "Epochs per plateau check");
  run->add_option("--plateau-threshold", rf.train.plateau_threshold,
                  "Relative loss-improvement cutoff");
  run->add_option("--cross-subject-session", rf.cross_subject_session,
                  "Session whose subjects define cross-subject units");
  run->add_option("--jobs", rf.jobs, "Parallel grid cells");
  run->add_option("--out", rf.out, "Output directory")->required();
  run->set_config("--config", "", "Read defaults from a config file");

  // score
  auto* score = app.add_subcommand("score", "Rank-sum score result tables");
  std::vector<std::string> score_tables;
  std::string score_out;
  score->add_option("--tables", score_tables, "Result CSV files")
      ->required()
      ->check(CLI::ExistingFile);
  score->add_option("--out", score_out, "Output scores CSV")->required();
  score->set_config("--config", "", "Read defaults from a config file");

  // validate
  auto* validate = app.add_subcommand("validate", "Check dataset integrity");
  std::string validate_data;
  validate->add_option("--data", validate_data, "Dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(synth_config, synth_out);
    if (*prep) return cmd_preprocess(prep_data, prep_flags, prep_out);
    if (*run) return cmd_run(rf);
    if (*score) return cmd_score(score_tables, score_out);
    if (*validate) return cmd_validate(validate_data);
  } catch (const corpus::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
