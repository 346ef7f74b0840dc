#include "eerbench/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "eerbench/rng.hpp"
#include "eerbench/version.hpp"
#include "json.hpp"

namespace eerbench::bench {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Rank-sum scoring

static double round4(double v) { return std::round(v * 1e4) / 1e4; }

RankScore rank_score(const std::vector<RankingInput>& rankings) {
  RankScore out;
  std::set<std::string> method_set;
  for (const auto& r : rankings)
    for (const auto& [m, v] : r.values) method_set.insert(m);
  out.methods.assign(method_set.begin(), method_set.end());

  std::map<std::string, double> totals;
  for (const auto& m : out.methods) totals[m] = 0.0;

  for (const auto& r : rankings) {
    std::map<std::string, double> vals;
    for (const auto& [m, v] : r.values) vals[m] = v;
    bool complete = vals.size() == out.methods.size();
    for (const auto& m : out.methods) {
      auto it = vals.find(m);
      if (it == vals.end() || std::isnan(it->second)) {
        out.notes.push_back("ranking " + r.id + " skipped: no value for " + m);
        complete = false;
        break;
      }
    }
    if (!complete) continue;

    const auto n = static_cast<int>(out.methods.size());
    std::vector<std::pair<double, std::string>> order;  // rounded value, method
    for (const auto& m : out.methods) order.emplace_back(round4(vals[m]), m);
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });

    std::map<std::string, double> points;
    int pos = 0;
    while (pos < n) {
      int end = pos;
      while (end + 1 < n && order[end + 1].first == order[pos].first) ++end;
      // positions pos..end (0-based) share the mean of their points n-pos..n-end
      double sum = 0.0;
      for (int k = pos; k <= end; ++k) sum += static_cast<double>(n - k);
      const double share = sum / static_cast<double>(end - pos + 1);
      for (int k = pos; k <= end; ++k) points[order[k].second] = share;
      pos = end + 1;
    }
    std::vector<std::pair<std::string, double>> breakdown;
    for (const auto& m : out.methods) {
      breakdown.emplace_back(m, points[m]);
      totals[m] += points[m];
    }
    out.rankings.emplace_back(r.id, std::move(breakdown));
  }

  out.totals.assign(totals.begin(), totals.end());
  std::sort(out.totals.begin(), out.totals.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

// ---------------------------------------------------------------------------
// CSV helpers

static std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

static std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<RankingInput> read_rank_table_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw corpus::DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line))
    throw corpus::DataError(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "method")
    throw corpus::DataError(path.string() +
                             ": header must start with 'method' and list at "
                             "least one ranking column");
  std::vector<RankingInput> rankings(header.size() - 1);
  for (std::size_t c = 1; c < header.size(); ++c) rankings[c - 1].id = header[c];

  std::set<std::string> seen;
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw corpus::DataError(path.string() + ": row for '" +
                               (fields.empty() ? "" : fields[0]) + "' has " +
                               std::to_string(fields.size()) + " fields, header has " +
                               std::to_string(header.size()));
    if (!seen.insert(fields[0]).second)
      throw corpus::DataError(path.string() + ": duplicate method '" + fields[0] +
                               "'");
    for (std::size_t c = 1; c < fields.size(); ++c) {
      double v = std::nan("");
      if (!fields[c].empty() && fields[c] != "NA") {
        try {
          v = std::stod(fields[c]);
        } catch (const std::exception&) {
          throw corpus::DataError(path.string() + ": bad number '" + fields[c] +
                                   "' in column " + header[c]);
        }
      }
      rankings[c - 1].values.emplace_back(fields[0], v);
    }
  }
  if (seen.empty()) throw corpus::DataError(path.string() + ": no data rows");
  return rankings;
}

std::string scores_csv(const RankScore& s) {
  std::ostringstream os;
  os << "method,total\n";
  for (const auto& [m, total] : s.totals) os << m << "," << fmt_double(total) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Grid execution

static std::string sanitize(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '_';
    if (!ok) c = '_';
  }
  return out;
}

static std::string u64_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

static void write_text_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

namespace {

struct LoadedDataset {
  std::string path;
  std::string name;  // unique within the run
  corpus::UniformDataset features;
  DatasetProvenance provenance;
  std::vector<std::string> warnings;
};

struct PlannedTask {
  bool ok = false;
  std::string error;
  std::map<std::uint64_t, split::SplitPlan> plans;                     // per seed
  std::map<std::uint64_t, std::vector<split::SubtaskSpec>> resolved;   // per seed
};

struct CellJob {
  std::size_t dataset = 0;
  std::size_t task = 0;
  std::size_t model = 0;
};

struct CellOut {
  CellResult cell;
  std::string note_text;
  double wall_seconds = 0.0;
  std::vector<std::pair<std::string, std::string>> log_files;  // rel path, body
};

}  // namespace

static void check_spec(const RunSpec& spec) {
  if (spec.dataset_paths.empty())
    throw std::invalid_argument("run spec: no datasets");
  if (spec.tasks.empty()) throw std::invalid_argument("run spec: no tasks");
  if (spec.models.empty()) throw std::invalid_argument("run spec: no models");
  if (spec.seeds.empty()) throw std::invalid_argument("run spec: no seeds");
  if (spec.out_dir.empty()) throw std::invalid_argument("run spec: no output directory");
  if (spec.jobs < 1) throw std::invalid_argument("run spec: jobs must be positive");
  for (const auto& p : spec.dataset_paths)
    if (!fs::exists(p))
      throw corpus::DataError("dataset path does not exist: " + p);
}

BenchmarkReport run_benchmark(const RunSpec& spec) {
  check_spec(spec);
  const auto t_start = std::chrono::steady_clock::now();
  const std::time_t started_at = std::time(nullptr);

  BenchmarkReport report;
  report.version = kVersion;
  report.spec = spec;

  // Load every dataset once; preprocess raw inputs. This in-memory cache is
  // what keeps the grid tractable: every (task, model, seed) cell reuses it.
  std::vector<LoadedDataset> datasets;
  std::set<std::string> names_used;
  for (const auto& path : spec.dataset_paths) {
    LoadedDataset ld;
    ld.path = path;
    corpus::UniformDataset raw = corpus::read_dataset(path);
    ld.provenance.path = path;
    if (raw.manifest.feature_info) {
      ld.provenance.feature_manifest_hash = u64_hex(corpus::manifest_hash(raw.manifest));
      ld.features = std::move(raw);
    } else {
      ld.provenance.raw_manifest_hash = u64_hex(corpus::manifest_hash(raw.manifest));
      auto piped = preprocess::run_pipeline(raw, spec.feature);
      ld.warnings = std::move(piped.warnings);
      ld.features = std::move(piped.dataset);
      ld.provenance.feature_manifest_hash =
          u64_hex(corpus::manifest_hash(ld.features.manifest));
    }
    ld.name = ld.features.manifest.dataset_name;
    while (!names_used.insert(ld.name).second) ld.name += "+";
    ld.provenance.name = ld.name;
    report.datasets.push_back(ld.provenance);
    for (const auto& w : ld.warnings)
      report.notes.push_back("preprocess " + ld.name + ": " + w);
    datasets.push_back(std::move(ld));
  }

  // Plans and sample resolution are shared across models: every model of a
  // (dataset, task, seed) trains on identical membership.
  std::vector<std::vector<PlannedTask>> planned(datasets.size());
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    planned[d].resize(spec.tasks.size());
    for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
      PlannedTask& pt = planned[d][t];
      try {
        for (const std::uint64_t seed : spec.seeds) {
          auto plan = split::plan_for_dataset(datasets[d].features, spec.tasks[t],
                                              spec.strategy, seed,
                                              spec.cross_subject_session);
          pt.resolved[seed] = split::resolve(plan, datasets[d].features);
          pt.plans[seed] = std::move(plan);
        }
        pt.ok = true;
      } catch (const std::exception& e) {
        pt.ok = false;
        pt.error = e.what();
        pt.plans.clear();
        pt.resolved.clear();
      }
    }
  }

  const fs::path out_dir(spec.out_dir);
  for (std::size_t d = 0; d < datasets.size(); ++d)
    for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
      if (!planned[d][t].ok) continue;
      for (const auto& [seed, plan] : planned[d][t].plans) {
        const fs::path path =
            out_dir / "plans" /
            (sanitize(datasets[d].name) + "__" +
             split::task_kind_str(spec.tasks[t]) + "__seed" +
             std::to_string(seed) + ".json");
        write_text_file(path, split::plan_to_json(plan) + "\n");
      }
    }

  std::vector<CellJob> jobs;
  for (std::size_t d = 0; d < datasets.size(); ++d)
    for (std::size_t t = 0; t < spec.tasks.size(); ++t)
      for (std::size_t m = 0; m < spec.models.size(); ++m)
        jobs.push_back({d, t, m});
  std::vector<CellOut> outs(jobs.size());

  auto run_job = [&](std::size_t ji) {
    const CellJob& job = jobs[ji];
    CellOut& out = outs[ji];
    const LoadedDataset& ds = datasets[job.dataset];
    const std::string task_name = split::task_kind_str(spec.tasks[job.task]);
    const std::string& model_tag = spec.models[job.model].tag;
    out.cell.dataset = ds.name;
    out.cell.task = task_name;
    out.cell.model = model_tag;
    const auto cell_start = std::chrono::steady_clock::now();
    try {
      const PlannedTask& pt = planned[job.dataset][job.task];
      if (!pt.ok) throw std::runtime_error(pt.error);

      nn::ModelConfig mc = spec.models[job.model];
      mc.channels = ds.features.manifest.n_channels;
      mc.dim = ds.features.manifest.feature_info->dim;
      mc.num_classes = ds.features.manifest.label_scheme.class_count();

      for (const std::uint64_t seed : spec.seeds) {
        std::ostringstream log;
        for (const auto& st : pt.resolved.at(seed)) {
          const std::uint64_t model_seed =
              derive_seed(seed, "model/" + ds.name + "/" + task_name + "/" +
                                    model_tag + "/" + st.subtask_id);
          nn::Model model = nn::build_model(mc, model_seed);
          harness::TrainConfig tc = spec.train;
          tc.seed = seed;
          SubtaskOutcome so;
          so.seed = seed;
          so.result = harness::train(model, st, ds.features, tc, &log);
          out.cell.subtasks.push_back(std::move(so));
        }
        out.log_files.emplace_back(
            "logs/" + sanitize(ds.name) + "__" + task_name + "__" +
                sanitize(model_tag) + "__seed" + std::to_string(seed) + ".ndjson",
            log.str());
      }

      double acc_sum = 0, f1_sum = 0;
      const auto n = static_cast<double>(out.cell.subtasks.size());
      for (const auto& so : out.cell.subtasks) {
        acc_sum += so.result.test_accuracy;
        f1_sum += so.result.test_f1;
      }
      out.cell.evaluations = static_cast<int>(out.cell.subtasks.size());
      out.cell.acc_mean = acc_sum / n;
      out.cell.f1_mean = f1_sum / n;
      double acc_ss = 0, f1_ss = 0;
      for (const auto& so : out.cell.subtasks) {
        acc_ss += (so.result.test_accuracy - out.cell.acc_mean) *
                  (so.result.test_accuracy - out.cell.acc_mean);
        f1_ss += (so.result.test_f1 - out.cell.f1_mean) *
                 (so.result.test_f1 - out.cell.f1_mean);
      }
      out.cell.acc_std = std::sqrt(acc_ss / n);
      out.cell.f1_std = std::sqrt(f1_ss / n);
    } catch (const std::exception& e) {
      out.cell = CellResult{};
      out.cell.dataset = ds.name;
      out.cell.task = task_name;
      out.cell.model = model_tag;
      out.cell.failed = true;
      out.note_text = e.what();
    }
    out.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - cell_start)
                           .count();
  };

  const auto workers =
      std::min<std::size_t>(static_cast<std::size_t>(spec.jobs), jobs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= jobs.size()) return;
          run_job(i);
        }
      });
    for (auto& th : pool) th.join();
  }

  for (const auto& out : outs)
    for (const auto& [rel, body] : out.log_files)
      write_text_file(out_dir / rel, body);

  // Deterministic emission order regardless of worker scheduling.
  std::vector<std::size_t> order(outs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&outs](std::size_t a, std::size_t b) {
    const CellResult& x = outs[a].cell;
    const CellResult& y = outs[b].cell;
    return std::tie(x.dataset, x.task, x.model) < std::tie(y.dataset, y.task, y.model);
  });
  int note_counter = 0;
  for (const std::size_t i : order) {
    CellResult cell = outs[i].cell;
    if (cell.failed) {
      cell.note_id = "E" + std::to_string(++note_counter);
      report.notes.push_back(cell.note_id + ": " + cell.dataset + "/" + cell.task +
                             "/" + cell.model + ": " + outs[i].note_text);
    }
    report.cells.push_back(std::move(cell));
  }

  // Rank models within every (dataset, task, metric); skip rankings touched
  // by failed cells.
  std::vector<RankingInput> rankings;
  for (const auto& ds : datasets) {
    for (const auto& task : spec.tasks) {
      const std::string task_name = split::task_kind_str(task);
      for (const char* metric : {"accuracy", "f1"}) {
        RankingInput ri;
        ri.id = ds.name + "/" + task_name + "/" + metric;
        for (const auto& cell : report.cells) {
          if (cell.dataset != ds.name || cell.task != task_name) continue;
          const double v = cell.failed ? std::nan("")
                           : std::string(metric) == "accuracy" ? cell.acc_mean
                                                               : cell.f1_mean;
          ri.values.emplace_back(cell.model, v);
        }
        rankings.push_back(std::move(ri));
      }
    }
  }
  report.rank = rank_score(rankings);
  for (const auto& n : report.rank.notes) report.notes.push_back("rank: " + n);

  emit_report(report, out_dir);

  // Wall-clock sidecar: the only output allowed to differ between reruns.
  {
    ordered_json meta;
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&started_at, &tm_utc);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    meta["started_utc"] = buf;
    meta["total_wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    ordered_json cells = ordered_json::array();
    for (const std::size_t i : order) {
      ordered_json c;
      c["dataset"] = outs[i].cell.dataset;
      c["task"] = outs[i].cell.task;
      c["model"] = outs[i].cell.model;
      c["wall_seconds"] = outs[i].wall_seconds;
      ordered_json sw = ordered_json::array();
      for (const auto& so : outs[i].cell.subtasks)
        sw.push_back(so.result.wall_seconds);
      c["subtask_wall_seconds"] = std::move(sw);
      cells.push_back(std::move(c));
    }
    meta["cells"] = std::move(cells);
    write_text_file(out_dir / "run_meta.json", meta.dump(2) + "\n");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Emission

static ordered_json strategy_json(const split::SplitStrategy& s) {
  if (s.kind == split::SplitStrategy::Kind::ratio)
    return {{"kind", "ratio"}, {"train", s.train}, {"val", s.val}, {"test", s.test}};
  return {{"kind", "kfold"}, {"folds", s.folds}};
}

std::string report_to_json(const BenchmarkReport& r) {
  ordered_json j;
  j["format_version"] = 1;
  j["version"] = r.version;

  ordered_json spec;
  spec["datasets"] = r.spec.dataset_paths;
  {
    ordered_json tasks = ordered_json::array();
    for (const auto& t : r.spec.tasks) tasks.push_back(split::task_kind_str(t));
    spec["tasks"] = std::move(tasks);
  }
  {
    ordered_json models = ordered_json::array();
    for (const auto& m : r.spec.models)
      models.push_back({{"tag", m.tag}, {"hidden", m.hidden}});
    spec["models"] = std::move(models);
  }
  spec["feature"] =
      ordered_json::parse(preprocess::feature_config_to_json(r.spec.feature));
  spec["strategy"] = strategy_json(r.spec.strategy);
  spec["train"] = {{"epochs", r.spec.train.epochs},
                   {"batch_size", r.spec.train.batch_size},
                   {"lr", r.spec.train.lr},
                   {"weight_decay", r.spec.train.weight_decay},
                   {"loss_kind", r.spec.train.loss_kind},
                   {"policy", r.spec.train.policy},
                   {"plateau_window", r.spec.train.plateau_window},
                   {"plateau_threshold", r.spec.train.plateau_threshold}};
  spec["seeds"] = r.spec.seeds;
  spec["cross_subject_session"] = r.spec.cross_subject_session;
  j["spec"] = std::move(spec);

  {
    ordered_json ds = ordered_json::array();
    for (const auto& d : r.datasets)
      ds.push_back({{"path", d.path},
                    {"name", d.name},
                    {"raw_manifest_hash", d.raw_manifest_hash},
                    {"feature_manifest_hash", d.feature_manifest_hash}});
    j["datasets"] = std::move(ds);
  }

  ordered_json cells = ordered_json::array();
  for (const auto& c : r.cells) {
    ordered_json cj;
    cj["dataset"] = c.dataset;
    cj["task"] = c.task;
    cj["model"] = c.model;
    cj["failed"] = c.failed;
    cj["note_id"] = c.note_id;
    cj["evaluations"] = c.evaluations;
    if (c.failed) {
      cj["acc_mean"] = nullptr;
      cj["acc_std"] = nullptr;
      cj["f1_mean"] = nullptr;
      cj["f1_std"] = nullptr;
    } else {
      cj["acc_mean"] = c.acc_mean;
      cj["acc_std"] = c.acc_std;
      cj["f1_mean"] = c.f1_mean;
      cj["f1_std"] = c.f1_std;
    }
    ordered_json subtasks = ordered_json::array();
    for (const auto& so : c.subtasks) {
      ordered_json sj;
      sj["seed"] = so.seed;
      sj["id"] = so.result.subtask_id;
      sj["chosen_epoch"] = so.result.chosen_epoch;
      sj["test_accuracy"] = so.result.test_accuracy;
      sj["test_f1"] = so.result.test_f1;
      ordered_json hist = ordered_json::array();
      for (const auto& e : so.result.history)
        hist.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"val_loss", e.val_loss},
                        {"val_accuracy", e.val_accuracy},
                        {"val_f1", e.val_f1},
                        {"test_accuracy", e.test_accuracy},
                        {"test_f1", e.test_f1}});
      sj["history"] = std::move(hist);
      subtasks.push_back(std::move(sj));
    }
    cj["subtasks"] = std::move(subtasks);
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);

  {
    ordered_json rank;
    ordered_json totals = ordered_json::array();
    for (const auto& [m, t] : r.rank.totals)
      totals.push_back({{"method", m}, {"total", t}});
    rank["totals"] = std::move(totals);
    ordered_json rks = ordered_json::array();
    for (const auto& [id, breakdown] : r.rank.rankings) {
      ordered_json rk;
      rk["id"] = id;
      ordered_json pts = ordered_json::object();
      for (const auto& [m, p] : breakdown) pts[m] = p;
      rk["points"] = std::move(pts);
      rks.push_back(std::move(rk));
    }
    rank["rankings"] = std::move(rks);
    j["rank"] = std::move(rank);
  }
  j["notes"] = r.notes;
  return j.dump(2);
}

std::string results_csv(const BenchmarkReport& r) {
  std::ostringstream os;
  os << "dataset,task,model,evaluations,acc_mean,acc_std,f1_mean,f1_std,note\n";
  for (const auto& c : r.cells) {
    os << c.dataset << "," << c.task << "," << c.model << "," << c.evaluations
       << ",";
    if (c.failed) {
      os << "NA,NA,NA,NA," << c.note_id;
    } else {
      os << fmt_double(c.acc_mean) << "," << fmt_double(c.acc_std) << ","
         << fmt_double(c.f1_mean) << "," << fmt_double(c.f1_std) << ",";
    }
    os << "\n";
  }
  return os.str();
}

void emit_report(const BenchmarkReport& r, const fs::path& out_dir) {
  write_text_file(out_dir / "report.json", report_to_json(r) + "\n");
  write_text_file(out_dir / "results.csv", results_csv(r));
  write_text_file(out_dir / "scores.csv", scores_csv(r.rank));
}

}  // namespace eerbench::bench
