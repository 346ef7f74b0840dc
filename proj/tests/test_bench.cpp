#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "eerbench/bench.hpp"
#include "eerbench/corpus.hpp"
#include "json.hpp"

using namespace eerbench;
namespace fs = std::filesystem;

namespace {

double total_of(const bench::RankScore& s, const std::string& method) {
  for (const auto& [m, t] : s.totals)
    if (m == method) return t;
  FAIL("method not found: " << method);
  return 0.0;
}

fs::path fresh_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("eerbench_bench_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

fs::path write_synth_corpus(const std::string& tag) {
  corpus::SynthConfig sc;
  sc.dataset_name = "bench_" + tag;
  sc.n_subjects = 2;
  sc.n_sessions = 1;
  sc.trials_per_class = 3;
  sc.n_channels = 4;
  sc.trial_seconds = 3.0;
  sc.class_signatures = {{0.6, 0.1, 0.1, 0.1, 0.1}, {0.1, 0.1, 0.1, 0.1, 0.6}};
  sc.master_seed = 31;
  const auto raw = corpus::generate_synthetic(sc);
  const auto dir = fresh_dir("data_" + tag);
  corpus::write_dataset(raw, dir);
  return dir;
}

bench::RunSpec small_spec(const fs::path& data, const fs::path& out) {
  bench::RunSpec spec;
  spec.dataset_paths = {data.string()};
  spec.tasks = {split::TaskKind::subject_dependent};
  nn::ModelConfig lin, mlp;
  lin.tag = "linear_hinge";
  mlp.tag = "mlp";
  mlp.hidden = {8};
  spec.models = {lin, mlp};
  spec.train.epochs = 3;
  spec.train.batch_size = 8;
  spec.out_dir = out.string();
  return spec;
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("rank points follow the descending order") {
  bench::RankingInput r;
  r.id = "only";
  r.values = {{"a", 0.9}, {"b", 0.8}, {"c", 0.7}};
  const auto s = bench::rank_score({r});
  CHECK(total_of(s, "a") == 3.0);
  CHECK(total_of(s, "b") == 2.0);
  CHECK(total_of(s, "c") == 1.0);
  CHECK(s.totals.front().first == "a");
}

TEST_CASE("ties share the mean of their positions") {
  bench::RankingInput r;
  r.id = "tie";
  r.values = {{"a", 0.9}, {"b", 0.9}, {"c", 0.7}};
  const auto s = bench::rank_score({r});
  CHECK(total_of(s, "a") == 2.5);
  CHECK(total_of(s, "b") == 2.5);
  CHECK(total_of(s, "c") == 1.0);
}

TEST_CASE("values are compared at four decimals") {
  bench::RankingInput r;
  r.id = "round";
  r.values = {{"a", 0.72521}, {"b", 0.72519}, {"c", 0.5}};
  const auto s = bench::rank_score({r});
  CHECK(total_of(s, "a") == 2.5);  // 0.7252 == 0.7252
  CHECK(total_of(s, "b") == 2.5);
}

TEST_CASE("rankings missing a method are skipped with a note") {
  bench::RankingInput full;
  full.id = "full";
  full.values = {{"a", 0.9}, {"b", 0.8}};
  bench::RankingInput gap;
  gap.id = "gap";
  gap.values = {{"a", 0.9}, {"b", std::nan("")}};
  const auto s = bench::rank_score({full, gap});
  CHECK(total_of(s, "a") == 2.0);
  CHECK(total_of(s, "b") == 1.0);
  REQUIRE(s.rankings.size() == 1);
  REQUIRE(s.notes.size() == 1);
  CHECK(s.notes[0].find("gap") != std::string::npos);
  CHECK(s.notes[0].find("b") != std::string::npos);
}

TEST_CASE("totals equal the breakdown sums and scale invariance holds") {
  std::vector<bench::RankingInput> rankings;
  for (int i = 0; i < 3; ++i) {
    bench::RankingInput r;
    r.id = "r" + std::to_string(i);
    r.values = {{"a", 0.3 + 0.1 * i}, {"b", 0.9 - 0.2 * i}, {"c", 0.5}};
    rankings.push_back(r);
  }
  const auto s = bench::rank_score(rankings);
  for (const auto& [m, total] : s.totals) {
    double sum = 0;
    for (const auto& [id, breakdown] : s.rankings)
      for (const auto& [bm, pts] : breakdown)
        if (bm == m) sum += pts;
    CHECK(total == doctest::Approx(sum).epsilon(1e-12));
  }

  auto scaled = rankings;
  for (auto& [m, v] : scaled[1].values) v *= 0.5;
  const auto s2 = bench::rank_score(scaled);
  for (const auto& [m, total] : s.totals)
    CHECK(total_of(s2, m) == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("rank table csv parsing") {
  const auto dir = fresh_dir("csv");
  const auto path = dir / "table.csv";
  {
    std::ofstream f(path);
    f << "method,d1/acc,d1/f1\n";
    f << "alpha,0.9,0.8\n";
    f << "beta,0.7,NA\n";
  }
  const auto rankings = bench::read_rank_table_csv(path);
  REQUIRE(rankings.size() == 2);
  CHECK(rankings[0].id == "d1/acc");
  CHECK(rankings[1].id == "d1/f1");
  CHECK(rankings[0].values[1].second == doctest::Approx(0.7));
  CHECK(std::isnan(rankings[1].values[1].second));

  const auto s = bench::rank_score(rankings);
  REQUIRE(s.rankings.size() == 1);  // the NA column is skipped
  CHECK(total_of(s, "alpha") == 2.0);

  {
    std::ofstream f(path);
    f << "method,d1\nalpha,0.9\nalpha,0.8\n";
  }
  CHECK_THROWS_AS((void)bench::read_rank_table_csv(path), corpus::DataError);
  {
    std::ofstream f(path);
    f << "notmethod,d1\nalpha,0.9\n";
  }
  CHECK_THROWS_AS((void)bench::read_rank_table_csv(path), corpus::DataError);
  fs::remove_all(dir);
}

TEST_CASE("scores csv is ordered best first") {
  bench::RankingInput r;
  r.id = "x";
  r.values = {{"a", 0.2}, {"b", 0.9}};
  const auto text = bench::scores_csv(bench::rank_score({r}));
  CHECK(text == "method,total\nb,2\na,1\n");
}

TEST_CASE("benchmark grid runs, reports and reproduces") {
  const auto data = write_synth_corpus("grid");
  const auto out1 = fresh_dir("out1");
  const auto spec1 = small_spec(data, out1);
  const auto report = bench::run_benchmark(spec1);

  REQUIRE(report.cells.size() == 2);
  for (const auto& c : report.cells) {
    CHECK(!c.failed);
    CHECK(c.evaluations == 2);  // two (session, subject) subtasks, one seed
    CHECK(c.acc_mean >= 0.0);
    CHECK(c.acc_mean <= 1.0);
    CHECK(c.acc_std >= 0.0);
  }
  CHECK(report.cells[0].model == "linear_hinge");  // sorted by cell key
  CHECK(report.cells[1].model == "mlp");

  // Provenance: raw input was preprocessed, both hashes recorded.
  REQUIRE(report.datasets.size() == 1);
  CHECK(!report.datasets[0].raw_manifest_hash.empty());
  CHECK(!report.datasets[0].feature_manifest_hash.empty());

  CHECK(fs::exists(out1 / "report.json"));
  CHECK(fs::exists(out1 / "results.csv"));
  CHECK(fs::exists(out1 / "scores.csv"));
  CHECK(fs::exists(out1 / "run_meta.json"));
  CHECK(fs::exists(out1 / "plans" / "bench_grid__subject_dependent__seed2024.json"));
  CHECK(fs::exists(out1 / "logs" /
                   "bench_grid__subject_dependent__mlp__seed2024.ndjson"));

  const auto jtext = slurp(out1 / "report.json");
  const auto j = nlohmann::json::parse(jtext);
  CHECK(j.at("format_version") == 1);
  CHECK(j.at("cells").size() == 2);
  CHECK(j.at("spec").at("seeds")[0] == 2024);
  // The output path is environment detail, not part of the deterministic spec
  // echo.
  CHECK(jtext.find(out1.string()) == std::string::npos);

  const auto csv = slurp(out1 / "results.csv");
  CHECK(csv.rfind("dataset,task,model,evaluations,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rows

  // Byte-for-byte reproduction, sidecar excluded.
  const auto out2 = fresh_dir("out2");
  (void)bench::run_benchmark(small_spec(data, out2));
  CHECK(slurp(out2 / "report.json") == jtext);
  CHECK(slurp(out2 / "results.csv") == csv);
  CHECK(slurp(out2 / "scores.csv") == slurp(out1 / "scores.csv"));

  // Parallel execution must not change the result.
  const auto out3 = fresh_dir("out3");
  auto spec3 = small_spec(data, out3);
  spec3.jobs = 3;
  (void)bench::run_benchmark(spec3);
  CHECK(slurp(out3 / "report.json") == jtext);

  fs::remove_all(data);
  fs::remove_all(out1);
  fs::remove_all(out2);
  fs::remove_all(out3);
}

TEST_CASE("failed cells leave the grid intact") {
  const auto data = write_synth_corpus("fail");
  const auto out = fresh_dir("outfail");
  auto spec = small_spec(data, out);
  // One session only: cross_session is impossible for this corpus.
  spec.tasks = {split::TaskKind::subject_dependent, split::TaskKind::cross_session};
  const auto report = bench::run_benchmark(spec);

  REQUIRE(report.cells.size() == 4);
  int failed = 0;
  for (const auto& c : report.cells) {
    if (c.task == "cross_session") {
      CHECK(c.failed);
      CHECK(!c.note_id.empty());
      ++failed;
    } else {
      CHECK(!c.failed);
    }
  }
  CHECK(failed == 2);

  bool note_found = false, skip_found = false;
  for (const auto& n : report.notes) {
    if (n.rfind("E", 0) == 0 && n.find("cross_session") != std::string::npos)
      note_found = true;
    if (n.find("skipped") != std::string::npos) skip_found = true;
  }
  CHECK(note_found);
  CHECK(skip_found);

  const auto csv = slurp(out / "results.csv");
  CHECK(csv.find("NA,NA,NA,NA,E") != std::string::npos);

  fs::remove_all(data);
  fs::remove_all(out);
}

TEST_CASE("spec validation") {
  bench::RunSpec empty;
  CHECK_THROWS_AS((void)bench::run_benchmark(empty), std::invalid_argument);

  bench::RunSpec missing;
  missing.dataset_paths = {"/definitely/not/here"};
  missing.tasks = {split::TaskKind::subject_dependent};
  nn::ModelConfig m;
  missing.models = {m};
  missing.out_dir = (fs::temp_directory_path() / "eerbench_unused").string();
  CHECK_THROWS_AS((void)bench::run_benchmark(missing), corpus::DataError);
}

}  // TEST_SUITE
