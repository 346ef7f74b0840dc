#include "eerbench/split.hpp"

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "eerbench/rng.hpp"
#include "json.hpp"

namespace eerbench::split {

using ordered_json = nlohmann::ordered_json;

std::string task_kind_str(TaskKind t) {
  switch (t) {
    case TaskKind::subject_dependent: return "subject_dependent";
    case TaskKind::cross_subject: return "cross_subject";
    case TaskKind::cross_session: return "cross_session";
    case TaskKind::subject_independent: return "subject_independent";
  }
  throw std::invalid_argument("unknown task kind");
}

TaskKind task_kind_from_str(const std::string& s) {
  std::string n = s;
  std::replace(n.begin(), n.end(), '-', '_');
  if (n == "subject_dependent") return TaskKind::subject_dependent;
  if (n == "cross_subject") return TaskKind::cross_subject;
  if (n == "cross_session") return TaskKind::cross_session;
  if (n == "subject_independent") return TaskKind::subject_independent;
  throw std::invalid_argument("unknown task '" + s + "'");
}

SplitStrategy SplitStrategy::ratio(double train, double val, double test) {
  if (!(train > 0.0 && val > 0.0 && test > 0.0))
    throw std::invalid_argument("ratio components must be positive");
  SplitStrategy s;
  s.kind = Kind::ratio;
  const double sum = train + val + test;
  s.train = train / sum;
  s.val = val / sum;
  s.test = test / sum;
  return s;
}

SplitStrategy SplitStrategy::kfold(int n) {
  if (n < 2) throw std::invalid_argument("kfold needs at least 2 folds");
  SplitStrategy s;
  s.kind = Kind::kfold;
  s.folds = n;
  return s;
}

// ---------------------------------------------------------------------------
// Domains

static const corpus::FeatureInfo& require_features(const corpus::Manifest& m,
                                                   const char* what) {
  if (!m.feature_info)
    throw std::invalid_argument(std::string(what) +
                                " requires a windowed feature dataset");
  if (m.feature_info->dim < 1)
    throw std::invalid_argument("feature dim must be positive");
  return *m.feature_info;
}

// Manifest records sorted into canonical (session, subject, trial) order.
static std::vector<const corpus::TrialRecord*> sorted_records(
    const corpus::Manifest& m) {
  std::vector<const corpus::TrialRecord*> out;
  out.reserve(m.trials.size());
  for (const auto& r : m.trials) out.push_back(&r);
  std::sort(out.begin(), out.end(),
            [](const corpus::TrialRecord* a, const corpus::TrialRecord* b) {
              return corpus::TrialKey{a->session, a->subject, a->trial} <
                     corpus::TrialKey{b->session, b->subject, b->trial};
            });
  return out;
}

std::vector<Domain> merge_to_part(const corpus::UniformDataset& d, TaskKind task,
                                  int cross_subject_session) {
  const auto& m = d.manifest;
  {
    const auto violations = corpus::validate_manifest(m);
    if (!violations.empty())
      throw std::invalid_argument("invalid manifest: " + violations.front().where +
                                  ": " + violations.front().message);
  }
  const auto records = sorted_records(m);
  std::vector<Domain> out;

  switch (task) {
    case TaskKind::subject_dependent: {
      for (int s = 0; s < m.n_sessions; ++s) {
        for (int p = 0; p < m.n_subjects; ++p) {
          Domain dom;
          dom.subtask_id = "s" + std::to_string(s) + "/p" + std::to_string(p);
          dom.task = task;
          for (const auto* r : records) {
            if (r->session != s || r->subject != p) continue;
            dom.units.push_back(r->trial);
            dom.unit_labels.push_back(r->label);
          }
          out.push_back(std::move(dom));
        }
      }
      break;
    }
    case TaskKind::cross_subject: {
      if (m.n_subjects < 2)
        throw std::invalid_argument("cross_subject requires more than one subject");
      const int sess = m.n_sessions > 1 ? cross_subject_session : 0;
      if (sess < 0 || sess >= m.n_sessions)
        throw std::invalid_argument("cross_subject session out of range");
      Domain dom;
      dom.subtask_id = "subjects/s" + std::to_string(sess);
      dom.task = task;
      for (int p = 0; p < m.n_subjects; ++p) {
        dom.units.push_back(p);
        dom.unit_labels.push_back(-1);
      }
      out.push_back(std::move(dom));
      break;
    }
    case TaskKind::cross_session: {
      if (m.n_sessions < 2)
        throw std::invalid_argument("cross_session requires more than one session");
      Domain dom;
      dom.subtask_id = "sessions";
      dom.task = task;
      for (int s = 0; s < m.n_sessions; ++s) {
        dom.units.push_back(s);
        dom.unit_labels.push_back(-1);
      }
      out.push_back(std::move(dom));
      break;
    }
    case TaskKind::subject_independent: {
      const auto& fi = require_features(m, "subject_independent");
      Domain dom;
      dom.subtask_id = "samples";
      dom.task = task;
      std::int64_t next = 0;
      for (const auto* r : records) {
        const std::int64_t windows = r->samples / fi.dim;
        for (std::int64_t w = 0; w < windows; ++w) {
          dom.units.push_back(next++);
          dom.unit_labels.push_back(r->label);
        }
      }
      out.push_back(std::move(dom));
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Apportionment

// Largest-remainder assignment of n units to the three sets, then a floor of
// one unit per set (taken from the currently largest set when needed).
static std::array<std::int64_t, 3> apportion(std::int64_t n,
                                             const std::array<double, 3>& w) {
  std::array<std::int64_t, 3> counts{};
  std::array<double, 3> rem{};
  std::int64_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = w[i] * static_cast<double>(n);
    counts[i] = static_cast<std::int64_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&rem](int a, int b) {
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    return a < b;
  });
  for (std::int64_t k = 0; k < n - assigned; ++k) ++counts[order[k % 3]];
  for (int i = 0; i < 3; ++i) {
    while (counts[i] < 1) {
      const int donor = static_cast<int>(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
      if (counts[donor] <= 1) throw std::invalid_argument("domain too small");
      --counts[donor];
      ++counts[i];
    }
  }
  return counts;
}

static void sort_assignment(Assignment& a) {
  std::sort(a.train.begin(), a.train.end());
  std::sort(a.val.begin(), a.val.end());
  std::sort(a.test.begin(), a.test.end());
}

static SubtaskPlan split_domain(const Domain& dom, const std::array<double, 3>& w,
                                std::uint64_t seed) {
  const auto n = static_cast<std::int64_t>(dom.units.size());
  if (n < 3) {
    std::ostringstream os;
    os << "domain '" << dom.subtask_id << "' has " << n
       << " units; a ratio split needs at least 3";
    throw std::invalid_argument(os.str());
  }
  const auto counts = apportion(n, w);

  SubtaskPlan plan;
  plan.subtask_id = dom.subtask_id;
  Rng rng(derive_seed(seed, "split/" + dom.subtask_id));

  const bool labels_known =
      !dom.unit_labels.empty() &&
      std::none_of(dom.unit_labels.begin(), dom.unit_labels.end(),
                   [](int l) { return l < 0; });

  bool stratify = labels_known;
  if (labels_known) {
    std::map<int, std::int64_t> class_sizes;
    for (int l : dom.unit_labels) ++class_sizes[l];
    for (const auto& [label, size] : class_sizes) {
      if (size < 3) {
        std::ostringstream os;
        os << "class " << label << " has only " << size
           << " units; splitting without stratification";
        plan.warnings.push_back(os.str());
        stratify = false;
        break;
      }
    }
  }

  if (!stratify) {
    std::vector<std::int64_t> units = dom.units;
    rng.shuffle(units);
    plan.units.train.assign(units.begin(), units.begin() + counts[0]);
    plan.units.val.assign(units.begin() + counts[0],
                          units.begin() + counts[0] + counts[1]);
    plan.units.test.assign(units.begin() + counts[0] + counts[1], units.end());
    sort_assignment(plan.units);
    return plan;
  }

  plan.stratified = true;
  std::map<int, std::vector<std::int64_t>> groups;
  for (std::size_t i = 0; i < dom.units.size(); ++i)
    groups[dom.unit_labels[i]].push_back(dom.units[i]);
  for (auto& [label, members] : groups) {
    (void)label;
    rng.shuffle(members);
  }

  // Per-class largest remainder against the global set fractions, then a
  // repair pass so the per-set totals match the apportioned counts exactly.
  std::map<int, std::array<std::int64_t, 3>> takes;
  std::array<std::int64_t, 3> sums{};
  for (const auto& [label, members] : groups) {
    const auto g = static_cast<std::int64_t>(members.size());
    std::array<std::int64_t, 3> take{};
    std::array<double, 3> rem{};
    std::int64_t assigned = 0;
    for (int j = 0; j < 3; ++j) {
      const double exact =
          static_cast<double>(counts[j]) * static_cast<double>(g) /
          static_cast<double>(n);
      take[j] = static_cast<std::int64_t>(std::floor(exact + 1e-9));
      rem[j] = exact - static_cast<double>(take[j]);
      assigned += take[j];
    }
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&rem](int a, int b) {
      if (rem[a] != rem[b]) return rem[a] > rem[b];
      return a < b;
    });
    for (std::int64_t k = 0; k < g - assigned; ++k) ++take[order[k % 3]];
    for (int j = 0; j < 3; ++j) sums[j] += take[j];
    takes[label] = take;
  }
  for (;;) {
    int over = -1, under = -1;
    for (int j = 0; j < 3; ++j) {
      if (over < 0 && sums[j] > counts[j]) over = j;
      if (under < 0 && sums[j] < counts[j]) under = j;
    }
    if (over < 0 || under < 0) break;
    // Move one unit between sets inside the class holding the most units in
    // the overfull set; smallest label breaks ties.
    int pick = -1;
    std::int64_t best = 0;
    for (const auto& [label, take] : takes) {
      if (take[over] > best) {
        best = take[over];
        pick = label;
      }
    }
    --takes[pick][over];
    ++takes[pick][under];
    --sums[over];
    ++sums[under];
  }
  for (const auto& [label, members] : groups) {
    const auto& take = takes[label];
    auto it = members.begin();
    plan.units.train.insert(plan.units.train.end(), it, it + take[0]);
    it += take[0];
    plan.units.val.insert(plan.units.val.end(), it, it + take[1]);
    it += take[1];
    plan.units.test.insert(plan.units.test.end(), it, members.end());
  }
  sort_assignment(plan.units);
  return plan;
}

SplitPlan plan_split(const std::vector<Domain>& domains,
                     const SplitStrategy& strategy, std::uint64_t seed,
                     std::uint64_t manifest_hash) {
  if (strategy.kind != SplitStrategy::Kind::ratio)
    throw std::invalid_argument("plan_split expects a ratio strategy");
  if (domains.empty()) throw std::invalid_argument("no domains to split");
  const std::array<double, 3> w{strategy.train, strategy.val, strategy.test};

  SplitPlan plan;
  plan.task = domains.front().task;
  plan.strategy = strategy;
  plan.seed = seed;
  plan.manifest_hash = manifest_hash;
  for (const auto& dom : domains) plan.subtasks.push_back(split_domain(dom, w, seed));
  return plan;
}

std::vector<SplitPlan> kfold_plan(const std::vector<Domain>& domains, int n,
                                  std::uint64_t seed,
                                  std::uint64_t manifest_hash) {
  if (n < 2) throw std::invalid_argument("kfold needs at least 2 folds");
  if (domains.empty()) throw std::invalid_argument("no domains to split");

  // Shuffle each domain once, carve folds, then rotate the test fold.
  struct Folded {
    std::string subtask_id;
    std::vector<std::vector<std::int64_t>> folds;
  };
  std::vector<Folded> folded;
  for (const auto& dom : domains) {
    const auto total = static_cast<std::int64_t>(dom.units.size());
    if (total < n) {
      std::ostringstream os;
      os << "domain '" << dom.subtask_id << "' has " << total
         << " units; cannot form " << n << " folds";
      throw std::invalid_argument(os.str());
    }
    std::vector<std::int64_t> units = dom.units;
    Rng rng(derive_seed(seed, "kfold/" + dom.subtask_id));
    rng.shuffle(units);
    Folded f;
    f.subtask_id = dom.subtask_id;
    std::int64_t at = 0;
    for (int k = 0; k < n; ++k) {
      const std::int64_t size = total / n + (k < total % n ? 1 : 0);
      f.folds.emplace_back(units.begin() + at, units.begin() + at + size);
      at += size;
    }
    folded.push_back(std::move(f));
  }

  std::vector<SplitPlan> plans;
  for (int test_fold = 0; test_fold < n; ++test_fold) {
    SplitPlan plan;
    plan.task = domains.front().task;
    plan.strategy = SplitStrategy::kfold(n);
    plan.seed = seed;
    plan.manifest_hash = manifest_hash;
    plan.fold_index = test_fold;
    const int val_fold = n >= 3 ? (test_fold + 1) % n : -1;
    for (const auto& f : folded) {
      SubtaskPlan sp;
      sp.subtask_id = f.subtask_id;
      for (int k = 0; k < n; ++k) {
        auto& dst = k == test_fold           ? sp.units.test
                    : k == val_fold          ? sp.units.val
                                             : sp.units.train;
        dst.insert(dst.end(), f.folds[k].begin(), f.folds[k].end());
      }
      sort_assignment(sp.units);
      plan.subtasks.push_back(std::move(sp));
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

SplitPlan plan_for_dataset(const corpus::UniformDataset& d, TaskKind task,
                           const SplitStrategy& strategy, std::uint64_t seed,
                           int cross_subject_session) {
  const auto domains = merge_to_part(d, task, cross_subject_session);
  return plan_split(domains, strategy, seed, corpus::manifest_hash(d.manifest));
}

// ---------------------------------------------------------------------------
// Resolution

static int parse_cross_subject_session(const SplitPlan& plan) {
  if (plan.task != TaskKind::cross_subject || plan.subtasks.empty()) return 0;
  const std::string& id = plan.subtasks.front().subtask_id;
  const std::string prefix = "subjects/s";
  if (id.rfind(prefix, 0) != 0)
    throw std::invalid_argument("malformed cross_subject subtask id '" + id + "'");
  return std::stoi(id.substr(prefix.size()));
}

std::vector<SubtaskSpec> resolve(const SplitPlan& plan,
                                 const corpus::UniformDataset& d) {
  if (plan.manifest_hash != corpus::manifest_hash(d.manifest))
    throw std::invalid_argument(
        "plan was built from a different dataset (manifest hash mismatch)");
  const auto& fi = require_features(d.manifest, "resolve");

  const auto domains =
      merge_to_part(d, plan.task, parse_cross_subject_session(plan));
  std::map<std::string, const Domain*> by_id;
  for (const auto& dom : domains) by_id[dom.subtask_id] = &dom;
  if (domains.size() != plan.subtasks.size())
    throw std::invalid_argument("plan subtask count does not match the dataset");

  const auto records = sorted_records(d.manifest);
  std::vector<SubtaskSpec> out;

  for (const auto& sp : plan.subtasks) {
    auto dom_it = by_id.find(sp.subtask_id);
    if (dom_it == by_id.end())
      throw std::invalid_argument("plan subtask '" + sp.subtask_id +
                                  "' does not exist for this dataset");
    const Domain& dom = *dom_it->second;

    // Disjointness and exact coverage over the domain's units.
    std::map<std::int64_t, int> membership;  // unit -> set index
    auto absorb = [&](const std::vector<std::int64_t>& units, int set_idx) {
      for (std::int64_t u : units) {
        auto [it, fresh] = membership.emplace(u, set_idx);
        (void)it;
        if (!fresh) {
          std::ostringstream os;
          os << "subtask '" << sp.subtask_id << "': unit " << u
             << " assigned to two sets";
          throw std::invalid_argument(os.str());
        }
      }
    };
    absorb(sp.units.train, 0);
    absorb(sp.units.val, 1);
    absorb(sp.units.test, 2);
    for (std::int64_t u : dom.units) {
      if (!membership.count(u)) {
        std::ostringstream os;
        os << "subtask '" << sp.subtask_id << "': unit " << u
           << " missing from the plan";
        throw std::invalid_argument(os.str());
      }
    }
    if (membership.size() != dom.units.size()) {
      std::ostringstream os;
      os << "subtask '" << sp.subtask_id << "': plan lists "
         << membership.size() << " units, dataset has " << dom.units.size();
      throw std::invalid_argument(os.str());
    }

    SubtaskSpec spec;
    spec.subtask_id = sp.subtask_id;
    auto push = [&](int set_idx, const corpus::TrialRecord& r, std::int64_t w) {
      SampleRef ref{{r.session, r.subject, r.trial}, w, r.label};
      (set_idx == 0 ? spec.train : set_idx == 1 ? spec.val : spec.test)
          .push_back(ref);
    };

    switch (plan.task) {
      case TaskKind::subject_dependent: {
        // subtask id "s{session}/p{subject}"
        int sess = 0, subj = 0;
        if (std::sscanf(sp.subtask_id.c_str(), "s%d/p%d", &sess, &subj) != 2)
          throw std::invalid_argument("malformed subtask id '" + sp.subtask_id +
                                      "'");
        for (const auto* r : records) {
          if (r->session != sess || r->subject != subj) continue;
          const std::int64_t windows = r->samples / fi.dim;
          const int set_idx = membership.at(r->trial);
          for (std::int64_t w = 0; w < windows; ++w) push(set_idx, *r, w);
        }
        break;
      }
      case TaskKind::cross_subject: {
        const int sess = parse_cross_subject_session(plan);
        for (const auto* r : records) {
          if (r->session != sess) continue;
          const std::int64_t windows = r->samples / fi.dim;
          const int set_idx = membership.at(r->subject);
          for (std::int64_t w = 0; w < windows; ++w) push(set_idx, *r, w);
        }
        break;
      }
      case TaskKind::cross_session: {
        for (const auto* r : records) {
          const std::int64_t windows = r->samples / fi.dim;
          const int set_idx = membership.at(r->session);
          for (std::int64_t w = 0; w < windows; ++w) push(set_idx, *r, w);
        }
        break;
      }
      case TaskKind::subject_independent: {
        std::int64_t next = 0;
        for (const auto* r : records) {
          const std::int64_t windows = r->samples / fi.dim;
          for (std::int64_t w = 0; w < windows; ++w)
            push(membership.at(next++), *r, w);
        }
        break;
      }
    }
    out.push_back(std::move(spec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

static std::string u64_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string plan_to_json(const SplitPlan& p) {
  ordered_json j;
  j["format_version"] = 1;
  j["task"] = task_kind_str(p.task);
  if (p.strategy.kind == SplitStrategy::Kind::ratio) {
    j["strategy"] = {{"kind", "ratio"},
                     {"train", p.strategy.train},
                     {"val", p.strategy.val},
                     {"test", p.strategy.test}};
  } else {
    j["strategy"] = {{"kind", "kfold"}, {"folds", p.strategy.folds}};
  }
  j["seed"] = p.seed;
  j["manifest_hash"] = u64_hex(p.manifest_hash);
  j["fold_index"] = p.fold_index;
  ordered_json subtasks = ordered_json::array();
  for (const auto& sp : p.subtasks) {
    ordered_json s;
    s["id"] = sp.subtask_id;
    s["stratified"] = sp.stratified;
    s["warnings"] = sp.warnings;
    s["train"] = sp.units.train;
    s["val"] = sp.units.val;
    s["test"] = sp.units.test;
    subtasks.push_back(std::move(s));
  }
  j["subtasks"] = std::move(subtasks);
  return j.dump(2);
}

SplitPlan plan_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("split plan: invalid JSON: ") +
                                e.what());
  }
  try {
    SplitPlan p;
    if (j.at("format_version").get<int>() != 1)
      throw std::invalid_argument("split plan: unsupported format_version");
    p.task = task_kind_from_str(j.at("task").get<std::string>());
    const auto& st = j.at("strategy");
    if (st.at("kind") == "ratio") {
      p.strategy = SplitStrategy::ratio(st.at("train").get<double>(),
                                        st.at("val").get<double>(),
                                        st.at("test").get<double>());
    } else {
      p.strategy = SplitStrategy::kfold(st.at("folds").get<int>());
    }
    p.seed = j.at("seed").get<std::uint64_t>();
    p.manifest_hash =
        std::stoull(j.at("manifest_hash").get<std::string>(), nullptr, 16);
    p.fold_index = j.at("fold_index").get<int>();
    for (const auto& s : j.at("subtasks")) {
      SubtaskPlan sp;
      sp.subtask_id = s.at("id").get<std::string>();
      sp.stratified = s.at("stratified").get<bool>();
      sp.warnings = s.at("warnings").get<std::vector<std::string>>();
      sp.units.train = s.at("train").get<std::vector<std::int64_t>>();
      sp.units.val = s.at("val").get<std::vector<std::int64_t>>();
      sp.units.test = s.at("test").get<std::vector<std::int64_t>>();
      p.subtasks.push_back(std::move(sp));
    }
    return p;
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception& e) {
    throw std::invalid_argument(
        std::string("split plan: missing or malformed field: ") + e.what());
  }
}

}  // namespace eerbench::split
