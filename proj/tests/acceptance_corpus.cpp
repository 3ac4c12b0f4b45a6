// Acceptance checks on the Scene and Yeast corpora: method ordering with
// paired tests, Yeast magnitudes and the three Yeast sweeps.
// Usage: crm_acceptance_corpus --data-dir DIR [--workers N] [--seeds N] [--out DIR]
// Looks for {scene,yeast}_{train,test}[.svm|.txt|.libsvm] in DIR. Exits 77
// when neither corpus is present.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "crm/dataset.hpp"
#include "crm/harness.hpp"

namespace fs = std::filesystem;
using namespace crm;

namespace {

namespace tol {
constexpr double p_value = 0.05;
constexpr double yeast_relative = 0.15;
constexpr double yeast_pi0 = 5.547;
constexpr double yeast_ips_b = 4.635;
constexpr double yeast_poem_b = 4.480;
constexpr std::size_t replay_inversions = 1;
constexpr double inversion_se = 1.0;
constexpr double map_recovery = 0.05;
}  // namespace tol

struct Report {
  int failures = 0;

  void line(bool ok, const std::string& id, const std::string& what, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << id << "  " << what << "  [" << detail << "]\n" << std::flush;
    failures += ok ? 0 : 1;
  }
  static void skip(const std::string& id, const std::string& what, const std::string& why) {
    std::cout << "SKIP  " << id << "  " << what << "  [" << why << "]\n" << std::flush;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct CorpusInfo {
  std::string name;
  std::size_t q;
  std::size_t p;
};

std::optional<fs::path> find_split(const fs::path& dir, const std::string& name, const std::string& part) {
  for (const char* ext : {".svm", "", ".txt", ".libsvm"}) {
    const auto path = dir / (name + "_" + part + ext);
    if (fs::is_regular_file(path)) return path;
  }
  return std::nullopt;
}

std::optional<std::pair<Corpus, Corpus>> load(const fs::path& dir, const CorpusInfo& info) {
  const auto train = find_split(dir, info.name, "train");
  const auto test = find_split(dir, info.name, "test");
  if (!train || !test) return std::nullopt;
  ParseOptions opts;
  opts.num_labels = info.q;
  opts.num_features = info.p;
  opts.name = info.name;
  return std::make_pair(load_multilabel(*train, opts), load_multilabel(*test, opts));
}

struct RunOptions {
  std::size_t workers = 1;
  std::size_t seeds = 10;
};

ExperimentSpec base_spec(const std::string& name, const RunOptions& run) {
  ExperimentSpec spec;
  spec.dataset = name;
  spec.workers = run.workers;
  spec.seeds.clear();
  for (std::size_t s = 1; s <= run.seeds; ++s) spec.seeds.push_back(s);
  return spec;
}

void write_table(const fs::path& out, const std::string& file, const ExperimentResult& r) {
  if (out.empty()) return;
  fs::create_directories(out);
  std::ofstream csv(out / file);
  write_results_csv(r.rows, csv);
}

std::string means(const ExperimentResult& r) {
  std::string s;
  for (const auto& m : r.summaries) s += (s.empty() ? "" : " ") + m.method + "=" + fmt(m.mean_expected);
  return s;
}

void ordering(Report& rep, const std::string& name, const ExperimentResult& r) {
  const double pi0 = r.summary("pi0")->mean_expected;
  const double ips_b = r.summary("IPS-B")->mean_expected;
  const double poem_b = r.summary("POEM-B")->mean_expected;
  const double poem_s = r.summary("POEM-S")->mean_expected;
  const auto* tb = r.test("POEM-B", "IPS-B");
  const auto* ts = r.test("POEM-S", "IPS-S");
  rep.line(poem_b < ips_b && ips_b < pi0, "AC1", name + ": POEM(B) < IPS(B) < pi0", means(r));
  rep.line(poem_s < pi0, "AC1", name + ": POEM(S) < pi0", "POEM-S=" + fmt(poem_s) + " pi0=" + fmt(pi0));
  rep.line(tb->p_value < tol::p_value, "AC1", name + ": POEM(B) vs IPS(B) one-tailed paired t-test",
           "p=" + fmt(tb->p_value) + " t=" + fmt(tb->t));
  rep.line(ts->p_value < tol::p_value, "AC1", name + ": POEM(S) vs IPS(S) one-tailed paired t-test",
           "p=" + fmt(ts->p_value) + " t=" + fmt(ts->t));
}

void magnitudes(Report& rep, const ExperimentResult& r) {
  const std::pair<const char*, double> refs[] = {
      {"pi0", tol::yeast_pi0}, {"IPS-B", tol::yeast_ips_b}, {"POEM-B", tol::yeast_poem_b}};
  for (const auto& [method, ref] : refs) {
    const double got = r.summary(method)->mean_expected;
    const double rel = std::abs(got - ref) / ref;
    rep.line(rel <= tol::yeast_relative, "AC2", std::string("yeast: ") + method + " within 15% of " + fmt(ref),
             "mean=" + fmt(got) + " rel=" + fmt(rel));
  }
}

struct PointStat {
  double value;
  double mean;
  double se;
  double pi0;
  double pi0_map;
};

std::vector<PointStat> run_sweep(const ExperimentSpec& spec, SweepAxis axis, const std::vector<double>& values,
                                 const Corpus& train, const Corpus& test, const fs::path& out) {
  const auto points = sweep(spec, axis, values, train, test);
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream csv(out / ("yeast_sweep_" + axis_name(axis) + ".csv"));
    write_sweep_csv(axis, points, csv);
  }
  std::vector<PointStat> stats;
  for (const auto& pt : points) {
    const auto* s = pt.result.summary("POEM-S");
    const auto* b = pt.result.summary("pi0");
    stats.push_back({pt.value, s->mean_expected, s->sd_expected / std::sqrt(static_cast<double>(s->runs)),
                     b->mean_expected, b->mean_map});
  }
  return stats;
}

void trends(Report& rep, const Corpus& train, const Corpus& test, const RunOptions& run, const fs::path& out) {
  auto spec = base_spec("yeast", run);
  spec.methods = {Method::pi0, Method::poem_stochastic};

  {
    const auto pts = run_sweep(spec, SweepAxis::replay, {1, 2, 4, 8, 16, 32, 64}, train, test, out);
    std::size_t inversions = 0;
    bool small = true;
    std::string detail;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      detail += (k ? " " : "") + fmt(pts[k].value) + ":" + fmt(pts[k].mean);
      if (k == 0 || pts[k].mean <= pts[k - 1].mean) continue;
      ++inversions;
      const double se = std::max(pts[k].se, pts[k - 1].se);
      small = small && pts[k].mean - pts[k - 1].mean <= tol::inversion_se * se;
    }
    rep.line(inversions <= tol::replay_inversions && small, "AC8a",
             "yeast replay sweep 1..64: POEM(S) non-increasing (one inversion <= 1 SE allowed)",
             detail + "; inversions=" + std::to_string(inversions));
  }
  {
    const auto pts = run_sweep(spec, SweepAxis::fraction, {0.01, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0}, train, test, out);
    bool ok = true;
    std::string detail;
    for (const auto& p : pts) {
      ok = ok && p.mean <= p.pi0;
      detail += (detail.empty() ? "" : " ") + fmt(p.value) + ":" + fmt(p.mean) + "/" + fmt(p.pi0);
    }
    rep.line(ok, "AC8b", "yeast fraction sweep: POEM(S) <= pi0 at every f", detail);
  }
  {
    const auto pts = run_sweep(spec, SweepAxis::temperature, {0.5, 1, 2, 4, 8, 16, 32}, train, test, out);
    const auto& last = pts.back();
    const double rel = std::abs(last.mean - last.pi0_map) / last.pi0_map;
    rep.line(rel <= tol::map_recovery, "AC8c", "yeast temperature sweep: POEM(S) within 5% of pi0-MAP at alpha=32",
             "POEM-S=" + fmt(last.mean) + " pi0-MAP=" + fmt(last.pi0_map) + " rel=" + fmt(rel));
  }
}

}  // namespace

int main(int argc, char** argv) {
  fs::path data_dir = "data";
  fs::path out;
  RunOptions run;
  run.workers = std::max(1u, std::thread::hardware_concurrency());
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--data-dir" && i + 1 < argc) {
      data_dir = argv[++i];
    } else if (a == "--workers" && i + 1 < argc) {
      run.workers = std::stoul(argv[++i]);
    } else if (a == "--seeds" && i + 1 < argc) {
      run.seeds = std::max<std::size_t>(2, std::stoul(argv[++i]));
    } else if (a == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else {
      std::cerr << "usage: crm_acceptance_corpus --data-dir DIR [--workers N] [--seeds N] [--out DIR]\n";
      return 2;
    }
  }

  const auto scene = load(data_dir, {"scene", 6, 294});
  const auto yeast = load(data_dir, {"yeast", 14, 103});
  if (!scene && !yeast) {
    std::cout << "SKIP  AC1 AC2 AC8  no scene_* or yeast_* files under " << data_dir << '\n';
    return 77;
  }

  if (run.seeds != 10) std::cout << "NOTE  running with seeds 1.." << run.seeds << "; criteria are defined for 10\n";
  Report rep;
  for (const auto& [name, pair] : {std::pair{std::string("scene"), &scene}, std::pair{std::string("yeast"), &yeast}}) {
    if (!*pair) {
      Report::skip("AC1", name + ": ordering and paired tests", "files not found");
      if (name == "yeast") {
        Report::skip("AC2", "yeast magnitudes", "files not found");
        Report::skip("AC8", "yeast sweeps", "files not found");
      }
      continue;
    }
    const auto& [train, test] = **pair;
    const auto r = run_experiment(base_spec(name, run), train, test);
    write_table(out, name + "_results.csv", r);
    ordering(rep, name, r);
    if (name == "yeast") {
      magnitudes(rep, r);
      trends(rep, train, test, run, out);
    }
  }
  std::cout << (rep.failures == 0 ? "all criteria passed" : std::to_string(rep.failures) + " criteria failed") << '\n';
  return rep.failures == 0 ? 0 : 1;
}
