#include "crm/harness.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "crm/estimator.hpp"
#include "crm/numeric.hpp"
#include "crm/parallel.hpp"
#include "crm/random.hpp"
#include "crm/text.hpp"

namespace crm {

namespace {
constexpr std::uint64_t kLogTag = 0x4c47u;
constexpr std::uint64_t kValSplitTag = 0x5653u;
constexpr std::uint64_t kTrainTag = 0x5452u;

const Method kAllMethods[] = {Method::pi0,        Method::ips_batch,       Method::poem_batch,
                              Method::ips_stochastic, Method::poem_stochastic, Method::crf};

std::size_t method_rank(const std::string& name) {
  for (std::size_t i = 0; i < std::size(kAllMethods); ++i)
    if (method_name(kAllMethods[i]) == name) return i;
  return std::size(kAllMethods);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}
}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::pi0: return "pi0";
    case Method::ips_batch: return "IPS-B";
    case Method::ips_stochastic: return "IPS-S";
    case Method::poem_batch: return "POEM-B";
    case Method::poem_stochastic: return "POEM-S";
    case Method::crf: return "CRF";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  for (auto m : kAllMethods) {
    const auto canon = method_name(m);
    if (name.size() != canon.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < name.size(); ++i)
      same = same && std::tolower(static_cast<unsigned char>(name[i])) ==
                         std::tolower(static_cast<unsigned char>(canon[i]));
    if (same) return m;
  }
  if (name == "CRF-skyline" || name == "crf-skyline") return Method::crf;
  return std::nullopt;
}

ExperimentSpec::ExperimentSpec() {
  batch.max_epochs = 500;
  batch.lr = 1.0;
  batch.tol_obj = 1e-8;
  stochastic.max_epochs = 200;
  stochastic.minibatch = 100;
  stochastic.lr = 0.1;
}

void ExperimentSpec::validate() const {
  if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("experiment: f must be in (0, 1]");
  if (replay_count < 1) throw std::invalid_argument("experiment: replay_count must be >= 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("experiment: alpha must be > 0");
  if (seeds.empty()) throw std::invalid_argument("experiment: no seeds");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("experiment: validation fraction must be in (0, 1)");
}

PairedTest paired_t_test(const std::string& a, const std::string& b, const std::vector<double>& xa,
                         const std::vector<double>& xb) {
  if (xa.size() != xb.size()) throw std::invalid_argument("paired_t_test: sample sizes differ");
  PairedTest t;
  t.a = a;
  t.b = b;
  t.n = xa.size();
  std::vector<double> d(xa.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = xa[i] - xb[i];
  t.mean_diff = mean_of(d);
  if (t.n < 2) return t;
  const double sd = sd_of(d);
  if (sd == 0.0) {
    t.t = t.mean_diff < 0 ? -std::numeric_limits<double>::infinity()
                          : (t.mean_diff > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    t.p_value = t.mean_diff < 0 ? 0.0 : (t.mean_diff > 0 ? 1.0 : 0.5);
    return t;
  }
  t.t = t.mean_diff / (sd / std::sqrt(static_cast<double>(t.n)));
  boost::math::students_t dist(static_cast<double>(t.n - 1));
  t.p_value = boost::math::cdf(dist, t.t);
  return t;
}

const MethodSummary* ExperimentResult::summary(const std::string& method) const {
  for (const auto& s : summaries)
    if (s.method == method) return &s;
  return nullptr;
}

const PairedTest* ExperimentResult::test(const std::string& a, const std::string& b) const {
  for (const auto& t : tests)
    if (t.a == a && t.b == b) return &t;
  return nullptr;
}

std::vector<double> ExperimentResult::expected_losses(const std::string& method) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.method == method) out.push_back(r.expected_test_loss);
  return out;
}

double evaluate_expected(const Corpus& test, const PolicyParams& w) {
  if (test.examples.empty()) throw std::invalid_argument("evaluate_expected: empty test set");
  std::vector<double> losses(test.size());
  for (std::size_t i = 0; i < test.size(); ++i)
    losses[i] = expected_hamming(w, test.examples[i].x, test.examples[i].y_star);
  return pairwise_sum(losses) / static_cast<double>(test.size());
}

double evaluate_map(const Corpus& test, const PolicyParams& w) {
  if (test.examples.empty()) throw std::invalid_argument("evaluate_map: empty test set");
  std::vector<double> losses(test.size());
  for (std::size_t i = 0; i < test.size(); ++i)
    losses[i] = hamming(test.examples[i].y_star, map_predict(w, test.examples[i].x)).value;
  return pairwise_sum(losses) / static_cast<double>(test.size());
}

namespace {

struct SeedData {
  PolicyParams pi0;
  LoggedDataset log_train;
  LoggedDataset log_val;
  HyperGrid grid;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const Corpus& train, const Corpus& test) {
  spec.validate();
  if (train.q != test.q) throw std::invalid_argument("experiment: train and test label counts differ");
  // Policies are sized to cover features seen in either split.
  Corpus train_wide = train;
  train_wide.p = std::max(train.p, test.p);
  const std::string dataset = spec.dataset.empty() ? train.name : spec.dataset;

  const std::size_t S = spec.seeds.size();
  std::vector<SeedData> seeds(S);
  parallel_for(S, spec.workers, [&](std::size_t s) {
    const auto seed = spec.seeds[s];
    auto& d = seeds[s];
    d.pi0 = scale_temperature(train_logging_policy(train_wide, spec.f, seed, spec.logging_fit), spec.alpha);
    auto log = generate_log(train_wide, d.pi0, spec.replay_count, derive_seed(seed, kLogTag));
    log.meta.f = spec.f;
    const double fr[] = {1.0 - spec.validation_fraction, spec.validation_fraction};
    auto parts = split_log(log, fr, derive_seed(seed, kValSplitTag));
    d.log_train = std::move(parts[0]);
    d.log_val = std::move(parts[1]);
    d.grid = calibrate_grid(d.log_train, d.pi0, spec.grid);
  });

  const bool want_crf = std::find(spec.methods.begin(), spec.methods.end(), Method::crf) != spec.methods.end();
  PolicyParams skyline;
  double skyline_seconds = 0.0;
  if (want_crf) {
    const auto start = std::chrono::steady_clock::now();
    skyline = fit_logistic(train_wide, spec.skyline_fit);
    skyline_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  const std::size_t K = spec.methods.size();
  std::vector<ResultRow> rows(S * K);
  std::vector<nlohmann::json> reports(S * K);
  parallel_for(S * K, spec.workers, [&](std::size_t job) {
    const std::size_t s = job / K;
    const Method m = spec.methods[job % K];
    const auto& d = seeds[s];
    ResultRow& row = rows[job];
    row.method = method_name(m);
    row.dataset = dataset;
    row.seed = spec.seeds[s];
    row.M = d.grid.M;
    const std::uint64_t train_seed = derive_seed(spec.seeds[s], kTrainTag);
    PolicyParams w;
    nlohmann::json report;
    try {
      switch (m) {
        case Method::pi0:
          w = d.pi0;
          break;
        case Method::crf:
          w = skyline;
          row.train_seconds = skyline_seconds;
          break;
        case Method::ips_batch:
        case Method::ips_stochastic: {
          const bool batch = m == Method::ips_batch;
          CrmConfig cfg = batch ? spec.batch : spec.stochastic;
          cfg.M = d.grid.M;
          cfg.lambda = 0.0;
          cfg.seed = train_seed;
          auto cand = train_candidate(d.log_train, d.log_val, batch ? Optimizer::batch : Optimizer::stochastic,
                                      cfg, w);
          row.train_seconds = cand.seconds;
          if (cand.failed) row.status = "failed: " + cand.stop_reason;
          report = cand;
          break;
        }
        case Method::poem_batch:
        case Method::poem_stochastic: {
          const bool batch = m == Method::poem_batch;
          auto res = grid_search(d.log_train, d.log_val, d.grid, batch ? Optimizer::batch : Optimizer::stochastic,
                                 train_seed, batch ? spec.batch : spec.stochastic, 1);
          w = std::move(res.policy);
          for (const auto& c : res.report.candidates) row.train_seconds += c.seconds;
          if (res.report.candidates.size() > 0) row.train_seconds /= static_cast<double>(res.report.candidates.size());
          if (res.report.all_failed) {
            row.status = "failed: all grid points";
          } else {
            row.selected_c = res.report.best().c;
            row.lambda = res.report.best().lambda;
          }
          report = res.report;
          break;
        }
      }
      row.expected_test_loss = evaluate_expected(test, w);
      row.map_test_loss = evaluate_map(test, w);
      if (m != Method::crf) row.clip_fraction = clipped_terms(d.log_train, w, d.grid.M).clip_fraction;
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
    }
    reports[job] = {{"method", row.method}, {"seed", row.seed}, {"report", report}};
  });

  ExperimentResult result;
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = method_rank(rows[a].method), rb = method_rank(rows[b].method);
    if (ra != rb) return ra < rb;
    return rows[a].seed < rows[b].seed;
  });
  result.selection = nlohmann::json::array();
  for (auto i : order) {
    result.rows.push_back(rows[i]);
    result.selection.push_back(reports[i]);
  }

  for (auto m : kAllMethods) {
    const auto name = method_name(m);
    std::vector<double> e, mp;
    for (const auto& r : result.rows)
      if (r.method == name && r.status == "ok") {
        e.push_back(r.expected_test_loss);
        mp.push_back(r.map_test_loss);
      }
    if (e.empty()) continue;
    result.summaries.push_back({name, e.size(), mean_of(e), sd_of(e), mean_of(mp), sd_of(mp)});
  }

  const std::pair<Method, Method> pairs[] = {{Method::poem_batch, Method::ips_batch},
                                             {Method::poem_stochastic, Method::ips_stochastic}};
  for (const auto& [a, b] : pairs) {
    const auto na = method_name(a), nb = method_name(b);
    std::map<std::uint64_t, double> la, lb;
    for (const auto& r : result.rows) {
      if (r.status != "ok") continue;
      if (r.method == na) la[r.seed] = r.expected_test_loss;
      if (r.method == nb) lb[r.seed] = r.expected_test_loss;
    }
    std::vector<double> xa, xb;
    for (const auto& [seed, v] : la)
      if (lb.count(seed)) {
        xa.push_back(v);
        xb.push_back(lb[seed]);
      }
    if (!xa.empty()) result.tests.push_back(paired_t_test(na, nb, xa, xb));
  }
  return result;
}

void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << "dataset,method,seed,expected_test_loss,map_test_loss,selected_c,lambda,M,clip_fraction,status\n";
  for (const auto& r : rows) {
    out << r.dataset << ',' << r.method << ',' << r.seed << ',' << format_double(r.expected_test_loss) << ','
        << format_double(r.map_test_loss) << ',' << format_double(r.selected_c) << ',' << format_double(r.lambda)
        << ',' << format_double(r.M) << ',' << format_double(r.clip_fraction) << ',' << r.status << '\n';
  }
}

void write_timings_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << "dataset,method,seed,train_seconds\n";
  for (const auto& r : rows)
    out << r.dataset << ',' << r.method << ',' << r.seed << ',' << format_double(r.train_seconds) << '\n';
}

nlohmann::ordered_json summary_json(const ExperimentResult& result) {
  nlohmann::ordered_json j;
  j["methods"] = nlohmann::ordered_json::array();
  for (const auto& s : result.summaries)
    j["methods"].push_back({{"method", s.method},
                            {"runs", s.runs},
                            {"mean_expected", s.mean_expected},
                            {"sd_expected", s.sd_expected},
                            {"mean_map", s.mean_map},
                            {"sd_map", s.sd_map}});
  j["paired_tests"] = nlohmann::ordered_json::array();
  for (const auto& t : result.tests)
    j["paired_tests"].push_back({{"a", t.a},
                                 {"b", t.b},
                                 {"n", t.n},
                                 {"mean_diff", t.mean_diff},
                                 {"t", std::isfinite(t.t) ? nlohmann::ordered_json(t.t) : nlohmann::ordered_json(nullptr)},
                                 {"p_one_tailed", t.p_value}});
  return j;
}

std::string axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::replay: return "replay";
    case SweepAxis::fraction: return "fraction";
    case SweepAxis::temperature: return "temperature";
  }
  return "?";
}

std::optional<SweepAxis> parse_axis(std::string_view name) {
  if (name == "replay") return SweepAxis::replay;
  if (name == "fraction") return SweepAxis::fraction;
  if (name == "temperature") return SweepAxis::temperature;
  return std::nullopt;
}

std::vector<SweepPoint> sweep(const ExperimentSpec& spec, SweepAxis axis, const std::vector<double>& values,
                              const Corpus& train, const Corpus& test) {
  std::vector<SweepPoint> out;
  for (double v : values) {
    ExperimentSpec s = spec;
    switch (axis) {
      case SweepAxis::replay:
        if (!(v >= 1.0) || v != std::floor(v)) throw std::invalid_argument("sweep: replay values must be integers >= 1");
        s.replay_count = static_cast<std::size_t>(v);
        break;
      case SweepAxis::fraction: s.f = v; break;
      case SweepAxis::temperature: s.alpha = v; break;
    }
    out.push_back({v, run_experiment(s, train, test)});
  }
  return out;
}

void write_sweep_csv(SweepAxis axis, const std::vector<SweepPoint>& points, std::ostream& out) {
  out << "axis,value,dataset,method,seed,expected_test_loss,map_test_loss,selected_c,lambda,M,clip_fraction,status\n";
  for (const auto& pt : points)
    for (const auto& r : pt.result.rows)
      out << axis_name(axis) << ',' << format_double(pt.value) << ',' << r.dataset << ',' << r.method << ','
          << r.seed << ',' << format_double(r.expected_test_loss) << ',' << format_double(r.map_test_loss) << ','
          << format_double(r.selected_c) << ',' << format_double(r.lambda) << ',' << format_double(r.M) << ','
          << format_double(r.clip_fraction) << ',' << r.status << '\n';
}

}  // namespace crm
