#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crm/dataset.hpp"
#include "crm/learner.hpp"
#include "crm/logsim.hpp"
#include "crm/modelsel.hpp"
#include "crm/policy.hpp"

namespace crm {

enum class Method { pi0, ips_batch, ips_stochastic, poem_batch, poem_stochastic, crf };

std::string method_name(Method m);
std::optional<Method> parse_method(std::string_view name);

struct ExperimentSpec {
  std::string dataset;
  double f = 0.05;
  std::size_t replay_count = 4;
  double alpha = 1.0;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<Method> methods = {Method::pi0,        Method::ips_batch,       Method::poem_batch,
                                 Method::ips_stochastic, Method::poem_stochastic, Method::crf};
  HyperGrid grid;
  double validation_fraction = 0.25;
  LogisticFitOptions logging_fit;
  LogisticFitOptions skyline_fit;
  CrmConfig batch;
  CrmConfig stochastic;
  std::size_t workers = 1;

  ExperimentSpec();
  void validate() const;
};

/// One (method, seed) cell. Losses are raw Hamming, in [0, q].
struct ResultRow {
  std::string method;
  std::string dataset;
  std::uint64_t seed = 0;
  double expected_test_loss = 0.0;
  double map_test_loss = 0.0;
  double train_seconds = 0.0;
  double selected_c = 0.0;
  double lambda = 0.0;
  double M = 0.0;
  double clip_fraction = 0.0;
  std::string status = "ok";
};

/// One-tailed paired t-test of H1: mean(a − b) < 0.
struct PairedTest {
  std::string a;
  std::string b;
  std::size_t n = 0;
  double mean_diff = 0.0;
  double t = 0.0;
  double p_value = 1.0;
};

PairedTest paired_t_test(const std::string& a, const std::string& b, const std::vector<double>& xa,
                         const std::vector<double>& xb);

struct MethodSummary {
  std::string method;
  std::size_t runs = 0;
  double mean_expected = 0.0;
  double sd_expected = 0.0;
  double mean_map = 0.0;
  double sd_map = 0.0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;  // sorted by (method order, seed)
  std::vector<MethodSummary> summaries;
  std::vector<PairedTest> tests;
  nlohmann::json selection;  // per (method, seed) selection reports, with timings

  const MethodSummary* summary(const std::string& method) const;
  const PairedTest* test(const std::string& a, const std::string& b) const;
  std::vector<double> expected_losses(const std::string& method) const;
};

/// Mean over test examples of the closed-form expected Hamming loss.
double evaluate_expected(const Corpus& test, const PolicyParams& w);
/// Mean Hamming loss of the MAP predictions.
double evaluate_map(const Corpus& test, const PolicyParams& w);

/// Full supervised→bandit protocol for every seed and method.
ExperimentResult run_experiment(const ExperimentSpec& spec, const Corpus& train, const Corpus& test);

/// Deterministic outputs (no wall-clock values).
void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out);
nlohmann::ordered_json summary_json(const ExperimentResult& result);
/// Wall-clock per row; not reproducible by nature.
void write_timings_csv(const std::vector<ResultRow>& rows, std::ostream& out);

enum class SweepAxis { replay, fraction, temperature };
std::string axis_name(SweepAxis a);
std::optional<SweepAxis> parse_axis(std::string_view name);

struct SweepPoint {
  double value = 0.0;
  ExperimentResult result;
};

/// run_experiment once per axis value, everything else (seeds included) shared.
std::vector<SweepPoint> sweep(const ExperimentSpec& spec, SweepAxis axis, const std::vector<double>& values,
                              const Corpus& train, const Corpus& test);

void write_sweep_csv(SweepAxis axis, const std::vector<SweepPoint>& points, std::ostream& out);

}  // namespace crm
