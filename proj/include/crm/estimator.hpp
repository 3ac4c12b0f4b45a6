#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "crm/logsim.hpp"
#include "crm/policy.hpp"

namespace crm {

/// Per-record clipped terms u^i = δ_i · min{M, h(y_i|x_i)/p_i} and their
/// summary statistics.
struct ClippedTerms {
  std::vector<double> u;
  std::vector<std::uint8_t> clipped;  // 1 where the min picked M
  double mean = 0.0;
  double variance = 0.0;  // divisor n − 1; 0 when n < 2
  double clip_fraction = 0.0;
  double max_weight = 0.0;  // largest unclipped importance weight seen

  std::size_t size() const { return u.size(); }
  bool variance_defined() const { return u.size() >= 2; }
};

/// log h(y|x) − log p, exponentiated once by callers.
double log_importance_weight(const PolicyParams& h, const SparseVector& x, const LabelVector& y,
                             double propensity);

/// Fills mean, variance and clip_fraction from `terms.u` and `terms.clipped`.
/// Sums use pairwise summation so the result depends only on the term order.
void summarize(ClippedTerms& terms);

/// (1/n) Σ δ_i h(y_i|x_i)/p_i.
double ips_unclipped(const LoggedDataset& log, const PolicyParams& h);

ClippedTerms clipped_terms(const LoggedDataset& log, const PolicyParams& h, double M);

struct BoundReport {
  double risk_estimate = 0.0;
  double variance_term = 0.0;
  double capacity_term = 0.0;
  double bound = 0.0;
  double gamma = 0.0;
  double capacity_value = 0.0;
  std::size_t n = 0;
  /// Set when n < 16, below the sample size the bound is stated for.
  bool small_sample = false;
};

/// R̂^M + sqrt(18 Var Q / n) + M · 15 Q / (n − 1), with Q supplied directly
/// (it already contains the log(10/γ) factor).
BoundReport bernstein_bound(const ClippedTerms& terms, double M, std::size_t n, double gamma,
                            double capacity_value);

/// Unclipped estimate on a held-out log. Lower is better.
double counterfactual_validate(const LoggedDataset& log_val, const PolicyParams& h);

struct RiskReport {
  double ips = 0.0;
  double clipped_mean = 0.0;
  double variance = 0.0;
  double clip_fraction = 0.0;
  double max_weight = 0.0;
  double M = 0.0;
  BoundReport bound;
};

RiskReport risk_report(const LoggedDataset& log, const PolicyParams& h, double M, double gamma = 0.05,
                       double capacity_value = 1.0);

void to_json(nlohmann::json& j, const BoundReport& r);
void to_json(nlohmann::json& j, const RiskReport& r);

}  // namespace crm
