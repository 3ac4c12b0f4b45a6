#include "crm/estimator.hpp"

#include <cmath>
#include <stdexcept>

#include "crm/numeric.hpp"

namespace crm {

double log_importance_weight(const PolicyParams& h, const SparseVector& x, const LabelVector& y,
                             double propensity) {
  return log_prob(h, x, y) - std::log(propensity);
}

void summarize(ClippedTerms& terms) {
  const std::size_t n = terms.u.size();
  if (n == 0) throw std::invalid_argument("summarize: no terms");
  terms.mean = pairwise_sum(terms.u) / static_cast<double>(n);
  if (n >= 2) {
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = terms.u[i] - terms.mean;
      dev[i] = d * d;
    }
    terms.variance = pairwise_sum(dev) / static_cast<double>(n - 1);
  } else {
    terms.variance = 0.0;
  }
  std::size_t clipped = 0;
  for (auto c : terms.clipped) clipped += c;
  terms.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
}

double ips_unclipped(const LoggedDataset& log, const PolicyParams& h) {
  if (log.empty()) throw std::invalid_argument("ips_unclipped: empty log");
  std::vector<double> terms(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& r = log.records[i];
    terms[i] = r.loss * std::exp(log_importance_weight(h, log.x(i), r.y, r.propensity));
  }
  return pairwise_sum(terms) / static_cast<double>(log.size());
}

ClippedTerms clipped_terms(const LoggedDataset& log, const PolicyParams& h, double M) {
  if (!(M > 0.0)) throw std::invalid_argument("clipped_terms: M must be > 0");
  if (log.empty()) throw std::invalid_argument("clipped_terms: empty log");
  ClippedTerms t;
  t.u.resize(log.size());
  t.clipped.resize(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& r = log.records[i];
    const double w = std::exp(log_importance_weight(h, log.x(i), r.y, r.propensity));
    if (w >= M) {
      t.u[i] = r.loss * M;
      t.clipped[i] = 1;
    } else {
      t.u[i] = r.loss * w;
      t.max_weight = std::max(t.max_weight, w);
    }
  }
  summarize(t);
  return t;
}

BoundReport bernstein_bound(const ClippedTerms& terms, double M, std::size_t n, double gamma,
                            double capacity_value) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("bernstein_bound: gamma must be in (0, 1)");
  if (!(capacity_value > 0.0)) throw std::invalid_argument("bernstein_bound: capacity_value must be > 0");
  if (n < 2) throw std::invalid_argument("bernstein_bound: need n >= 2");
  BoundReport r;
  r.n = n;
  r.gamma = gamma;
  r.capacity_value = capacity_value;
  r.small_sample = n < 16;
  const double dn = static_cast<double>(n);
  r.risk_estimate = terms.mean;
  r.variance_term = std::sqrt(18.0 * terms.variance * capacity_value / dn);
  r.capacity_term = M * 15.0 * capacity_value / (dn - 1.0);
  r.bound = r.risk_estimate + r.variance_term + r.capacity_term;
  return r;
}

double counterfactual_validate(const LoggedDataset& log_val, const PolicyParams& h) {
  if (log_val.empty()) throw std::invalid_argument("counterfactual_validate: empty validation log");
  return ips_unclipped(log_val, h);
}

RiskReport risk_report(const LoggedDataset& log, const PolicyParams& h, double M, double gamma,
                       double capacity_value) {
  const auto terms = clipped_terms(log, h, M);
  RiskReport r;
  r.ips = ips_unclipped(log, h);
  r.clipped_mean = terms.mean;
  r.variance = terms.variance;
  r.clip_fraction = terms.clip_fraction;
  r.max_weight = terms.max_weight;
  r.M = M;
  if (log.size() >= 2) r.bound = bernstein_bound(terms, M, log.size(), gamma, capacity_value);
  return r;
}

void to_json(nlohmann::json& j, const BoundReport& r) {
  j = nlohmann::json{{"risk_estimate", r.risk_estimate}, {"variance_term", r.variance_term},
                     {"capacity_term", r.capacity_term}, {"bound", r.bound},
                     {"gamma", r.gamma},                 {"capacity_value", r.capacity_value},
                     {"n", r.n},                         {"small_sample", r.small_sample}};
}

void to_json(nlohmann::json& j, const RiskReport& r) {
  j = nlohmann::json{{"ips", r.ips},
                     {"clipped_mean", r.clipped_mean},
                     {"variance", r.variance},
                     {"clip_fraction", r.clip_fraction},
                     {"max_weight", r.max_weight},
                     {"M", r.M},
                     {"bound", r.bound}};
}

}  // namespace crm
