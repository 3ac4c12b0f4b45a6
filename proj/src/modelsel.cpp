#include "crm/modelsel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "crm/parallel.hpp"

namespace crm {

double nearest_rank_percentile(std::vector<double> values, double P) {
  if (values.empty()) throw std::invalid_argument("percentile: no values");
  if (!(P >= 0.0 && P <= 100.0)) throw std::invalid_argument("percentile: P must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  const auto idx = static_cast<std::size_t>(std::floor(P * static_cast<double>(n) / 100.0));
  return values[std::min(n - 1, idx)];
}

ClipConstant clip_constant(const LoggedDataset& log_train, const PercentileRule& rule) {
  if (log_train.empty()) throw std::invalid_argument("clip_constant: empty log");
  if (!(rule.upper >= rule.lower)) throw std::invalid_argument("clip_constant: upper percentile below lower");
  std::vector<double> props;
  props.reserve(log_train.size());
  for (const auto& r : log_train.records) props.push_back(r.propensity);
  const auto [lo, hi] = std::minmax_element(props.begin(), props.end());
  ClipConstant out;
  out.max_over_min = *hi / *lo;
  const double upper = nearest_rank_percentile(props, rule.upper);
  const double lower = nearest_rank_percentile(props, rule.lower);
  out.M = upper / lower;
  if (!(out.M > 1.0)) {
    out.M = 1.0;
    out.flat = true;
  }
  return out;
}

LambdaStar lambda_star(const ClippedTerms& pi0_terms, std::size_t n) {
  LambdaStar out;
  if (pi0_terms.mean == 0.0 || !(pi0_terms.variance > 0.0) || n == 0) {
    out.fallback = true;
    return out;
  }
  out.value = std::abs(pi0_terms.mean) / std::sqrt(pi0_terms.variance / static_cast<double>(n));
  return out;
}

HyperGrid calibrate_grid(const LoggedDataset& log_train, const PolicyParams& pi0, HyperGrid grid) {
  const auto cc = clip_constant(log_train, grid.M_rule);
  grid.M = cc.M;
  grid.M_flat = cc.flat;
  const auto ls = lambda_star(clipped_terms(log_train, pi0, grid.M), log_train.size());
  grid.lambda_star = ls.value;
  grid.lambda_star_fallback = ls.fallback;
  return grid;
}

HyperGrid calibrate_grid(const LoggedDataset& log_train, HyperGrid grid) {
  const auto cc = clip_constant(log_train, grid.M_rule);
  grid.M = cc.M;
  grid.M_flat = cc.flat;
  ClippedTerms t;
  t.u.resize(log_train.size());
  t.clipped.assign(log_train.size(), grid.M <= 1.0 ? 1 : 0);
  for (std::size_t i = 0; i < log_train.size(); ++i) t.u[i] = log_train.records[i].loss * std::min(grid.M, 1.0);
  summarize(t);
  const auto ls = lambda_star(t, log_train.size());
  grid.lambda_star = ls.value;
  grid.lambda_star_fallback = ls.fallback;
  return grid;
}

Candidate train_candidate(const LoggedDataset& log_train, const LoggedDataset& log_val, Optimizer optimizer,
                          const CrmConfig& cfg, PolicyParams& out_policy) {
  Candidate c;
  c.lambda = cfg.lambda;
  const auto start = std::chrono::steady_clock::now();
  try {
    PolicyParams init(log_train.q, log_train.p);
    auto [w, trace] = optimizer == Optimizer::batch ? train_batch(log_train, cfg, init)
                                                    : train_stochastic(log_train, cfg, init);
    c.train_objective = crm_objective(log_train, w, cfg);
    c.validation = counterfactual_validate(log_val, w);
    c.epochs = trace.rows.size();
    c.stop_reason = trace.stop_reason;
    c.failed = trace.diverged || !std::isfinite(c.validation);
    out_policy = std::move(w);
  } catch (const std::exception& e) {
    c.failed = true;
    c.stop_reason = e.what();
    out_policy = PolicyParams(log_train.q, log_train.p);
  }
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

GridResult grid_search(const LoggedDataset& log_train, const LoggedDataset& log_val, const HyperGrid& grid,
                       Optimizer optimizer, std::uint64_t seed, const CrmConfig& base, std::size_t workers) {
  if (grid.c_values.empty()) throw std::invalid_argument("grid_search: empty grid");
  if (log_val.empty()) throw std::invalid_argument("grid_search: empty validation log");
  const std::size_t k = grid.c_values.size();
  std::vector<Candidate> cands(k);
  std::vector<PolicyParams> policies(k);
  parallel_for(k, workers, [&](std::size_t i) {
    CrmConfig cfg = base;
    cfg.M = grid.M;
    cfg.seed = seed;
    const double c = grid.c_values[i];
    cfg.lambda = grid.lambda_star_fallback ? c : c * grid.lambda_star;
    cands[i] = train_candidate(log_train, log_val, optimizer, cfg, policies[i]);
    cands[i].c = c;
  });

  GridResult result;
  result.report.M = grid.M;
  result.report.lambda_star = grid.lambda_star;
  result.report.lambda_star_fallback = grid.lambda_star_fallback;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < k; ++i) {
    if (cands[i].failed) continue;
    if (!best || cands[i].validation < cands[*best].validation ||
        (cands[i].validation == cands[*best].validation && cands[i].c < cands[*best].c))
      best = i;
  }
  if (best) {
    result.report.selected = *best;
    result.policy = std::move(policies[*best]);
  } else {
    result.report.all_failed = true;
    result.policy = PolicyParams(log_train.q, log_train.p);
  }
  result.report.candidates = std::move(cands);
  return result;
}

void to_json(nlohmann::json& j, const Candidate& c) {
  j = nlohmann::json{{"c", c.c},
                     {"lambda", c.lambda},
                     {"train_objective", c.train_objective},
                     {"validation", c.validation},
                     {"seconds", c.seconds},
                     {"epochs", c.epochs},
                     {"failed", c.failed},
                     {"stop_reason", c.stop_reason}};
}

void to_json(nlohmann::json& j, const SelectionReport& r) {
  j = nlohmann::json{{"candidates", r.candidates},
                     {"selected", r.selected},
                     {"M", r.M},
                     {"lambda_star", r.lambda_star},
                     {"lambda_star_fallback", r.lambda_star_fallback},
                     {"all_failed", r.all_failed}};
}

}  // namespace crm
