#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "crm/estimator.hpp"
#include "crm/learner.hpp"
#include "crm/logsim.hpp"

namespace crm {

struct PercentileRule {
  double upper = 90.0;
  double lower = 10.0;
};

/// Value at sorted index min(n − 1, floor(P · n / 100)).
double nearest_rank_percentile(std::vector<double> values, double P);

struct ClipConstant {
  double M = 1.0;
  /// max p / min p, logged for comparison only.
  double max_over_min = 1.0;
  /// Both percentiles coincided, so every weight above 1 is clipped.
  bool flat = false;
};

/// M = percentile(p, upper) / percentile(p, lower) over the training
/// propensities.
ClipConstant clip_constant(const LoggedDataset& log_train, const PercentileRule& rule = {});

struct LambdaStar {
  double value = 1.0;
  /// λ* was undefined (zero mean or zero variance for π₀); the grid uses c
  /// as an absolute λ.
  bool fallback = false;
};

/// λ* = |ū_π₀| / sqrt(Var_π₀(u) / n): the λ at which π₀'s objective is 0.
LambdaStar lambda_star(const ClippedTerms& pi0_terms, std::size_t n);

struct HyperGrid {
  std::vector<double> c_values = {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  PercentileRule M_rule;
  double lambda_star = 1.0;
  double M = 1.0;
  bool lambda_star_fallback = false;
  bool M_flat = false;
};

enum class Optimizer { batch, stochastic };

struct Candidate {
  double c = 0.0;
  double lambda = 0.0;
  double train_objective = 0.0;
  double validation = 0.0;
  double seconds = 0.0;
  std::size_t epochs = 0;
  bool failed = false;
  std::string stop_reason;
};

struct SelectionReport {
  std::vector<Candidate> candidates;
  std::size_t selected = 0;
  double M = 0.0;
  double lambda_star = 0.0;
  bool lambda_star_fallback = false;
  bool all_failed = false;

  const Candidate& best() const { return candidates.at(selected); }
};

void to_json(nlohmann::json& j, const Candidate& c);
void to_json(nlohmann::json& j, const SelectionReport& r);

/// Trains one policy at `cfg` (from w = 0) and scores it on the validation log.
Candidate train_candidate(const LoggedDataset& log_train, const LoggedDataset& log_val, Optimizer optimizer,
                          const CrmConfig& cfg, PolicyParams& out_policy);

struct GridResult {
  PolicyParams policy;
  SelectionReport report;
};

/// One training run per c (λ = c·λ*, M from grid.M), selected by the
/// unclipped validation estimate; ties go to the smaller c.
GridResult grid_search(const LoggedDataset& log_train, const LoggedDataset& log_val, const HyperGrid& grid,
                       Optimizer optimizer, std::uint64_t seed, const CrmConfig& base = {},
                       std::size_t workers = 1);

/// Fills M and λ* of `grid` from the training log and the logging policy.
HyperGrid calibrate_grid(const LoggedDataset& log_train, const PolicyParams& pi0, HyperGrid grid);

/// Same, without the policy: under π₀ every importance weight is 1, so its
/// clipped terms are δ_i · min(M, 1).
HyperGrid calibrate_grid(const LoggedDataset& log_train, HyperGrid grid);

}  // namespace crm
