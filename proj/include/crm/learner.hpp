#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "crm/estimator.hpp"
#include "crm/logsim.hpp"
#include "crm/policy.hpp"

namespace crm {

enum class StepRule {
  adagrad,      // per-coordinate lr / sqrt(eps + Σ g²), accumulator kept across epochs
  line_search,  // backtracking on the epoch's majorized surrogate
};

struct CrmConfig {
  double M = 1.0;
  double lambda = 0.0;
  std::size_t max_epochs = 200;
  std::size_t minibatch = 100;
  double lr = 0.1;
  /// Stop when ‖∇‖ < tol_grad · (1 + ‖w‖).
  double tol_grad = 1e-5;
  /// Batch optimizer: stop when |ΔF| < tol_obj · max(1, |F|).
  double tol_obj = 1e-9;
  /// Epochs without progressive-validation improvement before stopping.
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  StepRule step_rule = StepRule::adagrad;
  double adagrad_eps = 1e-8;
  double var_floor = 1e-12;

  void validate() const;
};

/// Coefficients of Q(w; w0) = A Σu_w + B Σu_w² + C, an upper bound on
/// sqrt(Var_w(u)) that touches it at w0.
struct MajorizerCoeffs {
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  double anchor_mean = 0.0;
  double anchor_var = 0.0;
  std::size_t n = 0;
  /// Anchor variance was below the floor and was replaced by it.
  bool floored = false;

  double evaluate(const ClippedTerms& terms) const;
};

MajorizerCoeffs majorizer(const ClippedTerms& anchor_terms, double var_floor = 1e-12);

struct TraceRow {
  std::size_t epoch = 0;
  double objective = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  double grad_norm = 0.0;
  double clip_fraction = 0.0;
  double prog_val = 0.0;  // objective over the epoch's pre-update minibatch terms
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  std::size_t best_epoch = 0;
  bool converged = false;
  bool diverged = false;
  bool line_search_failed = false;
  bool majorizer_floored = false;
  std::string stop_reason;

  void write_csv(std::ostream& out) const;
};

/// ū_w + λ sqrt(Var_w(u) / n). With λ = 0 this is the clipped mean itself.
double crm_objective(const LoggedDataset& log, const PolicyParams& w, const CrmConfig& cfg);

/// Analytic gradient of crm_objective with respect to the weights. Clipped
/// records contribute nothing; at Var = 0 the variance part is 0.
Matrix crm_gradient(const LoggedDataset& log, const PolicyParams& w, const CrmConfig& cfg);

/// Objective and gradient from a single pass over the log.
std::pair<double, Matrix> crm_objective_and_gradient(const LoggedDataset& log, const PolicyParams& w,
                                                     const CrmConfig& cfg);

/// ū_w + λ/√n · Q(w; anchor), the function one epoch of stochastic training
/// descends.
double surrogate_objective(const LoggedDataset& log, const PolicyParams& w, const CrmConfig& cfg,
                           const MajorizerCoeffs& coeffs);

/// Stochastic iterated variance majorization: per epoch, freeze the
/// majorizer at the current iterate, then sweep shuffled minibatches taking
/// mean per-record steps (1 + λ√n (A + 2B u^i)) ∇u^i.
std::pair<PolicyParams, TrainTrace> train_stochastic(const LoggedDataset& log, const CrmConfig& cfg,
                                                     const PolicyParams& init);

/// Full-gradient descent on crm_objective with Armijo backtracking.
std::pair<PolicyParams, TrainTrace> train_batch(const LoggedDataset& log, const CrmConfig& cfg,
                                                const PolicyParams& init);

}  // namespace crm
