#include "crm/learner.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "crm/numeric.hpp"
#include "crm/random.hpp"
#include "crm/text.hpp"

namespace crm {

void CrmConfig::validate() const {
  if (!(M > 0.0)) throw std::invalid_argument("CrmConfig: M must be > 0");
  if (!(lambda >= 0.0)) throw std::invalid_argument("CrmConfig: lambda must be >= 0");
  if (minibatch < 1) throw std::invalid_argument("CrmConfig: minibatch must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("CrmConfig: lr must be > 0");
}

namespace {

constexpr std::uint64_t kEpochOrderTag = 0x45504fu;

/// Clipped terms for a set of records, plus what the gradient needs:
/// per-record residuals y_j − σ_j (row-major, q per record) and the
/// unclipped weighted losses used for progressive validation.
struct Evaluation {
  ClippedTerms terms;
  std::vector<double> resid;
  std::vector<double> unclipped;
};

Evaluation evaluate(const LoggedDataset& log, std::span<const std::size_t> records, const PolicyParams& w,
                    double M) {
  const std::size_t n = records.size();
  const std::size_t q = w.num_labels();
  Evaluation ev;
  ev.terms.u.resize(n);
  ev.terms.clipped.resize(n);
  ev.resid.resize(n * q);
  ev.unclipped.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = records[k];
    const auto& r = log.records[i];
    const auto s = scores(w, log.x(i));
    // Same expression as log_importance_weight, from the scores we reuse.
    const double weight = std::exp(log_prob_from_scores(s, r.y) - std::log(r.propensity));
    ev.unclipped[k] = r.loss * weight;
    if (weight >= M) {
      ev.terms.u[k] = r.loss * M;
      ev.terms.clipped[k] = 1;
    } else {
      ev.terms.u[k] = r.loss * weight;
      ev.terms.max_weight = std::max(ev.terms.max_weight, weight);
    }
    double* res = ev.resid.data() + k * q;
    for (std::size_t j = 0; j < q; ++j) res[j] = (r.y[j] ? 1.0 : 0.0) - sigmoid(s[j]);
  }
  summarize(ev.terms);
  return ev;
}

/// G += scale · (y − σ) ⊗ x for one record.
void accumulate(Matrix& G, const SparseVector& x, const double* resid, double scale) {
  for (std::size_t j = 0; j < G.rows(); ++j) {
    const double c = scale * resid[j];
    if (c == 0.0) continue;
    auto row = G.row(j);
    for (const auto& f : x.entries()) row[f.index] += c * f.value;
  }
}

std::vector<std::size_t> all_records(const LoggedDataset& log) {
  std::vector<std::size_t> idx(log.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

double objective_from_terms(const ClippedTerms& t, double lambda) {
  if (lambda == 0.0) return t.mean;
  if (!t.variance_defined()) throw std::invalid_argument("crm objective: variance needs n >= 2 when lambda > 0");
  return t.mean + lambda * std::sqrt(t.variance / static_cast<double>(t.size()));
}

/// Gradient of the true objective from an evaluation over all records.
Matrix gradient_from_evaluation(const LoggedDataset& log, std::span<const std::size_t> records,
                                const Evaluation& ev, const PolicyParams& w, double lambda) {
  const std::size_t n = ev.terms.size();
  const std::size_t q = w.num_labels();
  const double dn = static_cast<double>(n);
  const auto& t = ev.terms;
  const bool var_term = lambda > 0.0 && t.variance_defined() && t.variance > 0.0;
  const double var_scale = var_term ? lambda / ((dn - 1.0) * std::sqrt(dn * t.variance)) : 0.0;
  Matrix G(q, w.num_features());
  for (std::size_t k = 0; k < n; ++k) {
    if (t.clipped[k]) continue;
    const double coef = 1.0 / dn + var_scale * (t.u[k] - t.mean);
    // ∇u^i = u^i · α · (y − σ) ⊗ x
    accumulate(G, log.x(records[k]), ev.resid.data() + k * q, coef * t.u[k] * w.alpha());
  }
  return G;
}

double surrogate_from_terms(const ClippedTerms& t, double lambda, const MajorizerCoeffs& coeffs) {
  if (lambda == 0.0) return t.mean;
  return t.mean + lambda / std::sqrt(static_cast<double>(t.size())) * coeffs.evaluate(t);
}

/// Gradient of the surrogate: mean over records of (1 + λ√n(A + 2B u^i)) ∇u^i.
Matrix surrogate_gradient(const LoggedDataset& log, std::span<const std::size_t> records,
                          const Evaluation& ev, const PolicyParams& w, double lambda,
                          const MajorizerCoeffs& coeffs, std::size_t n_total) {
  const std::size_t b = ev.terms.size();
  const std::size_t q = w.num_labels();
  const double root_n = std::sqrt(static_cast<double>(n_total));
  Matrix G(q, w.num_features());
  for (std::size_t k = 0; k < b; ++k) {
    if (ev.terms.clipped[k]) continue;
    const double u = ev.terms.u[k];
    const double coef = lambda == 0.0 ? 1.0 : 1.0 + lambda * root_n * (coeffs.A + 2.0 * coeffs.B * u);
    accumulate(G, log.x(records[k]), ev.resid.data() + k * q, coef * u * w.alpha() / static_cast<double>(b));
  }
  return G;
}

PolicyParams step(const PolicyParams& w, const Matrix& direction, double t) {
  Matrix next = w.weights();
  next.axpy(-t, direction);
  return PolicyParams(std::move(next), w.alpha());
}

void check_log(const LoggedDataset& log, const PolicyParams& init) {
  if (log.empty()) throw std::invalid_argument("training requires a non-empty log");
  if (init.num_labels() != log.q || init.num_features() < log.p)
    throw std::invalid_argument("training: initial policy shape does not match the log");
}

}  // namespace

double MajorizerCoeffs::evaluate(const ClippedTerms& terms) const {
  double s1 = pairwise_sum(terms.u);
  std::vector<double> sq(terms.u.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = terms.u[i] * terms.u[i];
  const double s2 = pairwise_sum(sq);
  return A * s1 + B * s2 + C;
}

MajorizerCoeffs majorizer(const ClippedTerms& anchor_terms, double var_floor) {
  const std::size_t n = anchor_terms.size();
  if (n < 2) throw std::invalid_argument("majorizer: need n >= 2");
  MajorizerCoeffs c;
  c.n = n;
  c.anchor_mean = anchor_terms.mean;
  c.anchor_var = anchor_terms.variance;
  double var = anchor_terms.variance;
  if (!(var > var_floor)) {
    var = var_floor;
    c.floored = true;
  }
  const double sd = std::sqrt(var);
  const double dn = static_cast<double>(n);
  const double ubar = anchor_terms.mean;
  c.A = -ubar / ((dn - 1.0) * sd);
  c.B = 1.0 / (2.0 * (dn - 1.0) * sd);
  c.C = dn * ubar * ubar / (2.0 * (dn - 1.0) * sd) + sd / 2.0;
  return c;
}

void TrainTrace::write_csv(std::ostream& out) const {
  out << "epoch,objective,mean,variance,grad_norm,clip_fraction,prog_val\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << format_double(r.objective) << ',' << format_double(r.mean) << ','
        << format_double(r.variance) << ',' << format_double(r.grad_norm) << ','
        << format_double(r.clip_fraction) << ',' << format_double(r.prog_val) << '\n';
  }
}

double crm_objective(const LoggedDataset& log, const PolicyParams& w, const CrmConfig& cfg) {
  return objective_from_terms(clipped_terms(log, w, cfg.M), cfg.lambda);
}

std::pair<double, Matrix> crm_objective_and_gradient(const LoggedDataset& log, const PolicyParams& w,
                                                     const CrmConfig& cfg) {
  const auto idx = all_records(log);
  const auto ev = evaluate(log, idx, w, cfg.M);
  return {objective_from_terms(ev.terms, cfg.lambda), gradient_from_evaluation(log, idx, ev, w, cfg.lambda)};
}

Matrix crm_gradient(const LoggedDataset& log, const PolicyParams& w, const CrmConfig& cfg) {
  return crm_objective_and_gradient(log, w, cfg).second;
}

double surrogate_objective(const LoggedDataset& log, const PolicyParams& w, const CrmConfig& cfg,
                           const MajorizerCoeffs& coeffs) {
  return surrogate_from_terms(clipped_terms(log, w, cfg.M), cfg.lambda, coeffs);
}

std::pair<PolicyParams, TrainTrace> train_stochastic(const LoggedDataset& log, const CrmConfig& cfg,
                                                     const PolicyParams& init) {
  cfg.validate();
  check_log(log, init);
  const std::size_t n = log.size();
  if (cfg.lambda > 0.0 && n < 2) throw std::invalid_argument("train_stochastic: lambda > 0 needs n >= 2");

  const auto all = all_records(log);
  PolicyParams w = init;
  PolicyParams best = init;
  double best_pv = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  Matrix accum(w.num_labels(), w.num_features());
  TrainTrace trace;
  std::vector<std::size_t> order = all;

  MajorizerCoeffs coeffs;
  auto anchor = evaluate(log, all, w, cfg.M);

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (cfg.lambda > 0.0) {
      coeffs = majorizer(anchor.terms, cfg.var_floor);
      trace.majorizer_floored = trace.majorizer_floored || coeffs.floored;
    }

    order = all;
    Rng rng(derive_seed(cfg.seed, kEpochOrderTag, epoch));
    rng.shuffle(std::span<std::size_t>(order));

    ClippedTerms pv;
    pv.u.reserve(n);
    pv.clipped.reserve(n);
    for (std::size_t start = 0; start < n; start += cfg.minibatch) {
      const std::size_t stop = std::min(n, start + cfg.minibatch);
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      const auto ev = evaluate(log, batch, w, cfg.M);
      // Progressive validation: score the batch before training on it.
      pv.u.insert(pv.u.end(), ev.terms.u.begin(), ev.terms.u.end());
      pv.clipped.insert(pv.clipped.end(), ev.terms.clipped.begin(), ev.terms.clipped.end());
      const Matrix g = surrogate_gradient(log, batch, ev, w, cfg.lambda, coeffs, n);

      if (cfg.step_rule == StepRule::adagrad) {
        auto wd = w.weights().data();
        auto ad = accum.data();
        const auto gd = g.data();
        for (std::size_t c = 0; c < wd.size(); ++c) {
          ad[c] += gd[c] * gd[c];
          wd[c] -= cfg.lr * gd[c] / std::sqrt(cfg.adagrad_eps + ad[c]);
        }
      } else {
        const double f0 = surrogate_objective(log, w, cfg, coeffs);
        const double g2 = g.squared_norm();
        double t = cfg.lr;
        bool accepted = false;
        for (int halving = 0; halving < 50 && g2 > 0.0; ++halving, t *= 0.5) {
          auto cand = step(w, g, t);
          if (surrogate_objective(log, cand, cfg, coeffs) <= f0 - 1e-4 * t * g2) {
            w = std::move(cand);
            accepted = true;
            break;
          }
        }
        if (!accepted && g2 > 0.0) trace.line_search_failed = true;
      }
    }

    anchor = evaluate(log, all, w, cfg.M);
    TraceRow row;
    row.epoch = epoch;
    row.mean = anchor.terms.mean;
    row.variance = anchor.terms.variance;
    row.objective = objective_from_terms(anchor.terms, cfg.lambda);
    row.clip_fraction = anchor.terms.clip_fraction;
    row.grad_norm = gradient_from_evaluation(log, all, anchor, w, cfg.lambda).norm();
    summarize(pv);
    row.prog_val = objective_from_terms(pv, cfg.lambda);
    trace.rows.push_back(row);

    if (!std::isfinite(row.objective) || row.objective > cfg.M) {
      trace.diverged = true;
      trace.stop_reason = "diverged";
      break;
    }
    if (row.prog_val < best_pv) {
      best_pv = row.prog_val;
      best = w;
      trace.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (row.grad_norm < cfg.tol_grad * (1.0 + w.weights().norm())) {
      trace.converged = true;
      trace.stop_reason = "gradient norm";
      break;
    }
    if (since_best >= cfg.patience) {
      trace.converged = true;
      trace.stop_reason = "progressive validation";
      break;
    }
  }
  if (trace.stop_reason.empty()) trace.stop_reason = "max epochs";
  return {std::move(best), std::move(trace)};
}

std::pair<PolicyParams, TrainTrace> train_batch(const LoggedDataset& log, const CrmConfig& cfg,
                                                const PolicyParams& init) {
  cfg.validate();
  check_log(log, init);
  PolicyParams w = init;
  TrainTrace trace;
  double t0 = cfg.lr;
  auto [f, g] = crm_objective_and_gradient(log, w, cfg);

  for (std::size_t iter = 0; iter < cfg.max_epochs; ++iter) {
    const auto terms = clipped_terms(log, w, cfg.M);
    TraceRow row;
    row.epoch = iter;
    row.objective = f;
    row.mean = terms.mean;
    row.variance = terms.variance;
    row.clip_fraction = terms.clip_fraction;
    row.grad_norm = g.norm();
    row.prog_val = std::numeric_limits<double>::quiet_NaN();
    trace.rows.push_back(row);
    trace.best_epoch = iter;

    if (row.grad_norm < cfg.tol_grad * (1.0 + w.weights().norm())) {
      trace.converged = true;
      trace.stop_reason = "gradient norm";
      break;
    }
    const double g2 = g.squared_norm();
    double t = t0;
    bool accepted = false;
    double f_new = f;
    for (int halving = 0; halving < 50; ++halving, t *= 0.5) {
      auto cand = step(w, g, t);
      f_new = crm_objective(log, cand, cfg);
      if (f_new <= f - 1e-4 * t * g2) {
        w = std::move(cand);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      trace.line_search_failed = true;
      trace.stop_reason = "line search";
      break;
    }
    const double change = std::abs(f - f_new);
    std::tie(f, g) = crm_objective_and_gradient(log, w, cfg);
    if (change < cfg.tol_obj * std::max(1.0, std::abs(f))) {
      trace.converged = true;
      trace.stop_reason = "objective change";
      break;
    }
    t0 = 2.0 * t;
  }
  if (!trace.rows.empty() && trace.rows.back().objective != f) {
    const auto terms = clipped_terms(log, w, cfg.M);
    trace.rows.push_back({trace.rows.back().epoch + 1, f, terms.mean, terms.variance, g.norm(),
                          terms.clip_fraction, std::numeric_limits<double>::quiet_NaN()});
    trace.best_epoch = trace.rows.back().epoch;
  }
  if (trace.stop_reason.empty()) trace.stop_reason = "max epochs";
  return {std::move(w), std::move(trace)};
}

}  // namespace crm
