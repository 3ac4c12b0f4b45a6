#include "crm/policy.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "crm/numeric.hpp"
#include "crm/text.hpp"

namespace crm {

void Matrix::axpy(double scale, const Matrix& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) throw std::invalid_argument("Matrix::axpy: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

double Matrix::squared_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

double Matrix::norm() const { return std::sqrt(squared_norm()); }

double Matrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

PolicyParams::PolicyParams(std::size_t q, std::size_t p, double alpha) : PolicyParams(Matrix(q, p), alpha) {}

PolicyParams::PolicyParams(Matrix w, double alpha) : w_(std::move(w)), alpha_(alpha) {
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw std::invalid_argument("PolicyParams: alpha must be > 0");
  for (double v : w_.data())
    if (!std::isfinite(v)) throw std::invalid_argument("PolicyParams: non-finite weight");
}

std::vector<double> scores(const PolicyParams& params, const SparseVector& x) {
  const auto& w = params.weights();
  if (x.dimension_bound() > w.cols()) throw std::out_of_range("scores: feature index beyond policy dimension");
  std::vector<double> s(w.rows(), 0.0);
  for (std::size_t j = 0; j < w.rows(); ++j) {
    const auto row = w.row(j);
    double dot = 0.0;
    for (const auto& f : x.entries()) dot += row[f.index] * f.value;
    s[j] = params.alpha() * dot;
  }
  return s;
}

double log_prob_from_scores(std::span<const double> s, const LabelVector& y) {
  if (y.size() != s.size()) throw std::invalid_argument("log_prob: label count mismatch");
  double lp = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) lp += (y[j] ? s[j] : 0.0) - softplus(s[j]);
  return lp;
}

double log_prob(const PolicyParams& params, const SparseVector& x, const LabelVector& y) {
  return log_prob_from_scores(scores(params, x), y);
}

std::vector<double> marginals(const PolicyParams& params, const SparseVector& x) {
  auto s = scores(params, x);
  for (auto& v : s) v = sigmoid(v);
  return s;
}

PolicySample sample(const PolicyParams& params, const SparseVector& x, Rng& rng) {
  const auto s = scores(params, x);
  LabelVector y(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) y.set(j, rng.uniform() < sigmoid(s[j]));
  const double propensity = std::exp(log_prob_from_scores(s, y));
  return {std::move(y), propensity};
}

double ExpectedPhi::at(std::size_t j, std::size_t k) const {
  for (const auto& f : x.entries())
    if (f.index == k) return marginals.at(j) * f.value;
  return 0.0;
}

ExpectedPhi expected_phi(const PolicyParams& params, const SparseVector& x) {
  return {marginals(params, x), x};
}

LabelVector map_predict(const PolicyParams& params, const SparseVector& x) {
  const auto s = scores(params, x);
  LabelVector y(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) y.set(j, s[j] > 0.0);
  return y;
}

double expected_hamming(const PolicyParams& params, const SparseVector& x, const LabelVector& y_star) {
  const auto s = scores(params, x);
  if (y_star.size() != s.size()) throw std::invalid_argument("expected_hamming: label count mismatch");
  double total = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    // P(label j wrong) = sigmoid(-s) when the true bit is 1, sigmoid(s) otherwise.
    total += y_star[j] ? sigmoid(-s[j]) : sigmoid(s[j]);
  }
  return total;
}

void save_policy(const PolicyParams& params, std::ostream& out) {
  const auto& w = params.weights();
  out << "crm-policy 1\n" << w.rows() << ' ' << w.cols() << ' ' << format_double(params.alpha()) << '\n';
  for (std::size_t j = 0; j < w.rows(); ++j) {
    const auto row = w.row(j);
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out << ' ';
      out << format_double(row[k]);
    }
    out << '\n';
  }
}

PolicyParams load_policy(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "crm-policy" || version != 1)
    throw std::runtime_error("load_policy: not a crm-policy v1 file");
  std::size_t q = 0, p = 0;
  std::string alpha_tok;
  if (!(in >> q >> p >> alpha_tok)) throw std::runtime_error("load_policy: bad header");
  auto alpha = parse_double(alpha_tok);
  if (!alpha) throw std::runtime_error("load_policy: bad alpha");
  Matrix w(q, p);
  std::string tok;
  for (auto& v : w.data()) {
    if (!(in >> tok)) throw std::runtime_error("load_policy: truncated weights");
    auto parsed = parse_double(tok);
    if (!parsed) throw std::runtime_error("load_policy: bad weight '" + tok + "'");
    v = *parsed;
  }
  return PolicyParams(std::move(w), *alpha);
}

void save_policy(const PolicyParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_policy(params, out);
}

PolicyParams load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_policy(in);
}

}  // namespace crm
