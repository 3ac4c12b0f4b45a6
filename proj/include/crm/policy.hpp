#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "crm/dataset.hpp"
#include "crm/random.hpp"

namespace crm {

/// Dense row-major matrix, rows = labels, cols = features.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  /// this += scale * other
  void axpy(double scale, const Matrix& other);
  double squared_norm() const;
  double norm() const;
  double max_abs() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Parameters of the exponential-family policy h(y|x) ∝ exp(alpha * w·(x⊗y)).
/// The temperature is kept apart from w so sweeps never rewrite weights.
class PolicyParams {
 public:
  PolicyParams() = default;
  /// Zero weights (uniform policy over {0,1}^q).
  PolicyParams(std::size_t q, std::size_t p, double alpha = 1.0);
  explicit PolicyParams(Matrix w, double alpha = 1.0);

  std::size_t num_labels() const { return w_.rows(); }
  std::size_t num_features() const { return w_.cols(); }
  double alpha() const { return alpha_; }
  const Matrix& weights() const { return w_; }
  Matrix& weights() { return w_; }

  PolicyParams with_alpha(double alpha) const { return PolicyParams(w_, alpha); }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  Matrix w_;
  double alpha_ = 1.0;
};

/// Per-label scores s_j = alpha * (w_j · x). Because φ(x,y) = x⊗y,
/// w·φ(x,y) = Σ_j y_j s_j. Throws std::out_of_range when x has an index >= p.
std::vector<double> scores(const PolicyParams& params, const SparseVector& x);

/// log h(y|x) from precomputed scores: Σ_j [y_j s_j − log(1 + e^{s_j})].
double log_prob_from_scores(std::span<const double> s, const LabelVector& y);
double log_prob(const PolicyParams& params, const SparseVector& x, const LabelVector& y);

/// P(y_j = 1 | x) for each label.
std::vector<double> marginals(const PolicyParams& params, const SparseVector& x);

struct PolicySample {
  LabelVector y;
  double propensity;
};

/// Draws each label independently with probability sigmoid(s_j). The returned
/// propensity is exactly exp(log_prob(params, x, y)).
PolicySample sample(const PolicyParams& params, const SparseVector& x, Rng& rng);

/// E_{y~h(x)}[φ(x,y)] kept in rank-1 form: entry (j,k) = marginal_j * x_k.
struct ExpectedPhi {
  std::vector<double> marginals;
  SparseVector x;

  /// Dense value at (label j, feature k). For checking only.
  double at(std::size_t j, std::size_t k) const;
};
ExpectedPhi expected_phi(const PolicyParams& params, const SparseVector& x);

/// argmax_y w·φ(x,y): y_j = 1 iff s_j > 0. A zero score gives label 0.
LabelVector map_predict(const PolicyParams& params, const SparseVector& x);

/// E_{y~h(x)} Hamming(y*, y) = Σ_j [y*_j (1 − σ_j) + (1 − y*_j) σ_j].
double expected_hamming(const PolicyParams& params, const SparseVector& x, const LabelVector& y_star);

/// Text weight file: header `crm-policy 1`, then `q p alpha`, then q rows of
/// p weights, shortest round-trip decimal.
void save_policy(const PolicyParams& params, std::ostream& out);
PolicyParams load_policy(std::istream& in);
void save_policy(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_policy(const std::filesystem::path& path);

}  // namespace crm
