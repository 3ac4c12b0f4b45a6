#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace crm {

/// Logistic function, split on sign so neither branch overflows.
inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

/// log(1 + exp(s)), saturated outside [-30, 30].
inline double softplus(double s) {
  if (s > 30.0) return s;
  if (s < -30.0) return 0.0;
  return std::log1p(std::exp(s));
}

/// Pairwise (tree) summation. The reduction tree depends only on the length
/// of the input, so the result is reproducible however the terms were
/// produced.
inline double pairwise_sum(std::span<const double> v) {
  constexpr std::size_t kBlock = 32;
  if (v.size() <= kBlock) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace crm
