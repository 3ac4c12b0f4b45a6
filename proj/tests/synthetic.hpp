#pragma once

// Fixture builders shared by the test binaries.

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "crm/dataset.hpp"
#include "crm/logsim.hpp"
#include "crm/policy.hpp"
#include "crm/random.hpp"

namespace crm::testing {

inline double gaussian(Rng& rng) {
  // Box-Muller on our own uniform stream, for reproducible fixtures.
  double u1 = rng.uniform();
  while (u1 <= 0.0) u1 = rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline SparseVector random_sparse(std::size_t p, double density, Rng& rng, double scale = 1.0) {
  std::vector<Feature> f;
  for (std::size_t k = 0; k < p; ++k)
    if (rng.uniform() < density) f.push_back({static_cast<std::uint32_t>(k), scale * gaussian(rng)});
  return SparseVector(std::move(f));
}

inline PolicyParams random_policy(std::size_t q, std::size_t p, double scale, Rng& rng, double alpha = 1.0) {
  Matrix w(q, p);
  for (auto& v : w.data()) v = scale * gaussian(rng);
  return PolicyParams(std::move(w), alpha);
}

/// Multi-label corpus from a hidden linear model with label noise; dense
/// features in roughly [-1, 1], like the smaller LibSVM benchmarks.
struct SyntheticSpec {
  std::size_t n = 1000;
  std::size_t p = 20;
  std::size_t q = 6;
  double signal = 2.0;
  double noise = 0.5;
  double density = 1.0;
  std::uint64_t seed = 1;
};

inline std::pair<Corpus, PolicyParams> synthetic_corpus(const SyntheticSpec& s) {
  Rng rng(derive_seed(s.seed, 0x53594eu));
  Matrix truth(s.q, s.p);
  for (auto& v : truth.data()) v = s.signal * gaussian(rng) / std::sqrt(static_cast<double>(s.p));
  std::vector<double> bias(s.q);
  for (auto& b : bias) b = 0.8 * gaussian(rng) - 0.5;
  Corpus c;
  c.p = s.p;
  c.q = s.q;
  c.name = "synthetic";
  for (std::size_t i = 0; i < s.n; ++i) {
    std::vector<Feature> f;
    for (std::size_t k = 0; k < s.p; ++k)
      if (rng.uniform() < s.density) f.push_back({static_cast<std::uint32_t>(k), std::tanh(gaussian(rng))});
    SparseVector x(std::move(f));
    LabelVector y(s.q);
    for (std::size_t j = 0; j < s.q; ++j) {
      double z = bias[j] + s.noise * gaussian(rng);
      for (const auto& e : x.entries()) z += truth(j, e.index) * e.value;
      y.set(j, z > 0.0);
    }
    c.examples.push_back({std::move(x), std::move(y)});
  }
  return {std::move(c), PolicyParams(std::move(truth))};
}

struct HandRecord {
  SparseVector x;
  LabelVector y;
  double loss;
  double propensity;
};

inline LoggedDataset make_log(std::size_t q, std::size_t p, std::vector<HandRecord> recs) {
  LoggedDataset log;
  auto ctx = std::make_shared<std::vector<SparseVector>>();
  log.q = q;
  log.p = p;
  log.bounds = {0.0, static_cast<double>(q)};
  for (auto& r : recs) {
    log.records.push_back({ctx->size(), r.y, r.loss, r.propensity});
    ctx->push_back(std::move(r.x));
  }
  log.contexts = std::move(ctx);
  return log;
}

/// Log from logging policy `pi0` on random contexts and labels.
inline LoggedDataset random_log(std::size_t n, std::size_t q, std::size_t p, const PolicyParams& pi0,
                                std::uint64_t seed, double density = 0.8) {
  Rng rng(seed);
  Corpus c;
  c.p = p;
  c.q = q;
  for (std::size_t i = 0; i < n; ++i) {
    LabelVector y(q);
    for (std::size_t j = 0; j < q; ++j) y.set(j, rng.uniform() < 0.4);
    c.examples.push_back({random_sparse(p, density, rng), std::move(y)});
  }
  return generate_log(c, pi0, 1, seed + 1);
}

}  // namespace crm::testing
