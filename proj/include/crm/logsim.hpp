#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "crm/dataset.hpp"
#include "crm/policy.hpp"

namespace crm {

/// Range [lower, upper] of the raw loss before translation.
struct LossBounds {
  double lower = 0.0;
  double upper = 1.0;
};

struct RawLoss {
  double value = 0.0;
};

/// One logged interaction. `context` indexes LoggedDataset::contexts.
struct BanditRecord {
  std::size_t context = 0;
  LabelVector y;
  double loss = 0.0;        // translated, in [-1, 0]
  double propensity = 1.0;  // logging probability of y, in (0, 1]
};

struct LoggingMeta {
  double f = 1.0;
  double alpha = 1.0;
  std::size_t replay_count = 1;
  std::uint64_t seed = 0;
};

/// Propensity-logged bandit feedback. Contexts are shared between a log and
/// any splits taken from it.
struct LoggedDataset {
  std::shared_ptr<const std::vector<SparseVector>> contexts;
  std::vector<BanditRecord> records;
  std::size_t q = 0;
  std::size_t p = 0;
  LossBounds bounds;
  LoggingMeta meta;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  const SparseVector& x(std::size_t i) const { return (*contexts)[records[i].context]; }
};

struct LogisticFitOptions {
  std::size_t epochs = 1000;
  double lr = 0.1;
};

/// Independent per-label logistic regression, unregularized, fit by
/// full-batch gradient descent on the mean log loss starting from w = 0.
PolicyParams fit_logistic(const Corpus& corpus, const LogisticFitOptions& opts = {});

/// Logging policy fit on a seeded f-fraction of `corpus`.
PolicyParams train_logging_policy(const Corpus& corpus, double f, std::uint64_t seed,
                                  const LogisticFitOptions& opts = {});

/// Number of disagreeing labels; bounds are [0, q].
RawLoss hamming(const LabelVector& y_star, const LabelVector& y);

/// (raw − upper) / (upper − lower), mapping [lower, upper] onto [−1, 0].
double translate_loss(RawLoss raw, LossBounds bounds);

/// Replays `corpus` replay_count times, each pass in a seeded shuffled order,
/// sampling y ~ pi0(x) and logging translated Hamming loss with propensity.
/// Record k of pass r uses its own stream derived from (seed, r, example), so
/// the output is identical for any `workers`.
LoggedDataset generate_log(const Corpus& corpus, const PolicyParams& pi0, std::size_t replay_count,
                           std::uint64_t seed, std::size_t workers = 1);

/// Same weights, temperature set to `alpha`.
PolicyParams scale_temperature(const PolicyParams& pi0, double alpha);

/// Seeded record split; parts share the parent's contexts.
std::vector<LoggedDataset> split_log(const LoggedDataset& log, std::span<const double> fractions,
                                     std::uint64_t seed);

/// Log file: one JSON header line, then `loss propensity bits idx:val ...`
/// per record with 0-based feature indices.
void write_log(const LoggedDataset& log, std::ostream& out);
LoggedDataset read_log(std::istream& in);
void write_log(const LoggedDataset& log, const std::filesystem::path& path);
LoggedDataset read_log(const std::filesystem::path& path);

}  // namespace crm
