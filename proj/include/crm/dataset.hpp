#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crm {

struct Feature {
  std::uint32_t index;
  double value;

  friend bool operator==(const Feature&, const Feature&) = default;
};

/// Sparse feature vector with strictly increasing 0-based indices and
/// finite values.
class SparseVector {
 public:
  SparseVector() = default;
  /// Throws std::invalid_argument if the entries violate the ordering or
  /// finiteness invariants.
  explicit SparseVector(std::vector<Feature> entries);

  std::span<const Feature> entries() const { return entries_; }
  std::size_t nnz() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  /// One past the largest index, 0 for the empty vector.
  std::size_t dimension_bound() const {
    return entries_.empty() ? 0 : entries_.back().index + std::size_t{1};
  }
  double squared_norm() const;

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  std::vector<Feature> entries_;
};

/// Fixed-length bit vector over the q labels.
class LabelVector {
 public:
  LabelVector() = default;
  explicit LabelVector(std::size_t q) : bits_(q, 0) {}
  explicit LabelVector(std::vector<std::uint8_t> bits);

  /// Bit j of `mask` becomes label j. Handy for enumerating {0,1}^q.
  static LabelVector from_mask(std::size_t q, std::uint64_t mask);

  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t j) const { return bits_[j] != 0; }
  void set(std::size_t j, bool on) { bits_[j] = on ? 1 : 0; }
  std::size_t count() const;
  std::span<const std::uint8_t> bits() const { return bits_; }

  /// "0110..." with label 0 first.
  std::string to_bitstring() const;
  static std::optional<LabelVector> from_bitstring(std::string_view s);

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

struct SupervisedExample {
  SparseVector x;
  LabelVector y_star;

  friend bool operator==(const SupervisedExample&, const SupervisedExample&) = default;
};

struct Corpus {
  std::vector<SupervisedExample> examples;
  std::size_t p = 0;  // feature count
  std::size_t q = 0;  // label count
  std::string name;

  std::size_t size() const { return examples.size(); }
  double mean_label_cardinality() const;
};

enum class IndexBase { zero, one };

struct ParseOptions {
  IndexBase feature_base = IndexBase::one;
  /// Declared label count; labels >= this are rejected. Inferred when unset.
  std::optional<std::size_t> num_labels;
  /// Declared feature count; the inferred count is raised to this.
  std::optional<std::size_t> num_features;
  std::string name;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads the LibSVM multi-label text format:
///   `l1,l2,... idx:val idx:val ...`
/// Label ids are 0-based; feature indices follow `opts.feature_base` and are
/// normalized to 0-based. `#` starts a comment line, blank lines are skipped.
Corpus parse_multilabel(std::istream& in, const ParseOptions& opts = {});
Corpus load_multilabel(const std::filesystem::path& path, ParseOptions opts = {});

void serialize_multilabel(const Corpus& corpus, std::ostream& out,
                          IndexBase feature_base = IndexBase::one);

/// Seeded permutation of the example indices, cut into consecutive parts.
/// Part k has floor(fractions[k] * n) examples, except the last which takes
/// round(sum(fractions) * n) minus what the earlier parts took.
std::vector<std::vector<std::size_t>> split_indices(std::size_t n,
                                                    std::span<const double> fractions,
                                                    std::uint64_t seed);

std::vector<Corpus> split(const Corpus& corpus, std::span<const double> fractions,
                          std::uint64_t seed);

Corpus subset(const Corpus& corpus, std::span<const std::size_t> indices);

}  // namespace crm
