#include "crm/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "crm/random.hpp"
#include "crm/text.hpp"

namespace crm {

SparseVector::SparseVector(std::vector<Feature> entries) : entries_(std::move(entries)) {
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    if (!std::isfinite(entries_[k].value))
      throw std::invalid_argument("SparseVector: non-finite value");
    if (k > 0 && entries_[k].index <= entries_[k - 1].index)
      throw std::invalid_argument("SparseVector: indices must be strictly increasing");
  }
}

double SparseVector::squared_norm() const {
  double s = 0.0;
  for (const auto& f : entries_) s += f.value * f.value;
  return s;
}

LabelVector::LabelVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_) b = b ? 1 : 0;
}

LabelVector LabelVector::from_mask(std::size_t q, std::uint64_t mask) {
  LabelVector y(q);
  for (std::size_t j = 0; j < q; ++j) y.bits_[j] = (mask >> j) & 1u;
  return y;
}

std::size_t LabelVector::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

std::string LabelVector::to_bitstring() const {
  std::string s(bits_.size(), '0');
  for (std::size_t j = 0; j < bits_.size(); ++j)
    if (bits_[j]) s[j] = '1';
  return s;
}

std::optional<LabelVector> LabelVector::from_bitstring(std::string_view s) {
  std::vector<std::uint8_t> bits(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s[j] == '1')
      bits[j] = 1;
    else if (s[j] != '0')
      return std::nullopt;
  }
  return LabelVector(std::move(bits));
}

double Corpus::mean_label_cardinality() const {
  if (examples.empty()) return 0.0;
  double s = 0.0;
  for (const auto& ex : examples) s += static_cast<double>(ex.y_star.count());
  return s / static_cast<double>(examples.size());
}

namespace {

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

struct RawExample {
  std::vector<std::size_t> labels;
  std::vector<Feature> features;
};

}  // namespace

Corpus parse_multilabel(std::istream& in, const ParseOptions& opts) {
  std::vector<RawExample> raw;
  std::size_t max_label_plus_one = 0;
  std::size_t max_index_plus_one = 0;
  std::string line;
  std::size_t lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;

    auto tokens = tokenize(line);
    RawExample ex;
    std::size_t t = 0;
    // A leading token without ':' is the label list; a line starting with
    // whitespace, or whose first token is a feature, has no labels.
    if (first == 0 && tokens[0].find(':') == std::string_view::npos) {
      std::string_view labels = tokens[0];
      std::size_t pos = 0;
      while (pos <= labels.size()) {
        auto comma = labels.find(',', pos);
        if (comma == std::string_view::npos) comma = labels.size();
        auto tok = labels.substr(pos, comma - pos);
        auto id = parse_int<std::size_t>(tok);
        if (!id) throw ParseError(lineno, "bad label id '" + std::string(tok) + "'");
        if (opts.num_labels && *id >= *opts.num_labels)
          throw ParseError(lineno, "label id " + std::to_string(*id) + " >= declared label count " +
                                       std::to_string(*opts.num_labels));
        ex.labels.push_back(*id);
        max_label_plus_one = std::max(max_label_plus_one, *id + 1);
        pos = comma + 1;
      }
      t = 1;
    }
    for (; t < tokens.size(); ++t) {
      auto tok = tokens[t];
      auto colon = tok.find(':');
      if (colon == std::string_view::npos)
        throw ParseError(lineno, "expected idx:val, got '" + std::string(tok) + "'");
      auto idx = parse_int<std::uint64_t>(tok.substr(0, colon));
      auto val = parse_double(tok.substr(colon + 1));
      if (!idx || !val) throw ParseError(lineno, "non-numeric token '" + std::string(tok) + "'");
      if (!std::isfinite(*val)) throw ParseError(lineno, "non-finite value in '" + std::string(tok) + "'");
      std::uint64_t zero_based = *idx;
      if (opts.feature_base == IndexBase::one) {
        if (*idx == 0) throw ParseError(lineno, "feature index 0 in 1-based input");
        zero_based = *idx - 1;
      }
      if (zero_based >= std::numeric_limits<std::uint32_t>::max())
        throw ParseError(lineno, "feature index too large");
      if (opts.num_features && zero_based >= *opts.num_features)
        throw ParseError(lineno, "feature index " + std::to_string(*idx) + " exceeds declared feature count");
      if (!ex.features.empty() && zero_based <= ex.features.back().index)
        throw ParseError(lineno, "feature indices must be strictly increasing");
      ex.features.push_back({static_cast<std::uint32_t>(zero_based), *val});
      max_index_plus_one = std::max<std::size_t>(max_index_plus_one, zero_based + 1);
    }
    raw.push_back(std::move(ex));
  }

  if (raw.empty()) throw ParseError(lineno, "corpus has no examples");

  Corpus corpus;
  corpus.name = opts.name;
  corpus.q = opts.num_labels.value_or(max_label_plus_one);
  corpus.p = std::max(max_index_plus_one, opts.num_features.value_or(0));
  if (corpus.q == 0) throw ParseError(lineno, "corpus has no labels");
  corpus.examples.reserve(raw.size());
  for (auto& r : raw) {
    LabelVector y(corpus.q);
    for (auto id : r.labels) y.set(id, true);
    corpus.examples.push_back({SparseVector(std::move(r.features)), std::move(y)});
  }
  return corpus;
}

Corpus load_multilabel(const std::filesystem::path& path, ParseOptions opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  if (opts.name.empty()) opts.name = path.stem().string();
  return parse_multilabel(in, opts);
}

void serialize_multilabel(const Corpus& corpus, std::ostream& out, IndexBase feature_base) {
  const std::uint64_t offset = feature_base == IndexBase::one ? 1 : 0;
  for (const auto& ex : corpus.examples) {
    bool first = true;
    for (std::size_t j = 0; j < ex.y_star.size(); ++j) {
      if (!ex.y_star[j]) continue;
      if (!first) out << ',';
      out << j;
      first = false;
    }
    // No labels: start the line with a space so the first feature is not read
    // as a label list.
    if (first) out << ' ';
    for (const auto& f : ex.x.entries()) out << ' ' << (f.index + offset) << ':' << format_double(f.value);
    out << '\n';
  }
}

std::vector<std::vector<std::size_t>> split_indices(std::size_t n, std::span<const double> fractions,
                                                    std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("split: empty corpus");
  if (fractions.empty()) throw std::invalid_argument("split: no fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split: fractions must be positive");
    total += f;
  }
  if (total > 1.0 + 1e-12) throw std::invalid_argument("split: fractions sum to more than 1");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5350u));
  rng.shuffle(std::span<std::size_t>(order));

  const double dn = static_cast<double>(n);
  const auto grand = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(total * dn)));
  std::vector<std::vector<std::size_t>> parts;
  std::size_t taken = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    std::size_t size = static_cast<std::size_t>(std::floor(fractions[k] * dn));
    if (k + 1 == fractions.size()) size = std::max(size, grand - std::min(grand, taken));
    size = std::min(size, n - taken);
    parts.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(taken),
                       order.begin() + static_cast<std::ptrdiff_t>(taken + size));
    taken += size;
  }
  return parts;
}

Corpus subset(const Corpus& corpus, std::span<const std::size_t> indices) {
  Corpus out;
  out.p = corpus.p;
  out.q = corpus.q;
  out.name = corpus.name;
  out.examples.reserve(indices.size());
  for (auto i : indices) out.examples.push_back(corpus.examples.at(i));
  return out;
}

std::vector<Corpus> split(const Corpus& corpus, std::span<const double> fractions, std::uint64_t seed) {
  std::vector<Corpus> out;
  for (const auto& part : split_indices(corpus.size(), fractions, seed)) out.push_back(subset(corpus, part));
  return out;
}

}  // namespace crm
