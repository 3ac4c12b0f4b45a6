#include "crm/logsim.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "crm/numeric.hpp"
#include "crm/parallel.hpp"
#include "crm/random.hpp"
#include "crm/text.hpp"

namespace crm {

namespace {
constexpr std::uint64_t kLoggingSubsetTag = 0x4c4f47u;
constexpr std::uint64_t kReplayOrderTag = 0x5250u;
constexpr std::uint64_t kReplaySampleTag = 0x5253u;
}  // namespace

PolicyParams fit_logistic(const Corpus& corpus, const LogisticFitOptions& opts) {
  if (corpus.examples.empty()) throw std::invalid_argument("fit_logistic: empty corpus");
  const std::size_t q = corpus.q, p = corpus.p;
  PolicyParams params(q, p);
  Matrix grad(q, p);
  std::vector<double> resid(q);
  const double step = opts.lr / static_cast<double>(corpus.size());
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    grad.fill(0.0);
    for (const auto& ex : corpus.examples) {
      const auto s = scores(params, ex.x);
      for (std::size_t j = 0; j < q; ++j) resid[j] = sigmoid(s[j]) - (ex.y_star[j] ? 1.0 : 0.0);
      for (std::size_t j = 0; j < q; ++j) {
        auto row = grad.row(j);
        for (const auto& f : ex.x.entries()) row[f.index] += resid[j] * f.value;
      }
    }
    params.weights().axpy(-step, grad);
  }
  return params;
}

PolicyParams train_logging_policy(const Corpus& corpus, double f, std::uint64_t seed,
                                  const LogisticFitOptions& opts) {
  if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("train_logging_policy: f must be in (0, 1]");
  if (corpus.examples.empty()) throw std::invalid_argument("train_logging_policy: empty corpus");
  const double fractions[] = {f};
  auto parts = split_indices(corpus.size(), fractions, derive_seed(seed, kLoggingSubsetTag));
  if (parts[0].empty()) throw std::invalid_argument("train_logging_policy: f-subset has no examples");
  return fit_logistic(subset(corpus, parts[0]), opts);
}

RawLoss hamming(const LabelVector& y_star, const LabelVector& y) {
  if (y_star.size() != y.size()) throw std::invalid_argument("hamming: label vectors differ in length");
  std::size_t diff = 0;
  for (std::size_t j = 0; j < y.size(); ++j) diff += (y_star[j] != y[j]) ? 1 : 0;
  return {static_cast<double>(diff)};
}

double translate_loss(RawLoss raw, LossBounds bounds) {
  if (!(bounds.upper > bounds.lower)) throw std::invalid_argument("translate_loss: degenerate loss range");
  return (raw.value - bounds.upper) / (bounds.upper - bounds.lower);
}

LoggedDataset generate_log(const Corpus& corpus, const PolicyParams& pi0, std::size_t replay_count,
                           std::uint64_t seed, std::size_t workers) {
  if (replay_count < 1) throw std::invalid_argument("generate_log: replay_count must be >= 1");
  if (corpus.examples.empty()) throw std::invalid_argument("generate_log: empty corpus");
  if (pi0.num_labels() != corpus.q) throw std::invalid_argument("generate_log: policy/corpus label mismatch");

  const std::size_t n = corpus.size();
  auto contexts = std::make_shared<std::vector<SparseVector>>();
  contexts->reserve(n);
  for (const auto& ex : corpus.examples) contexts->push_back(ex.x);

  LoggedDataset log;
  log.q = corpus.q;
  log.p = corpus.p;
  log.bounds = {0.0, static_cast<double>(corpus.q)};
  log.meta = {1.0, pi0.alpha(), replay_count, seed};
  log.records.resize(replay_count * n);

  std::vector<std::size_t> order(n);
  for (std::size_t pass = 0; pass < replay_count; ++pass) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(derive_seed(seed, kReplayOrderTag, pass));
    shuffler.shuffle(std::span<std::size_t>(order));
    BanditRecord* out = log.records.data() + pass * n;
    parallel_for(n, workers, [&](std::size_t pos) {
      const std::size_t i = order[pos];
      const auto& ex = corpus.examples[i];
      Rng rng(derive_seed(seed, kReplaySampleTag, pass, i));
      auto drawn = sample(pi0, ex.x, rng);
      const double loss = translate_loss(hamming(ex.y_star, drawn.y), log.bounds);
      out[pos] = BanditRecord{i, std::move(drawn.y), loss, drawn.propensity};
    });
  }
  log.contexts = std::move(contexts);
  return log;
}

PolicyParams scale_temperature(const PolicyParams& pi0, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("scale_temperature: alpha must be > 0");
  return pi0.with_alpha(alpha);
}

std::vector<LoggedDataset> split_log(const LoggedDataset& log, std::span<const double> fractions,
                                     std::uint64_t seed) {
  std::vector<LoggedDataset> out;
  for (const auto& part : split_indices(log.size(), fractions, seed)) {
    LoggedDataset piece;
    piece.contexts = log.contexts;
    piece.q = log.q;
    piece.p = log.p;
    piece.bounds = log.bounds;
    piece.meta = log.meta;
    piece.records.reserve(part.size());
    for (auto i : part) piece.records.push_back(log.records[i]);
    out.push_back(std::move(piece));
  }
  return out;
}

void write_log(const LoggedDataset& log, std::ostream& out) {
  nlohmann::ordered_json header = {
      {"format", "crm-log"},
      {"version", 1},
      {"q", log.q},
      {"p", log.p},
      {"loss_lower", log.bounds.lower},
      {"loss_upper", log.bounds.upper},
      {"f", log.meta.f},
      {"alpha", log.meta.alpha},
      {"replay_count", log.meta.replay_count},
      {"seed", log.meta.seed},
      {"index_base", 0},
  };
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& r = log.records[i];
    out << format_double(r.loss) << ' ' << format_double(r.propensity) << ' ' << r.y.to_bitstring();
    for (const auto& f : log.x(i).entries()) out << ' ' << f.index << ':' << format_double(f.value);
    out << '\n';
  }
}

LoggedDataset read_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing log header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("bad log header: ") + e.what());
  }
  if (header.value("format", "") != "crm-log" || header.value("version", 0) != 1)
    throw ParseError(1, "not a crm-log v1 file");

  LoggedDataset log;
  log.q = header.at("q").get<std::size_t>();
  log.p = header.at("p").get<std::size_t>();
  log.bounds = {header.at("loss_lower").get<double>(), header.at("loss_upper").get<double>()};
  log.meta = {header.at("f").get<double>(), header.at("alpha").get<double>(),
              header.at("replay_count").get<std::size_t>(), header.at("seed").get<std::uint64_t>()};

  auto contexts = std::make_shared<std::vector<SparseVector>>();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string loss_tok, prop_tok, bits_tok, tok;
    if (!(fields >> loss_tok >> prop_tok >> bits_tok)) throw ParseError(lineno, "truncated record");
    auto loss = parse_double(loss_tok);
    auto prop = parse_double(prop_tok);
    auto y = LabelVector::from_bitstring(bits_tok);
    if (!loss || !prop || !y) throw ParseError(lineno, "non-numeric field");
    if (!(*prop > 0.0 && *prop <= 1.0)) throw ParseError(lineno, "propensity outside (0, 1]");
    if (!(*loss >= -1.0 && *loss <= 0.0)) throw ParseError(lineno, "loss outside [-1, 0]");
    if (y->size() != log.q) throw ParseError(lineno, "label bitstring length != q");
    std::vector<Feature> features;
    while (fields >> tok) {
      auto colon = tok.find(':');
      if (colon == std::string::npos) throw ParseError(lineno, "expected idx:val");
      auto idx = parse_int<std::uint32_t>(std::string_view(tok).substr(0, colon));
      auto val = parse_double(std::string_view(tok).substr(colon + 1));
      if (!idx || !val) throw ParseError(lineno, "non-numeric feature '" + tok + "'");
      if (*idx >= log.p) throw ParseError(lineno, "feature index >= p");
      if (!features.empty() && *idx <= features.back().index)
        throw ParseError(lineno, "feature indices must be strictly increasing");
      features.push_back({*idx, *val});
    }
    log.records.push_back({contexts->size(), std::move(*y), *loss, *prop});
    contexts->emplace_back(std::move(features));
  }
  log.contexts = std::move(contexts);
  return log;
}

void write_log(const LoggedDataset& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_log(log, out);
}

LoggedDataset read_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_log(in);
}

}  // namespace crm
