// crm_cli: corpus validation, log simulation, single-method training and
// the full experiment protocol.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crm/dataset.hpp"
#include "crm/estimator.hpp"
#include "crm/harness.hpp"
#include "crm/learner.hpp"
#include "crm/logsim.hpp"
#include "crm/modelsel.hpp"
#include "crm/policy.hpp"
#include "crm/text.hpp"

namespace fs = std::filesystem;
using namespace crm;
using ojson = nlohmann::ordered_json;

namespace {

struct CorpusOptions {
  std::string train;
  std::string test;
  std::string name;
  bool zero_based = false;
  std::optional<std::size_t> num_labels;
  std::optional<std::size_t> num_features;

  ParseOptions parse_options() const {
    ParseOptions o;
    o.feature_base = zero_based ? IndexBase::zero : IndexBase::one;
    o.num_labels = num_labels;
    o.num_features = num_features;
    o.name = name;
    return o;
  }
};

void add_corpus_flags(CLI::App* cmd, CorpusOptions& o, bool need_test) {
  cmd->add_option("--train", o.train, "Training corpus (LibSVM multi-label)")->required()->check(CLI::ExistingFile);
  auto* t = cmd->add_option("--test", o.test, "Test corpus")->check(CLI::ExistingFile);
  if (need_test) t->required();
  cmd->add_option("--name", o.name, "Dataset name in outputs (default: training file stem)");
  cmd->add_flag("--zero-based", o.zero_based, "Feature indices start at 0 (default 1)");
  cmd->add_option("--num-labels", o.num_labels, "Declared label count q");
  cmd->add_option("--num-features", o.num_features, "Declared feature count p");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    const auto a = tok.find_first_not_of(" \t");
    const auto b = tok.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(tok.substr(a, b - a + 1));
  }
  return out;
}

std::vector<double> parse_reals(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& t : split_list(s)) {
    auto v = parse_double(t);
    if (!v) throw CLI::ValidationError(what, "not a number: '" + t + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw CLI::ValidationError(what, "empty list");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& t : split_list(s)) {
    auto v = parse_int<std::uint64_t>(t);
    if (!v) throw CLI::ValidationError("--seed-list", "not an integer: '" + t + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw CLI::ValidationError("--seed-list", "empty list");
  return out;
}

std::vector<Method> parse_methods(const std::string& s) {
  std::vector<Method> out;
  for (const auto& t : split_list(s)) {
    auto m = parse_method(t);
    if (!m) throw CLI::ValidationError("--methods", "unknown method '" + t + "'");
    out.push_back(*m);
  }
  if (out.empty()) throw CLI::ValidationError("--methods", "empty list");
  return out;
}

void ensure_dir(const fs::path& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

ojson corpus_json(const Corpus& c) {
  std::size_t nnz = 0;
  for (const auto& ex : c.examples) nnz += ex.x.nnz();
  return {{"name", c.name},
          {"examples", c.size()},
          {"features", c.p},
          {"labels", c.q},
          {"mean_label_cardinality", c.mean_label_cardinality()},
          {"mean_nnz", static_cast<double>(nnz) / static_cast<double>(c.size())}};
}

/// Flags shared by `experiment` and `sweep`.
struct ExperimentFlags {
  CorpusOptions corpus;
  ExperimentSpec spec;
  std::string seed_list;
  std::string methods;
  std::string c_values;
  std::string out_dir = "results";
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& e) {
  add_corpus_flags(cmd, e.corpus, true);
  auto& s = e.spec;
  cmd->add_option("--f", s.f, "Fraction of training data for the logging policy")->capture_default_str();
  cmd->add_option("--replay", s.replay_count, "Passes over the training set when logging")->capture_default_str();
  cmd->add_option("--alpha", s.alpha, "Logging policy temperature")->capture_default_str();
  cmd->add_option("--seed-list", e.seed_list, "Comma-separated seeds (default 1..10)");
  cmd->add_option("--methods", e.methods, "Comma-separated subset of pi0,IPS-B,POEM-B,IPS-S,POEM-S,CRF");
  cmd->add_option("--c-values", e.c_values, "Comma-separated c grid (lambda = c * lambda*)");
  cmd->add_option("--val-fraction", s.validation_fraction, "Held-out share of the log")->capture_default_str();
  cmd->add_option("--clip-upper", s.grid.M_rule.upper, "Upper propensity percentile for M")->capture_default_str();
  cmd->add_option("--clip-lower", s.grid.M_rule.lower, "Lower propensity percentile for M")->capture_default_str();
  cmd->add_option("--logging-epochs", s.logging_fit.epochs, "Logging policy fit epochs")->capture_default_str();
  cmd->add_option("--logging-lr", s.logging_fit.lr, "Logging policy fit learning rate")->capture_default_str();
  cmd->add_option("--skyline-epochs", s.skyline_fit.epochs, "CRF skyline fit epochs")->capture_default_str();
  cmd->add_option("--skyline-lr", s.skyline_fit.lr, "CRF skyline fit learning rate")->capture_default_str();
  cmd->add_option("--batch-epochs", s.batch.max_epochs, "Batch optimizer iterations")->capture_default_str();
  cmd->add_option("--batch-lr", s.batch.lr, "Batch optimizer initial step")->capture_default_str();
  cmd->add_option("--stochastic-epochs", s.stochastic.max_epochs, "Stochastic optimizer epochs")->capture_default_str();
  cmd->add_option("--stochastic-lr", s.stochastic.lr, "AdaGrad base learning rate")->capture_default_str();
  cmd->add_option("--minibatch", s.stochastic.minibatch, "Stochastic minibatch size")->capture_default_str();
  cmd->add_option("--patience", s.stochastic.patience, "Epochs without progressive-validation gain")->capture_default_str();
  cmd->add_option("--workers", s.workers, "Worker threads")->capture_default_str();
  cmd->add_option("--out-dir", e.out_dir, "Output directory")->capture_default_str();
}

/// "scene_train" -> "scene".
std::string dataset_name(std::string stem) {
  for (const std::string suffix : {"_train", "-train", ".train"})
    if (stem.size() > suffix.size() && stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0)
      return stem.substr(0, stem.size() - suffix.size());
  return stem;
}

std::pair<Corpus, Corpus> load_pair(ExperimentFlags& e) {
  const auto opts = e.corpus.parse_options();
  auto train = load_multilabel(e.corpus.train, opts);
  auto test_opts = opts;
  // Both splits must agree on q; p may differ and is widened downstream.
  test_opts.num_labels = e.corpus.num_labels.value_or(train.q);
  auto test = load_multilabel(e.corpus.test, test_opts);
  if (test.q > train.q) {
    auto again = opts;
    again.num_labels = test.q;
    train = load_multilabel(e.corpus.train, again);
  }
  if (e.spec.dataset.empty()) e.spec.dataset = e.corpus.name.empty() ? dataset_name(train.name) : e.corpus.name;
  return {std::move(train), std::move(test)};
}

void finish_spec(ExperimentFlags& e) {
  if (!e.seed_list.empty()) e.spec.seeds = parse_seeds(e.seed_list);
  if (!e.methods.empty()) e.spec.methods = parse_methods(e.methods);
  if (!e.c_values.empty()) e.spec.grid.c_values = parse_reals(e.c_values, "--c-values");
  e.spec.validate();
}

ojson spec_json(const ExperimentSpec& s) {
  ojson methods = ojson::array();
  for (auto m : s.methods) methods.push_back(method_name(m));
  return {{"dataset", s.dataset},
          {"f", s.f},
          {"replay_count", s.replay_count},
          {"alpha", s.alpha},
          {"seeds", s.seeds},
          {"methods", methods},
          {"c_values", s.grid.c_values},
          {"validation_fraction", s.validation_fraction}};
}

int cmd_parse(const CorpusOptions& o, const std::string& out) {
  const auto c = load_multilabel(o.train, o.parse_options());
  const auto j = corpus_json(c);
  if (!out.empty()) {
    open_out(out) << j.dump(2) << '\n';
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct LogsimFlags {
  CorpusOptions corpus;
  double f = 0.05;
  std::size_t replay = 4;
  double alpha = 1.0;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::size_t logging_epochs = 1000;
  double logging_lr = 0.1;
  std::string out;
  std::string policy_out;
};

int cmd_logsim(const LogsimFlags& a) {
  const auto train = load_multilabel(a.corpus.train, a.corpus.parse_options());
  LogisticFitOptions fit{a.logging_epochs, a.logging_lr};
  const auto pi0 = scale_temperature(train_logging_policy(train, a.f, a.seed, fit), a.alpha);
  auto log = generate_log(train, pi0, a.replay, a.seed, a.workers);
  log.meta.f = a.f;
  write_log(log, fs::path(a.out));
  if (!a.policy_out.empty()) save_policy(pi0, fs::path(a.policy_out));
  double mean_loss = 0.0;
  for (const auto& r : log.records) mean_loss += r.loss;
  mean_loss /= static_cast<double>(log.size());
  const auto cc = clip_constant(log);
  ojson j = {{"records", log.size()},
             {"labels", log.q},
             {"features", log.p},
             {"mean_translated_loss", mean_loss},
             {"clip_M", cc.M},
             {"max_over_min_propensity", cc.max_over_min}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct TrainFlags {
  std::string log;
  std::string method = "POEM-S";
  std::string pi0;
  std::string test;
  bool zero_based = false;
  std::optional<double> M;
  std::optional<double> lambda;
  std::string c_values;
  double val_fraction = 0.25;
  std::uint64_t seed = 1;
  std::size_t epochs = 0;
  double lr = 0.0;
  std::size_t minibatch = 100;
  std::size_t workers = 1;
  std::string policy_out;
  std::string trace_out;
  std::string report_out;
};

int cmd_train(const TrainFlags& a) {
  const auto method = parse_method(a.method);
  if (!method || *method == Method::pi0 || *method == Method::crf)
    throw CLI::ValidationError("--method", "train supports IPS-B, IPS-S, POEM-B, POEM-S");
  const bool batch = *method == Method::ips_batch || *method == Method::poem_batch;
  const bool poem = *method == Method::poem_batch || *method == Method::poem_stochastic;

  const auto log = read_log(fs::path(a.log));
  if (log.empty()) throw std::runtime_error("log has no records");
  const double fr[] = {1.0 - a.val_fraction, a.val_fraction};
  const auto parts = split_log(log, fr, derive_seed(a.seed, 0x5653u));
  const auto& log_train = parts[0];
  const auto& log_val = parts[1];

  HyperGrid grid;
  if (!a.c_values.empty()) grid.c_values = parse_reals(a.c_values, "--c-values");
  if (a.pi0.empty()) {
    grid = calibrate_grid(log_train, grid);
  } else {
    grid = calibrate_grid(log_train, load_policy(fs::path(a.pi0)), grid);
  }
  if (a.M) grid.M = *a.M;

  const ExperimentSpec defaults;
  CrmConfig cfg = batch ? defaults.batch : defaults.stochastic;
  if (a.epochs > 0) cfg.max_epochs = a.epochs;
  if (a.lr > 0.0) cfg.lr = a.lr;
  cfg.minibatch = a.minibatch;
  cfg.M = grid.M;
  cfg.seed = a.seed;
  const Optimizer opt = batch ? Optimizer::batch : Optimizer::stochastic;

  PolicyParams w;
  ojson j;
  j["method"] = method_name(*method);
  j["records_train"] = log_train.size();
  j["records_validation"] = log_val.size();
  j["M"] = grid.M;
  j["lambda_star"] = grid.lambda_star;
  j["lambda_star_fallback"] = grid.lambda_star_fallback;
  nlohmann::json report;
  if (poem && !a.lambda) {
    auto res = grid_search(log_train, log_val, grid, opt, a.seed, cfg, a.workers);
    w = std::move(res.policy);
    report = res.report;
    if (res.report.all_failed) throw std::runtime_error("every grid point failed");
    j["selected_c"] = res.report.best().c;
    j["lambda"] = res.report.best().lambda;
    j["validation"] = res.report.best().validation;
  } else {
    cfg.lambda = poem ? *a.lambda : 0.0;
    const auto cand = train_candidate(log_train, log_val, opt, cfg, w);
    report = cand;
    if (cand.failed) throw std::runtime_error("training failed: " + cand.stop_reason);
    j["lambda"] = cfg.lambda;
    j["validation"] = cand.validation;
  }
  cfg.lambda = j["lambda"].get<double>();
  j["train_objective"] = crm_objective(log_train, w, cfg);
  j["risk"] = ojson::parse(nlohmann::json(risk_report(log_train, w, cfg.M)).dump());

  if (!a.trace_out.empty()) {
    PolicyParams init(log.q, log.p);
    auto [w2, trace] = batch ? train_batch(log_train, cfg, init) : train_stochastic(log_train, cfg, init);
    auto out = open_out(a.trace_out);
    trace.write_csv(out);
  }
  if (!a.test.empty()) {
    ParseOptions po;
    po.feature_base = a.zero_based ? IndexBase::zero : IndexBase::one;
    po.num_labels = log.q;
    auto test = load_multilabel(a.test, po);
    if (test.p > w.num_features()) {
      Matrix wide(w.num_labels(), test.p);
      for (std::size_t r = 0; r < w.num_labels(); ++r)
        for (std::size_t c = 0; c < w.num_features(); ++c) wide(r, c) = w.weights()(r, c);
      w = PolicyParams(std::move(wide), w.alpha());
    }
    j["expected_test_loss"] = evaluate_expected(test, w);
    j["map_test_loss"] = evaluate_map(test, w);
  }
  if (!a.policy_out.empty()) save_policy(w, fs::path(a.policy_out));
  if (!a.report_out.empty()) open_out(a.report_out) << report.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return 0;
}

void write_table(const fs::path& dir, const ExperimentResult& r, const ojson& summary) {
  {
    auto out = open_out(dir / "results.csv");
    write_results_csv(r.rows, out);
  }
  {
    auto out = open_out(dir / "timings.csv");
    write_timings_csv(r.rows, out);
  }
  open_out(dir / "selection.json") << r.selection.dump(2) << '\n';
  open_out(dir / "summary.json") << summary.dump(2) << '\n';
}

int cmd_experiment(ExperimentFlags& e) {
  finish_spec(e);
  auto [train, test] = load_pair(e);
  const auto result = run_experiment(e.spec, train, test);
  ojson summary;
  summary["spec"] = spec_json(e.spec);
  summary["train"] = corpus_json(train);
  summary["test"] = corpus_json(test);
  const auto body = summary_json(result);
  summary["methods"] = body["methods"];
  summary["paired_tests"] = body["paired_tests"];
  const fs::path dir(e.out_dir);
  ensure_dir(dir);
  write_table(dir, result, summary);
  std::cout << body.dump(2) << '\n';
  for (const auto& row : result.rows)
    if (row.status != "ok") std::cerr << "warning: " << row.method << " seed " << row.seed << ": " << row.status << '\n';
  return 0;
}

int cmd_sweep(ExperimentFlags& e, const std::string& axis_s, const std::string& values_s) {
  finish_spec(e);
  const auto axis = parse_axis(axis_s);
  if (!axis) throw CLI::ValidationError("--axis", "expected replay, fraction or temperature");
  const auto values = parse_reals(values_s, "--values");
  auto [train, test] = load_pair(e);
  const auto points = sweep(e.spec, *axis, values, train, test);
  const fs::path dir(e.out_dir);
  ensure_dir(dir);
  {
    auto out = open_out(dir / "sweep.csv");
    write_sweep_csv(*axis, points, out);
  }
  {
    auto out = open_out(dir / "timings.csv");
    out << "axis,value,dataset,method,seed,train_seconds\n";
    for (const auto& pt : points)
      for (const auto& r : pt.result.rows)
        out << axis_name(*axis) << ',' << format_double(pt.value) << ',' << r.dataset << ',' << r.method << ','
            << r.seed << ',' << format_double(r.train_seconds) << '\n';
  }
  ojson summary;
  summary["spec"] = spec_json(e.spec);
  summary["axis"] = axis_name(*axis);
  summary["points"] = ojson::array();
  for (const auto& pt : points) {
    auto body = summary_json(pt.result);
    summary["points"].push_back({{"value", pt.value}, {"methods", body["methods"]}, {"paired_tests", body["paired_tests"]}});
  }
  open_out(dir / "summary.json") << summary.dump(2) << '\n';
  std::cout << summary["points"].dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual risk minimization from logged bandit feedback"};
  app.require_subcommand(1);

  CorpusOptions parse_opts;
  std::string parse_out;
  auto* parse_cmd = app.add_subcommand("parse", "Validate a corpus and print its statistics");
  parse_cmd->add_option("--train,--input", parse_opts.train, "Corpus file")->required()->check(CLI::ExistingFile);
  parse_cmd->add_flag("--zero-based", parse_opts.zero_based, "Feature indices start at 0 (default 1)");
  parse_cmd->add_option("--num-labels", parse_opts.num_labels, "Declared label count q");
  parse_cmd->add_option("--num-features", parse_opts.num_features, "Declared feature count p");
  parse_cmd->add_option("--out", parse_out, "Write the statistics JSON here too");

  LogsimFlags ls;
  auto* logsim_cmd = app.add_subcommand("logsim", "Train a logging policy and write a logged dataset");
  add_corpus_flags(logsim_cmd, ls.corpus, false);
  logsim_cmd->add_option("--f", ls.f, "Fraction of training data for the logging policy")->capture_default_str();
  logsim_cmd->add_option("--replay", ls.replay, "Passes over the training set")->capture_default_str();
  logsim_cmd->add_option("--alpha", ls.alpha, "Logging policy temperature")->capture_default_str();
  logsim_cmd->add_option("--seed", ls.seed, "Seed")->capture_default_str();
  logsim_cmd->add_option("--workers", ls.workers, "Worker threads")->capture_default_str();
  logsim_cmd->add_option("--logging-epochs", ls.logging_epochs, "Logging policy fit epochs")->capture_default_str();
  logsim_cmd->add_option("--logging-lr", ls.logging_lr, "Logging policy fit learning rate")->capture_default_str();
  logsim_cmd->add_option("--out", ls.out, "Log file to write")->required();
  logsim_cmd->add_option("--policy-out", ls.policy_out, "Also write the logging policy");

  TrainFlags tr;
  auto* train_cmd = app.add_subcommand("train", "Train one method on a logged dataset");
  train_cmd->add_option("--log", tr.log, "Log file from logsim")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--method", tr.method, "IPS-B, IPS-S, POEM-B or POEM-S")->capture_default_str();
  train_cmd->add_option("--pi0", tr.pi0, "Logging policy file (for lambda*)")->check(CLI::ExistingFile);
  train_cmd->add_option("--test", tr.test, "Test corpus to evaluate on")->check(CLI::ExistingFile);
  train_cmd->add_flag("--zero-based", tr.zero_based, "Test corpus feature indices start at 0");
  train_cmd->add_option("--M", tr.M, "Clip constant (default: percentile rule)");
  train_cmd->add_option("--lambda", tr.lambda, "Fixed lambda for POEM (skips the grid)");
  train_cmd->add_option("--c-values", tr.c_values, "Comma-separated c grid");
  train_cmd->add_option("--val-fraction", tr.val_fraction, "Held-out share of the log")->capture_default_str();
  train_cmd->add_option("--seed", tr.seed, "Seed")->capture_default_str();
  train_cmd->add_option("--epochs", tr.epochs, "Max epochs (default per optimizer)");
  train_cmd->add_option("--lr", tr.lr, "Learning rate (default per optimizer)");
  train_cmd->add_option("--minibatch", tr.minibatch, "Minibatch size")->capture_default_str();
  train_cmd->add_option("--workers", tr.workers, "Worker threads for the grid")->capture_default_str();
  train_cmd->add_option("--policy-out", tr.policy_out, "Write the trained policy");
  train_cmd->add_option("--trace-out", tr.trace_out, "Write the training trace CSV");
  train_cmd->add_option("--report-out", tr.report_out, "Write the selection report JSON");

  ExperimentFlags ex;
  auto* exp_cmd = app.add_subcommand("experiment", "Run the full supervised-to-bandit protocol");
  add_experiment_flags(exp_cmd, ex);

  ExperimentFlags sw;
  std::string axis, values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Repeat the experiment along one protocol axis");
  add_experiment_flags(sweep_cmd, sw);
  sweep_cmd->add_option("--axis", axis, "replay, fraction or temperature")->required();
  sweep_cmd->add_option("--values", values, "Comma-separated axis values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*parse_cmd) return cmd_parse(parse_opts, parse_out);
    if (*logsim_cmd) return cmd_logsim(ls);
    if (*train_cmd) return cmd_train(tr);
    if (*exp_cmd) return cmd_experiment(ex);
    if (*sweep_cmd) return cmd_sweep(sw, axis, values);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
