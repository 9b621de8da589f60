// Command-line entry points: synth, train, finetune, evaluate, sweep, compare, serve.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "evdl/checkpoint.hpp"
#include "evdl/classifier.hpp"
#include "evdl/comparison.hpp"
#include "evdl/dataset.hpp"
#include "evdl/decision.hpp"
#include "evdl/errors.hpp"
#include "evdl/results_csv.hpp"
#include "evdl/service.hpp"

namespace {

using nlohmann::json;
using namespace evdl;

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Options {
  std::string data;
  std::string test;
  std::string model;
  std::string out;
  std::uint64_t seed = 42;
  int epochs = 10;
  int batch_size = 64;
  double lr = 1e-3;
  double lr_decay = 0.95;
  std::string loss = "brier";
  std::string risk_mode = "kl";
  double r01 = 1.0;
  double r10 = 1.0;
  double theta = 0.7;
  std::string channel = "u";
  std::vector<double> rates;
  std::vector<double> thetas;
  double dropout_rate = 0.05;
  int passes = 5;
  int members = 5;
  int port = 8080;
  std::vector<int> hidden = {64, 32};
  // synth
  std::size_t n_per_class = 500;
  std::size_t dim = 8;
  double separation = 3.0;
  double overlap = 0.17;
  double train_fraction = 0.8;
};

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("evdl");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("EVDL_LOG")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

TrainConfig train_config(const Options& o) {
  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.learning_rate = o.lr;
  tc.lr_decay_per_epoch = o.lr_decay;
  tc.seed = {o.seed};
  tc.validate();
  return tc;
}

PersonaConfig persona(const Options& o) {
  PersonaConfig p;
  p.theta = o.theta;
  p.risk_matrix = RiskMatrix(o.r01, o.r10);
  p.validate();
  return p;
}

void write_text(const std::string& path, const std::string& text) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw IoError("cannot write '" + path + "'");
  const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
  std::fclose(f);
  if (!ok) throw IoError("failed writing '" + path + "'");
}

void print_history(const std::vector<EpochStats>& history) {
  std::printf("epoch,mean_loss,accuracy\n");
  for (const auto& h : history) std::printf("%d,%.17g,%.17g\n", h.epoch, h.mean_loss, h.accuracy);
}

json histogram_group_json(const HistogramGroup& g) {
  return {{"count", g.count}, {"mean_uncertainty", g.mean_uncertainty}, {"percentages", g.percentages}};
}

int run_synth(const Options& o) {
  SyntheticSpec spec = default_synthetic_spec(o.dim, o.separation, o.overlap, {o.seed});
  spec.n_per_class = o.n_per_class;
  const Dataset ds = synthesize_dataset(spec);
  if (o.test.empty()) {
    save_dataset(ds, o.out);
  } else {
    auto [train_set, test_set] = split_dataset(ds, o.train_fraction, {o.seed});
    save_dataset(train_set, o.out);
    save_dataset(test_set, o.test);
  }
  return 0;
}

int run_train(const Options& o) {
  const TrainConfig tc = train_config(o);
  LossConfig lc;
  lc.loss_kind = loss_kind_from_string(o.loss);
  lc.risk_mode = risk_mode_from_string(o.risk_mode);
  const RiskMatrix risk(o.r01, o.r10);
  const Dataset ds = load_dataset(o.data);
  NetworkSpec spec;
  spec.input_dim = ds.feature_dim;
  spec.hidden_dims = o.hidden;
  const auto result = train(ds, spec, tc, lc, risk);
  save_checkpoint(result.model, o.out);
  print_history(result.history);
  return 0;
}

int run_finetune(const Options& o, bool risk_given) {
  const TrainConfig tc = train_config(o);
  ModelCheckpoint base = load_checkpoint(o.model);
  if (risk_given) base.risk_matrix = RiskMatrix(o.r01, o.r10);
  const Dataset personal = load_dataset(o.data, base.feature_schema_id);
  if (personal.feature_dim != base.spec().input_dim) {
    throw DomainError("personal dataset feature_dim does not match the model");
  }
  const auto result = continue_training(base, personal, tc);
  save_checkpoint(tc.epochs == 0 ? base : result.model, o.out);
  print_history(result.history);
  return 0;
}

int run_evaluate(const Options& o) {
  const ModelCheckpoint model = load_checkpoint(o.model);
  const Dataset ds = load_dataset(o.data);
  const PersonaConfig p = persona(o);
  const auto preds = predict_dataset(model, ds, p);
  const auto gold = gold_labels(ds);
  const MetricsReport all = compute_metrics(preds, gold);
  std::size_t delegated = 0;
  std::vector<Prediction> acted;
  std::vector<Label> acted_gold;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].action == Action::Delegate) {
      ++delegated;
    } else {
      acted.push_back(preds[i]);
      acted_gold.push_back(gold[i]);
    }
  }
  const auto hist = uncertainty_histogram(preds, gold, 10);
  json report = {
      {"items", preds.size()},
      {"theta", p.theta},
      {"unfiltered", metrics_to_json(all)},
      {"delegated", delegated},
      {"acted", acted.empty() ? json(nullptr) : metrics_to_json(compute_metrics(acted, acted_gold))},
      {"histogram",
       {{"bins", hist.bins},
        {"private", {{"failed", histogram_group_json(hist.private_class.failed)},
                     {"successful", histogram_group_json(hist.private_class.successful)}}},
        {"public", {{"failed", histogram_group_json(hist.public_class.failed)},
                    {"successful", histogram_group_json(hist.public_class.successful)}}}}}};
  const std::string text = report.dump(2) + "\n";
  if (o.out.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_text(o.out, text);
  }
  return 0;
}

std::vector<double> default_thetas() {
  std::vector<double> t;
  for (int i = 0; i <= 10; ++i) t.push_back(i / 10.0);
  return t;
}

int run_sweep(const Options& o) {
  const ModelCheckpoint model = load_checkpoint(o.model);
  const Dataset ds = load_dataset(o.data);
  const auto preds = predict_dataset(model, ds, persona(o));
  const auto gold = gold_labels(ds);
  const UncertaintyChannel channel = channel_from_string(o.channel);
  const auto rows = o.rates.empty()
                        ? sweep_thresholds(preds, gold, o.thetas.empty() ? default_thetas() : o.thetas, channel)
                        : sweep_delegation_rates(preds, gold, o.rates, channel);
  if (o.out.empty()) {
    std::fputs(format_results_csv(rows).c_str(), stdout);
  } else {
    export_results(rows, o.out);
  }
  return 0;
}

int run_compare(const Options& o) {
  Dataset train_set = load_dataset(o.data);
  Dataset test_set = load_dataset(o.test);
  ComparisonConfig cfg;
  cfg.spec.input_dim = train_set.feature_dim;
  cfg.spec.hidden_dims = o.hidden;
  cfg.train = train_config(o);
  cfg.loss.loss_kind = loss_kind_from_string(o.loss);
  cfg.loss.risk_mode = risk_mode_from_string(o.risk_mode);
  cfg.risk = RiskMatrix(o.r01, o.r10);
  cfg.dropout = {o.dropout_rate, o.passes};
  cfg.ensemble.members = o.members;
  if (!o.thetas.empty()) cfg.entropy_thresholds = o.thetas;
  const auto report = compare_models(train_set, test_set, cfg);
  json out = json::array();
  for (const auto& m : report.models) {
    out.push_back({{"model", m.name},
                   {"unfiltered", metrics_to_json(m.unfiltered)},
                   {"matched_coverage", cfg.matched_coverage},
                   {"at_matched_coverage",
                    m.at_matched_coverage ? metrics_to_json(*m.at_matched_coverage) : json(nullptr)},
                   {"entropy_sweep", sweep_rows_to_json(m.entropy_sweep)},
                   {"p_value_vs_evidential", m.p_value_vs_evidential}});
  }
  const std::string text = out.dump(2) + "\n";
  if (o.out.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_text(o.out, text);
  }
  return 0;
}

int run_serve(const Options& o, bool theta_given) {
  ServiceConfig cfg;
  cfg.state_dir = o.out;
  cfg.finetune_defaults = train_config(o);
  if (!o.data.empty()) cfg.evaluation_set = load_dataset(o.data);
  std::optional<ModelCheckpoint> model;
  if (!o.model.empty()) model = load_checkpoint(o.model);
  AssistantService service(cfg, std::move(model));
  if (theta_given) {
    const auto r = service.set_persona({{"theta", o.theta}});
    if (r.status != 200) throw DomainError(r.body.dump());
  }
  httplib::Server server;
  service.bind_routes(server);
  spdlog::warn("serving on 127.0.0.1:{} with state in {}", o.port, o.out);
  if (!server.listen("127.0.0.1", o.port)) throw IoError("cannot listen on port " + std::to_string(o.port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  Options o;
  CLI::App app{"Evidential privacy assistant: uncertainty-aware private/public classification"};
  app.require_subcommand(1);

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Random seed")->capture_default_str(); };
  auto add_training = [&](CLI::App* c) {
    c->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str()->check(CLI::NonNegativeNumber);
    c->add_option("--batch-size", o.batch_size, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--lr", o.lr, "Initial learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--lr-decay", o.lr_decay, "Multiplicative learning-rate decay per epoch")->capture_default_str();
    add_seed(c);
  };
  auto add_loss = [&](CLI::App* c) {
    c->add_option("--loss", o.loss, "Expected loss")->check(CLI::IsMember({"brier", "ce"}))->capture_default_str();
    c->add_option("--risk-mode", o.risk_mode, "Risk regularization")
        ->check(CLI::IsMember({"kl", "direct", "both"}))
        ->capture_default_str();
    c->add_option("--hidden", o.hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();
  };
  auto add_risk = [&](CLI::App* c) {
    c->add_option("--r01", o.r01, "Cost of labelling public content private")->check(CLI::NonNegativeNumber)->capture_default_str();
    c->add_option("--r10", o.r10, "Cost of labelling private content public")->check(CLI::NonNegativeNumber)->capture_default_str();
  };
  auto add_theta = [&](CLI::App* c) {
    return c->add_option("--theta", o.theta, "Delegation threshold on uncertainty")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-cluster dataset");
  synth->add_option("--out", o.out, "Output dataset (train split when --test is given)")->required();
  synth->add_option("--test", o.test, "Also write a stratified test split here");
  synth->add_option("--n-per-class", o.n_per_class, "Items per class")->capture_default_str();
  synth->add_option("--dim", o.dim, "Feature dimension")->capture_default_str();
  synth->add_option("--separation", o.separation, "Distance between cluster means")->capture_default_str();
  synth->add_option("--overlap", o.overlap, "Fraction drawn from the other cluster")->capture_default_str();
  synth->add_option("--train-fraction", o.train_fraction, "Train share when splitting")->capture_default_str();
  add_seed(synth);

  auto* train_cmd = app.add_subcommand("train", "Train an evidential classifier");
  train_cmd->add_option("--data", o.data, "Training dataset (JSON lines)")->required();
  train_cmd->add_option("--out", o.out, "Checkpoint to write")->required();
  add_training(train_cmd);
  add_loss(train_cmd);
  add_risk(train_cmd);

  auto* finetune = app.add_subcommand("finetune", "Continue training on personal labels");
  finetune->add_option("--model", o.model, "Base checkpoint")->required();
  finetune->add_option("--data", o.data, "Personal dataset")->required();
  finetune->add_option("--out", o.out, "Checkpoint to write")->required();
  add_training(finetune);
  auto* r01_ft = finetune->add_option("--r01", o.r01, "Override cost of public->private")->check(CLI::NonNegativeNumber);
  auto* r10_ft = finetune->add_option("--r10", o.r10, "Override cost of private->public")->check(CLI::NonNegativeNumber);

  auto* evaluate = app.add_subcommand("evaluate", "Metrics, delegation and uncertainty histograms");
  evaluate->add_option("--model", o.model, "Checkpoint")->required();
  evaluate->add_option("--data", o.data, "Evaluation dataset")->required();
  evaluate->add_option("--out", o.out, "Report file (stdout when omitted)");
  add_theta(evaluate);
  add_seed(evaluate);

  auto* sweep = app.add_subcommand("sweep", "Threshold or delegation-rate sweep as CSV");
  sweep->add_option("--model", o.model, "Checkpoint")->required();
  sweep->add_option("--data", o.data, "Evaluation dataset")->required();
  sweep->add_option("--out", o.out, "CSV file (stdout when omitted)");
  sweep->add_option("--channel", o.channel, "Uncertainty channel")->check(CLI::IsMember({"u", "entropy"}))->capture_default_str();
  auto* thetas_opt = sweep->add_option("--thetas", o.thetas, "Comma-separated thresholds")->delimiter(',')->check(CLI::Range(0.0, 1.0));
  sweep->add_option("--rates", o.rates, "Comma-separated delegation rates")->delimiter(',')->excludes(thetas_opt);
  add_seed(sweep);

  auto* compare = app.add_subcommand("compare", "Evidential model vs SNN, MC dropout and deep ensemble");
  compare->add_option("--data", o.data, "Training dataset")->required();
  compare->add_option("--test", o.test, "Test dataset")->required();
  compare->add_option("--out", o.out, "Report file (stdout when omitted)");
  compare->add_option("--thetas", o.thetas, "Entropy thresholds")->delimiter(',')->check(CLI::Range(0.0, 1.0));
  compare->add_option("--dropout-rate", o.dropout_rate, "MC dropout rate")->capture_default_str();
  compare->add_option("--passes", o.passes, "MC dropout passes")->capture_default_str();
  compare->add_option("--members", o.members, "Ensemble members")->capture_default_str();
  add_training(compare);
  add_loss(compare);
  add_risk(compare);

  auto* serve = app.add_subcommand("serve", "Run the assistant HTTP service");
  serve->add_option("--model", o.model, "Initial checkpoint (otherwise restored from --out)");
  serve->add_option("--data", o.data, "Evaluation dataset for /metrics and /sweeps");
  serve->add_option("--out", o.out, "State directory")->required();
  serve->add_option("--port", o.port, "Listen port")->capture_default_str();
  auto* theta_serve = add_theta(serve);
  add_training(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*synth) return run_synth(o);
    if (*train_cmd) return run_train(o);
    if (*finetune) return run_finetune(o, r01_ft->count() + r10_ft->count() > 0);
    if (*evaluate) return run_evaluate(o);
    if (*sweep) return run_sweep(o);
    if (*compare) return run_compare(o);
    if (*serve) return run_serve(o, theta_serve->count() > 0);
  } catch (const DomainError& e) {
    spdlog::error("{}", e.what());
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitValidation;
}
