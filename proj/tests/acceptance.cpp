// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "evdl/checkpoint.hpp"
#include "evdl/classifier.hpp"
#include "evdl/comparison.hpp"
#include "evdl/decision.hpp"
#include "evdl/errors.hpp"
#include "evdl/evidential.hpp"
#include "evdl/losses.hpp"
#include "evdl/special_functions.hpp"
#include "http_scenario.hpp"
#include "metrics_fixtures.hpp"
#include "scenario.hpp"

using namespace evdl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Shared state for the criteria that train on the ambiguous synthetic set.
struct Run {
  scenario::Setup setup = scenario::ambiguous_two_cluster();
  ModelCheckpoint base;
  std::vector<Prediction> predictions;
  std::vector<Label> gold;

  const ModelCheckpoint& model() {
    if (predictions.empty()) {
      base = train(setup.train, setup.spec, setup.train_config, setup.loss, RiskMatrix{}).model;
      PersonaConfig all;
      all.theta = 1.0;
      predictions = predict_dataset(base, setup.test, all);
      gold = gold_labels(setup.test);
    }
    return base;
  }
};

Outcome loss_oracle() {
  const std::vector<double> grid = {1.0, 2.0, 5.0, 20.0};
  std::uint64_t seed = 1;
  double worst = 0.0;
  for (double a : grid) {
    for (double b : grid) {
      const auto ps = sample_beta(a, b, RngSeed{seed++}, 1000000);
      const auto op = BetaOpinion::from_parameters(a, b);
      for (Label y : {Label::Public, Label::Private}) {
        const double yy = to_int(y);
        double sb = 0.0, sb2 = 0.0, sc = 0.0, sc2 = 0.0;
        for (double p : ps) {
          const double brier = (p - yy) * (p - yy) + ((1.0 - p) - (1.0 - yy)) * ((1.0 - p) - (1.0 - yy));
          const double ce = -(yy * std::log(p) + (1.0 - yy) * std::log1p(-p));
          sb += brier;
          sb2 += brier * brier;
          sc += ce;
          sc2 += ce * ce;
        }
        const double n = static_cast<double>(ps.size());
        const double mb = sb / n, mc = sc / n;
        const double seb = std::sqrt((sb2 / n - mb * mb) / n);
        const double sec = std::sqrt((sc2 / n - mc * mc) / n);
        worst = std::max(worst, std::abs(expected_brier(op, y) - mb) / seb);
        worst = std::max(worst, std::abs(expected_cross_entropy(op, y) - mc) / sec);
      }
    }
  }
  return {worst <= 3.0, fmt("worst deviation %.2f standard errors", worst)};
}

Outcome kl_oracle() {
  double worst = 0.0;
  for (double a : {1.0, 2.0, 5.0, 10.0, 50.0}) {
    for (double b : {1.0, 2.0, 5.0, 10.0, 50.0}) {
      const double lb = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
      auto f = [&](double p) {
        const double log_pdf = (a - 1.0) * std::log(p) + (b - 1.0) * std::log1p(-p) - lb;
        return std::exp(log_pdf) * log_pdf;
      };
      const double q = integrate_unit_interval(f, 1e-10, 20000).value;
      worst = std::max(worst, std::abs(kl_to_uniform(BetaOpinion::from_parameters(a, b)) - q));
    }
  }
  return {worst < 1e-6, fmt("max |error| %.3g", worst)};
}

// Fourth-order central difference of f at step h.
double central_difference(const std::function<double(double)>& f, double h) {
  return (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h);
}

// Smallest |pre-activation| over the hidden units; ReLU has no derivative at 0.
double kink_margin(const Mlp& net, const ForwardTrace& trace) {
  double margin = INFINITY;
  for (std::size_t li = 0; li + 1 < net.layers().size(); ++li) {
    const auto& layer = net.layers()[li];
    for (int o = 0; o < layer.outputs; ++o) {
      double z = layer.bias[o];
      for (int i = 0; i < layer.inputs; ++i) z += layer.weights[o * layer.inputs + i] * trace.inputs[li][i];
      margin = std::min(margin, std::abs(z));
    }
  }
  return margin;
}

Outcome gradient_suite() {
  const LossKind kinds[] = {LossKind::ExpectedBrier, LossKind::ExpectedCrossEntropy};
  const RiskMode modes[] = {RiskMode::KlScaling, RiskMode::DirectRegularizer, RiskMode::Both};
  const int epochs[] = {0, 5, 20};
  Rng rng(RngSeed{2024});
  NetworkSpec spec;
  spec.input_dim = 3;
  spec.hidden_dims = {4, 3};
  double worst = 0.0;
  std::size_t checks = 0;
  const int configs = 100;
  for (int c = 0; c < configs; ++c) {
    const LossConfig cfg{kinds[c % 2], modes[(c / 2) % 3], 10};
    const int t = epochs[(c / 6) % 3];
    const RiskMatrix r(0.5 + 2.0 * rng.uniform(), 1.0 + 9.0 * rng.uniform());
    const Label y = rng.uniform() < 0.5 ? Label::Public : Label::Private;

    // Per-sample loss with respect to the logits.
    const Logits o{3.0 * rng.normal(), 3.0 * rng.normal()};
    const Logits g = loss_gradient_wrt_logits(o, y, r, t, cfg);
    for (int k = 0; k < 2; ++k) {
      const double fd = central_difference(
          [&](double d) {
            Logits p = o;
            p[k] += d;
            return loss_from_logits(p, y, r, t, cfg);
          },
          1e-3);
      worst = std::max(worst, relative_error(g[k], fd));
      ++checks;
    }

    // Whole network with respect to every weight and bias, at an input
    // away from the ReLU kinks.
    Mlp net = Mlp::glorot(spec, rng);
    for (auto& layer : net.layers()) {
      for (double& b : layer.bias) b = 0.3 * rng.normal();
    }
    std::vector<double> x(3);
    ForwardTrace trace;
    Logits out;
    do {
      for (double& v : x) v = rng.normal();
      out = net.forward(x, trace);
    } while (kink_margin(net, trace) < 1e-2);
    Gradients grads = net.zero_gradients();
    net.backward(trace, loss_gradient_wrt_logits(out, y, r, t, cfg), grads);
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
      for (int which = 0; which < 2; ++which) {
        const std::size_t n = which == 0 ? net.layers()[li].weights.size() : net.layers()[li].bias.size();
        for (std::size_t i = 0; i < n; ++i) {
          const double fd = central_difference(
              [&](double d) {
                Mlp m = net;
                (which == 0 ? m.layers()[li].weights : m.layers()[li].bias)[i] += d;
                return loss_from_logits(m.forward(x), y, r, t, cfg);
              },
              1e-4);
          const double an = which == 0 ? grads[li].weights[i] : grads[li].bias[i];
          worst = std::max(worst, relative_error(an, fd));
          ++checks;
        }
      }
    }
  }
  return {worst < 1e-4, fmt("%d configurations, %zu partials, max relative error %.2e", configs, checks, worst)};
}

Outcome annealing() {
  bool ok = annealing_coefficient(0, 10) == 0.0 && annealing_coefficient(5, 10) == 0.5 &&
            annealing_coefficient(10, 10) == 1.0 && annealing_coefficient(20, 10) == 1.0;
  const LossConfig cfg{LossKind::ExpectedBrier, RiskMode::KlScaling, 10};
  const RiskMatrix r(1.0, 10.0);
  const std::vector<EvidencePair> inputs = {{2.5, 4.0}, {0.3, 7.0}, {12.0, 1.0}};
  for (const auto& e : inputs) {
    for (Label y : {Label::Public, Label::Private}) {
      const double t0 = kl_regularizer(e, y, r, 0, cfg);
      const double t5 = kl_regularizer(e, y, r, 5, cfg);
      const double t10 = kl_regularizer(e, y, r, 10, cfg);
      ok = ok && t0 == 0.0 && t10 > 0.0 && t5 == 0.5 * t10;
      const double bare = sample_loss(e, y, r, 0, cfg);
      ok = ok && sample_loss(e, y, r, 10, cfg) == bare + t10 && bare == expected_brier(opinion_from_evidence(e), y);
    }
  }
  return {ok, "lambda_0 = 0 and the t=5 term is exactly half the t=10 term on 6 fixed inputs"};
}

Outcome uncertainty_gap(Run& run) {
  run.model();
  double wrong = 0.0, right = 0.0;
  std::size_t nw = 0, nr = 0;
  for (std::size_t i = 0; i < run.predictions.size(); ++i) {
    if (run.predictions[i].predicted_label == run.gold[i]) {
      right += run.predictions[i].uncertainty_u;
      ++nr;
    } else {
      wrong += run.predictions[i].uncertainty_u;
      ++nw;
    }
  }
  if (nw == 0 || nr == 0) return {false, "degenerate predictions"};
  const double gap = wrong / nw - right / nr;
  return {gap >= 0.05, fmt("mean u wrong %.4f, correct %.4f, gap %.4f (need >= 0.05)", wrong / nw, right / nr, gap)};
}

Outcome selective_lift(Run& run) {
  run.model();
  const std::vector<double> thetas = {0.5, 1.0};
  const auto rows = sweep_thresholds(run.predictions, run.gold, thetas);
  const std::vector<double> rates = {0.25};
  const auto drop = sweep_delegation_rates(run.predictions, run.gold, rates);
  if (!rows[0].metrics || !rows[1].metrics || !drop[0].metrics) return {false, "empty retained set"};
  const double at_half = rows[0].metrics->accuracy;
  const double unfiltered = rows[1].metrics->accuracy;
  const double after_drop = drop[0].metrics->accuracy;
  const bool ok = at_half - unfiltered >= 0.02 && after_drop > unfiltered;
  return {ok, fmt("unfiltered %.4f, theta=0.5 %.4f (coverage %.3f, lift %+.2f pp), 25%% delegated %.4f", unfiltered,
                  at_half, rows[0].coverage, 100.0 * (at_half - unfiltered), after_drop)};
}

Outcome persona_effect(Run& run) {
  run.model();
  const auto sensitive =
      train(run.setup.train, run.setup.spec, run.setup.train_config, run.setup.loss, RiskMatrix(1.0, 10.0)).model;
  PersonaConfig all;
  all.theta = 1.0;
  const auto base_m = compute_metrics(run.predictions, run.gold);
  const auto sens_m = compute_metrics(predict_dataset(sensitive, run.setup.test, all), run.gold);
  const bool ok = sens_m.private_class.recall > base_m.private_class.recall && base_m.accuracy - sens_m.accuracy < 0.03;
  return {ok, fmt("private recall %.4f -> %.4f, accuracy %.4f -> %.4f", base_m.private_class.recall,
                  sens_m.private_class.recall, base_m.accuracy, sens_m.accuracy)};
}

double fraction_uncertain(const ModelCheckpoint& m, const Dataset& ds) {
  std::size_t n = 0;
  for (const auto& ex : ds.examples) n += forward(m, ex.features).uncertainty > 0.7;
  return static_cast<double>(n) / static_cast<double>(ds.size());
}

Outcome round_two(Run& run) {
  const auto& base = run.model();
  const auto shift = scenario::persona_shift(run.setup);
  const double round1 = fraction_uncertain(base, shift.personal_eval);
  const double personal =
      fraction_uncertain(fine_tune(base, shift.personal_train, shift.finetune_config), shift.personal_eval);
  const double random =
      fraction_uncertain(fine_tune(base, shift.random_train, shift.finetune_config), shift.personal_eval);
  const bool ok = personal < round1 && round1 - personal > round1 - random;
  return {ok, fmt("fraction u > 0.7: round I %.4f, personal %.4f, random %.4f", round1, personal, random)};
}

Outcome baselines(Run& run) {
  ComparisonConfig cfg;
  cfg.spec = run.setup.spec;
  cfg.train = run.setup.train_config;
  cfg.loss = run.setup.loss;
  const auto report = compare_models(run.setup.train, run.setup.test, cfg);
  const auto gold = gold_labels(run.setup.test);
  const std::vector<std::string> names = {"evidential", "snn", "mc_dropout", "deep_ensemble"};
  if (report.models.size() != names.size()) return {false, "missing models"};

  bool emits = true;
  bool deterministic = true;
  bool matched = true;
  std::ostringstream detail;
  const auto& evid = report.models.front();
  const auto reference_errors = error_indicators(evid.predictions, gold);
  const double evid_acc = evid.at_matched_coverage ? evid.at_matched_coverage->accuracy : -1.0;
  detail << fmt("acc@50%% coverage evidential %.4f", evid_acc);
  for (std::size_t k = 0; k < report.models.size(); ++k) {
    const auto& m = report.models[k];
    emits = emits && m.name == names[k] && m.predictions.size() == gold.size();
    for (const auto& p : m.predictions) {
      emits = emits && p.p_bar >= 0.0 && p.p_bar <= 1.0 && p.entropy >= 0.0 && p.entropy <= 1.0;
    }
    if (k == 0) continue;
    const auto errors = error_indicators(m.predictions, gold);
    const RngSeed seed{cfg.train.seed.value + k};
    const double p1 = randomization_test(reference_errors, errors, cfg.randomization_iterations, seed);
    const double p2 = randomization_test(reference_errors, errors, cfg.randomization_iterations, seed);
    deterministic = deterministic && p1 == p2 && p1 == m.p_value_vs_evidential;
    const double acc = m.at_matched_coverage ? m.at_matched_coverage->accuracy : 2.0;
    matched = matched && evid.at_matched_coverage.has_value() && evid_acc >= acc;
    detail << fmt(", %s %.4f (p=%.4f)", m.name.c_str(), acc, m.p_value_vs_evidential);
  }
  detail << (emits ? "; outputs valid" : "; INVALID outputs") << (deterministic ? ", p-values deterministic" : ", p-values NOT deterministic")
         << (matched ? ", evidential >= every baseline" : ", evidential below a baseline at matched coverage");
  return {emits && deterministic && matched, detail.str()};
}

Outcome metrics_oracle() {
  std::size_t exact = 0;
  for (const auto& c : fixtures::kConfusionCases) {
    const auto m = metrics_from_confusion({c.tp, c.fp, c.fn, c.tn});
    exact += m.accuracy == c.accuracy && m.private_class.precision == c.private_precision &&
             m.private_class.recall == c.private_recall && m.private_class.f1 == c.private_f1 &&
             m.public_class.precision == c.public_precision && m.public_class.recall == c.public_recall &&
             m.public_class.f1 == c.public_f1 && m.precision == c.macro_precision && m.recall == c.macro_recall &&
             m.f1 == c.macro_f1;
  }
  return {exact == fixtures::kConfusionCases.size(), fmt("%zu of %zu matrices exact", exact, fixtures::kConfusionCases.size())};
}

Outcome persistence(Run& run) {
  const auto& model = run.model();
  const std::string bytes = serialize_checkpoint(model);
  const auto path = std::filesystem::temp_directory_path() / "evdl-acceptance.evdl";
  save_checkpoint(model, path);
  const auto back = load_checkpoint(path);
  std::filesystem::remove(path);
  bool ok = back.network == model.network && back.optimizer == model.optimizer && back.epoch_t == model.epoch_t &&
            serialize_checkpoint(back) == bytes;
  for (const auto& ex : run.setup.test.examples) {
    const auto a = forward(model, ex.features).logits;
    const auto b = forward(back, ex.features).logits;
    ok = ok && a == b;
  }

  const std::filesystem::path dir = EVDL_FIXTURE_DIR;
  const auto ds = load_dataset(dir / "annotated.jsonl");
  const std::vector<Label> want = {Label::Private, Label::Public,  Label::Private,
                                   Label::Private, Label::Public, Label::Private};
  bool labels = ds.size() == want.size();
  for (std::size_t i = 0; labels && i < want.size(); ++i) labels = ds.examples[i].resolved_label == want[i];
  std::size_t rejected = 0;
  for (const char* bad : {"wrong_dim.jsonl", "duplicate_id.jsonl", "malformed.jsonl", "bad_label.jsonl"}) {
    try {
      load_dataset(dir / bad);
    } catch (const FormatError&) {
      ++rejected;
    }
  }
  return {ok && labels && rejected == 4,
          fmt("checkpoint %s (%zu bytes), fixture labels %s, %zu of 4 bad fixtures rejected",
              ok ? "bit-exact" : "MISMATCH", bytes.size(), labels ? "as expected" : "WRONG", rejected)};
}

Outcome service_scenario(Run& run) {
  const Dataset stream = subsample(run.setup.test, 0.2, RngSeed{5});
  const auto dir = std::filesystem::temp_directory_path() / "evdl-acceptance-service";
  std::filesystem::remove_all(dir);
  const auto r = scenario::run_http_scenario(stream, dir, 0.4, {{"epochs", 20}, {"learning_rate", 0.01}});
  std::filesystem::remove_all(dir);
  if (!r.failure.empty()) return {false, r.failure};
  const bool ok = r.first_pass_delegations == r.stream_size && r.pending_after_first_pass == r.stream_size &&
                  r.personal_after_labeling == r.stream_size && r.finetune_state == "succeeded" &&
                  r.replay_delegations < r.first_pass_delegations;
  return {ok, fmt("%zu items: %zu delegated, %zu labeled, fine-tune %s, %zu delegated on replay", r.stream_size,
                  r.first_pass_delegations, r.personal_after_labeling, r.finetune_state.c_str(), r.replay_delegations)};
}

}  // namespace

int main() {
  Run run;
  struct Criterion {
    const char* name;
    double budget_seconds;  // 0 when the criterion has no runtime bound
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {"closed-form loss oracle", 60.0, loss_oracle},
      {"KL oracle", 10.0, kl_oracle},
      {"gradient suite", 60.0, gradient_suite},
      {"regularizer annealing", 0.0, annealing},
      {"uncertainty-error separation", 0.0, [&] { return uncertainty_gap(run); }},
      {"selective-accuracy lift", 0.0, [&] { return selective_lift(run); }},
      {"persona effect", 0.0, [&] { return persona_effect(run); }},
      {"Round II effect", 0.0, [&] { return round_two(run); }},
      {"baseline comparability", 0.0, [&] { return baselines(run); }},
      {"metrics oracle", 0.0, metrics_oracle},
      {"persistence", 0.0, [&] { return persistence(run); }},
      {"service scenario", 0.0, [&] { return service_scenario(run); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0.0 && secs >= c.budget_seconds) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", c.budget_seconds);
    }
    failures += !o.pass;
    std::printf("%s  %-30s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failures);
  return failures == 0 ? 0 : 1;
}
