#include "evdl/comparison.hpp"

namespace evdl {

namespace {

Prediction probabilistic_prediction(const std::string& id, const ProbabilisticPrediction& p) {
  PersonaConfig everything_acted;
  everything_acted.theta = 1.0;
  return make_prediction(id, p.p, p.entropy, everything_acted);
}

ModelComparison summarize(std::string name, std::vector<Prediction> preds, const std::vector<Label>& gold,
                          const ComparisonConfig& cfg) {
  ModelComparison m;
  m.name = std::move(name);
  m.unfiltered = compute_metrics(preds, gold);
  m.at_matched_coverage = metrics_at_coverage(preds, gold, cfg.matched_coverage, UncertaintyChannel::Entropy);
  m.entropy_sweep = sweep_thresholds(preds, gold, cfg.entropy_thresholds, UncertaintyChannel::Entropy);
  m.predictions = std::move(preds);
  return m;
}

}  // namespace

ComparisonReport compare_models(const Dataset& train_set, const Dataset& test, const ComparisonConfig& cfg) {
  const std::vector<Label> gold = gold_labels(test);
  ComparisonReport report;

  {
    const auto model = train(train_set, cfg.spec, cfg.train, cfg.loss, cfg.risk).model;
    PersonaConfig persona;
    persona.risk_matrix = cfg.risk;
    persona.theta = 1.0;
    report.models.push_back(summarize("evidential", predict_dataset(model, test, persona), gold, cfg));
  }
  {
    const auto model = snn_train(train_set, cfg.spec, cfg.train);
    std::vector<Prediction> preds;
    for (const auto& ex : test.examples) preds.push_back(probabilistic_prediction(ex.id, snn_predict(model, ex.features)));
    report.models.push_back(summarize("snn", std::move(preds), gold, cfg));
  }
  {
    const auto model = mc_dropout_train(train_set, cfg.spec, cfg.train, cfg.dropout);
    std::vector<Prediction> preds;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto& ex = test.examples[i];
      const auto mc = mc_dropout_predict(model, ex.features, cfg.dropout, {cfg.train.seed.value + 7919 * (i + 1)});
      preds.push_back(probabilistic_prediction(ex.id, {mc.mean_p, mc.entropy}));
    }
    report.models.push_back(summarize("mc_dropout", std::move(preds), gold, cfg));
  }
  {
    const auto members = ensemble_train(train_set, cfg.spec, cfg.train, cfg.ensemble);
    std::vector<Prediction> preds;
    for (const auto& ex : test.examples) {
      preds.push_back(probabilistic_prediction(ex.id, ensemble_predict(members, ex.features)));
    }
    report.models.push_back(summarize("deep_ensemble", std::move(preds), gold, cfg));
  }

  const auto reference_errors = error_indicators(report.models.front().predictions, gold);
  for (std::size_t k = 1; k < report.models.size(); ++k) {
    const auto errors = error_indicators(report.models[k].predictions, gold);
    report.models[k].p_value_vs_evidential =
        randomization_test(reference_errors, errors, cfg.randomization_iterations, {cfg.train.seed.value + k});
  }
  return report;
}

}  // namespace evdl
