#include "evdl/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evdl/errors.hpp"
#include "evdl/softmax.hpp"

namespace evdl {

std::string to_string(HeadKind head) {
  switch (head) {
    case HeadKind::Evidential:
      return "evidential";
    case HeadKind::SoftmaxCrossEntropy:
      return "softmax_ce";
    case HeadKind::SoftmaxBrier:
      return "softmax_brier";
  }
  return "evidential";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "evidential") return HeadKind::Evidential;
  if (s == "softmax_ce") return HeadKind::SoftmaxCrossEntropy;
  if (s == "softmax_brier") return HeadKind::SoftmaxBrier;
  throw DomainError("unknown head kind '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw DomainError("epochs must be >= 0");
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw DomainError("learning_rate must be positive");
  }
  if (!(lr_decay_per_epoch > 0.0 && lr_decay_per_epoch <= 1.0)) {
    throw DomainError("lr_decay_per_epoch must lie in (0, 1]");
  }
}

namespace {

// Separate streams for initialization and for shuffling/dropout.
RngSeed training_stream(RngSeed seed) { return {seed.value ^ 0x9E3779B97F4A7C15ULL}; }

}  // namespace

ModelCheckpoint initialize_model(const NetworkSpec& spec, HeadKind head, RngSeed seed,
                                 std::string feature_schema_id, const LossConfig& lc,
                                 const RiskMatrix& risk, double dropout_rate) {
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw DomainError("dropout rate must lie in [0, 1)");
  if (lc.anneal_horizon < 1) throw DomainError("anneal_horizon must be >= 1");
  Rng rng(seed);
  ModelCheckpoint model;
  model.head = head;
  model.dropout_rate = dropout_rate;
  model.network = Mlp::glorot(spec, rng);
  model.loss_config = lc;
  model.risk_matrix = risk;
  model.feature_schema_id = std::move(feature_schema_id);
  return model;
}

ModelCheckpoint zero_model(const NetworkSpec& spec, std::string feature_schema_id) {
  ModelCheckpoint model;
  model.network = Mlp(spec);
  model.feature_schema_id = std::move(feature_schema_id);
  return model;
}

ModelCheckpoint zero_head_model(const NetworkSpec& spec, RngSeed seed, std::string feature_schema_id) {
  ModelCheckpoint model = initialize_model(spec, HeadKind::Evidential, seed, std::move(feature_schema_id));
  DenseLayer& out = model.network.layers().back();
  std::fill(out.weights.begin(), out.weights.end(), 0.0);
  std::fill(out.bias.begin(), out.bias.end(), 0.0);
  return model;
}

EvidentialOutput evidential_output(const Logits& logits) {
  EvidentialOutput out;
  out.logits = logits;
  out.evidence = evidence_from_logits(logits);
  out.opinion = opinion_from_evidence(out.evidence);
  out.p_bar = expected_probability(out.opinion);
  out.uncertainty = out.opinion.uncertainty;
  return out;
}

EvidentialOutput forward(const ModelCheckpoint& model, std::span<const double> features) {
  return evidential_output(model.network.forward(features));
}

std::vector<EvidentialOutput> forward_batch(const ModelCheckpoint& model, const Dataset& ds) {
  std::vector<EvidentialOutput> out;
  out.reserve(ds.size());
  for (const auto& ex : ds.examples) out.push_back(forward(model, ex.features));
  return out;
}

double private_probability(HeadKind head, const Logits& logits) {
  if (head == HeadKind::Evidential) return evidential_output(logits).p_bar;
  return softmax_private_probability(logits);
}

double head_loss(const ModelCheckpoint& model, const Logits& logits, Label y, Logits* grad) {
  switch (model.head) {
    case HeadKind::Evidential:
      if (grad != nullptr) {
        *grad = loss_gradient_wrt_logits(logits, y, model.risk_matrix, model.epoch_t,
                                         model.loss_config);
      }
      return loss_from_logits(logits, y, model.risk_matrix, model.epoch_t, model.loss_config);
    case HeadKind::SoftmaxCrossEntropy:
      if (grad != nullptr) *grad = softmax_cross_entropy_gradient(logits, y);
      return softmax_cross_entropy(logits, y);
    case HeadKind::SoftmaxBrier:
      if (grad != nullptr) *grad = softmax_brier_gradient(logits, y);
      return softmax_brier(logits, y);
  }
  throw DomainError("unknown head kind");
}

TrainResult continue_training(ModelCheckpoint model, const Dataset& ds, const TrainConfig& tc) {
  tc.validate();
  if (ds.empty()) throw DomainError("training dataset is empty");
  if (ds.feature_dim != model.spec().input_dim) {
    throw DomainError("dataset feature_dim " + std::to_string(ds.feature_dim) +
                      " does not match network input_dim " + std::to_string(model.spec().input_dim));
  }
  for (const auto& ex : ds.examples) {
    if (static_cast<int>(ex.features.size()) != model.spec().input_dim) {
      throw DomainError("record '" + ex.id + "' has the wrong feature length");
    }
  }
  if (!model.optimizer) model.optimizer = AdamState::for_network(model.network);

  TrainResult result;
  Rng rng(training_stream(tc.seed));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  ForwardTrace trace;
  Gradients grads = model.network.zero_gradients();

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = tc.learning_rate * std::pow(tc.lr_decay_per_epoch, epoch);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      for (auto& g : grads) {
        std::fill(g.weights.begin(), g.weights.end(), 0.0);
        std::fill(g.bias.begin(), g.bias.end(), 0.0);
      }
      for (std::size_t k = start; k < end; ++k) {
        const LabeledExample& ex = ds.examples[order[k]];
        const Logits logits = model.network.forward(ex.features, trace, model.dropout_rate, &rng);
        Logits logit_grad{};
        loss_sum += head_loss(model, logits, ex.resolved_label, &logit_grad);
        const bool predicted_private = private_probability(model.head, logits) > 0.5;
        if (predicted_private == (ex.resolved_label == Label::Private)) ++correct;
        model.network.backward(trace, logit_grad, grads);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) {
        for (auto& w : g.weights) w *= scale;
        for (auto& b : g.bias) b *= scale;
      }
      model.optimizer->apply(model.network, grads, lr);
    }
    result.history.push_back({model.epoch_t, loss_sum / static_cast<double>(ds.size()),
                              static_cast<double>(correct) / static_cast<double>(ds.size())});
    ++model.epoch_t;
  }
  result.model = std::move(model);
  return result;
}

TrainResult train(const Dataset& ds, const NetworkSpec& spec, const TrainConfig& tc,
                  const LossConfig& lc, const RiskMatrix& risk) {
  tc.validate();
  if (ds.empty()) throw DomainError("training dataset is empty");
  if (ds.feature_dim != spec.input_dim) {
    throw DomainError("dataset feature_dim does not match network input_dim");
  }
  return continue_training(
      initialize_model(spec, HeadKind::Evidential, tc.seed, ds.schema_id, lc, risk), ds, tc);
}

ModelCheckpoint fine_tune(const ModelCheckpoint& base, const Dataset& personal,
                          const TrainConfig& tc) {
  if (personal.schema_id != base.feature_schema_id) {
    throw DomainError("personal dataset schema '" + personal.schema_id +
                      "' does not match model schema '" + base.feature_schema_id + "'");
  }
  tc.validate();
  if (tc.epochs == 0) return base;
  return continue_training(base, personal, tc).model;
}

}  // namespace evdl
