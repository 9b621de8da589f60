#include "evdl/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "evdl/errors.hpp"

namespace evdl {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

// ln(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_finite(const Logits& logits) {
  if (!std::isfinite(logits[0]) || !std::isfinite(logits[1])) throw DomainError("logits must be finite");
}

}  // namespace

double softmax_private_probability(const Logits& logits) {
  check_finite(logits);
  return sigmoid(logits[1] - logits[0]);
}

double softmax_cross_entropy(const Logits& logits, Label y) {
  check_finite(logits);
  const double margin = logits[1] - logits[0];
  return y == Label::Private ? softplus(-margin) : softplus(margin);
}

Logits softmax_cross_entropy_gradient(const Logits& logits, Label y) {
  const double residual = softmax_private_probability(logits) - to_int(y);
  return {-residual, residual};
}

double softmax_brier(const Logits& logits, Label y) {
  const double diff = softmax_private_probability(logits) - to_int(y);
  return 2.0 * diff * diff;
}

Logits softmax_brier_gradient(const Logits& logits, Label y) {
  const double p = softmax_private_probability(logits);
  const double d = 4.0 * (p - to_int(y)) * p * (1.0 - p);
  return {-d, d};
}

void DropoutSpec::validate() const {
  if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("dropout rate must lie in [0, 1)");
  if (passes < 1) throw DomainError("dropout passes must be >= 1");
}

void EnsembleSpec::validate() const {
  if (members < 1) throw DomainError("ensemble needs at least one member");
  if (!member_seed_offsets.empty() && static_cast<int>(member_seed_offsets.size()) != members) {
    throw DomainError("member_seed_offsets must have one entry per member");
  }
}

ModelCheckpoint snn_train(const Dataset& ds, const NetworkSpec& spec, const TrainConfig& tc) {
  tc.validate();
  auto model = initialize_model(spec, HeadKind::SoftmaxCrossEntropy, tc.seed, ds.schema_id);
  return continue_training(std::move(model), ds, tc).model;
}

ProbabilisticPrediction snn_predict(const ModelCheckpoint& model, std::span<const double> features) {
  const double p = softmax_private_probability(model.network.forward(features));
  return {p, normalized_entropy(p)};
}

ModelCheckpoint mc_dropout_train(const Dataset& ds, const NetworkSpec& spec, const TrainConfig& tc,
                                 const DropoutSpec& d) {
  tc.validate();
  d.validate();
  auto model = initialize_model(spec, HeadKind::SoftmaxCrossEntropy, tc.seed, ds.schema_id, {}, {},
                                d.rate);
  return continue_training(std::move(model), ds, tc).model;
}

McDropoutPrediction mc_dropout_predict(const ModelCheckpoint& model, std::span<const double> features,
                                       const DropoutSpec& d, RngSeed seed) {
  d.validate();
  Rng rng(seed);
  ForwardTrace trace;
  McDropoutPrediction out;
  double sum = 0.0;
  for (int pass = 0; pass < d.passes; ++pass) {
    const Logits logits = model.network.forward(features, trace, d.rate, &rng);
    const double p = private_probability(model.head, logits);
    out.per_pass_p.push_back(p);
    sum += p;
  }
  out.mean_p = sum / static_cast<double>(d.passes);
  out.entropy = normalized_entropy(out.mean_p);
  return out;
}

std::vector<ModelCheckpoint> ensemble_train(const Dataset& ds, const NetworkSpec& spec,
                                            const TrainConfig& tc, const EnsembleSpec& e) {
  tc.validate();
  e.validate();
  std::vector<ModelCheckpoint> members;
  for (int m = 0; m < e.members; ++m) {
    const std::uint64_t offset =
        e.member_seed_offsets.empty() ? static_cast<std::uint64_t>(m) : e.member_seed_offsets[m];
    TrainConfig member_tc = tc;
    member_tc.seed = {tc.seed.value + offset};
    auto model = initialize_model(spec, HeadKind::SoftmaxBrier, member_tc.seed, ds.schema_id);
    members.push_back(continue_training(std::move(model), ds, member_tc).model);
  }
  return members;
}

ProbabilisticPrediction ensemble_predict(std::span<const ModelCheckpoint> models,
                                         std::span<const double> features) {
  if (models.empty()) throw DomainError("ensemble_predict: empty model list");
  std::vector<double> ps;
  ps.reserve(models.size());
  for (const auto& m : models) ps.push_back(private_probability(m.head, m.network.forward(features)));
  // Summing in sorted order makes the mean independent of member order.
  std::sort(ps.begin(), ps.end());
  double sum = 0.0;
  for (double v : ps) sum += v;
  const double p = sum / static_cast<double>(models.size());
  return {p, normalized_entropy(p)};
}

ProbabilisticPrediction evidential_predict(const ModelCheckpoint& model,
                                           std::span<const double> features) {
  const auto out = forward(model, features);
  return {out.p_bar, normalized_entropy(out.p_bar)};
}

}  // namespace evdl
