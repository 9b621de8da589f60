#pragma once

#include <span>
#include <vector>

#include "evdl/classifier.hpp"
#include "evdl/softmax.hpp"

namespace evdl {

/// Probability of the private class with its normalized entropy.
struct ProbabilisticPrediction {
  double p = 0.5;
  double entropy = 1.0;
};

struct DropoutSpec {
  double rate = 0.05;
  int passes = 5;

  void validate() const;
};

struct EnsembleSpec {
  int members = 5;
  /// Added to the base seed for each member; defaults to 0..members-1.
  std::vector<std::uint64_t> member_seed_offsets;

  void validate() const;
};

/// Standard softmax network trained with binary cross-entropy.
ModelCheckpoint snn_train(const Dataset& ds, const NetworkSpec& spec, const TrainConfig& tc);
ProbabilisticPrediction snn_predict(const ModelCheckpoint& model, std::span<const double> features);

/// Softmax network trained with dropout after each hidden non-linearity.
ModelCheckpoint mc_dropout_train(const Dataset& ds, const NetworkSpec& spec, const TrainConfig& tc,
                                 const DropoutSpec& d);

struct McDropoutPrediction {
  double mean_p = 0.5;
  double entropy = 1.0;
  std::vector<double> per_pass_p;
};

McDropoutPrediction mc_dropout_predict(const ModelCheckpoint& model, std::span<const double> features,
                                       const DropoutSpec& d, RngSeed seed);

/// Members differ only in their seeds; each minimizes the softmax Brier score.
std::vector<ModelCheckpoint> ensemble_train(const Dataset& ds, const NetworkSpec& spec,
                                            const TrainConfig& tc, const EnsembleSpec& e);
ProbabilisticPrediction ensemble_predict(std::span<const ModelCheckpoint> models,
                                         std::span<const double> features);

/// The evidential model's (p-bar, normalized entropy of p-bar).
ProbabilisticPrediction evidential_predict(const ModelCheckpoint& model,
                                           std::span<const double> features);

}  // namespace evdl
