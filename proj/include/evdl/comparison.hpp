#pragma once

#include <string>
#include <vector>

#include "evdl/baselines.hpp"
#include "evdl/decision.hpp"

namespace evdl {

struct ComparisonConfig {
  NetworkSpec spec;
  TrainConfig train;
  LossConfig loss;
  RiskMatrix risk;
  DropoutSpec dropout;
  EnsembleSpec ensemble;
  std::vector<double> entropy_thresholds = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  double matched_coverage = 0.5;
  std::size_t randomization_iterations = 10000;
};

struct ModelComparison {
  std::string name;  // evidential, snn, mc_dropout, deep_ensemble
  std::vector<Prediction> predictions;
  MetricsReport unfiltered;
  std::optional<MetricsReport> at_matched_coverage;  // lowest-entropy fraction
  std::vector<SweepRow> entropy_sweep;
  /// Paired randomization test against the evidential model (1.0 for itself).
  double p_value_vs_evidential = 1.0;
};

struct ComparisonReport {
  std::vector<ModelComparison> models;
};

/// Trains the evidential model and the three baselines on `train` and scores
/// them on `test` through the normalized-entropy channel. For baselines the
/// Prediction's uncertainty_u also carries the entropy.
ComparisonReport compare_models(const Dataset& train, const Dataset& test, const ComparisonConfig& cfg);

}  // namespace evdl
