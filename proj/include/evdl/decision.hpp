#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evdl/classifier.hpp"
#include "evdl/losses.hpp"
#include "evdl/special_functions.hpp"

namespace evdl {

enum class Action { Share, NotShare, Delegate };

std::string to_string(Action a);

struct PersonaConfig {
  RiskMatrix risk_matrix;
  /// Delegate when uncertainty > theta.
  double theta = 0.7;
  std::string persona_name = "default";

  void validate() const;
};

struct Prediction {
  std::string item_id;
  double p_bar = 0.5;
  double uncertainty_u = 1.0;
  double entropy = 1.0;
  Label predicted_label = Label::Public;
  Action action = Action::Delegate;
};

/// Private iff p_bar > 0.5; an exact tie is public.
Label predicted_label(double p_bar);

/// Delegate iff u > theta, otherwise NotShare for private and Share for public.
Action decide(double p_bar, double uncertainty, const PersonaConfig& persona);

Prediction make_prediction(std::string item_id, double p_bar, double uncertainty,
                           const PersonaConfig& persona);

/// Evidential predictions over a dataset under a persona.
std::vector<Prediction> predict_dataset(const ModelCheckpoint& model, const Dataset& ds,
                                        const PersonaConfig& persona);
std::vector<Label> gold_labels(const Dataset& ds);

struct ConfusionCounts {
  std::size_t true_private = 0;   // TP, private is the positive class
  std::size_t false_private = 0;  // FP
  std::size_t false_public = 0;   // FN
  std::size_t true_public = 0;    // TN

  std::size_t total() const { return true_private + false_private + false_public + true_public; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

/// Zero denominators yield 0 for the affected ratio.
struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;  // macro average over the two classes
  double recall = 0.0;
  double f1 = 0.0;
  ClassMetrics private_class;
  ClassMetrics public_class;
  ConfusionCounts confusion;
  double coverage = 1.0;
};

MetricsReport metrics_from_confusion(const ConfusionCounts& c);

/// Metrics over predicted labels; coverage is the fraction not delegated.
MetricsReport compute_metrics(std::span<const Prediction> predictions, std::span<const Label> gold);

enum class UncertaintyChannel { Uncertainty, Entropy };

std::string to_string(UncertaintyChannel c);
UncertaintyChannel channel_from_string(const std::string& s);
double channel_value(const Prediction& p, UncertaintyChannel c);

/// One sweep point. `metrics` is empty when nothing was retained.
struct SweepRow {
  double value = 0.0;  // threshold or delegation rate
  double coverage = 0.0;
  std::optional<MetricsReport> metrics;
};

/// Retains items with channel value strictly below each threshold.
std::vector<SweepRow> sweep_thresholds(std::span<const Prediction> predictions,
                                       std::span<const Label> gold, std::span<const double> thetas,
                                       UncertaintyChannel channel = UncertaintyChannel::Uncertainty);

/// Drops the ceil(r * N) most uncertain items (ties by item_id ascending).
std::vector<SweepRow> sweep_delegation_rates(
    std::span<const Prediction> predictions, std::span<const Label> gold,
    std::span<const double> rates, UncertaintyChannel channel = UncertaintyChannel::Uncertainty);

/// Accuracy after keeping the `coverage` fraction with the lowest channel value.
std::optional<MetricsReport> metrics_at_coverage(std::span<const Prediction> predictions,
                                                 std::span<const Label> gold, double coverage,
                                                 UncertaintyChannel channel);

struct HistogramGroup {
  std::size_t count = 0;
  double mean_uncertainty = 0.0;
  /// Percentages per bin summing to 100; empty when count == 0.
  std::vector<double> percentages;
};

struct ClassHistogram {
  HistogramGroup failed;
  HistogramGroup successful;
};

struct UncertaintyHistogram {
  std::size_t bins = 0;
  ClassHistogram private_class;  // by gold label
  ClassHistogram public_class;
};

UncertaintyHistogram uncertainty_histogram(std::span<const Prediction> predictions,
                                           std::span<const Label> gold, std::size_t bins);

/// Two-sided paired randomization test on the mean difference of 0/1 error
/// indicators; returns (count(|permuted| >= |observed|) + 1) / (iterations + 1).
double randomization_test(std::span<const int> errors_a, std::span<const int> errors_b,
                          std::size_t iterations, RngSeed seed);

std::vector<int> error_indicators(std::span<const Prediction> predictions, std::span<const Label> gold);

}  // namespace evdl
