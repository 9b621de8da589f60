#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evdl/dataset.hpp"
#include "evdl/evidential.hpp"
#include "evdl/losses.hpp"
#include "evdl/network.hpp"

namespace evdl {

/// Output layer interpretation and training objective.
enum class HeadKind {
  Evidential,           // exp evidence, evidential loss + regularizers
  SoftmaxCrossEntropy,  // standard softmax network (also MC dropout)
  SoftmaxBrier,         // deep ensemble member
};

std::string to_string(HeadKind head);
HeadKind head_kind_from_string(const std::string& s);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double lr_decay_per_epoch = 0.95;
  RngSeed seed{42};

  void validate() const;
};

struct ModelCheckpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t format_version = kFormatVersion;
  HeadKind head = HeadKind::Evidential;
  /// Dropout applied after each hidden non-linearity while training.
  double dropout_rate = 0.0;
  Mlp network;
  std::optional<AdamState> optimizer;
  /// Completed training epochs; drives the regularizer annealing.
  int epoch_t = 0;
  LossConfig loss_config;
  RiskMatrix risk_matrix;
  std::string feature_schema_id;

  const NetworkSpec& spec() const { return network.spec(); }
};

ModelCheckpoint initialize_model(const NetworkSpec& spec, HeadKind head, RngSeed seed,
                                 std::string feature_schema_id, const LossConfig& lc = {},
                                 const RiskMatrix& risk = {}, double dropout_rate = 0.0);

/// Zero weights and biases everywhere: every input maps to logits (0, 0).
ModelCheckpoint zero_model(const NetworkSpec& spec, std::string feature_schema_id);

/// Seeded hidden layers under an all-zero output layer. Predicts exactly like
/// zero_model, but unlike it can be trained: an all-zero ReLU network passes
/// no gradient to any weight.
ModelCheckpoint zero_head_model(const NetworkSpec& spec, RngSeed seed, std::string feature_schema_id);

struct EvidentialOutput {
  Logits logits{};
  EvidencePair evidence;
  BetaOpinion opinion;
  double p_bar = 0.5;
  double uncertainty = 1.0;
};

EvidentialOutput evidential_output(const Logits& logits);
EvidentialOutput forward(const ModelCheckpoint& model, std::span<const double> features);
std::vector<EvidentialOutput> forward_batch(const ModelCheckpoint& model, const Dataset& ds);

struct EpochStats {
  int epoch = 0;  // global epoch index t during which the stats were gathered
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  ModelCheckpoint model;
  std::vector<EpochStats> history;
};

/// Trains an evidential model from a seeded initialization.
TrainResult train(const Dataset& ds, const NetworkSpec& spec, const TrainConfig& tc,
                  const LossConfig& lc, const RiskMatrix& risk);

/// Runs tc.epochs more epochs of Adam on `model`, continuing its epoch counter
/// and optimizer state. Works for every head kind.
TrainResult continue_training(ModelCheckpoint model, const Dataset& ds, const TrainConfig& tc);

/// Round II: continues training on the user's own labels. Architecture and
/// the annealing epoch counter carry over from `base`.
ModelCheckpoint fine_tune(const ModelCheckpoint& base, const Dataset& personal,
                          const TrainConfig& tc);

/// Loss and its logit gradient for one sample under the model's head.
double head_loss(const ModelCheckpoint& model, const Logits& logits, Label y, Logits* grad);

/// Private-class probability under the model's head (p-bar for evidential).
double private_probability(HeadKind head, const Logits& logits);

}  // namespace evdl
