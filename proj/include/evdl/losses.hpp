#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>

#include "evdl/evidential.hpp"

namespace evdl {

/// 0 = public, 1 = private.
enum class Label : int { Public = 0, Private = 1 };

constexpr int to_int(Label y) { return static_cast<int>(y); }
Label label_from_int(int v);

/// r[i][j]: cost of assigning true category i to category j. Zero diagonal.
class RiskMatrix {
 public:
  RiskMatrix() = default;
  /// r01: cost of calling public content private; r10: private called public.
  RiskMatrix(double r01, double r10);

  static RiskMatrix uniform() { return {1.0, 1.0}; }

  double r01() const { return r01_; }
  double r10() const { return r10_; }
  double at(int truth, int assigned) const;

  bool operator==(const RiskMatrix&) const = default;

 private:
  double r01_ = 1.0;
  double r10_ = 1.0;
};

enum class LossKind { ExpectedBrier, ExpectedCrossEntropy };
enum class RiskMode { KlScaling, DirectRegularizer, Both };

std::string to_string(LossKind kind);
std::string to_string(RiskMode mode);
LossKind loss_kind_from_string(const std::string& s);
RiskMode risk_mode_from_string(const std::string& s);

struct LossConfig {
  LossKind loss_kind = LossKind::ExpectedBrier;
  RiskMode risk_mode = RiskMode::KlScaling;
  int anneal_horizon = 10;

  bool operator==(const LossConfig&) const = default;
};

/// Evidence above exp(kLogitClamp) is never produced.
inline constexpr double kLogitClamp = 15.0;

/// min(1, t / horizon).
double annealing_coefficient(int epoch, int anneal_horizon);

double expected_brier(const BetaOpinion& op, Label y);
double expected_cross_entropy(const BetaOpinion& op, Label y);

/// Opinion over the misleading evidence only, with the wrong-category
/// evidence scaled by its misclassification cost.
BetaOpinion risk_scaled_misleading(const EvidencePair& e, Label y, const RiskMatrix& r);

double kl_regularizer(const EvidencePair& e, Label y, const RiskMatrix& r, int epoch,
                      const LossConfig& cfg);
double direct_risk_regularizer(const EvidencePair& e, Label y, const RiskMatrix& r);

/// Expected loss plus the regularizers enabled by cfg.risk_mode for one sample.
double sample_loss(const EvidencePair& e, Label y, const RiskMatrix& r, int epoch,
                   const LossConfig& cfg);

struct LabeledEvidence {
  EvidencePair evidence;
  Label label = Label::Public;
};

/// Arithmetic mean of sample_loss over the batch.
double total_loss(std::span<const LabeledEvidence> batch, const RiskMatrix& r, int epoch,
                  const LossConfig& cfg);

using Logits = std::array<double, 2>;

/// Evidence exp(min(o, kLogitClamp)) for (o_0, o_1) -> (e_pub, e_pri).
EvidencePair evidence_from_logits(const Logits& logits);

/// sample_loss as a function of the logits.
double loss_from_logits(const Logits& logits, Label y, const RiskMatrix& r, int epoch,
                        const LossConfig& cfg);

/// Analytic d(loss_from_logits)/d(o_0, o_1).
Logits loss_gradient_wrt_logits(const Logits& logits, Label y, const RiskMatrix& r, int epoch,
                                const LossConfig& cfg);

}  // namespace evdl
