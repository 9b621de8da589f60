#include "evdl/losses.hpp"

#include <algorithm>
#include <cmath>

#include "evdl/errors.hpp"
#include "evdl/special_functions.hpp"

namespace evdl {

Label label_from_int(int v) {
  if (v == 0) return Label::Public;
  if (v == 1) return Label::Private;
  throw DomainError("label must be 0 or 1, got " + std::to_string(v));
}

RiskMatrix::RiskMatrix(double r01, double r10) : r01_(r01), r10_(r10) {
  if (!std::isfinite(r01) || !std::isfinite(r10) || r01 < 0.0 || r10 < 0.0) {
    throw DomainError("risk matrix entries must be finite and non-negative");
  }
}

double RiskMatrix::at(int truth, int assigned) const {
  if (truth < 0 || truth > 1 || assigned < 0 || assigned > 1) {
    throw DomainError("risk matrix index out of range");
  }
  if (truth == assigned) return 0.0;
  return truth == 0 ? r01_ : r10_;
}

std::string to_string(LossKind kind) {
  return kind == LossKind::ExpectedBrier ? "brier" : "ce";
}

std::string to_string(RiskMode mode) {
  switch (mode) {
    case RiskMode::KlScaling:
      return "kl";
    case RiskMode::DirectRegularizer:
      return "direct";
    case RiskMode::Both:
      return "both";
  }
  return "kl";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "brier") return LossKind::ExpectedBrier;
  if (s == "ce") return LossKind::ExpectedCrossEntropy;
  throw DomainError("unknown loss kind '" + s + "' (expected brier|ce)");
}

RiskMode risk_mode_from_string(const std::string& s) {
  if (s == "kl") return RiskMode::KlScaling;
  if (s == "direct") return RiskMode::DirectRegularizer;
  if (s == "both") return RiskMode::Both;
  throw DomainError("unknown risk mode '" + s + "' (expected kl|direct|both)");
}

double annealing_coefficient(int epoch, int anneal_horizon) {
  if (epoch < 0) throw DomainError("epoch index must be >= 0");
  if (anneal_horizon < 1) throw DomainError("anneal_horizon must be >= 1");
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(anneal_horizon));
}

double expected_brier(const BetaOpinion& op, Label y) {
  const double p = expected_probability(op);
  const double target = to_int(y);
  const double miss_private = p - target;
  const double miss_public = (1.0 - p) - (1.0 - target);
  return miss_private * miss_private + miss_public * miss_public +
         2.0 * p * (1.0 - p) / (op.alpha + op.beta + 1.0);
}

double expected_cross_entropy(const BetaOpinion& op, Label y) {
  const double psi_sum = digamma(op.alpha + op.beta);
  return y == Label::Private ? psi_sum - digamma(op.alpha) : psi_sum - digamma(op.beta);
}

BetaOpinion risk_scaled_misleading(const EvidencePair& e, Label y, const RiskMatrix& r) {
  opinion_from_evidence(e);  // validates
  // The exponent (1 - y) or y collapses the true-category side to 1.
  const double alpha_bar = y == Label::Public ? r.r01() * e.e_pri + 1.0 : 1.0;
  const double beta_bar = y == Label::Private ? r.r10() * e.e_pub + 1.0 : 1.0;
  return BetaOpinion::from_parameters(alpha_bar, beta_bar);
}

double kl_regularizer(const EvidencePair& e, Label y, const RiskMatrix& r, int epoch,
                      const LossConfig& cfg) {
  const double lambda = annealing_coefficient(epoch, cfg.anneal_horizon);
  if (lambda == 0.0) {
    opinion_from_evidence(e);
    return 0.0;
  }
  return lambda * kl_to_uniform(risk_scaled_misleading(e, y, r));
}

double direct_risk_regularizer(const EvidencePair& e, Label y, const RiskMatrix& r) {
  const double p = expected_probability(opinion_from_evidence(e));
  if (y == Label::Public) return p * r.r01() * e.e_pri;
  return (1.0 - p) * r.r10() * e.e_pub;
}

double sample_loss(const EvidencePair& e, Label y, const RiskMatrix& r, int epoch,
                   const LossConfig& cfg) {
  const BetaOpinion op = opinion_from_evidence(e);
  double loss = cfg.loss_kind == LossKind::ExpectedBrier ? expected_brier(op, y)
                                                         : expected_cross_entropy(op, y);
  if (cfg.risk_mode != RiskMode::DirectRegularizer) loss += kl_regularizer(e, y, r, epoch, cfg);
  if (cfg.risk_mode != RiskMode::KlScaling) loss += direct_risk_regularizer(e, y, r);
  return loss;
}

double total_loss(std::span<const LabeledEvidence> batch, const RiskMatrix& r, int epoch,
                  const LossConfig& cfg) {
  if (batch.empty()) throw DomainError("total_loss: empty batch");
  double sum = 0.0;
  for (const auto& sample : batch) sum += sample_loss(sample.evidence, sample.label, r, epoch, cfg);
  return sum / static_cast<double>(batch.size());
}

EvidencePair evidence_from_logits(const Logits& logits) {
  if (!std::isfinite(logits[0]) || !std::isfinite(logits[1])) {
    throw DomainError("logits must be finite");
  }
  return {std::exp(std::min(logits[0], kLogitClamp)), std::exp(std::min(logits[1], kLogitClamp))};
}

double loss_from_logits(const Logits& logits, Label y, const RiskMatrix& r, int epoch,
                        const LossConfig& cfg) {
  return sample_loss(evidence_from_logits(logits), y, r, epoch, cfg);
}

namespace {

// d KL[Beta(a, b) || Beta(1, 1)] / da
double kl_uniform_partial(double a, double b) {
  return (a - 1.0) * trigamma(a) - (a + b - 2.0) * trigamma(a + b);
}

}  // namespace

Logits loss_gradient_wrt_logits(const Logits& logits, Label y, const RiskMatrix& r, int epoch,
                                const LossConfig& cfg) {
  const EvidencePair e = evidence_from_logits(logits);
  const double alpha = e.e_pri + 1.0;
  const double beta = e.e_pub + 1.0;
  const double strength = alpha + beta;
  const double p = alpha / strength;
  const double dp_dalpha = beta / (strength * strength);
  const double dp_dbeta = -alpha / (strength * strength);
  const double target = to_int(y);

  // Gradient with respect to (e_pri, e_pub); alpha and beta shift them by one.
  double grad_pri = 0.0;
  double grad_pub = 0.0;

  if (cfg.loss_kind == LossKind::ExpectedBrier) {
    const double dl_dp = 4.0 * (p - target) + 2.0 * (1.0 - 2.0 * p) / (strength + 1.0);
    const double dl_dstrength = -2.0 * p * (1.0 - p) / ((strength + 1.0) * (strength + 1.0));
    grad_pri += dl_dp * dp_dalpha + dl_dstrength;
    grad_pub += dl_dp * dp_dbeta + dl_dstrength;
  } else {
    const double tri_sum = trigamma(strength);
    grad_pri += tri_sum - target * trigamma(alpha);
    grad_pub += tri_sum - (1.0 - target) * trigamma(beta);
  }

  if (cfg.risk_mode != RiskMode::DirectRegularizer) {
    const double lambda = annealing_coefficient(epoch, cfg.anneal_horizon);
    if (lambda > 0.0) {
      const BetaOpinion scaled = risk_scaled_misleading(e, y, r);
      if (y == Label::Public) {
        grad_pri += lambda * r.r01() * kl_uniform_partial(scaled.alpha, scaled.beta);
      } else {
        grad_pub += lambda * r.r10() * kl_uniform_partial(scaled.beta, scaled.alpha);
      }
    }
  }

  if (cfg.risk_mode != RiskMode::KlScaling) {
    if (y == Label::Public) {
      // r01 * p * e_pri
      grad_pri += r.r01() * (p + e.e_pri * dp_dalpha);
      grad_pub += r.r01() * e.e_pri * dp_dbeta;
    } else {
      // r10 * (1 - p) * e_pub
      grad_pub += r.r10() * ((1.0 - p) - e.e_pub * dp_dbeta);
      grad_pri += -r.r10() * e.e_pub * dp_dalpha;
    }
  }

  return {logits[0] <= kLogitClamp ? grad_pub * e.e_pub : 0.0,
          logits[1] <= kLogitClamp ? grad_pri * e.e_pri : 0.0};
}

}  // namespace evdl
