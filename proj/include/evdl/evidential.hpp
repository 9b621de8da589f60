#pragma once

namespace evdl {

/// Non-negative evidence for the two categories: public (y=0) and private (y=1).
struct EvidencePair {
  double e_pub = 0.0;
  double e_pri = 0.0;
};

/// Binary subjective opinion induced by Beta(alpha, beta), with
/// alpha = e_pri + 1 and beta = e_pub + 1.
struct BetaOpinion {
  double alpha = 1.0;
  double beta = 1.0;
  double belief = 0.0;       // mass on private
  double disbelief = 0.0;    // mass on public
  double uncertainty = 1.0;  // 2 / (alpha + beta)

  /// Builds the opinion for arbitrary parameters >= 1.
  static BetaOpinion from_parameters(double alpha, double beta);
};

BetaOpinion opinion_from_evidence(const EvidencePair& e);

/// Mean of the Beta distribution, alpha / (alpha + beta).
double expected_probability(const BetaOpinion& op);

/// KL[Beta(alpha, beta) || Beta(1, 1)] in closed form.
double kl_to_uniform(const BetaOpinion& op);

/// Binary entropy of p divided by ln 2, with 0 ln 0 = 0.
double normalized_entropy(double p);

}  // namespace evdl
