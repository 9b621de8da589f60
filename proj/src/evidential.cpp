#include "evdl/evidential.hpp"

#include <cmath>
#include <numbers>

#include "evdl/errors.hpp"
#include "evdl/special_functions.hpp"

namespace evdl {

BetaOpinion BetaOpinion::from_parameters(double alpha, double beta) {
  if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 1.0 || beta < 1.0) {
    throw DomainError("BetaOpinion: parameters must be finite and >= 1");
  }
  const double strength = alpha + beta;
  BetaOpinion op;
  op.alpha = alpha;
  op.beta = beta;
  op.belief = (alpha - 1.0) / strength;
  op.disbelief = (beta - 1.0) / strength;
  op.uncertainty = 2.0 / strength;
  return op;
}

BetaOpinion opinion_from_evidence(const EvidencePair& e) {
  if (!std::isfinite(e.e_pub) || !std::isfinite(e.e_pri) || e.e_pub < 0.0 || e.e_pri < 0.0) {
    throw DomainError("evidence must be finite and non-negative");
  }
  return BetaOpinion::from_parameters(e.e_pri + 1.0, e.e_pub + 1.0);
}

double expected_probability(const BetaOpinion& op) { return op.alpha / (op.alpha + op.beta); }

double kl_to_uniform(const BetaOpinion& op) {
  const double a = op.alpha;
  const double b = op.beta;
  const double psi_sum = digamma(a + b);
  const double kl = log_gamma(a + b) - log_gamma(a) - log_gamma(b) +
                    (a - 1.0) * (digamma(a) - psi_sum) + (b - 1.0) * (digamma(b) - psi_sum);
  // Rounding can leave a tiny negative residue near alpha = beta = 1.
  return kl < 0.0 ? 0.0 : kl;
}

double normalized_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("normalized_entropy: p must lie in [0, 1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  const double h = -(p * std::log(p) + (1.0 - p) * std::log1p(-p));
  const double normalized = h / std::numbers::ln2;
  return normalized > 1.0 ? 1.0 : normalized;
}

}  // namespace evdl
