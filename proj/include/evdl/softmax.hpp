#pragma once

#include "evdl/losses.hpp"

namespace evdl {

/// Private-class probability of a two-way softmax over (o_0, o_1).
double softmax_private_probability(const Logits& logits);

/// Binary cross-entropy of the softmax output, -[y ln p + (1-y) ln(1-p)].
double softmax_cross_entropy(const Logits& logits, Label y);
Logits softmax_cross_entropy_gradient(const Logits& logits, Label y);

/// Brier score [p - y]^2 + [(1 - p) - (1 - y)]^2 of the softmax output.
double softmax_brier(const Logits& logits, Label y);
Logits softmax_brier_gradient(const Logits& logits, Label y);

}  // namespace evdl
