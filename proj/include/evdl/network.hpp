#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evdl/losses.hpp"
#include "evdl/special_functions.hpp"

namespace evdl {

struct NetworkSpec {
  static constexpr int kOutputDim = 2;

  int input_dim = 1;
  std::vector<int> hidden_dims = {64, 32};

  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

/// Fully connected layer; weights are row-major (outputs x inputs).
struct DenseLayer {
  int inputs = 0;
  int outputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(int in, int out)
      : inputs(in), outputs(out), weights(static_cast<std::size_t>(in) * out, 0.0), bias(out, 0.0) {}

  bool operator==(const DenseLayer&) const = default;
};

/// Activations recorded by a forward pass, consumed by backward().
struct ForwardTrace {
  std::vector<std::vector<double>> inputs;  // input to each layer (post-dropout)
  std::vector<std::vector<double>> masks;   // per hidden layer; empty when no dropout
  Logits logits{};
};

/// Per-layer gradients with the same shapes as the network.
using Gradients = std::vector<DenseLayer>;

/// Feed-forward ReLU network ending in two linear logits.
class Mlp {
 public:
  Mlp() = default;
  /// All-zero weights and biases.
  explicit Mlp(NetworkSpec spec);

  /// Uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static Mlp glorot(NetworkSpec spec, Rng& rng);

  const NetworkSpec& spec() const { return spec_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Logits forward(std::span<const double> features) const;

  /// Forward pass that records activations. With dropout_rate > 0 every
  /// hidden unit is kept with probability 1 - rate and scaled by 1/(1 - rate).
  Logits forward(std::span<const double> features, ForwardTrace& trace, double dropout_rate = 0.0,
                 Rng* rng = nullptr) const;

  /// Accumulates d(loss)/d(parameters) into grads, given d(loss)/d(logits).
  void backward(const ForwardTrace& trace, const Logits& logit_grad, Gradients& grads) const;

  Gradients zero_gradients() const;
  std::size_t parameter_count() const;

  bool operator==(const Mlp&) const = default;

 private:
  NetworkSpec spec_;
  std::vector<DenseLayer> layers_;
};

/// Adam with bias-corrected moments.
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  Gradients first_moment;
  Gradients second_moment;
  std::int64_t step = 0;

  static AdamState for_network(const Mlp& net);
  void apply(Mlp& net, const Gradients& grads, double learning_rate);

  bool operator==(const AdamState&) const = default;
};

}  // namespace evdl
