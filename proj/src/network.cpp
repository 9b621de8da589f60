#include "evdl/network.hpp"

#include <cmath>
#include <string>

#include "evdl/errors.hpp"

namespace evdl {

void NetworkSpec::validate() const {
  if (input_dim < 1) throw DomainError("network input_dim must be >= 1");
  for (int h : hidden_dims) {
    if (h < 1) throw DomainError("hidden layer widths must be >= 1");
  }
}

Mlp::Mlp(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  int in = spec_.input_dim;
  for (int h : spec_.hidden_dims) {
    layers_.emplace_back(in, h);
    in = h;
  }
  layers_.emplace_back(in, NetworkSpec::kOutputDim);
}

Mlp Mlp::glorot(NetworkSpec spec, Rng& rng) {
  Mlp net(std::move(spec));
  for (auto& layer : net.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
    for (auto& w : layer.weights) w = (2.0 * rng.uniform() - 1.0) * limit;
  }
  return net;
}

namespace {

void affine(const DenseLayer& layer, std::span<const double> in, std::vector<double>& out) {
  out.assign(layer.bias.begin(), layer.bias.end());
  for (int o = 0; o < layer.outputs; ++o) {
    const double* row = layer.weights.data() + static_cast<std::size_t>(o) * layer.inputs;
    double acc = out[o];
    for (int i = 0; i < layer.inputs; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

}  // namespace

Logits Mlp::forward(std::span<const double> features) const {
  ForwardTrace trace;
  return forward(features, trace);
}

Logits Mlp::forward(std::span<const double> features, ForwardTrace& trace, double dropout_rate,
                    Rng* rng) const {
  if (static_cast<int>(features.size()) != spec_.input_dim) {
    throw DomainError("feature length " + std::to_string(features.size()) +
                      " does not match network input_dim " + std::to_string(spec_.input_dim));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw DomainError("dropout rate must lie in [0, 1)");
  }
  const bool dropout = dropout_rate > 0.0;
  if (dropout && rng == nullptr) throw DomainError("dropout requires a random source");

  trace.inputs.assign(1, std::vector<double>(features.begin(), features.end()));
  trace.masks.clear();
  std::vector<double> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    affine(layers_[l], trace.inputs.back(), out);
    if (l + 1 == layers_.size()) break;
    std::vector<double> mask;
    if (dropout) mask.resize(out.size());
    const double keep_scale = 1.0 / (1.0 - dropout_rate);
    for (std::size_t k = 0; k < out.size(); ++k) {
      double h = out[k] > 0.0 ? out[k] : 0.0;
      if (dropout) {
        mask[k] = rng->uniform() >= dropout_rate ? keep_scale : 0.0;
        h *= mask[k];
      }
      out[k] = h;
    }
    trace.masks.push_back(std::move(mask));
    trace.inputs.push_back(out);
  }
  trace.logits = {out[0], out[1]};
  return trace.logits;
}

void Mlp::backward(const ForwardTrace& trace, const Logits& logit_grad, Gradients& grads) const {
  std::vector<double> delta(logit_grad.begin(), logit_grad.end());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const DenseLayer& layer = layers_[l];
    DenseLayer& grad = grads[l];
    const std::vector<double>& in = trace.inputs[l];
    for (int o = 0; o < layer.outputs; ++o) {
      const double d = delta[o];
      grad.bias[o] += d;
      if (d == 0.0) continue;
      double* row = grad.weights.data() + static_cast<std::size_t>(o) * layer.inputs;
      for (int i = 0; i < layer.inputs; ++i) row[i] += d * in[i];
    }
    if (l == 0) break;
    // Propagate through the previous hidden layer's ReLU (and dropout mask).
    std::vector<double> prev(layer.inputs, 0.0);
    for (int o = 0; o < layer.outputs; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = layer.weights.data() + static_cast<std::size_t>(o) * layer.inputs;
      for (int i = 0; i < layer.inputs; ++i) prev[i] += row[i] * d;
    }
    const std::vector<double>& mask = trace.masks[l - 1];
    for (int i = 0; i < layer.inputs; ++i) {
      // in[i] is the post-activation value; zero means the unit was inactive or dropped.
      if (in[i] <= 0.0) {
        prev[i] = 0.0;
      } else if (!mask.empty()) {
        prev[i] *= mask[i];
      }
    }
    delta = std::move(prev);
  }
}

Gradients Mlp::zero_gradients() const {
  Gradients g;
  g.reserve(layers_.size());
  for (const auto& layer : layers_) g.emplace_back(layer.inputs, layer.outputs);
  return g;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weights.size() + layer.bias.size();
  return n;
}

AdamState AdamState::for_network(const Mlp& net) {
  AdamState state;
  state.first_moment = net.zero_gradients();
  state.second_moment = net.zero_gradients();
  return state;
}

namespace {

void adam_update(std::vector<double>& params, const std::vector<double>& grads,
                 std::vector<double>& m, std::vector<double>& v, double step_size,
                 double bias2_sqrt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * grads[i];
    v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * grads[i] * grads[i];
    params[i] -= step_size * m[i] / (std::sqrt(v[i]) / bias2_sqrt + AdamState::kEpsilon);
  }
}

}  // namespace

void AdamState::apply(Mlp& net, const Gradients& grads, double learning_rate) {
  auto& layers = net.layers();
  if (first_moment.size() != layers.size() || second_moment.size() != layers.size()) {
    throw DomainError("optimizer state does not match network shape");
  }
  ++step;
  const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
  const double step_size = learning_rate / bias1;
  const double bias2_sqrt = std::sqrt(bias2);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    adam_update(layers[l].weights, grads[l].weights, first_moment[l].weights,
                second_moment[l].weights, step_size, bias2_sqrt);
    adam_update(layers[l].bias, grads[l].bias, first_moment[l].bias, second_moment[l].bias,
                step_size, bias2_sqrt);
  }
}

}  // namespace evdl
