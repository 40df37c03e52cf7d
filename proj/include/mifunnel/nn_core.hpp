// Copyright 2026 The mifunnel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Fixed-topology feed-forward networks with manual backpropagation and Adam.
//
// Batches are row-major in the statistical sense: one sample per row, one
// feature per column. A layer maps A (n x in) to A * W^T + 1 b^T, so the
// weight of layer l has shape (dims[l+1] x dims[l]).

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mifunnel/common.hpp"

namespace mifunnel {

enum class Activation { relu, elu, identity };
enum class OutputActivation { identity, softmax };

struct LayerParams {
  Matrix weight;  // out x in
  Vector bias;    // out
};

// Parameters, gradients and Adam moments all share this layout.
using ParameterSet = std::vector<LayerParams>;

inline ParameterSet zeros_like(const ParameterSet& params) {
  ParameterSet out;
  out.reserve(params.size());
  for (const auto& layer : params) {
    out.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                   Vector::Zero(layer.bias.size())});
  }
  return out;
}

inline bool all_finite(const ParameterSet& params) {
  for (const auto& layer : params) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

inline bool same_shape(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a[l].weight.rows() != b[l].weight.rows() ||
        a[l].weight.cols() != b[l].weight.cols() ||
        a[l].bias.size() != b[l].bias.size()) {
      return false;
    }
  }
  return true;
}

inline Index parameter_count(const ParameterSet& params) {
  Index n = 0;
  for (const auto& layer : params) n += layer.weight.size() + layer.bias.size();
  return n;
}

// Flat views used by gradient checks and tests. Order: layer by layer,
// weight (column-major) then bias.
inline Vector flatten(const ParameterSet& params) {
  Vector out(parameter_count(params));
  Index k = 0;
  for (const auto& layer : params) {
    out.segment(k, layer.weight.size()) = layer.weight.reshaped();
    k += layer.weight.size();
    out.segment(k, layer.bias.size()) = layer.bias;
    k += layer.bias.size();
  }
  return out;
}

inline void unflatten(const Vector& flat, ParameterSet& params) {
  require(flat.size() == parameter_count(params), "unflatten: size mismatch");
  Index k = 0;
  for (auto& layer : params) {
    layer.weight.reshaped() = flat.segment(k, layer.weight.size());
    k += layer.weight.size();
    layer.bias = flat.segment(k, layer.bias.size());
    k += layer.bias.size();
  }
}

class MlpNetwork {
 public:
  // All-zero parameters. Use he_normal() or identity() for useful starts.
  MlpNetwork(std::vector<Index> layer_dims, Activation hidden,
             OutputActivation output = OutputActivation::identity)
      : dims_(std::move(layer_dims)), hidden_(hidden), output_(output) {
    require(dims_.size() >= 2, "MlpNetwork: need at least input and output dims");
    for (Index d : dims_) require(d > 0, "MlpNetwork: layer dims must be positive");
    require(output_ != OutputActivation::softmax || dims_.back() >= 2,
            "MlpNetwork: softmax output needs at least two units");
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      params_.push_back({Matrix::Zero(dims_[l + 1], dims_[l]),
                         Vector::Zero(dims_[l + 1])});
    }
  }

  // He-style scaled normal weights, zero biases.
  static MlpNetwork he_normal(std::vector<Index> layer_dims, Activation hidden,
                              OutputActivation output, std::uint64_t seed) {
    MlpNetwork net(std::move(layer_dims), hidden, output);
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& layer : net.params_) {
      const double scale = std::sqrt(2.0 / static_cast<double>(layer.weight.cols()));
      for (Index j = 0; j < layer.weight.cols(); ++j) {
        for (Index i = 0; i < layer.weight.rows(); ++i) {
          layer.weight(i, j) = scale * normal(rng);
        }
      }
    }
    return net;
  }

  // Single affine layer computing x -> x.
  static MlpNetwork identity(Index dim) {
    MlpNetwork net({dim, dim}, Activation::identity, OutputActivation::identity);
    net.params_[0].weight.setIdentity();
    return net;
  }

  const std::vector<Index>& layer_dims() const { return dims_; }
  Index input_dim() const { return dims_.front(); }
  Index output_dim() const { return dims_.back(); }
  std::size_t num_layers() const { return params_.size(); }
  Activation hidden_activation() const { return hidden_; }
  OutputActivation output_activation() const { return output_; }

  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }

 private:
  std::vector<Index> dims_;
  Activation hidden_;
  OutputActivation output_;
  ParameterSet params_;
};

namespace detail {

inline Matrix apply_hidden(Activation act, const Matrix& z) {
  switch (act) {
    case Activation::relu:
      return z.cwiseMax(0.0);
    case Activation::elu:
      // max(z, e^min(z,0) - 1) equals ELU and vectorises, unlike select().
      return z.array().max(z.array().min(0.0).exp() - 1.0);
    case Activation::identity:
      break;
  }
  return z;
}

// d act / d z from the stored pre-activation and activation. For ELU the
// derivative is e^z = act + 1 on z <= 0 and 1 above, i.e. min(act + 1, 1).
inline void scale_by_derivative(Activation act, const Matrix& pre, const Matrix& post,
                                Matrix& delta) {
  switch (act) {
    case Activation::relu:
      delta.array() *= (pre.array() > 0.0).cast<double>();
      break;
    case Activation::elu:
      delta.array() *= (post.array() + 1.0).min(1.0);
      break;
    case Activation::identity:
      break;
  }
}

inline void softmax_rows(Matrix& z) {
  for (Index i = 0; i < z.rows(); ++i) {
    const double shift = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - shift).exp();
    z.row(i) /= z.row(i).sum();
  }
}

}  // namespace detail

// Everything backward() needs from the forward evaluation.
struct ForwardPass {
  std::vector<Matrix> activations;     // activations[0] is the input batch
  std::vector<Matrix> preactivations;  // one per layer
  const Matrix& output() const { return activations.back(); }
};

inline ForwardPass forward_pass(const MlpNetwork& net, const Matrix& batch) {
  if (batch.cols() != net.input_dim()) {
    throw InvalidArgument("forward: batch has " + std::to_string(batch.cols()) +
                          " columns, network expects " +
                          std::to_string(net.input_dim()));
  }
  if (!batch.allFinite()) throw NumericalError("forward: non-finite input");

  const auto& params = net.parameters();
  ForwardPass pass;
  pass.activations.reserve(params.size() + 1);
  pass.preactivations.reserve(params.size());
  pass.activations.push_back(batch);
  for (std::size_t l = 0; l < params.size(); ++l) {
    Matrix z(batch.rows(), params[l].weight.rows());
    z.noalias() = pass.activations.back() * params[l].weight.transpose();
    z.rowwise() += params[l].bias.transpose();
    pass.preactivations.push_back(std::move(z));
    const Matrix& pre = pass.preactivations.back();
    if (l + 1 < params.size()) {
      pass.activations.push_back(detail::apply_hidden(net.hidden_activation(), pre));
    } else if (net.output_activation() == OutputActivation::softmax) {
      Matrix p = pre;
      detail::softmax_rows(p);
      pass.activations.push_back(std::move(p));
    } else {
      pass.activations.push_back(pre);
    }
  }
  return pass;
}

inline Matrix forward(const MlpNetwork& net, const Matrix& batch) {
  return forward_pass(net, batch).activations.back();
}

struct Backprop {
  ParameterSet grads;  // congruent with net.parameters()
  Matrix input_grad;   // n x input_dim
};

// Backpropagates a gradient given with respect to the output-layer
// pre-activations (logits). Gradients are sums over the batch; any 1/n
// factor belongs in `delta`.
inline Backprop backward_from_logits(const MlpNetwork& net, const ForwardPass& pass,
                                     Matrix delta) {
  const auto& params = net.parameters();
  require(pass.preactivations.size() == params.size(),
          "backward: forward pass does not belong to this network");
  require(delta.rows() == pass.output().rows() && delta.cols() == net.output_dim(),
          "backward: upstream gradient shape mismatch");

  Backprop out;
  out.grads.resize(params.size());
  for (std::size_t l = params.size(); l-- > 0;) {
    const Matrix& input = pass.activations[l];
    out.grads[l].weight.noalias() = delta.transpose() * input;
    out.grads[l].bias = delta.colwise().sum().transpose();
    Matrix next = delta * params[l].weight;
    if (l > 0) {
      detail::scale_by_derivative(net.hidden_activation(), pass.preactivations[l - 1],
                                  pass.activations[l], next);
    }
    delta = std::move(next);
  }
  out.input_grad = std::move(delta);
  return out;
}

// Backpropagates a gradient given with respect to the network output (after
// the output activation).
inline Backprop backward(const MlpNetwork& net, const ForwardPass& pass,
                         const Matrix& upstream) {
  require(upstream.rows() == pass.output().rows() &&
              upstream.cols() == net.output_dim(),
          "backward: upstream gradient shape mismatch");
  if (net.output_activation() == OutputActivation::identity) {
    return backward_from_logits(net, pass, upstream);
  }
  // Softmax Jacobian-vector product: p * (g - <g, p>).
  const Matrix& p = pass.output();
  const Vector inner = (upstream.array() * p.array()).rowwise().sum();
  Matrix delta = p.array() * (upstream.colwise() - inner).array();
  return backward_from_logits(net, pass, std::move(delta));
}

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  ParameterSet first_moment;
  ParameterSet second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const MlpNetwork& net, AdamConfig cfg)
      : config(cfg),
        first_moment(zeros_like(net.parameters())),
        second_moment(zeros_like(net.parameters())) {}
};

// One Adam update in the minimisation convention: parameters move against
// `grads`. Callers maximising an objective pass the negated gradient.
inline void adam_step(MlpNetwork& net, AdamState& state, const ParameterSet& grads) {
  auto& params = net.parameters();
  require(same_shape(params, grads), "adam_step: gradients not congruent with network");
  require(same_shape(params, state.first_moment), "adam_step: state not congruent with network");
  if (!all_finite(grads)) throw NumericalError("adam_step: non-finite gradient");

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseAbs2();
    param.array() -= c.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + c.epsilon);
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    update(params[l].weight, state.first_moment[l].weight,
           state.second_moment[l].weight, grads[l].weight);
    update(params[l].bias, state.first_moment[l].bias, state.second_moment[l].bias,
           grads[l].bias);
  }
  if (!all_finite(params)) throw NumericalError("adam_step: parameters became non-finite");
}

inline ParameterSet negated(ParameterSet grads) {
  for (auto& layer : grads) {
    layer.weight = -layer.weight;
    layer.bias = -layer.bias;
  }
  return grads;
}

// Gradient check against central finite differences of
// L(theta) = sum(weights .* forward(net, batch)).
// Returns the worst relative error over every parameter.
inline double max_gradient_relative_error(const MlpNetwork& net, const Matrix& batch,
                                          const Matrix& weights, double step = 1e-5,
                                          double floor = 1e-6) {
  const Backprop analytic = backward(net, forward_pass(net, batch), weights);
  const Vector grad = flatten(analytic.grads);
  MlpNetwork probe = net;
  Vector theta = flatten(net.parameters());
  auto loss = [&](const Vector& p) {
    unflatten(p, probe.parameters());
    return (forward(probe, batch).array() * weights.array()).sum();
  };
  double worst = 0.0;
  for (Index i = 0; i < theta.size(); ++i) {
    const double saved = theta(i);
    theta(i) = saved + step;
    const double up = loss(theta);
    theta(i) = saved - step;
    const double down = loss(theta);
    theta(i) = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(numeric), std::abs(grad(i)), floor});
    worst = std::max(worst, std::abs(numeric - grad(i)) / denom);
  }
  return worst;
}

}  // namespace mifunnel
