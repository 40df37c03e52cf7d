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

// Neural mutual-information estimation on the Donsker-Varadhan bound.
//
// A critic T maps a concatenated pair (a, b) to a scalar. On a minibatch of
// k joint rows and k product rows (b shuffled along the batch axis) the
// objective is
//
//   J = mean_joint(T) - log mean_product(exp(T))     [nats]
//
// The plug-in gradient of the log term divides by the minibatch mean of
// exp(T), which is biased for small batches. The corrected gradient replaces
// that denominator with an exponential moving average across steps.

#pragma once

#include <chrono>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "mifunnel/common.hpp"
#include "mifunnel/mi_oracle.hpp"
#include "mifunnel/nn_core.hpp"
#include "mifunnel/sample_batch.hpp"

namespace mifunnel {

struct MineConfig {
  Index epochs = 500;
  Index batch_size = 20000;
  double learning_rate = 5e-4;
  double ema_rate = 0.01;
  std::uint64_t seed = 1;
  std::vector<Index> hidden = {100, 100};
  Activation activation = Activation::elu;
  // Start from T == 0 (objective exactly 0) instead of a random critic whose
  // initial bound sits several bits below zero.
  bool zero_output_layer = true;
  // Final estimate is the mean objective over this many trailing epochs.
  Index smoothing_window = 50;
};

inline void validate(const MineConfig& c) {
  require(c.epochs >= 1, "MineConfig: epochs must be >= 1");
  require(c.batch_size >= 2, "MineConfig: minibatch size must be >= 2");
  require(std::isfinite(c.learning_rate) && c.learning_rate >= 0.0,
          "MineConfig: learning rate must be finite and non-negative");
  require(c.ema_rate > 0.0 && c.ema_rate <= 1.0, "MineConfig: ema rate must be in (0, 1]");
  require(c.smoothing_window >= 1, "MineConfig: smoothing window must be >= 1");
}

// Critic outputs on one joint/product minibatch pair, with the forward
// passes kept for the gradient step.
struct DvEvaluation {
  double nats = 0.0;
  Vector t_joint;
  Vector t_product;
  double log_mean_exp_product = 0.0;  // log mean(exp(T)) over product rows
  ForwardPass joint_pass;
  ForwardPass product_pass;

  double bits() const { return nats_to_bits(nats); }
};

// Gradient of the objective in the ascent direction, plus its gradient with
// respect to the critic's inputs (consumed by an upstream encoder).
struct DvGradient {
  ParameterSet grads;
  Matrix joint_input_grad;
  Matrix product_input_grad;
};

class MineEstimator {
 public:
  MineEstimator(Index input_dim, const MineConfig& config)
      : config_(config),
        critic_(make_critic(input_dim, config)),
        adam_(critic_, AdamConfig{.learning_rate = config.learning_rate}) {
    validate(config_);
  }

  // Wraps an existing critic, e.g. a hand-built one in tests.
  MineEstimator(MlpNetwork critic, const MineConfig& config)
      : config_(config),
        critic_(std::move(critic)),
        adam_(critic_, AdamConfig{.learning_rate = config.learning_rate}) {
    validate(config_);
    require(critic_.output_dim() == 1, "MineEstimator: critic must have scalar output");
  }

  const MineConfig& config() const { return config_; }
  const MlpNetwork& critic() const { return critic_; }
  MlpNetwork& critic() { return critic_; }
  const AdamState& adam() const { return adam_; }
  Index input_dim() const { return critic_.input_dim(); }

  bool has_ema() const { return has_ema_; }
  double log_ema() const { return log_ema_; }
  double ema_denominator() const { return std::exp(log_ema_); }

  DvEvaluation evaluate(const Matrix& joint_inputs, const Matrix& product_inputs) const {
    require(joint_inputs.rows() > 0 && product_inputs.rows() > 0,
            "dv_objective: empty minibatch");
    DvEvaluation ev;
    ev.joint_pass = forward_pass(critic_, joint_inputs);
    ev.product_pass = forward_pass(critic_, product_inputs);
    ev.t_joint = ev.joint_pass.output().col(0);
    ev.t_product = ev.product_pass.output().col(0);
    if (!ev.t_joint.allFinite() || !ev.t_product.allFinite()) {
      throw NumericalError("dv_objective: non-finite critic output");
    }
    ev.log_mean_exp_product = log_mean_exp(ev.t_product);
    ev.nats = ev.t_joint.mean() - ev.log_mean_exp_product;
    if (!std::isfinite(ev.nats)) throw NumericalError("dv_objective: non-finite objective");
    return ev;
  }

  // d J / d theta with the log-term denominator replaced by
  // exp(log_denominator):
  //   mean(grad T on joint) - mean(exp(T) grad T on product) / denominator.
  // Passing ev.log_mean_exp_product gives the plug-in gradient.
  DvGradient gradient(const DvEvaluation& ev, double log_denominator) const {
    const auto k_joint = static_cast<double>(ev.t_joint.size());
    const auto k_product = static_cast<double>(ev.t_product.size());
    const Matrix up_joint = Matrix::Constant(ev.t_joint.size(), 1, 1.0 / k_joint);
    Matrix up_product(ev.t_product.size(), 1);
    up_product.col(0) =
        -((ev.t_product.array() - log_denominator).exp() / k_product).matrix();

    Backprop bj = backward(critic_, ev.joint_pass, up_joint);
    Backprop bp = backward(critic_, ev.product_pass, up_product);
    DvGradient g;
    g.grads = std::move(bj.grads);
    for (std::size_t l = 0; l < g.grads.size(); ++l) {
      g.grads[l].weight += bp.grads[l].weight;
      g.grads[l].bias += bp.grads[l].bias;
    }
    g.joint_input_grad = std::move(bj.input_grad);
    g.product_input_grad = std::move(bp.input_grad);
    return g;
  }

  // EMA of mean(exp(T)) over product rows, kept in log space. The first call
  // initialises it to the batch mean.
  void update_ema(const DvEvaluation& ev) {
    if (!has_ema_) {
      log_ema_ = ev.log_mean_exp_product;
      has_ema_ = true;
      return;
    }
    const double a = config_.ema_rate;
    if (a >= 1.0) {
      log_ema_ = ev.log_mean_exp_product;
      return;
    }
    const double lhs = std::log1p(-a) + log_ema_;
    const double rhs = std::log(a) + ev.log_mean_exp_product;
    const double hi = std::max(lhs, rhs);
    log_ema_ = hi + std::log(std::exp(lhs - hi) + std::exp(rhs - hi));
  }

  // One bias-corrected ascent step. Returns the objective evaluated before
  // the update together with the input gradients.
  std::pair<DvEvaluation, DvGradient> step(const Matrix& joint_inputs,
                                           const Matrix& product_inputs) {
    DvEvaluation ev = evaluate(joint_inputs, product_inputs);
    update_ema(ev);
    DvGradient g = gradient(ev, log_ema_);
    adam_step(critic_, adam_, negated(g.grads));
    return {std::move(ev), std::move(g)};
  }

 private:
  static MlpNetwork make_critic(Index input_dim, const MineConfig& c) {
    require(input_dim >= 2, "MineEstimator: critic input must hold both variables");
    std::vector<Index> dims{input_dim};
    dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
    dims.push_back(1);
    MlpNetwork net = MlpNetwork::he_normal(std::move(dims), c.activation,
                                           OutputActivation::identity, derive_seed(c.seed, 1));
    if (c.zero_output_layer) net.parameters().back().weight.setZero();
    return net;
  }

  MineConfig config_;
  MlpNetwork critic_;
  AdamState adam_;
  bool has_ema_ = false;
  double log_ema_ = 0.0;
};

// Product-of-marginals batch: the first variable is kept, the second is
// permuted along the batch axis.
inline SampleBatch marginal_shuffle(const SampleBatch& batch, Rng& rng) {
  require(batch.variables().size() == 2, "marginal_shuffle: expected a pair batch");
  require(batch.rows() >= 2, "marginal_shuffle: need at least two rows");
  SampleBatch out = batch;
  out.permute_variable(batch.variables()[1].name, random_permutation(batch.rows(), rng));
  return out;
}

inline DvEvaluation dv_objective(const MineEstimator& est, const SampleBatch& joint,
                                 const SampleBatch& product) {
  return est.evaluate(joint.values(), product.values());
}

// Returns the pre-update objective in nats.
inline double bias_corrected_step(MineEstimator& est, const SampleBatch& joint,
                                  const SampleBatch& product) {
  return est.step(joint.values(), product.values()).first.nats;
}

using JointSampler = std::function<SampleBatch(Index n, Rng& rng)>;

struct MineTrace {
  std::vector<double> bits;     // one objective per epoch
  std::vector<double> wall_ms;  // elapsed time at the end of each epoch
  double final_bits = 0.0;      // mean of the trailing smoothing window

  // Mean of the trailing `window` entries up to and including `epoch`.
  double smoothed_at(std::size_t epoch, std::size_t window) const {
    require(epoch < bits.size(), "MineTrace: epoch out of range");
    const std::size_t first = epoch + 1 >= window ? epoch + 1 - window : 0;
    const double sum = std::accumulate(bits.begin() + static_cast<std::ptrdiff_t>(first),
                                       bits.begin() + static_cast<std::ptrdiff_t>(epoch) + 1, 0.0);
    return sum / static_cast<double>(epoch + 1 - first);
  }
};

// One optimiser step per epoch on a fresh joint minibatch of size k and its
// shuffled product counterpart.
inline MineTrace estimate_mi(const JointSampler& sampler, const MineConfig& config) {
  validate(config);
  Rng data_rng(derive_seed(config.seed, 0));
  Rng shuffle_rng(derive_seed(config.seed, 2));

  MineTrace trace;
  trace.bits.reserve(static_cast<std::size_t>(config.epochs));
  trace.wall_ms.reserve(static_cast<std::size_t>(config.epochs));
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<MineEstimator> est;
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    SampleBatch joint = sampler(config.batch_size, data_rng);
    require(joint.rows() >= config.batch_size, "estimate_mi: sampler returned too few rows");
    if (!est) est.emplace(joint.cols(), config);
    const SampleBatch product = marginal_shuffle(joint, shuffle_rng);
    trace.bits.push_back(nats_to_bits(bias_corrected_step(*est, joint, product)));
    trace.wall_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  trace.final_bits =
      trace.smoothed_at(trace.bits.size() - 1, static_cast<std::size_t>(config.smoothing_window));
  return trace;
}

// Sampler for a bivariate Gaussian pair with the given correlation.
inline JointSampler gaussian_pair_sampler(const GaussianPairSpec& spec) {
  validate(spec);
  return [spec](Index n, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double c = std::sqrt(1.0 - spec.rho * spec.rho);
    Matrix s(n, 1);
    Matrix y(n, 1);
    for (Index i = 0; i < n; ++i) {
      const double z1 = normal(rng);
      const double z2 = normal(rng);
      s(i, 0) = spec.mean_s + spec.std_s * z1;
      y(i, 0) = spec.mean_y + spec.std_y * (spec.rho * z1 + c * z2);
    }
    return SampleBatch::pair(s, y);
  };
}

}  // namespace mifunnel
