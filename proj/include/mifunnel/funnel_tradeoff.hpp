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

// Utility maximisation under a mutual-information leakage budget.
//
// The release is Y = encoder(X) + noise. Each outer iteration
//   1. trains the utility critic and the encoder jointly on the DV bound
//      between encoder(X) and Y (encoding phase),
//   2. trains a decoder that reconstructs X from Y (decoding phase),
//   3. re-estimates the leakage I(S;Y) with a freshly trained estimator.
// The loop continues while the leakage estimate stays within epsilon. The
// reported utility is the largest utility estimate among iterations whose
// leakage estimate was within budget.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mifunnel/common.hpp"
#include "mifunnel/mine_estimator.hpp"
#include "mifunnel/nn_core.hpp"
#include "mifunnel/privacy_channel.hpp"
#include "mifunnel/sample_batch.hpp"

namespace mifunnel {

enum class DecoderMode { binned_cross_entropy, squared_error };

inline std::string_view to_string(DecoderMode m) {
  return m == DecoderMode::binned_cross_entropy ? "binned_cross_entropy" : "squared_error";
}

inline DecoderMode parse_decoder_mode(std::string_view s) {
  if (s == "binned_cross_entropy" || s == "binned") return DecoderMode::binned_cross_entropy;
  if (s == "squared_error" || s == "mse") return DecoderMode::squared_error;
  throw InvalidArgument("unknown decoder mode '" + std::string(s) + "'");
}

struct TradeoffConfig {
  double epsilon = 0.75;  // leakage budget, bits
  double learning_rate = 5e-4;
  // Encoder learning rate; defaults to learning_rate. Zero freezes the encoder.
  std::optional<double> encoder_learning_rate;
  Index minibatch = 20000;
  Index encoding_epochs = 50;
  Index decoding_epochs = 20;
  Index monitor_epochs = 200;
  Index outer_cap = 100;
  double ema_rate = 0.01;
  std::vector<Index> critic_hidden = {100, 100};
  // Empty: a single affine layer initialised to the identity.
  std::vector<Index> encoder_hidden = {};
  std::vector<Index> decoder_hidden = {100, 100};
  NoiseChannel channel = NoiseChannel::gaussian(1.0);
  ChainSpec chain;
  DecoderMode decoder_mode = DecoderMode::binned_cross_entropy;
  Index bins = 32;
  std::uint64_t critic_seed = derive_seed(1, 11);
  std::uint64_t encoder_seed = derive_seed(1, 12);
  std::uint64_t decoder_seed = derive_seed(1, 13);
  std::uint64_t data_seed = derive_seed(1, 14);

  // Sets every component seed from one run seed.
  TradeoffConfig& seeded(std::uint64_t seed) {
    critic_seed = derive_seed(seed, 11);
    encoder_seed = derive_seed(seed, 12);
    decoder_seed = derive_seed(seed, 13);
    data_seed = derive_seed(seed, 14);
    return *this;
  }

  double encoder_lr() const { return encoder_learning_rate.value_or(learning_rate); }
};

inline void validate(const TradeoffConfig& c) {
  require(std::isfinite(c.epsilon) && c.epsilon >= 0.0, "TradeoffConfig: epsilon must be >= 0");
  require(std::isfinite(c.learning_rate) && c.learning_rate >= 0.0,
          "TradeoffConfig: learning rate must be >= 0");
  require(std::isfinite(c.encoder_lr()) && c.encoder_lr() >= 0.0,
          "TradeoffConfig: encoder learning rate must be >= 0");
  require(c.minibatch >= 2, "TradeoffConfig: minibatch must be >= 2");
  require(c.encoding_epochs >= 1 && c.decoding_epochs >= 1 && c.monitor_epochs >= 1,
          "TradeoffConfig: phase epochs must be >= 1");
  require(c.outer_cap >= 1, "TradeoffConfig: outer cap must be >= 1");
  require(c.ema_rate > 0.0 && c.ema_rate <= 1.0, "TradeoffConfig: ema rate must be in (0, 1]");
  validate(c.chain);
  validate(c.channel);
  require(c.channel.dim() == c.chain.dim, "TradeoffConfig: channel and chain dims differ");
  if (c.decoder_mode == DecoderMode::binned_cross_entropy) {
    require(c.bins >= 2, "TradeoffConfig: binned decoder needs at least 2 bins");
    require(c.chain.dim == 1, "TradeoffConfig: binned decoder supports 1-D x only");
  }
}

// Per outer iteration. `mi_sy_bits` is the leakage estimate of the release
// produced by this iteration's encoder.
struct IterationRecord {
  Index iteration = 0;
  double mi_xy_bits = 0.0;
  double mi_sy_bits = 0.0;
  double decoder_loss = 0.0;
  bool compliant = false;
  double wall_ms = 0.0;  // elapsed since the start of the run
};

struct TradeoffRun {
  TradeoffConfig config;
  double initial_mi_sy_bits = 0.0;
  std::vector<IterationRecord> records;
  std::vector<double> encoding_trace;  // utility critic objective per encoding step, bits
  std::vector<double> decoder_trace;   // decoder loss per decoding step
  double max_utility_bits = 0.0;       // 0 when no iteration was compliant
  double last_compliant_utility_bits = 0.0;
  Index compliant_iterations = 0;
  bool hit_cap = false;
  bool budget_respected = false;  // leakage within budget at termination
};

// Number of trailing steps averaged when a phase reports its utility.
inline constexpr Index kPhaseReportWindow = 10;

inline Matrix encode(const MlpNetwork& encoder, const Matrix& x) {
  Matrix out = forward(encoder, x);
  if (!out.allFinite()) throw NumericalError("encode: non-finite encoder output");
  return out;
}

// Standard-normal quantile via bisection on erfc.
inline double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "normal_quantile: p must be in (0, 1)");
  double lo = -40.0;
  double hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Interior edges of `bins` equal-probability bins of N(mean, std^2).
inline std::vector<double> equal_probability_edges(Index bins, double mean, double std_dev) {
  require(bins >= 2, "equal_probability_edges: need at least 2 bins");
  std::vector<double> edges;
  for (Index b = 1; b < bins; ++b) {
    edges.push_back(mean + std_dev * normal_quantile(static_cast<double>(b) /
                                                     static_cast<double>(bins)));
  }
  return edges;
}

inline Index bin_index(const std::vector<double>& edges, double v) {
  return static_cast<Index>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
}

// Mean cross-entropy in bits between integer labels and softmax rows.
inline double cross_entropy_bits(const Matrix& probs, const std::vector<Index>& labels) {
  require(static_cast<Index>(labels.size()) == probs.rows(), "cross_entropy: size mismatch");
  double acc = 0.0;
  for (Index i = 0; i < probs.rows(); ++i) {
    acc -= std::log2(std::max(probs(i, labels[static_cast<std::size_t>(i)]), 1e-300));
  }
  return acc / static_cast<double>(probs.rows());
}

// The decoder objective read literally as the entropy of the decoder's own
// output distribution. Minimised by any one-hot output whatever x is, so it
// is only reported as a diagnostic and never trained on.
inline double output_entropy_bits(const Matrix& probs) {
  double acc = 0.0;
  for (Index i = 0; i < probs.rows(); ++i) {
    for (Index j = 0; j < probs.cols(); ++j) {
      const double p = probs(i, j);
      if (p > 0.0) acc -= p * std::log2(p);
    }
  }
  return acc / static_cast<double>(probs.rows());
}

// Joint batches of (s, y) with y = encoder(x) + noise.
inline JointSampler release_sampler(const ChainSpec& chain, const NoiseChannel& channel,
                                    const MlpNetwork& encoder) {
  return [chain, channel, encoder](Index n, Rng& rng) {
    const SampleBatch sx = sample_sensitive_pair(chain, n, rng);
    const Matrix y = encode(encoder, sx.column_block("x")) + draw_noise(channel, n, rng);
    return SampleBatch::pair(sx.column_block("s"), y, "s", "y");
  };
}

// Leakage estimate: a fresh estimator trained for config.monitor_epochs on
// the given (s, y) stream.
inline double privacy_monitor(const JointSampler& sampler, const TradeoffConfig& config,
                              std::uint64_t seed) {
  MineConfig mc;
  mc.epochs = config.monitor_epochs;
  mc.batch_size = config.minibatch;
  mc.learning_rate = config.learning_rate;
  mc.ema_rate = config.ema_rate;
  mc.hidden = config.critic_hidden;
  mc.seed = seed;
  mc.smoothing_window = std::min<Index>(50, config.monitor_epochs);
  return estimate_mi(sampler, mc).final_bits;
}

inline double privacy_monitor(const MlpNetwork& encoder, const TradeoffConfig& config,
                              std::uint64_t seed) {
  return privacy_monitor(release_sampler(config.chain, config.channel, encoder), config, seed);
}

// Mutable state shared by the phases of one run.
class FunnelState {
 public:
  explicit FunnelState(const TradeoffConfig& config)
      : config_(config),
        utility_(2 * config.chain.dim, utility_config(config)),
        encoder_(make_encoder(config)),
        encoder_adam_(encoder_, AdamConfig{.learning_rate = config.encoder_lr()}),
        decoder_(make_decoder(config)),
        decoder_adam_(decoder_, AdamConfig{.learning_rate = config.learning_rate}),
        data_rng_(config.data_seed),
        shuffle_rng_(derive_seed(config.data_seed, 1)) {
    validate(config_);
    if (config_.decoder_mode == DecoderMode::binned_cross_entropy) {
      edges_ = equal_probability_edges(config_.bins, config_.chain.mean, config_.chain.std_dev);
    }
  }

  const TradeoffConfig& config() const { return config_; }
  const MineEstimator& utility_estimator() const { return utility_; }
  const MlpNetwork& encoder() const { return encoder_; }
  MlpNetwork& encoder() { return encoder_; }
  const MlpNetwork& decoder() const { return decoder_; }
  MlpNetwork& decoder() { return decoder_; }
  const std::vector<double>& bin_edges() const { return edges_; }
  const std::vector<double>& encoding_trace() const { return encoding_trace_; }
  const std::vector<double>& decoder_trace() const { return decoder_trace_; }
  Rng& data_rng() { return data_rng_; }

  // Joint ascent of the utility critic and the encoder for
  // config.encoding_epochs steps. Returns the utility estimate in bits
  // (mean over the trailing report window).
  double encoding_phase() {
    const Index k = config_.minibatch;
    const Index d = config_.chain.dim;
    const std::size_t start = encoding_trace_.size();
    for (Index step = 0; step < config_.encoding_epochs; ++step) {
      const Matrix x = sample_sensitive_pair(config_.chain, k, data_rng_).column_block("x");
      const ForwardPass enc = forward_pass(encoder_, x);
      const Matrix& xe = enc.output();
      const Matrix y = xe + draw_noise(config_.channel, k, data_rng_);
      const std::vector<Index> perm = random_permutation(k, shuffle_rng_);

      Matrix joint(k, 2 * d);
      joint << xe, y;
      Matrix product(k, 2 * d);
      product.leftCols(d) = xe;
      for (Index i = 0; i < k; ++i) product.row(i).rightCols(d) = y.row(perm[static_cast<std::size_t>(i)]);

      auto [ev, g] = utility_.step(joint, product);
      encoding_trace_.push_back(ev.bits());

      // y = xe + noise, so the critic's gradient w.r.t. both input halves
      // flows back into xe; product rows route the y half through perm.
      Matrix dxe = g.joint_input_grad.leftCols(d) + g.joint_input_grad.rightCols(d) +
                   g.product_input_grad.leftCols(d);
      for (Index i = 0; i < k; ++i) {
        dxe.row(perm[static_cast<std::size_t>(i)]) += g.product_input_grad.row(i).rightCols(d);
      }
      const Backprop b = backward(encoder_, enc, dxe);
      adam_step(encoder_, encoder_adam_, negated(b.grads));
    }
    return trailing_mean(encoding_trace_, start);
  }

  // Trains the decoder on (y -> x) with the encoder frozen. Returns the
  // trailing mean loss (bits of cross-entropy, or mean squared error).
  double decoding_phase() {
    const Index k = config_.minibatch;
    const std::size_t start = decoder_trace_.size();
    for (Index step = 0; step < config_.decoding_epochs; ++step) {
      const Matrix x = sample_sensitive_pair(config_.chain, k, data_rng_).column_block("x");
      const Matrix y = encode(encoder_, x) + draw_noise(config_.channel, k, data_rng_);
      decoder_trace_.push_back(decoder_step(x, y));
    }
    return trailing_mean(decoder_trace_, start);
  }

  // Loss on (x, y) before the update, then one Adam step.
  double decoder_step(const Matrix& x, const Matrix& y) {
    const Index k = x.rows();
    const ForwardPass pass = forward_pass(decoder_, y);
    double loss = 0.0;
    Matrix delta;
    if (config_.decoder_mode == DecoderMode::binned_cross_entropy) {
      const std::vector<Index> labels = bin_labels(x);
      loss = cross_entropy_bits(pass.output(), labels);
      // d CE_bits / d logits = (p - onehot) / (k ln 2)
      delta = pass.output();
      for (Index i = 0; i < k; ++i) delta(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
      delta /= static_cast<double>(k) * kLn2;
    } else {
      const Matrix diff = pass.output() - x;
      const double count = static_cast<double>(diff.size());
      loss = diff.squaredNorm() / count;
      delta = (2.0 / count) * diff;
    }
    if (!std::isfinite(loss)) throw NumericalError("decoding_phase: non-finite loss");
    const Backprop b = backward_from_logits(decoder_, pass, std::move(delta));
    adam_step(decoder_, decoder_adam_, b.grads);
    return loss;
  }

  std::vector<Index> bin_labels(const Matrix& x) const {
    std::vector<Index> labels(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) labels[static_cast<std::size_t>(i)] = bin_index(edges_, x(i, 0));
    return labels;
  }

 private:
  static MineConfig utility_config(const TradeoffConfig& c) {
    MineConfig mc;
    mc.batch_size = c.minibatch;
    mc.learning_rate = c.learning_rate;
    mc.ema_rate = c.ema_rate;
    mc.hidden = c.critic_hidden;
    mc.seed = c.critic_seed;
    return mc;
  }

  static MlpNetwork make_encoder(const TradeoffConfig& c) {
    if (c.encoder_hidden.empty()) return MlpNetwork::identity(c.chain.dim);
    std::vector<Index> dims{c.chain.dim};
    dims.insert(dims.end(), c.encoder_hidden.begin(), c.encoder_hidden.end());
    dims.push_back(c.chain.dim);
    return MlpNetwork::he_normal(std::move(dims), Activation::elu, OutputActivation::identity,
                                 c.encoder_seed);
  }

  static MlpNetwork make_decoder(const TradeoffConfig& c) {
    std::vector<Index> dims{c.chain.dim};
    dims.insert(dims.end(), c.decoder_hidden.begin(), c.decoder_hidden.end());
    if (c.decoder_mode == DecoderMode::binned_cross_entropy) {
      dims.push_back(c.bins);
      return MlpNetwork::he_normal(std::move(dims), Activation::elu, OutputActivation::softmax,
                                   c.decoder_seed);
    }
    dims.push_back(c.chain.dim);
    return MlpNetwork::he_normal(std::move(dims), Activation::elu, OutputActivation::identity,
                                 c.decoder_seed);
  }

  static double trailing_mean(const std::vector<double>& trace, std::size_t start) {
    const std::size_t n = trace.size() - start;
    const std::size_t w = std::min<std::size_t>(n, kPhaseReportWindow);
    double acc = 0.0;
    for (std::size_t i = trace.size() - w; i < trace.size(); ++i) acc += trace[i];
    return acc / static_cast<double>(w);
  }

  TradeoffConfig config_;
  MineEstimator utility_;
  MlpNetwork encoder_;
  AdamState encoder_adam_;
  MlpNetwork decoder_;
  AdamState decoder_adam_;
  Rng data_rng_;
  Rng shuffle_rng_;
  std::vector<double> edges_;
  std::vector<double> encoding_trace_;
  std::vector<double> decoder_trace_;
};

inline std::uint64_t monitor_seed(const TradeoffConfig& c, Index iteration) {
  return derive_seed(c.critic_seed, 1000 + static_cast<std::uint64_t>(iteration));
}

inline TradeoffRun run_tradeoff(const TradeoffConfig& config) {
  validate(config);
  const auto t0 = std::chrono::steady_clock::now();
  FunnelState state(config);
  TradeoffRun run;
  run.config = config;
  run.initial_mi_sy_bits = privacy_monitor(state.encoder(), config, monitor_seed(config, 0));
  bool within_budget = run.initial_mi_sy_bits <= config.epsilon;

  for (Index it = 0; within_budget && it < config.outer_cap; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    rec.mi_xy_bits = state.encoding_phase();
    rec.decoder_loss = state.decoding_phase();
    rec.mi_sy_bits = privacy_monitor(state.encoder(), config, monitor_seed(config, it + 1));
    rec.compliant = rec.mi_sy_bits <= config.epsilon;
    within_budget = rec.compliant;
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (rec.compliant) {
      ++run.compliant_iterations;
      run.max_utility_bits = run.compliant_iterations == 1
                                 ? rec.mi_xy_bits
                                 : std::max(run.max_utility_bits, rec.mi_xy_bits);
      run.last_compliant_utility_bits = rec.mi_xy_bits;
    }
    run.records.push_back(rec);
  }
  run.budget_respected = within_budget;
  run.hit_cap = within_budget && static_cast<Index>(run.records.size()) == config.outer_cap;
  run.encoding_trace = state.encoding_trace();
  run.decoder_trace = state.decoder_trace();
  return run;
}

struct SweepOutcome {
  std::optional<TradeoffRun> run;
  std::string error;  // set when the run threw

  bool ok() const { return run.has_value(); }
};

// Independent runs, results in input order. A failing run is reported in
// its slot and does not stop the others.
inline std::vector<SweepOutcome> sweep(const std::vector<TradeoffConfig>& configs,
                                       unsigned max_parallel = 1) {
  require(!configs.empty(), "sweep: empty configuration list");
  std::vector<SweepOutcome> out(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        out[i].run = run_tradeoff(configs[i]);
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(max_parallel, static_cast<unsigned>(configs.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  return out;
}

}  // namespace mifunnel
