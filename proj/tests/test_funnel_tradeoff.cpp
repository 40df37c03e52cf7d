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

#include <gtest/gtest.h>

#include "mifunnel/funnel_tradeoff.hpp"
#include "mifunnel/mi_oracle.hpp"

using namespace mifunnel;

namespace {

// Small and fast; enough to exercise the control flow.
TradeoffConfig tiny_config() {
  TradeoffConfig c;
  c.minibatch = 256;
  c.encoding_epochs = 5;
  c.decoding_epochs = 3;
  c.monitor_epochs = 20;
  c.outer_cap = 4;
  c.critic_hidden = {16, 16};
  c.decoder_hidden = {16, 16};
  c.encoder_learning_rate = 0.01;
  return c;
}

void zero_parameters(MlpNetwork& net) {
  for (auto& layer : net.parameters()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
}

}  // namespace

TEST(Encode, IdentityEncoderPassesThrough) {
  Rng rng(1);
  const Matrix x = sample_sensitive_pair({}, 50, rng).column_block("x");
  EXPECT_TRUE(encode(MlpNetwork::identity(1), x) == x);
}

TEST(Encode, ZeroWeightEncoderIsConstant) {
  MlpNetwork enc({1, 1}, Activation::identity);
  enc.parameters()[0].bias(0) = 0.25;
  Rng rng(2);
  const Matrix out = encode(enc, sample_sensitive_pair({}, 20, rng).column_block("x"));
  EXPECT_TRUE((out.array() == 0.25).all());
}

TEST(Bins, EqualProbabilityEdges) {
  const auto edges = equal_probability_edges(32, 0.0, 1.0);
  ASSERT_EQ(edges.size(), 31u);
  for (std::size_t b = 0; b < edges.size(); ++b) {
    EXPECT_NEAR(0.5 * std::erfc(-edges[b] / std::sqrt(2.0)), (b + 1) / 32.0, 1e-12);
  }
  EXPECT_NEAR(edges[15], 0.0, 1e-12);
  EXPECT_EQ(bin_index(edges, -100.0), 0);
  EXPECT_EQ(bin_index(edges, 100.0), 31);
}

TEST(Bins, EmpiricalOccupancyIsUniform) {
  const auto edges = equal_probability_edges(8, 0.0, 1.0);
  Rng rng(3);
  const Matrix x = sample_sensitive_pair({}, 80000, rng).column_block("x");
  std::vector<int> counts(8, 0);
  for (Index i = 0; i < x.rows(); ++i) ++counts[static_cast<std::size_t>(bin_index(edges, x(i, 0)))];
  for (int c : counts) EXPECT_NEAR(c / 80000.0, 0.125, 0.006);
}

TEST(Decoder, UniformPredictionCostsLog2Bins) {
  TradeoffConfig c = tiny_config();
  FunnelState state(c);
  zero_parameters(state.decoder());
  Rng rng(4);
  const Matrix x = sample_sensitive_pair({}, 256, rng).column_block("x");
  EXPECT_NEAR(state.decoder_step(x, x), 5.0, 1e-12);
}

TEST(Decoder, MeanPredictorLossIsVariance) {
  TradeoffConfig c = tiny_config();
  c.decoder_mode = DecoderMode::squared_error;
  FunnelState state(c);
  zero_parameters(state.decoder());  // predicts 0 = E[x]
  Rng rng(5);
  const Matrix x = sample_sensitive_pair({}, 20000, rng).column_block("x");
  EXPECT_NEAR(state.decoder_step(x, x), 1.0, 0.02);
}

TEST(Decoder, NoiselessChannelIsNearlyInvertible) {
  TradeoffConfig c;
  c.channel = NoiseChannel::gaussian(1e-9);
  c.minibatch = 1000;
  c.decoding_epochs = 1500;
  c.learning_rate = 0.005;
  FunnelState state(c);
  state.decoding_phase();
  const auto& trace = state.decoder_trace();
  double tail = 0.0;
  for (std::size_t i = trace.size() - 50; i < trace.size(); ++i) tail += trace[i];
  EXPECT_LT(tail / 50.0, 1.0);
}

TEST(Decoder, LiteralOutputEntropyIgnoresTheTarget) {
  // One-hot outputs have zero self-entropy whatever x was, so the literal
  // reading cannot serve as a training signal.
  Matrix onehot = Matrix::Zero(4, 32);
  for (Index i = 0; i < 4; ++i) onehot(i, 7) = 1.0;
  EXPECT_EQ(output_entropy_bits(onehot), 0.0);
  EXPECT_NEAR(output_entropy_bits(Matrix::Constant(3, 32, 1.0 / 32)), 5.0, 1e-12);
  EXPECT_GT(cross_entropy_bits(onehot, {0, 1, 2, 3}), 100.0);
}

TEST(EncodingPhase, FrozenEncoderIsPlainEstimatorTraining) {
  TradeoffConfig c = tiny_config();
  c.encoder_learning_rate = 0.0;
  c.channel = NoiseChannel::laplacian(0.7);
  FunnelState state(c);
  state.encoding_phase();
  EXPECT_TRUE(state.encoder().parameters()[0].weight.isIdentity(0.0));
  EXPECT_TRUE(state.encoder().parameters()[0].bias.isZero(0.0));

  MineConfig mc;
  mc.batch_size = c.minibatch;
  mc.learning_rate = c.learning_rate;
  mc.ema_rate = c.ema_rate;
  mc.hidden = c.critic_hidden;
  mc.seed = c.critic_seed;
  MineEstimator reference(2, mc);
  Rng data(c.data_seed);
  Rng shuffle(derive_seed(c.data_seed, 1));
  std::vector<double> bits;
  for (Index e = 0; e < c.encoding_epochs; ++e) {
    const Matrix x = sample_sensitive_pair(c.chain, c.minibatch, data).column_block("x");
    const Matrix y = x + draw_noise(c.channel, c.minibatch, data);
    const SampleBatch joint = SampleBatch::pair(x, y, "x", "y");
    bits.push_back(nats_to_bits(bias_corrected_step(reference, joint, marginal_shuffle(joint, shuffle))));
  }
  EXPECT_EQ(state.encoding_trace(), bits);
  EXPECT_TRUE(flatten(state.utility_estimator().critic().parameters()) ==
              flatten(reference.critic().parameters()));
}

TEST(EncodingPhase, EncoderGradientMatchesDifferences) {
  // The encoder update uses d J / d x_enc through both critic inputs. Check it
  // against finite differences of J in the encoder gain with noise and
  // permutation held fixed.
  const TradeoffConfig c = tiny_config();
  Rng rng(9);
  const Index k = 64;
  const Matrix x = sample_sensitive_pair(c.chain, k, rng).column_block("x");
  const Matrix noise = draw_noise(c.channel, k, rng);
  const auto perm = random_permutation(k, rng);
  MineConfig mc;
  mc.hidden = {8, 8};
  mc.zero_output_layer = false;
  const MineEstimator critic(2, mc);
  auto objective = [&](double gain, Matrix* dxe) {
    const Matrix xe = gain * x;
    const Matrix y = xe + noise;
    Matrix joint(k, 2), product(k, 2);
    joint << xe, y;
    product.col(0) = xe;
    for (Index i = 0; i < k; ++i) product(i, 1) = y(perm[i], 0);
    const DvEvaluation ev = critic.evaluate(joint, product);
    if (dxe) {
      const DvGradient g = critic.gradient(ev, ev.log_mean_exp_product);
      *dxe = g.joint_input_grad.col(0) + g.joint_input_grad.col(1) + g.product_input_grad.col(0);
      for (Index i = 0; i < k; ++i) (*dxe)(perm[i], 0) += g.product_input_grad(i, 1);
    }
    return ev.nats;
  };
  Matrix dxe;
  objective(1.3, &dxe);
  const double analytic = (dxe.array() * x.array()).sum();  // chain rule through xe = gain * x
  const double h = 1e-6;
  const double numeric = (objective(1.3 + h, nullptr) - objective(1.3 - h, nullptr)) / (2 * h);
  EXPECT_NEAR(analytic, numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
}

TEST(Monitor, IndependentSecretReportsNearZero) {
  TradeoffConfig c;
  c.chain.rho_sx = 0.0;
  c.minibatch = 2000;
  const double bits = privacy_monitor(MlpNetwork::identity(1), c, 77);
  EXPECT_LT(bits, 0.05);
}

TEST(Monitor, NoiselessIdentityReleaseRecoversSecretInformation) {
  TradeoffConfig c;
  c.channel = NoiseChannel::gaussian(1e-9);
  c.minibatch = 2000;
  const double bits = privacy_monitor(MlpNetwork::identity(1), c, 78);
  EXPECT_GE(bits, gaussian_mi(0.8) - 0.1);
}

TEST(Monitor, CopyOfSecretIsLargeLeak) {
  TradeoffConfig c;
  c.minibatch = 2000;
  const JointSampler copy = [](Index n, Rng& rng) {
    const Matrix s = sample_sensitive_pair({}, n, rng).column_block("s");
    return SampleBatch::pair(s, s, "s", "y");
  };
  // A binned copy of s over 32 equal-probability cells carries log2(32) bits,
  // so the continuous copy carries at least that much.
  Matrix binned = Matrix::Identity(32, 32) / 32.0;
  ASSERT_NEAR(discrete_mi(DiscreteJoint(binned)), 5.0, 1e-12);
  EXPECT_GE(privacy_monitor(copy, c, 79), 1.5);
}

TEST(RunTradeoff, ZeroBudgetNeverEntersLoop) {
  TradeoffConfig c = tiny_config();
  c.epsilon = 0.0;
  const TradeoffRun run = run_tradeoff(c);
  EXPECT_GT(run.initial_mi_sy_bits, 0.0);
  EXPECT_TRUE(run.records.empty());
  EXPECT_EQ(run.compliant_iterations, 0);
  EXPECT_EQ(run.max_utility_bits, 0.0);
  EXPECT_FALSE(run.budget_respected);
}

TEST(RunTradeoff, RecordsRespectTheBudgetByConstruction) {
  for (double eps : {0.2, 0.3, 5.0}) {
    TradeoffConfig c = tiny_config();
    c.epsilon = eps;
    const TradeoffRun run = run_tradeoff(c);
    double best = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < run.records.size(); ++i) {
      const auto& r = run.records[i];
      EXPECT_EQ(r.compliant, r.mi_sy_bits <= eps);
      if (i + 1 < run.records.size()) {
        EXPECT_TRUE(r.compliant);
      }
      if (r.compliant) {
        best = any ? std::max(best, r.mi_xy_bits) : r.mi_xy_bits;
        any = true;
      }
    }
    EXPECT_EQ(run.max_utility_bits, best);
    EXPECT_EQ(run.hit_cap, run.budget_respected && static_cast<Index>(run.records.size()) == c.outer_cap);
    EXPECT_EQ(run.encoding_trace.size(), run.records.size() * static_cast<std::size_t>(c.encoding_epochs));
  }
}

TEST(RunTradeoff, LargeBudgetRunsToTheCap) {
  TradeoffConfig c = tiny_config();
  c.epsilon = 10.0;
  const TradeoffRun run = run_tradeoff(c);
  EXPECT_TRUE(run.hit_cap);
  EXPECT_EQ(run.compliant_iterations, c.outer_cap);
}

TEST(RunTradeoff, ReproducibleFromSeeds) {
  TradeoffConfig c = tiny_config();
  c.epsilon = 2.0;
  const TradeoffRun a = run_tradeoff(c);
  const TradeoffRun b = run_tradeoff(c);
  EXPECT_EQ(a.max_utility_bits, b.max_utility_bits);
  EXPECT_EQ(a.encoding_trace, b.encoding_trace);
  EXPECT_EQ(a.decoder_trace, b.decoder_trace);
  c.seeded(99);
  EXPECT_NE(run_tradeoff(c).encoding_trace, a.encoding_trace);
}

TEST(RunTradeoff, ValidatesConfig) {
  TradeoffConfig c = tiny_config();
  c.epsilon = -0.1;
  EXPECT_THROW(run_tradeoff(c), InvalidArgument);
  c = tiny_config();
  c.bins = 1;
  EXPECT_THROW(run_tradeoff(c), InvalidArgument);
  c = tiny_config();
  c.chain.dim = 2;
  c.channel = NoiseChannel::gaussian(1.0, 2);
  EXPECT_THROW(run_tradeoff(c), InvalidArgument);  // binned decoder is 1-D only
  c.decoder_mode = DecoderMode::squared_error;
  EXPECT_NO_THROW(run_tradeoff(c));
}

TEST(Sweep, EmptyListIsAnError) {
  EXPECT_THROW(sweep({}), InvalidArgument);
}

TEST(Sweep, SingleConfigMatchesDirectRun) {
  TradeoffConfig c = tiny_config();
  c.epsilon = 1.0;
  const auto out = sweep({c});
  ASSERT_EQ(out.size(), 1u);
  ASSERT_TRUE(out[0].ok());
  EXPECT_EQ(out[0].run->encoding_trace, run_tradeoff(c).encoding_trace);
}

TEST(Sweep, FailuresStayInTheirSlot) {
  TradeoffConfig good = tiny_config();
  TradeoffConfig bad = tiny_config();
  bad.bins = 0;
  const auto out = sweep({good, bad, good}, 2);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_TRUE(out[0].ok());
  EXPECT_FALSE(out[1].ok());
  EXPECT_NE(out[1].error.find("bin"), std::string::npos);
  EXPECT_TRUE(out[2].ok());
  EXPECT_EQ(out[0].run->encoding_trace, out[2].run->encoding_trace);
}
