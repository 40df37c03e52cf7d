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

// Estimate I(S;Y) of a correlated Gaussian pair, then run one short
// budget-constrained release optimisation.

#include <cstdio>

#include "mifunnel/allocator.hpp"
#include "mifunnel/funnel_tradeoff.hpp"
#include "mifunnel/mi_oracle.hpp"
#include "mifunnel/mine_estimator.hpp"

int main() {
  mifunnel::tune_allocator();

  mifunnel::MineConfig mine;
  mine.epochs = 300;
  mine.batch_size = 2000;
  const auto trace = mifunnel::estimate_mi(mifunnel::gaussian_pair_sampler({.rho = 0.8}), mine);
  std::printf("estimate %.4f bits, closed form %.4f bits\n", trace.final_bits,
              mifunnel::gaussian_mi(0.8));

  mifunnel::TradeoffConfig cfg;
  cfg.epsilon = 0.5;
  cfg.minibatch = 2000;
  cfg.outer_cap = 5;
  cfg.encoder_learning_rate = 0.005;
  cfg.channel = mifunnel::NoiseChannel::gaussian(1.0);
  const auto run = mifunnel::run_tradeoff(cfg);
  std::printf("initial leakage %.4f bits\n", run.initial_mi_sy_bits);
  for (const auto& r : run.records) {
    std::printf("iteration %ld: utility %.4f bits, leakage %.4f bits%s\n",
                static_cast<long>(r.iteration), r.mi_xy_bits, r.mi_sy_bits,
                r.compliant ? "" : " (over budget)");
  }
  std::printf("max compliant utility %.4f bits\n", run.max_utility_bits);
}
