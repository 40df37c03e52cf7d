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

// mifunnel run <experiment-id> [--config PATH] [--out DIR] [--seeds LIST]
// mifunnel estimate --rho R
// mifunnel oracle --rho R
//
// Exit status: 0 ok, 1 usage or configuration error, 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mifunnel/allocator.hpp"
#include "mifunnel/experiment.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string_view rest = text;
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view item = mifunnel::detail::trim(rest.substr(0, comma));
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
      throw mifunnel::InvalidArgument("--seeds: bad seed '" + std::string(item) + "'");
    }
    seeds.push_back(v);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  mifunnel::tune_allocator();
  CLI::App app{"Neural mutual-information estimation and privacy-utility trade-off experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a reproduction experiment");
  std::string experiment;
  std::string config_path;
  std::string out_dir = "results";
  std::string seeds_text;
  run->add_option("experiment", experiment,
                  "fig4_convergence | fig5_budget_traces | fig6_budget_curve | "
                  "fig7_noise_traces | fig8_noise_bars | fig9_gauss_params")
      ->required();
  run->add_option("--config", config_path, "Config file (key = value, [experiment] sections)");
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--seeds", seeds_text, "Comma-separated seed list");

  auto* estimate = app.add_subcommand("estimate", "MINE estimate on a bivariate Gaussian pair");
  double est_rho = 0.0;
  mifunnel::Index est_epochs = 500;
  mifunnel::Index est_batch = 20000;
  double est_lr = 5e-4;
  std::uint64_t est_seed = 0;
  estimate->add_option("--rho", est_rho, "Correlation coefficient, |rho| < 1")->required();
  estimate->add_option("--epochs", est_epochs, "Training epochs")->capture_default_str();
  estimate->add_option("--minibatch", est_batch, "Minibatch size")->capture_default_str();
  estimate->add_option("--learning-rate", est_lr, "Adam learning rate")->capture_default_str();
  auto* seed_opt = estimate->add_option("--seed", est_seed, "Seed (default: MIFUNNEL_SEED or 1)");

  auto* oracle = app.add_subcommand("oracle", "Closed-form mutual information of a Gaussian pair");
  double oracle_rho = 0.0;
  oracle->add_option("--rho", oracle_rho, "Correlation coefficient, |rho| < 1")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run) {
      mifunnel::ExperimentSpec spec;
      spec.id = mifunnel::parse_experiment(experiment);
      spec.out_dir = out_dir;
      if (!config_path.empty()) spec.settings = mifunnel::load_config(config_path, spec.id);
      spec.seeds = seeds_text.empty() ? mifunnel::default_seeds(spec.id) : parse_seed_list(seeds_text);
      try {
        for (const std::string& f : mifunnel::run_experiment(spec)) std::cout << f << '\n';
      } catch (const mifunnel::InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
      }
    } else if (*estimate) {
      mifunnel::MineConfig c;
      c.epochs = est_epochs;
      c.batch_size = est_batch;
      c.learning_rate = est_lr;
      c.seed = seed_opt->count() > 0 ? est_seed : mifunnel::default_seed();
      const mifunnel::MineTrace trace =
          mifunnel::estimate_mi(mifunnel::gaussian_pair_sampler({.rho = est_rho}), c);
      std::printf("estimate_bits %.6f\ntrue_bits %.6f\n", trace.final_bits,
                  mifunnel::gaussian_mi(est_rho));
    } else if (*oracle) {
      std::printf("%.10f\n", mifunnel::gaussian_mi(oracle_rho));
    }
  } catch (const mifunnel::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
