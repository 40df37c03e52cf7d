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

// Reproduction experiments: run them, then write runs.csv, summary.json and
// one SVG figure into the output directory.

#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mifunnel/experiment_config.hpp"
#include "mifunnel/experiment_output.hpp"
#include "mifunnel/funnel_tradeoff.hpp"
#include "mifunnel/mi_oracle.hpp"
#include "mifunnel/mine_estimator.hpp"

namespace mifunnel {

using Json = nlohmann::ordered_json;

inline constexpr std::uint64_t kDefaultSeed = 1;

// MIFUNNEL_SEED if set, else kDefaultSeed.
inline std::uint64_t default_seed() {
  const char* env = std::getenv("MIFUNNEL_SEED");
  if (env == nullptr || *env == '\0') return kDefaultSeed;
  const std::string_view s(env);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw InvalidArgument("MIFUNNEL_SEED must be a non-negative integer, got '" +
                          std::string(s) + "'");
  }
  return v;
}

// One seed for the convergence run, three consecutive seeds for the
// trade-off experiments (their figures report medians).
inline std::vector<std::uint64_t> default_seeds(ExperimentId id) {
  const std::uint64_t base = default_seed();
  if (id == ExperimentId::fig4_convergence) return {base};
  return {base, base + 1, base + 2};
}

struct ExperimentSpec {
  ExperimentId id = ExperimentId::fig4_convergence;
  ExperimentSettings settings;
  std::string out_dir = "results";
  std::vector<std::uint64_t> seeds;  // empty: default_seeds(id)
};

inline MineConfig mine_config(const ExperimentSettings& s, std::uint64_t seed) {
  MineConfig c;
  c.epochs = s.epochs;
  c.batch_size = s.minibatch;
  c.learning_rate = s.learning_rate;
  c.ema_rate = s.ema_rate;
  c.hidden = s.hidden();
  c.seed = seed;
  return c;
}

inline TradeoffConfig tradeoff_config(const ExperimentSettings& s, double epsilon,
                                      const NoiseChannel& channel, std::uint64_t seed) {
  TradeoffConfig c;
  c.epsilon = epsilon;
  c.learning_rate = s.learning_rate;
  c.encoder_learning_rate = s.encoder_learning_rate;
  c.minibatch = s.minibatch;
  c.encoding_epochs = s.encoding_epochs;
  c.decoding_epochs = s.decoding_epochs;
  c.monitor_epochs = s.monitor_epochs;
  c.outer_cap = s.outer_cap;
  c.ema_rate = s.ema_rate;
  c.critic_hidden = s.hidden();
  c.decoder_hidden = s.hidden();
  c.channel = channel;
  c.chain.rho_sx = s.rho_sx;
  c.decoder_mode = s.decoder_mode;
  c.bins = s.bins;
  c.seeded(seed);
  return c;
}

inline NoiseChannel make_channel(NoiseKind kind, double std_dev, double mean = 0.0) {
  return kind == NoiseKind::gaussian ? NoiseChannel::gaussian(std_dev, 1, mean)
                                     : NoiseChannel::laplacian(std_dev, 1, mean);
}

// One experimental cell; each is run once per seed.
struct Condition {
  double epsilon = 0.75;
  NoiseKind kind = NoiseKind::gaussian;
  double std_dev = 1.0;
  double mean = 0.0;

  std::string label(bool with_mean = false) const {
    std::string s = "eps" + format_double(epsilon) + "_" + std::string(to_string(kind)) + "_std" +
                    format_double(std_dev);
    if (with_mean) s += "_mean" + format_double(mean);
    return s;
  }
};

inline std::vector<Condition> experiment_conditions(ExperimentId id, const ExperimentSettings& s) {
  std::vector<Condition> out;
  switch (id) {
    case ExperimentId::fig4_convergence:
      break;
    case ExperimentId::fig5_budget_traces:
    case ExperimentId::fig6_budget_curve:
      for (double e : s.epsilons) out.push_back({e, s.noise_kind, s.noise_std, 0.0});
      break;
    case ExperimentId::fig7_noise_traces:
      for (NoiseKind k : {NoiseKind::gaussian, NoiseKind::laplacian}) {
        for (double sd : s.noise_stds) out.push_back({s.epsilon, k, sd, 0.0});
      }
      break;
    case ExperimentId::fig8_noise_bars:
      for (double e : s.epsilons) {
        for (NoiseKind k : {NoiseKind::gaussian, NoiseKind::laplacian}) {
          out.push_back({e, k, s.noise_std, 0.0});
        }
      }
      break;
    case ExperimentId::fig9_gauss_params:
      for (double m : s.gauss_means) {
        for (double sd : s.gauss_stds) out.push_back({s.epsilon, NoiseKind::gaussian, sd, m});
      }
      break;
  }
  return out;
}

inline double median(std::vector<double> v) {
  require(!v.empty(), "median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline Json settings_json(const ExperimentSettings& s) {
  Json j;
  j["learning_rate"] = s.learning_rate;
  j["layers"] = s.layers;
  j["hidden_width"] = s.hidden_width;
  j["epochs"] = s.epochs;
  j["epsilons"] = s.epsilons;
  j["minibatch"] = s.minibatch;
  j["ema_rate"] = s.ema_rate;
  j["target_mi"] = s.target_mi;
  j["rho_sx"] = s.rho_sx;
  j["epsilon"] = s.epsilon;
  j["noise_kind"] = to_string(s.noise_kind);
  j["noise_std"] = s.noise_std;
  j["noise_stds"] = s.noise_stds;
  j["gauss_stds"] = s.gauss_stds;
  j["gauss_means"] = s.gauss_means;
  j["encoding_epochs"] = s.encoding_epochs;
  j["decoding_epochs"] = s.decoding_epochs;
  j["monitor_epochs"] = s.monitor_epochs;
  j["outer_cap"] = s.outer_cap;
  j["encoder_learning_rate"] = s.encoder_learning_rate.value_or(s.learning_rate);
  j["decoder"] = to_string(s.decoder_mode);
  j["bins"] = s.bins;
  j["parallel"] = s.parallel;
  return j;
}

struct ExperimentResult {
  ExperimentId id = ExperimentId::fig4_convergence;
  std::vector<RunRecord> records;
  Json summary;
  std::string figure_svg;
  std::vector<TradeoffRun> runs;  // trade-off experiments only, in condition-major order
};

namespace detail {

inline ExperimentResult run_convergence(const ExperimentSpec& spec,
                                        const std::vector<std::uint64_t>& seeds) {
  const ExperimentSettings& s = spec.settings;
  const std::string exp(to_string(spec.id));
  const double rho = rho_for_mi(s.target_mi);
  const double oracle = gaussian_mi(rho);
  ExperimentResult res;
  res.id = spec.id;
  Json runs = Json::array();
  LineChart chart{"MINE estimate on a Gaussian pair", "epoch", "mutual information (bits)", {},
                  {{"true MI " + format_double(s.target_mi), s.target_mi}}, false};
  for (std::uint64_t seed : seeds) {
    const std::string run_id = "mine_seed" + std::to_string(seed);
    const MineTrace trace = estimate_mi(gaussian_pair_sampler({.rho = rho}), mine_config(s, seed));
    LineSeries series{"seed " + std::to_string(seed), {}, {}};
    for (std::size_t e = 0; e < trace.bits.size(); ++e) {
      res.records.push_back({run_id, exp, static_cast<Index>(e), 0.0, trace.bits[e], 0.0, "none",
                             0.0, seed, trace.wall_ms[e]});
      series.x.push_back(static_cast<double>(e));
      series.y.push_back(trace.bits[e]);
    }
    chart.series.push_back(std::move(series));
    Json r;
    r["run_id"] = run_id;
    r["seed"] = seed;
    r["final_bits"] = trace.final_bits;
    r["abs_error_bits"] = std::abs(trace.final_bits - oracle);
    if (trace.bits.size() >= 250) r["smoothed_bits_at_epoch_250"] = trace.smoothed_at(249, 50);
    r["wall_ms"] = trace.wall_ms.back();
    runs.push_back(r);
  }
  res.summary["experiment"] = exp;
  res.summary["settings"] = settings_json(s);
  res.summary["seeds"] = seeds;
  res.summary["rho"] = rho;
  res.summary["oracle_bits"] = oracle;
  res.summary["estimate_column"] = "mi_sy_bits";
  res.summary["runs"] = runs;
  res.figure_svg = render_svg(chart);
  return res;
}

inline LineChart trace_chart(const std::string& title, const std::vector<Condition>& conds,
                             const std::vector<TradeoffRun>& runs, std::size_t n_seeds,
                             bool with_mean) {
  LineChart chart{title, "outer iteration", "utility I(X;Y) (bits)", {}, {}, true};
  for (std::size_t c = 0; c < conds.size(); ++c) {
    const TradeoffRun& run = runs[c * n_seeds];  // first seed
    LineSeries series{conds[c].label(with_mean), {}, {}};
    for (const IterationRecord& rec : run.records) {
      series.x.push_back(static_cast<double>(rec.iteration));
      series.y.push_back(rec.mi_xy_bits);
    }
    if (!series.x.empty()) chart.series.push_back(std::move(series));
  }
  if (chart.series.empty()) chart.series.push_back({"no iterations", {0.0}, {0.0}});
  return chart;
}

inline ExperimentResult run_tradeoff_experiment(const ExperimentSpec& spec,
                                                const std::vector<std::uint64_t>& seeds) {
  const ExperimentSettings& s = spec.settings;
  const std::string exp(to_string(spec.id));
  const bool with_mean = spec.id == ExperimentId::fig9_gauss_params;
  const std::vector<Condition> conds = experiment_conditions(spec.id, s);
  require(!conds.empty(), "run_experiment: no conditions to run");

  std::vector<TradeoffConfig> configs;
  for (const Condition& c : conds) {
    for (std::uint64_t seed : seeds) {
      configs.push_back(tradeoff_config(s, c.epsilon, make_channel(c.kind, c.std_dev, c.mean), seed));
    }
  }
  const std::vector<SweepOutcome> outcomes = sweep(configs, static_cast<unsigned>(s.parallel));
  std::string errors;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].ok()) {
      errors += "\n  " + conds[i / seeds.size()].label(with_mean) + " seed " +
                std::to_string(seeds[i % seeds.size()]) + ": " + outcomes[i].error;
    }
  }
  if (!errors.empty()) throw NumericalError("run_experiment: failed runs:" + errors);

  ExperimentResult res;
  res.id = spec.id;
  Json runs = Json::array();
  Json groups = Json::array();
  std::vector<double> medians;
  for (std::size_t c = 0; c < conds.size(); ++c) {
    std::vector<double> utilities;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const TradeoffRun& run = *outcomes[c * seeds.size() + k].run;
      const std::string run_id = conds[c].label(with_mean) + "_seed" + std::to_string(seeds[k]);
      for (const IterationRecord& rec : run.records) {
        res.records.push_back({run_id, exp, rec.iteration, rec.mi_xy_bits, rec.mi_sy_bits,
                               conds[c].epsilon, std::string(to_string(conds[c].kind)),
                               conds[c].std_dev, seeds[k], rec.wall_ms});
      }
      Json r;
      r["run_id"] = run_id;
      r["epsilon"] = conds[c].epsilon;
      r["noise_kind"] = to_string(conds[c].kind);
      r["noise_std"] = conds[c].std_dev;
      r["noise_mean"] = conds[c].mean;
      r["seed"] = seeds[k];
      r["initial_mi_sy_bits"] = run.initial_mi_sy_bits;
      r["max_utility_bits"] = run.max_utility_bits;
      r["last_compliant_utility_bits"] = run.last_compliant_utility_bits;
      r["iterations"] = run.records.size();
      r["compliant_iterations"] = run.compliant_iterations;
      r["hit_cap"] = run.hit_cap;
      r["budget_respected"] = run.budget_respected;
      r["wall_ms"] = run.records.empty() ? 0.0 : run.records.back().wall_ms;
      runs.push_back(r);
      utilities.push_back(run.max_utility_bits);
      res.runs.push_back(run);
    }
    medians.push_back(median(utilities));
    Json g;
    g["condition"] = conds[c].label(with_mean);
    g["epsilon"] = conds[c].epsilon;
    g["noise_kind"] = to_string(conds[c].kind);
    g["noise_std"] = conds[c].std_dev;
    g["noise_mean"] = conds[c].mean;
    g["median_max_utility_bits"] = medians.back();
    groups.push_back(g);
  }

  res.summary["experiment"] = exp;
  res.summary["settings"] = settings_json(s);
  res.summary["seeds"] = seeds;
  res.summary["utility_source"] =
      "utility critic objective during encoding, mean of the last " +
      std::to_string(kPhaseReportWindow) + " steps of each phase";
  res.summary["groups"] = groups;
  res.summary["runs"] = runs;

  switch (spec.id) {
    case ExperimentId::fig5_budget_traces:
      res.figure_svg = render_svg(trace_chart("Utility per iteration by privacy budget (seed " +
                                                  std::to_string(seeds.front()) + ")",
                                              conds, res.runs, seeds.size(), false));
      break;
    case ExperimentId::fig7_noise_traces:
      res.figure_svg = render_svg(trace_chart("Utility per iteration by noise level (seed " +
                                                  std::to_string(seeds.front()) + ")",
                                              conds, res.runs, seeds.size(), false));
      break;
    case ExperimentId::fig6_budget_curve: {
      LineChart chart{"Maximum utility vs privacy budget (median over seeds)",
                      "privacy budget epsilon (bits)", "max utility I(X;Y) (bits)", {}, {}, true};
      LineSeries series{std::string(to_string(s.noise_kind)) + " std " + format_double(s.noise_std),
                        {}, {}};
      for (std::size_t c = 0; c < conds.size(); ++c) {
        series.x.push_back(conds[c].epsilon);
        series.y.push_back(medians[c]);
      }
      chart.series.push_back(std::move(series));
      res.figure_svg = render_svg(chart);
      break;
    }
    case ExperimentId::fig8_noise_bars: {
      BarChart chart{"Maximum utility by budget and noise (median over seeds)",
                     "privacy budget epsilon (bits)", "max utility I(X;Y) (bits)", {},
                     {"gaussian", "laplacian"}, {}};
      for (std::size_t c = 0; c + 1 < conds.size(); c += 2) {
        chart.groups.push_back("eps " + format_double(conds[c].epsilon));
        chart.values.push_back({medians[c], medians[c + 1]});
      }
      res.figure_svg = render_svg(chart);
      break;
    }
    case ExperimentId::fig9_gauss_params: {
      BarChart chart{"Maximum utility by Gaussian noise parameters (median over seeds)",
                     "noise parameters", "max utility I(X;Y) (bits)", {}, {"max utility"}, {}};
      for (std::size_t c = 0; c < conds.size(); ++c) {
        chart.groups.push_back("mean " + format_double(conds[c].mean) + ", std " +
                               format_double(conds[c].std_dev));
        chart.values.push_back({medians[c]});
      }
      res.figure_svg = render_svg(chart);
      break;
    }
    case ExperimentId::fig4_convergence:
      break;
  }
  return res;
}

}  // namespace detail

// Runs the experiment without touching the filesystem.
inline ExperimentResult compute_experiment(const ExperimentSpec& spec) {
  const std::vector<std::uint64_t> seeds = spec.seeds.empty() ? default_seeds(spec.id) : spec.seeds;
  if (spec.id == ExperimentId::fig4_convergence) return detail::run_convergence(spec, seeds);
  return detail::run_tradeoff_experiment(spec, seeds);
}

inline std::vector<std::string> write_experiment(const ExperimentResult& res,
                                                 const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + out_dir + "': " + ec.message());
  const std::filesystem::path dir(out_dir);
  const std::vector<std::string> files = {(dir / "runs.csv").string(),
                                          (dir / "summary.json").string(),
                                          (dir / (std::string(to_string(res.id)) + ".svg")).string()};
  if (res.records.empty()) {
    write_text_file(files[0], std::string(kCsvHeader) + "\n");
  } else {
    emit_csv(files[0], res.records);
  }
  write_text_file(files[1], res.summary.dump(2) + "\n");
  write_text_file(files[2], res.figure_svg);
  return files;
}

// Runs the experiment and writes runs.csv, summary.json and <id>.svg.
inline std::vector<std::string> run_experiment(const ExperimentSpec& spec) {
  return write_experiment(compute_experiment(spec), spec.out_dir);
}

}  // namespace mifunnel
