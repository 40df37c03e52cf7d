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
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <regex>

#include "mifunnel/experiment.hpp"

using namespace mifunnel;
namespace fs = std::filesystem;

namespace {

ExperimentSettings tiny_settings() {
  ExperimentSettings s;
  s.minibatch = 128;
  s.hidden_width = 12;
  s.epochs = 30;
  s.encoding_epochs = 4;
  s.decoding_epochs = 2;
  s.monitor_epochs = 15;
  s.outer_cap = 3;
  s.epsilons = {0.3, 2.0};
  s.encoder_learning_rate = 0.01;
  return s;
}

std::string tmp_dir(const std::string& name) {
  const fs::path p = fs::path(MIFUNNEL_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

struct CliResult {
  int code;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(MIFUNNEL_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[256];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    if (value) setenv(name, value, 1);
    else unsetenv(name);
  }
  ~ScopedEnv() {
    if (old_) setenv(name_, old_->c_str(), 1);
    else unsetenv(name_);
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

}  // namespace

// ---- config ----------------------------------------------------------------

TEST(Config, EmptyFileGivesDefaults) {
  const ExperimentSettings s = resolve_settings(parse_config(""), ExperimentId::fig6_budget_curve);
  EXPECT_EQ(s.learning_rate, 0.0005);
  EXPECT_EQ(s.layers, 3);
  EXPECT_EQ(s.epochs, 500);
  EXPECT_EQ(s.minibatch, 20000);
  EXPECT_EQ(s.epsilons, (std::vector<double>{0.5, 0.75, 1.0, 1.25}));
  EXPECT_EQ(s.hidden(), (std::vector<Index>{100, 100}));
}

TEST(Config, SingleOverride) {
  const ExperimentSettings s =
      resolve_settings(parse_config("learning_rate = 0.001\n"), ExperimentId::fig4_convergence);
  EXPECT_EQ(s.learning_rate, 0.001);
  EXPECT_EQ(s.minibatch, 20000);
  EXPECT_EQ(s.epochs, 500);
}

TEST(Config, SectionsApplyToTheirExperimentOnly) {
  const std::string text =
      "# shared\n"
      "minibatch = 2000   # trailing comment\n"
      "\n"
      "[fig6_budget_curve]\n"
      "epsilons = 0.5, 1.25\n"
      "minibatch = 500\n"
      "[fig8_noise_bars]\n"
      "noise_kind = laplacian\n";
  const ConfigFile f = parse_config(text);
  const auto fig6 = resolve_settings(f, ExperimentId::fig6_budget_curve);
  EXPECT_EQ(fig6.minibatch, 500);
  EXPECT_EQ(fig6.epsilons, (std::vector<double>{0.5, 1.25}));
  const auto fig5 = resolve_settings(f, ExperimentId::fig5_budget_traces);
  EXPECT_EQ(fig5.minibatch, 2000);
  EXPECT_EQ(fig5.epsilons.size(), 4u);
  EXPECT_EQ(resolve_settings(f, ExperimentId::fig8_noise_bars).noise_kind, NoiseKind::laplacian);
}

TEST(Config, MalformedLineIsNamed) {
  try {
    parse_config("minibatch = 10\n\nthis line has no equals sign\n", "my.conf");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("my.conf:3:"), std::string::npos);
  }
}

TEST(Config, UnknownKeyIsAnError) {
  try {
    parse_config("[fig5_budget_traces]\nlearning_rat = 0.1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("learning_rat"), std::string::npos);
  }
}

TEST(Config, OtherErrors) {
  EXPECT_THROW(parse_config("[fig10]\n"), ConfigError);
  EXPECT_THROW(parse_config("[fig4_convergence\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs = 1\nepochs = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs =\n"), ConfigError);
  EXPECT_THROW(parse_config("= 3\n"), ConfigError);
  const auto bad_value = [](const std::string& text) {
    return resolve_settings(parse_config(text), ExperimentId::fig6_budget_curve);
  };
  EXPECT_THROW(bad_value("epochs = many\n"), ConfigError);
  EXPECT_THROW(bad_value("epochs = 0\n"), ConfigError);
  EXPECT_THROW(bad_value("learning_rate = -1\n"), ConfigError);
  EXPECT_THROW(bad_value("epsilons = 0.5,,1\n"), ConfigError);
  EXPECT_THROW(bad_value("rho_sx = 1\n"), ConfigError);
  EXPECT_THROW(bad_value("noise_kind = uniform\n"), ConfigError);
  try {
    bad_value("epochs = 10\nminibatch = lots\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.column(), 13u);
  }
}

TEST(Config, ShippedDeskConfigLoads) {
  const auto s = load_config(MIFUNNEL_DESK_CONFIG, ExperimentId::fig6_budget_curve);
  EXPECT_EQ(s.minibatch, 2000);
  EXPECT_EQ(load_config(MIFUNNEL_DESK_CONFIG, ExperimentId::fig4_convergence).minibatch, 20000);
}

TEST(Config, ExperimentIds) {
  for (auto name : kExperimentNames) EXPECT_EQ(to_string(parse_experiment(name)), name);
  EXPECT_THROW(parse_experiment("fig3"), InvalidArgument);
}

// ---- seeds -----------------------------------------------------------------

TEST(Seeds, EnvironmentOverride) {
  {
    ScopedEnv env("MIFUNNEL_SEED", nullptr);
    EXPECT_EQ(default_seed(), kDefaultSeed);
    EXPECT_EQ(default_seeds(ExperimentId::fig4_convergence), (std::vector<std::uint64_t>{1}));
    EXPECT_EQ(default_seeds(ExperimentId::fig6_budget_curve), (std::vector<std::uint64_t>{1, 2, 3}));
  }
  {
    ScopedEnv env("MIFUNNEL_SEED", "42");
    EXPECT_EQ(default_seeds(ExperimentId::fig8_noise_bars), (std::vector<std::uint64_t>{42, 43, 44}));
  }
  {
    ScopedEnv env("MIFUNNEL_SEED", "x1");
    EXPECT_THROW(default_seed(), InvalidArgument);
  }
}

// ---- CSV -------------------------------------------------------------------

TEST(Csv, HeaderAndSingleRow) {
  const RunRecord r{"a", "fig5_budget_traces", 0, 0.5, 0.25, 0.75, "gaussian", 1.0, 3, 12.5};
  const std::string csv = format_csv({r});
  EXPECT_EQ(csv,
            "run_id,experiment,epoch,mi_xy_bits,mi_sy_bits,epsilon,noise_kind,noise_std,seed,wall_ms\n"
            "a,fig5_budget_traces,0,0.5,0.25,0.75,gaussian,1,3,12.5\n");
}

TEST(Csv, GroupedByRunEpochsAscending) {
  std::vector<RunRecord> rs = {
      {"b", "e", 1, 0, 0, 0, "n", 0, 0, 0}, {"a", "e", 2, 0, 0, 0, "n", 0, 0, 0},
      {"b", "e", 0, 0, 0, 0, "n", 0, 0, 0}, {"a", "e", 0, 0, 0, 0, "n", 0, 0, 0}};
  const auto parsed = parse_csv(format_csv(rs));
  ASSERT_EQ(parsed.size(), 4u);
  EXPECT_EQ(parsed[0].run_id + std::to_string(parsed[0].epoch), "b0");
  EXPECT_EQ(parsed[1].run_id + std::to_string(parsed[1].epoch), "b1");
  EXPECT_EQ(parsed[2].run_id + std::to_string(parsed[2].epoch), "a0");
  EXPECT_EQ(parsed[3].run_id + std::to_string(parsed[3].epoch), "a2");
}

TEST(Csv, RoundTripIsExact) {
  Rng rng(1);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::vector<RunRecord> rs;
  for (Index e = 0; e < 200; ++e) {
    rs.push_back({"run" + std::to_string(e % 3), "fig7_noise_traces", e, normal(rng),
                  normal(rng) * 1e-200, 0.1 + 0.2, "laplacian", std::nextafter(1.0, 2.0),
                  std::uint64_t{18446744073709551615u}, normal(rng) * 1e6});
  }
  const auto ordered = ordered_records(rs);
  EXPECT_EQ(parse_csv(format_csv(rs)), ordered);
}

TEST(Csv, RejectsBadInput) {
  EXPECT_THROW(parse_csv("run_id,experiment\n"), InvalidArgument);
  EXPECT_THROW(parse_csv(std::string(kCsvHeader) + "\na,b,1,2\n"), InvalidArgument);
  EXPECT_THROW(format_csv({{"a,b", "e", 0, 0, 0, 0, "n", 0, 0, 0}}), InvalidArgument);
  EXPECT_THROW(format_csv({{"a", "e", 0, std::nan(""), 0, 0, "n", 0, 0, 0}}), InvalidArgument);
}

// ---- SVG -------------------------------------------------------------------

TEST(Svg, LineChartIsStandalone) {
  LineChart c{"t <&>", "epoch", "bits", {{"s1", {0, 1, 2}, {0.1, 0.5, 0.6}}}, {{"ref", 0.65}}, true};
  const std::string svg = render_svg(c);
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("version=\"1.1\""), std::string::npos);
  EXPECT_NE(svg.find("xmlns=\"http://www.w3.org/2000/svg\""), std::string::npos);
  EXPECT_NE(svg.find("t &lt;&amp;&gt;"), std::string::npos);
  EXPECT_NE(svg.find(">bits<"), std::string::npos);
  EXPECT_EQ(svg.substr(svg.size() - 7), "</svg>\n");
}

TEST(Svg, BarChartHasOneBarPerCell) {
  BarChart c{"bars", "eps", "bits", {"g1", "g2", "g3"}, {"gaussian", "laplacian"},
             {{1, 2}, {3, 4}, {5, 6.5}}};
  const std::string svg = render_svg(c);
  const std::regex bar("<rect x=");
  EXPECT_EQ(std::distance(std::sregex_iterator(svg.begin(), svg.end(), bar), std::sregex_iterator()), 6);
  EXPECT_NE(svg.find("<title>laplacian 6.5</title>"), std::string::npos);
}

TEST(Svg, RejectsEmptyInput) {
  EXPECT_THROW(render_svg(LineChart{}), InvalidArgument);
  EXPECT_THROW(render_svg(BarChart{}), InvalidArgument);
}

// ---- experiments -----------------------------------------------------------

TEST(Experiment, ConvergenceRunWritesArtifacts) {
  ExperimentSpec spec{ExperimentId::fig4_convergence, tiny_settings(), tmp_dir("fig4"), {5}};
  const auto files = run_experiment(spec);
  ASSERT_EQ(files.size(), 3u);
  for (const auto& f : files) EXPECT_TRUE(fs::exists(f)) << f;
  const auto rows = parse_csv(read_text_file(files[0]));
  EXPECT_EQ(rows.size(), 30u);
  const Json summary = Json::parse(read_text_file(files[1]));
  EXPECT_NEAR(summary["oracle_bits"].get<double>(), 0.6586, 1e-12);
  EXPECT_EQ(summary["settings"]["minibatch"], 128);
  // 30 epochs sit inside the 50-epoch smoothing window: final = mean of all rows.
  double mean = 0.0;
  for (const auto& r : rows) mean += r.mi_sy_bits / 30.0;
  EXPECT_NEAR(summary["runs"][0]["final_bits"].get<double>(), mean, 1e-12);
}

TEST(Experiment, BudgetCurveIsDeterministic) {
  ExperimentSpec spec{ExperimentId::fig6_budget_curve, tiny_settings(), tmp_dir("fig6a"), {1, 2}};
  const ExperimentResult a = compute_experiment(spec);
  const ExperimentResult b = compute_experiment(spec);
  EXPECT_EQ(format_csv(a.records, false), format_csv(b.records, false));
  EXPECT_EQ(a.figure_svg, b.figure_svg);
  EXPECT_EQ(a.summary["groups"].size(), 2u);
  for (const auto& r : a.records) EXPECT_EQ(r.experiment, "fig6_budget_curve");
}

TEST(Experiment, NoiseBarsMatchSummary) {
  ExperimentSpec spec{ExperimentId::fig8_noise_bars, tiny_settings(), tmp_dir("fig8"), {1}};
  const auto files = run_experiment(spec);
  const Json summary = Json::parse(read_text_file(files[1]));
  const std::string svg = read_text_file(files[2]);
  ASSERT_EQ(summary["groups"].size(), 4u);  // 2 budgets x 2 kinds
  for (const auto& g : summary["groups"]) {
    const std::string title = "<title>" + g["noise_kind"].get<std::string>() + " " +
                              format_double(g["median_max_utility_bits"].get<double>()) + "</title>";
    EXPECT_NE(svg.find(title), std::string::npos) << title;
  }
  EXPECT_NE(svg.find(">eps 0.3<"), std::string::npos);
  EXPECT_NE(svg.find(">eps 2<"), std::string::npos);
}

TEST(Experiment, ConditionsPerExperiment) {
  const ExperimentSettings s;
  EXPECT_EQ(experiment_conditions(ExperimentId::fig5_budget_traces, s).size(), 4u);
  EXPECT_EQ(experiment_conditions(ExperimentId::fig7_noise_traces, s).size(), 8u);
  EXPECT_EQ(experiment_conditions(ExperimentId::fig8_noise_bars, s).size(), 8u);
  const auto fig9 = experiment_conditions(ExperimentId::fig9_gauss_params, s);
  ASSERT_EQ(fig9.size(), 2u);
  EXPECT_EQ(fig9[0].std_dev, 0.1117);
  EXPECT_EQ(fig9[1].std_dev, 1.0);
}

TEST(Experiment, UnwritableOutputFails) {
  ExperimentSpec spec{ExperimentId::fig4_convergence, tiny_settings(), "/proc/nope/out", {1}};
  EXPECT_ANY_THROW(run_experiment(spec));
}

// ---- CLI -------------------------------------------------------------------

TEST(Cli, OracleAndUsageErrors) {
  const auto ok = run_cli("oracle --rho 0.8");
  EXPECT_EQ(ok.code, 0);
  EXPECT_NEAR(std::stod(ok.out), 0.7369655941662062, 1e-9);
  EXPECT_EQ(run_cli("").code, 1);
  EXPECT_EQ(run_cli("oracle").code, 1);
  EXPECT_EQ(run_cli("oracle --rho 1.5").code, 1);
  EXPECT_EQ(run_cli("run fig10_unknown").code, 1);
  EXPECT_EQ(run_cli("--help").code, 0);
}

TEST(Cli, RunWithConfigAndSeeds) {
  const std::string dir = tmp_dir("cli");
  const std::string conf = dir + "/tiny.conf";
  write_text_file(conf,
                  "minibatch = 128\nhidden_width = 8\n[fig4_convergence]\nepochs = 12\n");
  const auto r = run_cli("run fig4_convergence --config " + conf + " --out " + dir + " --seeds 4,5");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rows = parse_csv(read_text_file(dir + "/runs.csv"));
  EXPECT_EQ(rows.size(), 24u);
  EXPECT_EQ(rows.front().seed, 4u);

  write_text_file(conf, "minibatch = 128\nbogus = 1\n");
  const auto bad = run_cli("run fig4_convergence --config " + conf + " --out " + dir);
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("tiny.conf:2:"), std::string::npos) << bad.out;
  EXPECT_EQ(run_cli("run fig4_convergence --seeds 1,x --out " + dir).code, 1);
}

TEST(Cli, EstimateSubcommand) {
  const auto r = run_cli("estimate --rho 0.5 --epochs 5 --minibatch 64");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("estimate_bits"), std::string::npos);
  EXPECT_NE(r.out.find("true_bits 0.207519"), std::string::npos) << r.out;
}
