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

// Experiment identifiers and the flat configuration format.
//
//   # comment
//   minibatch = 2000            <- applies to every experiment
//   [fig6_budget_curve]
//   epsilons = 0.5, 1.25        <- applies to fig6_budget_curve only
//
// Keys outside a section apply to every experiment; keys inside a section
// override them for that experiment. Absent keys keep their defaults.

#pragma once

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mifunnel/common.hpp"
#include "mifunnel/funnel_tradeoff.hpp"
#include "mifunnel/privacy_channel.hpp"

namespace mifunnel {

enum class ExperimentId {
  fig4_convergence,
  fig5_budget_traces,
  fig6_budget_curve,
  fig7_noise_traces,
  fig8_noise_bars,
  fig9_gauss_params,
};

inline constexpr std::array<std::string_view, 6> kExperimentNames = {
    "fig4_convergence", "fig5_budget_traces", "fig6_budget_curve",
    "fig7_noise_traces", "fig8_noise_bars",   "fig9_gauss_params"};

inline std::string_view to_string(ExperimentId id) {
  return kExperimentNames[static_cast<std::size_t>(id)];
}

inline std::optional<ExperimentId> find_experiment(std::string_view name) {
  for (std::size_t i = 0; i < kExperimentNames.size(); ++i) {
    if (kExperimentNames[i] == name) return static_cast<ExperimentId>(i);
  }
  return std::nullopt;
}

inline ExperimentId parse_experiment(std::string_view name) {
  if (auto id = find_experiment(name)) return *id;
  throw InvalidArgument("unknown experiment id '" + std::string(name) + "'");
}

class ConfigError : public InvalidArgument {
 public:
  ConfigError(const std::string& source, std::size_t line, std::size_t column,
              const std::string& message)
      : InvalidArgument(source + ":" + std::to_string(line) + ":" + std::to_string(column) +
                        ": " + message),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

struct ExperimentSettings {
  double learning_rate = 5e-4;
  Index layers = 3;  // weight layers per network
  Index hidden_width = 100;
  Index epochs = 500;  // estimator epochs for the convergence experiment
  std::vector<double> epsilons = {0.5, 0.75, 1.0, 1.25};
  Index minibatch = 20000;
  double ema_rate = 0.01;
  double target_mi = 0.6586;
  double rho_sx = 0.8;
  double epsilon = 0.75;  // budget of the single-budget experiments
  NoiseKind noise_kind = NoiseKind::gaussian;
  double noise_std = 1.0;
  std::vector<double> noise_stds = {0.25, 0.5, 1.0, 2.0};
  std::vector<double> gauss_stds = {0.1117, 1.0};
  std::vector<double> gauss_means = {0.0};
  Index encoding_epochs = 50;
  Index decoding_epochs = 20;
  Index monitor_epochs = 200;
  Index outer_cap = 100;
  std::optional<double> encoder_learning_rate;
  DecoderMode decoder_mode = DecoderMode::binned_cross_entropy;
  Index bins = 32;
  Index parallel = 1;

  std::vector<Index> hidden() const {
    return std::vector<Index>(static_cast<std::size_t>(layers - 1), hidden_width);
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<Index> to_index(std::string_view s) {
  Index v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

struct ConfigEntry {
  std::string value;
  std::size_t line = 0;
  std::size_t column = 0;  // column of the value
};

using ConfigSection = std::map<std::string, ConfigEntry, std::less<>>;

struct ConfigFile {
  std::string source = "<config>";
  ConfigSection global;
  std::map<std::string, ConfigSection, std::less<>> sections;
};

inline constexpr std::array<std::string_view, 23> kConfigKeys = {
    "learning_rate", "layers",          "hidden_width",    "epochs",
    "epsilons",      "minibatch",       "ema_rate",        "target_mi",
    "rho_sx",        "epsilon",         "noise_kind",      "noise_std",
    "noise_stds",    "gauss_stds",      "gauss_means",     "encoding_epochs",
    "decoding_epochs", "monitor_epochs", "outer_cap",      "encoder_learning_rate",
    "decoder",       "bins",            "parallel"};

inline bool is_config_key(std::string_view key) {
  return std::find(kConfigKeys.begin(), kConfigKeys.end(), key) != kConfigKeys.end();
}

inline ConfigFile parse_config(std::string_view text, const std::string& source = "<config>") {
  ConfigFile file;
  file.source = source;
  ConfigSection* current = &file.global;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    std::string_view line = raw.substr(0, raw.find('#'));
    const std::size_t indent = line.find_first_not_of(" \t");
    line = detail::trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const std::size_t col = indent + 1;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, line_no, col, "unterminated section header");
      const std::string_view name = detail::trim(line.substr(1, line.size() - 2));
      if (!find_experiment(name)) {
        throw ConfigError(source, line_no, col + 1,
                          "unknown section '" + std::string(name) + "'");
      }
      if (file.sections.count(name)) {
        throw ConfigError(source, line_no, col, "duplicate section '" + std::string(name) + "'");
      }
      current = &file.sections[std::string(name)];
    } else {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(source, line_no, col, "expected 'key = value'");
      }
      const std::string_view key = detail::trim(line.substr(0, eq));
      const std::string_view value = detail::trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(source, line_no, col, "missing key");
      if (!is_config_key(key)) {
        throw ConfigError(source, line_no, col, "unknown key '" + std::string(key) + "'");
      }
      const std::size_t value_col = raw.find(value, raw.find('=')) + 1;
      if (value.empty()) {
        throw ConfigError(source, line_no, value_col, "missing value for '" + std::string(key) + "'");
      }
      if (current->count(key)) {
        throw ConfigError(source, line_no, col, "duplicate key '" + std::string(key) + "'");
      }
      (*current)[std::string(key)] = ConfigEntry{std::string(value), line_no, value_col};
    }
    if (end == text.size()) break;
  }
  return file;
}

inline ConfigFile read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

namespace detail {

class EntryReader {
 public:
  EntryReader(const std::string& source, const std::string& key, const ConfigEntry& e)
      : source_(source), key_(key), e_(e) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(source_, e_.line, e_.column, key_ + ": " + what);
  }

  double number() const {
    if (auto v = to_double(e_.value)) return *v;
    fail("expected a number, got '" + e_.value + "'");
  }
  double positive() const {
    const double v = number();
    if (v <= 0.0) fail("must be > 0");
    return v;
  }
  double non_negative() const {
    const double v = number();
    if (v < 0.0) fail("must be >= 0");
    return v;
  }
  Index count(Index min) const {
    const auto v = to_index(e_.value);
    if (!v) fail("expected an integer, got '" + e_.value + "'");
    if (*v < min) fail("must be >= " + std::to_string(min));
    return *v;
  }
  std::vector<double> list() const {
    std::vector<double> out;
    std::string_view rest = e_.value;
    while (true) {
      const auto comma = rest.find(',');
      const std::string_view item = trim(rest.substr(0, comma));
      const auto v = to_double(item);
      if (!v) fail("bad list element '" + std::string(item) + "'");
      out.push_back(*v);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return out;
  }
  std::vector<double> positive_list() const {
    auto v = list();
    for (double x : v) {
      if (x <= 0.0) fail("elements must be > 0");
    }
    return v;
  }
  const std::string& text() const { return e_.value; }

 private:
  const std::string& source_;
  const std::string& key_;
  const ConfigEntry& e_;
};

inline void apply_entry(ExperimentSettings& s, const std::string& source, const std::string& key,
                        const ConfigEntry& entry) {
  const EntryReader r(source, key, entry);
  if (key == "learning_rate") s.learning_rate = r.positive();
  else if (key == "layers") s.layers = r.count(2);
  else if (key == "hidden_width") s.hidden_width = r.count(1);
  else if (key == "epochs") s.epochs = r.count(1);
  else if (key == "epsilons") {
    s.epsilons = r.list();
    for (double e : s.epsilons) {
      if (e < 0.0) r.fail("budgets must be >= 0");
    }
  }
  else if (key == "minibatch") s.minibatch = r.count(2);
  else if (key == "ema_rate") {
    s.ema_rate = r.positive();
    if (s.ema_rate > 1.0) r.fail("must be <= 1");
  }
  else if (key == "target_mi") s.target_mi = r.positive();
  else if (key == "rho_sx") {
    s.rho_sx = r.number();
    if (std::abs(s.rho_sx) >= 1.0) r.fail("|rho_sx| must be < 1");
  }
  else if (key == "epsilon") s.epsilon = r.non_negative();
  else if (key == "noise_kind") {
    try {
      s.noise_kind = parse_noise_kind(r.text());
    } catch (const InvalidArgument& e) {
      r.fail(e.what());
    }
  }
  else if (key == "noise_std") s.noise_std = r.positive();
  else if (key == "noise_stds") s.noise_stds = r.positive_list();
  else if (key == "gauss_stds") s.gauss_stds = r.positive_list();
  else if (key == "gauss_means") s.gauss_means = r.list();
  else if (key == "encoding_epochs") s.encoding_epochs = r.count(1);
  else if (key == "decoding_epochs") s.decoding_epochs = r.count(1);
  else if (key == "monitor_epochs") s.monitor_epochs = r.count(1);
  else if (key == "outer_cap") s.outer_cap = r.count(1);
  else if (key == "encoder_learning_rate") s.encoder_learning_rate = r.non_negative();
  else if (key == "decoder") {
    try {
      s.decoder_mode = parse_decoder_mode(r.text());
    } catch (const InvalidArgument& e) {
      r.fail(e.what());
    }
  }
  else if (key == "bins") s.bins = r.count(2);
  else if (key == "parallel") s.parallel = r.count(1);
  else r.fail("unknown key");
}

}  // namespace detail

// Defaults, then the global keys, then the experiment's own section.
inline ExperimentSettings resolve_settings(const ConfigFile& file, ExperimentId id) {
  ExperimentSettings s;
  for (const auto& [key, entry] : file.global) detail::apply_entry(s, file.source, key, entry);
  if (auto it = file.sections.find(to_string(id)); it != file.sections.end()) {
    for (const auto& [key, entry] : it->second) detail::apply_entry(s, file.source, key, entry);
  }
  return s;
}

inline ExperimentSettings load_config(const std::string& path, ExperimentId id) {
  return resolve_settings(read_config_file(path), id);
}

}  // namespace mifunnel
