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

// Synthetic S -> X -> Y data: S and X jointly Gaussian, Y = X + additive
// Gaussian or Laplacian noise.

#pragma once

#include <string>
#include <string_view>

#include "mifunnel/common.hpp"
#include "mifunnel/sample_batch.hpp"

namespace mifunnel {

enum class NoiseKind { gaussian, laplacian };

inline std::string_view to_string(NoiseKind kind) {
  return kind == NoiseKind::gaussian ? "gaussian" : "laplacian";
}

inline NoiseKind parse_noise_kind(std::string_view s) {
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "laplacian" || s == "laplace") return NoiseKind::laplacian;
  throw InvalidArgument("unknown noise kind '" + std::string(s) + "'");
}

// Both kinds are parameterised by their standard deviation so that noise
// levels are variance-matched; the Laplace scale is b = std / sqrt(2).
struct NoiseChannel {
  NoiseKind kind = NoiseKind::gaussian;
  Vector std_dev = Vector::Ones(1);
  Vector mean = Vector::Zero(1);

  static NoiseChannel gaussian(double std_dev, Index dim = 1, double mean = 0.0) {
    return {NoiseKind::gaussian, Vector::Constant(dim, std_dev), Vector::Constant(dim, mean)};
  }
  static NoiseChannel laplacian(double std_dev, Index dim = 1, double mean = 0.0) {
    return {NoiseKind::laplacian, Vector::Constant(dim, std_dev), Vector::Constant(dim, mean)};
  }

  Index dim() const { return std_dev.size(); }
  Vector laplace_scale() const { return std_dev / std::sqrt(2.0); }
};

inline void validate(const NoiseChannel& channel) {
  require(channel.std_dev.size() >= 1, "NoiseChannel: empty scale vector");
  require(channel.mean.size() == channel.std_dev.size(),
          "NoiseChannel: mean and scale dims differ");
  require(channel.std_dev.allFinite() && (channel.std_dev.array() > 0.0).all(),
          "NoiseChannel: scale must be positive");
  require(channel.mean.allFinite(), "NoiseChannel: mean must be finite");
}

inline Matrix draw_noise(const NoiseChannel& channel, Index n, Rng& rng) {
  validate(channel);
  require(n >= 1, "draw_noise: n must be >= 1");
  Matrix out(n, channel.dim());
  if (channel.kind == NoiseKind::gaussian) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < channel.dim(); ++j) {
        out(i, j) = channel.mean(j) + channel.std_dev(j) * normal(rng);
      }
    }
  } else {
    // Difference of two unit exponentials is Laplace(0, 1).
    std::exponential_distribution<double> expo(1.0);
    const Vector b = channel.laplace_scale();
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < channel.dim(); ++j) {
        const double e1 = expo(rng);
        const double e2 = expo(rng);
        out(i, j) = channel.mean(j) + b(j) * (e1 - e2);
      }
    }
  }
  return out;
}

inline Matrix draw_noise(const NoiseChannel& channel, Index n, std::uint64_t seed) {
  Rng rng(seed);
  return draw_noise(channel, n, rng);
}

// S and X share the marginal N(mean, std^2) per dimension and are coupled
// coordinate-wise with correlation rho_sx.
struct ChainSpec {
  Index dim = 1;
  double rho_sx = 0.8;
  double mean = 0.0;
  double std_dev = 1.0;
};

inline void validate(const ChainSpec& spec) {
  require(spec.dim >= 1, "ChainSpec: dim must be >= 1");
  require(std::isfinite(spec.rho_sx) && std::abs(spec.rho_sx) < 1.0,
          "ChainSpec: |rho_sx| must be < 1");
  require(std::isfinite(spec.mean), "ChainSpec: mean must be finite");
  require(std::isfinite(spec.std_dev) && spec.std_dev > 0.0,
          "ChainSpec: std_dev must be positive");
}

// Batch with variables "s" and "x".
inline SampleBatch sample_sensitive_pair(const ChainSpec& spec, Index n, Rng& rng) {
  validate(spec);
  require(n >= 1, "sample_chain: n must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double c = std::sqrt(1.0 - spec.rho_sx * spec.rho_sx);
  Matrix s(n, spec.dim);
  Matrix x(n, spec.dim);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < spec.dim; ++j) {
      const double zs = normal(rng);
      const double zx = normal(rng);
      s(i, j) = spec.mean + spec.std_dev * zs;
      x(i, j) = spec.mean + spec.std_dev * (spec.rho_sx * zs + c * zx);
    }
  }
  return SampleBatch::pair(s, x, "s", "x");
}

// Batch with variables "s", "x", "y"; y depends on s only through x.
inline SampleBatch sample_chain(const ChainSpec& spec, const NoiseChannel& channel, Index n,
                                Rng& rng) {
  validate(channel);
  require(channel.dim() == spec.dim, "sample_chain: channel dim differs from chain dim");
  const SampleBatch sx = sample_sensitive_pair(spec, n, rng);
  const Matrix y = sx.column_block("x") + draw_noise(channel, n, rng);
  Matrix values(n, 3 * spec.dim);
  values << sx.values(), y;
  return SampleBatch(std::move(values), {{"s", spec.dim}, {"x", spec.dim}, {"y", spec.dim}});
}

inline SampleBatch sample_chain(const ChainSpec& spec, const NoiseChannel& channel, Index n,
                                std::uint64_t seed) {
  Rng rng(seed);
  return sample_chain(spec, channel, n, rng);
}

}  // namespace mifunnel
