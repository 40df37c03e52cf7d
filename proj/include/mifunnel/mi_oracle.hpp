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

// Exact information quantities used as ground truth for the neural
// estimator. Everything is reported in bits; 0 log 0 is taken as 0.

#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mifunnel/common.hpp"

namespace mifunnel {

class SupportError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

inline constexpr double kMassTolerance = 1e-12;

inline void validate_distribution(std::span<const double> p, const char* what) {
  require(!p.empty(), std::string(what) + ": empty distribution");
  double total = 0.0;
  for (double v : p) {
    require(std::isfinite(v) && v >= 0.0,
            std::string(what) + ": probabilities must be finite and non-negative");
    total += v;
  }
  require(std::abs(total - 1.0) <= kMassTolerance,
          std::string(what) + ": probabilities must sum to 1");
}

inline double entropy(std::span<const double> p) {
  validate_distribution(p, "entropy");
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log2(v);
  }
  return std::max(h, 0.0);
}

inline double entropy(const std::vector<double>& p) {
  return entropy(std::span<const double>(p));
}

inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), "kl_divergence: alphabet size mismatch");
  validate_distribution(p, "kl_divergence");
  validate_distribution(q, "kl_divergence");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) {
      throw SupportError("kl_divergence: p has mass at index " + std::to_string(i) +
                         " where q has none");
    }
    d += p[i] * std::log2(p[i] / q[i]);
  }
  return std::max(d, 0.0);
}

inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  return kl_divergence(std::span<const double>(p), std::span<const double>(q));
}

// Joint probability table p(s, y); rows index s, columns index y.
class DiscreteJoint {
 public:
  explicit DiscreteJoint(Matrix table) : table_(std::move(table)) {
    require(table_.size() > 0, "DiscreteJoint: empty table");
    require(table_.allFinite() && (table_.array() >= 0.0).all(),
            "DiscreteJoint: entries must be finite and non-negative");
    require(std::abs(table_.sum() - 1.0) <= kMassTolerance,
            "DiscreteJoint: total mass must be 1");
  }

  const Matrix& table() const { return table_; }
  Index s_size() const { return table_.rows(); }
  Index y_size() const { return table_.cols(); }
  double operator()(Index s, Index y) const { return table_(s, y); }

  std::vector<double> marginal_s() const {
    const Vector m = table_.rowwise().sum();
    return {m.data(), m.data() + m.size()};
  }
  std::vector<double> marginal_y() const {
    const RowVector m = table_.colwise().sum();
    return {m.data(), m.data() + m.size()};
  }
  std::vector<double> flat() const {
    return {table_.data(), table_.data() + table_.size()};
  }
  // p(s) p(y), flattened in the same (column-major) order as flat().
  std::vector<double> product_of_marginals() const {
    const auto ps = marginal_s();
    const auto py = marginal_y();
    std::vector<double> out(static_cast<std::size_t>(table_.size()));
    for (Index y = 0; y < y_size(); ++y) {
      for (Index s = 0; s < s_size(); ++s) {
        out[static_cast<std::size_t>(y * s_size() + s)] = ps[s] * py[y];
      }
    }
    return out;
  }

 private:
  Matrix table_;
};

// Log-loss inference view of leakage: the adversary's optimal belief before
// seeing y is the prior p(s), after seeing y it is the posterior p(s | y).
struct InferenceCost {
  double prior_cost = 0.0;      // E[-log2 q0*(S)] = H(S)
  double posterior_cost = 0.0;  // E[-log2 q_y*(S)] = H(S | Y)
  double gain = 0.0;            // prior_cost - posterior_cost
};

inline InferenceCost inference_cost(const DiscreteJoint& joint) {
  const auto prior = joint.marginal_s();
  const auto py = joint.marginal_y();
  InferenceCost c;
  for (Index s = 0; s < joint.s_size(); ++s) {
    if (prior[s] > 0.0) c.prior_cost -= prior[s] * std::log2(prior[s]);
  }
  for (Index y = 0; y < joint.y_size(); ++y) {
    if (py[y] == 0.0) continue;
    for (Index s = 0; s < joint.s_size(); ++s) {
      const double p = joint(s, y);
      if (p > 0.0) c.posterior_cost -= p * std::log2(p / py[y]);
    }
  }
  c.gain = c.prior_cost - c.posterior_cost;
  return c;
}

inline double inference_cost_gain(const DiscreteJoint& joint) {
  return std::max(inference_cost(joint).gain, 0.0);
}

// I(S;Y) as KL(p(s,y) || p(s)p(y)).
inline double discrete_mi(const DiscreteJoint& joint) {
  return kl_divergence(joint.flat(), joint.product_of_marginals());
}

struct GaussianPairSpec {
  double rho = 0.0;
  double mean_s = 0.0;
  double mean_y = 0.0;
  double std_s = 1.0;
  double std_y = 1.0;
};

inline void validate(const GaussianPairSpec& spec) {
  require(std::isfinite(spec.rho) && std::abs(spec.rho) < 1.0,
          "GaussianPairSpec: |rho| must be < 1");
  require(spec.std_s > 0.0 && spec.std_y > 0.0,
          "GaussianPairSpec: standard deviations must be positive");
}

inline double gaussian_mi(const GaussianPairSpec& spec) {
  validate(spec);
  return -0.5 * std::log2(1.0 - spec.rho * spec.rho);
}

inline double gaussian_mi(double rho) { return gaussian_mi(GaussianPairSpec{.rho = rho}); }

// Non-negative correlation whose bivariate-Gaussian MI equals target_bits,
// found by bisection on the monotone map rho -> gaussian_mi(rho).
inline double rho_for_mi(double target_bits, double tolerance = 1e-15) {
  require(std::isfinite(target_bits) && target_bits >= 0.0,
          "rho_for_mi: target must be finite and non-negative");
  double lo = 0.0;
  double hi = std::nextafter(1.0, 0.0);
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    (gaussian_mi(mid) < target_bits ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// log(mean(exp(v))) with max-shift.
template <typename Range>
double log_mean_exp(const Range& values) {
  double shift = -std::numeric_limits<double>::infinity();
  std::size_t n = 0;
  for (double v : values) {
    shift = std::max(shift, v);
    ++n;
  }
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - shift);
  return shift + std::log(acc / static_cast<double>(n));
}

// Donsker-Varadhan lower bound E_P[T] - log E_Q[e^T] from samples of T under
// P (the joint) and under Q (the product of marginals). T is in nats; the
// result is converted to bits.
inline double dv_bound(std::span<const double> t_joint, std::span<const double> t_product) {
  require(!t_joint.empty() && !t_product.empty(), "dv_bound: empty input");
  double mean = 0.0;
  for (double v : t_joint) {
    require(std::isfinite(v), "dv_bound: non-finite critic value");
    mean += v;
  }
  for (double v : t_product) require(std::isfinite(v), "dv_bound: non-finite critic value");
  mean /= static_cast<double>(t_joint.size());
  const double bound = mean - log_mean_exp(t_product);
  if (!std::isfinite(bound)) throw NumericalError("dv_bound: non-finite result");
  return nats_to_bits(bound);
}

inline double dv_bound(const std::vector<double>& t_joint, const std::vector<double>& t_product) {
  return dv_bound(std::span<const double>(t_joint), std::span<const double>(t_product));
}

// Exact DV bound for a critic tabulated on a finite support:
// sum_i p_i T_i - log sum_i q_i e^{T_i}, in bits.
inline double dv_bound_exact(std::span<const double> t, std::span<const double> p,
                             std::span<const double> q) {
  require(t.size() == p.size() && t.size() == q.size(), "dv_bound_exact: size mismatch");
  validate_distribution(p, "dv_bound_exact");
  validate_distribution(q, "dv_bound_exact");
  double expectation = 0.0;
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (p[i] > 0.0) expectation += p[i] * t[i];
    if (q[i] > 0.0) shift = std::max(shift, t[i]);
  }
  double z = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (q[i] > 0.0) z += q[i] * std::exp(t[i] - shift);
  }
  return nats_to_bits(expectation - (shift + std::log(z)));
}

// G_i = q_i e^{T_i} / E_Q[e^T], the tilted distribution at which the DV
// bound for T is tight.
inline std::vector<double> gibbs_distribution(std::span<const double> t,
                                              std::span<const double> q) {
  require(t.size() == q.size(), "gibbs_distribution: size mismatch");
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (q[i] > 0.0) shift = std::max(shift, t[i]);
  }
  std::vector<double> g(t.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (q[i] > 0.0) {
      g[i] = q[i] * std::exp(t[i] - shift);
      z += g[i];
    }
  }
  for (double& v : g) v /= z;
  return g;
}

// The critic that attains the bound: T*(s, y) = ln p(s,y) / (p(s)p(y)),
// flattened like DiscreteJoint::flat(). Cells with zero joint mass get a
// very negative value, which contributes nothing to either expectation.
inline std::vector<double> optimal_critic(const DiscreteJoint& joint) {
  const auto p = joint.flat();
  const auto q = joint.product_of_marginals();
  std::vector<double> t(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    t[i] = p[i] > 0.0 ? std::log(p[i] / q[i]) : -700.0;
  }
  return t;
}

}  // namespace mifunnel
