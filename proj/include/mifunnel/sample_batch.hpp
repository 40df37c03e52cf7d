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

#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "mifunnel/common.hpp"

namespace mifunnel {

// Paired draws stored as one n x (sum of dims) matrix with named column
// groups, e.g. {"s", "y"} for estimator input or {"s", "x", "y"} for chain
// samples.
class SampleBatch {
 public:
  struct Variable {
    std::string name;
    Index offset = 0;
    Index dim = 0;
  };

  SampleBatch() = default;

  SampleBatch(Matrix values, const std::vector<std::pair<std::string, Index>>& layout)
      : values_(std::move(values)) {
    Index offset = 0;
    for (const auto& [name, dim] : layout) {
      require(dim > 0, "SampleBatch: variable '" + name + "' has non-positive dim");
      require(!has(name), "SampleBatch: duplicate variable '" + name + "'");
      vars_.push_back({name, offset, dim});
      offset += dim;
    }
    require(offset == values_.cols(), "SampleBatch: layout does not match column count");
    require(values_.allFinite(), "SampleBatch: non-finite entries");
  }

  static SampleBatch pair(const Matrix& first, const Matrix& second,
                          std::string first_name = "s", std::string second_name = "y") {
    require(first.rows() == second.rows(), "SampleBatch::pair: row count mismatch");
    Matrix values(first.rows(), first.cols() + second.cols());
    values << first, second;
    return SampleBatch(std::move(values), {{std::move(first_name), first.cols()},
                                           {std::move(second_name), second.cols()}});
  }

  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }
  const Matrix& values() const { return values_; }
  const std::vector<Variable>& variables() const { return vars_; }

  bool has(const std::string& name) const {
    return std::any_of(vars_.begin(), vars_.end(),
                       [&](const Variable& v) { return v.name == name; });
  }

  const Variable& variable(const std::string& name) const {
    for (const auto& v : vars_) {
      if (v.name == name) return v;
    }
    throw InvalidArgument("SampleBatch: no variable named '" + name + "'");
  }

  Matrix column_block(const std::string& name) const {
    const Variable& v = variable(name);
    return values_.middleCols(v.offset, v.dim);
  }

  // Two named variables as a new pair batch (first, second).
  SampleBatch select(const std::string& first, const std::string& second) const {
    return pair(column_block(first), column_block(second), first, second);
  }

  // Rows permuted: out.row(i) = row(perm[i]) restricted to `name`'s columns.
  void permute_variable(const std::string& name, const std::vector<Index>& perm) {
    require(static_cast<Index>(perm.size()) == rows(), "permute_variable: size mismatch");
    const Variable& v = variable(name);
    const Matrix original = values_.middleCols(v.offset, v.dim);
    for (Index i = 0; i < rows(); ++i) {
      values_.row(i).segment(v.offset, v.dim) = original.row(perm[static_cast<std::size_t>(i)]);
    }
  }

  bool operator==(const SampleBatch& other) const {
    if (values_.rows() != other.values_.rows() || values_.cols() != other.values_.cols()) {
      return false;
    }
    if (vars_.size() != other.vars_.size()) return false;
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (vars_[i].name != other.vars_[i].name || vars_[i].dim != other.vars_[i].dim) {
        return false;
      }
    }
    return values_ == other.values_;
  }

 private:
  Matrix values_;
  std::vector<Variable> vars_;
};

// Uniform random permutation of 0..n-1 (Fisher-Yates via std::shuffle).
inline std::vector<Index> random_permutation(Index n, Rng& rng) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace mifunnel
