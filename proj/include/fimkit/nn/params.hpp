// Copyright 2026 The fimkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "fimkit/nn/autodiff.hpp"

namespace fim::nn {

// Named tensors in insertion order. Shapes are fixed once a name exists.
class ParameterStore {
 public:
  void add(const std::string& name, Matrix value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Matrix& at(const std::string& name) const;
  Matrix& at(const std::string& name);
  // Replaces the value; the shape must match.
  void set(const std::string& name, const Matrix& value);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t total_count() const;

  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);

  // Same names and shapes, zero values.
  ParameterStore zeros_like() const;
  // this += other * s, names and shapes must agree.
  void add_scaled(const ParameterStore& other, double s);
  double squared_norm() const;
  bool same_layout(const ParameterStore& other) const;
  bool bitwise_equal(const ParameterStore& other) const;

  // Entries whose name starts with `prefix`.
  ParameterStore subset(const std::string& prefix) const;
  // Copies every entry of `other` in, adding names that do not exist yet.
  void merge(const ParameterStore& other);

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Per-forward-pass options.
struct ForwardOptions {
  bool training = false;  // enables dropout
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;  // required when training with dropout > 0
};

// Binds a ParameterStore into a graph. Each name becomes one leaf the first
// time it is requested, so repeated uses share a gradient. A frozen scope
// binds constants instead and never produces gradients.
class Scope {
 public:
  Scope(const ParameterStore& store, bool trainable, ForwardOptions opts = {});

  Var get(const std::string& name);
  bool has(const std::string& name) const { return store_.contains(name); }
  const ForwardOptions& options() const { return opts_; }
  bool trainable() const { return trainable_; }
  Var maybe_dropout(const Var& x);

  // Gradients gathered after backward(); names that were never bound or got
  // no gradient are zero.
  ParameterStore gradients() const;
  void accumulate_gradients(ParameterStore& into) const;

 private:
  const ParameterStore& store_;
  bool trainable_;
  ForwardOptions opts_;
  std::unordered_map<std::string, Var> bound_;
};

// Reverse-mode gradient of a scalar loss w.r.t. every entry of `params`.
// Throws ValidationError if the loss is not 1x1.
ParameterStore grad(const std::function<Var(Scope&)>& loss_fn, const ParameterStore& params);

}  // namespace fim::nn
