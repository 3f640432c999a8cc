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

#include "fimkit/nn/params.hpp"

#include <cstring>

#include "fimkit/common.hpp"

namespace fim::nn {

void ParameterStore::add(const std::string& name, Matrix value) {
  if (index_.count(name)) throw ValidationError("duplicate parameter '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
}

const Matrix& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return values_[it->second];
}

Matrix& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return values_[it->second];
}

void ParameterStore::set(const std::string& name, const Matrix& value) {
  Matrix& dst = at(name);
  if (dst.rows() != value.rows() || dst.cols() != value.cols()) {
    throw ValidationError("shape mismatch when setting '" + name + "'");
  }
  dst = value;
}

std::size_t ParameterStore::total_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

Eigen::VectorXd ParameterStore::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(total_count()));
  Eigen::Index off = 0;
  for (const auto& v : values_) {
    flat.segment(off, v.size()) = v.reshaped();
    off += v.size();
  }
  return flat;
}

void ParameterStore::unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(total_count())) throw ValidationError("unflatten: size mismatch");
  Eigen::Index off = 0;
  for (auto& v : values_) {
    v.reshaped() = flat.segment(off, v.size());
    off += v.size();
  }
}

ParameterStore ParameterStore::zeros_like() const {
  ParameterStore out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    out.add(names_[i], Matrix::Zero(values_[i].rows(), values_[i].cols()));
  }
  return out;
}

void ParameterStore::add_scaled(const ParameterStore& other, double s) {
  if (!same_layout(other)) throw ValidationError("add_scaled: parameter layouts differ");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * other.values_[i];
}

double ParameterStore::squared_norm() const {
  double acc = 0.0;
  for (const auto& v : values_) acc += v.squaredNorm();
  return acc;
}

bool ParameterStore::same_layout(const ParameterStore& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].rows() != other.values_[i].rows() || values_[i].cols() != other.values_[i].cols()) return false;
  }
  return true;
}

bool ParameterStore::bitwise_equal(const ParameterStore& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const auto bytes = static_cast<std::size_t>(values_[i].size()) * sizeof(double);
    if (std::memcmp(values_[i].data(), other.values_[i].data(), bytes) != 0) return false;
  }
  return true;
}

ParameterStore ParameterStore::subset(const std::string& prefix) const {
  ParameterStore out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].rfind(prefix, 0) == 0) out.add(names_[i], values_[i]);
  }
  return out;
}

void ParameterStore::merge(const ParameterStore& other) {
  for (std::size_t i = 0; i < other.names_.size(); ++i) {
    if (contains(other.names_[i])) {
      set(other.names_[i], other.values_[i]);
    } else {
      add(other.names_[i], other.values_[i]);
    }
  }
}

Scope::Scope(const ParameterStore& store, bool trainable, ForwardOptions opts)
    : store_(store), trainable_(trainable), opts_(opts) {
  if (opts_.training && opts_.dropout > 0.0 && opts_.rng == nullptr) {
    throw ValidationError("Scope: dropout during training needs an rng");
  }
}

Var Scope::get(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = trainable_ ? leaf(store_.at(name)) : constant(store_.at(name));
  bound_.emplace(name, v);
  return v;
}

Var Scope::maybe_dropout(const Var& x) {
  if (!opts_.training || opts_.dropout <= 0.0) return x;
  return dropout(x, opts_.dropout, *opts_.rng);
}

ParameterStore Scope::gradients() const {
  ParameterStore out = store_.zeros_like();
  accumulate_gradients(out);
  return out;
}

void Scope::accumulate_gradients(ParameterStore& into) const {
  for (const auto& [name, v] : bound_) {
    if (v->grad.size() != 0) into.at(name) += v->grad;
  }
}

ParameterStore grad(const std::function<Var(Scope&)>& loss_fn, const ParameterStore& params) {
  Scope scope(params, true);
  Var loss = loss_fn(scope);
  backward(loss);
  return scope.gradients();
}

}  // namespace fim::nn
