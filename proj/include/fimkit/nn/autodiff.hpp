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

// Reverse-mode automatic differentiation over dense matrices.
//
// A Var is a node in a dynamically built graph. Every op records its parents
// and a closure that pushes the output gradient back to them. Calling
// backward() on a 1x1 Var walks the graph in reverse topological order.
// Under NoGradGuard ops record nothing, which is what inference uses.

#pragma once

#include <functional>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace fim::nn {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  void accumulate(const Matrix& g);
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

Var constant(Matrix value);
Var constant_scalar(double v);
// Leaf that collects a gradient (when grad mode is on).
Var leaf(Matrix value);

// Throws ValidationError unless `loss` is 1x1.
void backward(const Var& loss);

// Shapes: binary elementwise ops accept equal shapes, a 1xC operand against
// RxC (row broadcast), an Rx1 operand against RxC (column broadcast) or a 1x1
// scalar.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

Var selu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var abs(const Var& a);
Var square(const Var& a);
// Identity on column 0, sine on the remaining columns.
Var sin_tail(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var transpose(const Var& a);
// 1xC -> nxC.
Var repeat_rows(const Var& a, Eigen::Index n);

Var softmax_rows(const Var& a);
// Per-row standardization (x - mean) / sqrt(var + eps), no affine part.
Var layernorm_rows(const Var& a, double eps = 1e-5);
// Inverted dropout: kept entries are scaled by 1/(1-p).
Var dropout(const Var& a, double p, std::mt19937_64& rng);

// Single-direction LSTM over the rows of `x` (T x In), gates ordered i, f, g, o.
// wx: In x 4H, wh: H x 4H, b: 1 x 4H. Returns the final hidden state (1 x H).
// With `reverse` the rows are consumed from last to first.
Var lstm_final(const Var& x, const Var& wx, const Var& wh, const Var& b, bool reverse);

inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

}  // namespace fim::nn
