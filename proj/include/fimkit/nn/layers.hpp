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

// Building blocks. Each block has an init_* function that registers its
// tensors under a name prefix and a forward function that reads them back
// through a Scope.

#pragma once

#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fimkit/nn/params.hpp"

namespace fim::nn {

struct NetConfig {
  int embed_dim = 32;
  int ffn_layers = 2;
  int ffn_width = 64;
  int seq_hidden = 32;  // per direction
  int attn_layers = 2;
  int attn_heads = 2;
  int attn_dim = 32;
  double dropout = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static NetConfig from_json(const nlohmann::json& j);
  static NetConfig paper_scale();
};

using Rng = std::mt19937_64;

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

// x W + b with W: in x out, b: 1 x out. W ~ U(+-sqrt(3 / in)), b = 0.
void init_linear(ParameterStore& ps, const std::string& prefix, int in, int out, Rng& rng);
Var linear(Scope& s, const std::string& prefix, const Var& x);

// `hidden` SeLU layers of width `width` followed by an affine output layer.
// With hidden = 0 the block is a single affine map.
void init_ffn(ParameterStore& ps, const std::string& prefix, int in, int hidden, int width, int out, Rng& rng);
// SeLU (and dropout while training) after every hidden layer; after the last
// layer too when `activate_output` is set.
Var ffn(Scope& s, const std::string& prefix, const Var& x, bool activate_output = false);

// Row t of the output is [w0 t + b0, sin(w1 t + b1), ...]. `t` is T x 1.
void init_time_embed(ParameterStore& ps, const std::string& prefix, int dim, Rng& rng);
Var time_embed(Scope& s, const std::string& prefix, const Var& t);

// Bidirectional LSTM summarizing a T x In sequence as the concatenation of
// both directions' final hidden states (1 x 2H).
void init_bilstm(ParameterStore& ps, const std::string& prefix, int in, int hidden, Rng& rng);
Var bilstm(Scope& s, const std::string& prefix, const Var& seq);

// Pre-norm transformer encoder over the rows of a K x dim sequence: per layer
// x += MHA(LN(x)); x += FFN(LN(x)); a final LN closes the stack.
void init_attention(ParameterStore& ps, const std::string& prefix, int dim, int heads, int layers, int ffn_width,
                    Rng& rng);
// When `weights` is given it receives every head's K x K attention matrix.
Var attention(Scope& s, const std::string& prefix, const Var& seq, int heads,
              std::vector<Matrix>* weights = nullptr);

}  // namespace fim::nn
