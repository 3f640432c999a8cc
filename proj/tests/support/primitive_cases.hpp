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

// Scalar losses built around each network primitive, for gradient checks.
// Every case projects the primitive's output onto a fixed random matrix so
// that all output entries carry gradient.

#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fimkit/nn/layers.hpp"
#include "fimkit/nn/params.hpp"

namespace fimtest {

struct PrimitiveCase {
  std::string name;
  fim::nn::ParameterStore params;
  std::function<fim::nn::Var(fim::nn::Scope&)> loss;
};

inline std::vector<PrimitiveCase> primitive_cases(std::uint64_t seed) {
  using namespace fim::nn;
  std::mt19937_64 rng(seed);
  auto rnd = [&](Eigen::Index r, Eigen::Index c, double scale = 1.0) { return uniform_matrix(r, c, scale, rng); };
  // Projection onto a fixed random matrix of the output's shape.
  auto project = [](Var y, std::shared_ptr<Matrix> w) { return sum(mul(y, constant(*w))); };
  auto weights = [&](Eigen::Index r, Eigen::Index c) { return std::make_shared<Matrix>(rnd(r, c)); };

  std::vector<PrimitiveCase> cases;
  auto unary = [&](const std::string& name, std::function<Var(const Var&)> op, double scale = 1.0) {
    ParameterStore ps;
    ps.add("a", rnd(4, 3, scale));
    auto w = weights(4, 3);
    cases.push_back({name, ps, [op, w, project](Scope& s) { return project(op(s.get("a")), w); }});
  };
  auto binary = [&](const std::string& name, std::function<Var(const Var&, const Var&)> op, Eigen::Index br,
                    Eigen::Index bc) {
    ParameterStore ps;
    ps.add("a", rnd(4, 3));
    ps.add("b", rnd(br, bc));
    auto w = weights(4, 3);
    cases.push_back({name, ps, [op, w, project](Scope& s) { return project(op(s.get("a"), s.get("b")), w); }});
  };

  binary("add", [](const Var& a, const Var& b) { return add(a, b); }, 4, 3);
  binary("add_row_broadcast", [](const Var& a, const Var& b) { return add(a, b); }, 1, 3);
  binary("add_col_broadcast", [](const Var& a, const Var& b) { return add(a, b); }, 4, 1);
  binary("sub", [](const Var& a, const Var& b) { return sub(a, b); }, 4, 3);
  binary("sub_scalar_broadcast", [](const Var& a, const Var& b) { return sub(a, b); }, 1, 1);
  binary("mul", [](const Var& a, const Var& b) { return mul(a, b); }, 4, 3);
  binary("mul_row_broadcast", [](const Var& a, const Var& b) { return mul(a, b); }, 1, 3);
  unary("scale", [](const Var& a) { return scale(a, -1.7); });
  unary("add_scalar", [](const Var& a) { return add_scalar(a, 0.3); });
  unary("neg", [](const Var& a) { return neg(a); });
  unary("selu", [](const Var& a) { return selu(a); }, 2.0);
  unary("sigmoid", [](const Var& a) { return sigmoid(a); }, 2.0);
  unary("tanh", [](const Var& a) { return tanh(a); }, 2.0);
  unary("exp", [](const Var& a) { return exp(a); });
  unary("abs", [](const Var& a) { return abs(a); });
  unary("square", [](const Var& a) { return square(a); });
  unary("sin_tail", [](const Var& a) { return sin_tail(a); }, 3.0);
  unary("transpose", [](const Var& a) { return transpose(transpose(a)); });
  unary("softmax_rows", [](const Var& a) { return softmax_rows(a); }, 2.0);
  unary("layernorm_rows", [](const Var& a) { return layernorm_rows(a); });
  unary("slice_cols", [](const Var& a) { return concat_cols({slice_cols(a, 1, 2), slice_cols(a, 0, 1)}); });
  unary("slice_rows", [](const Var& a) { return concat_rows({slice_rows(a, 2, 2), slice_rows(a, 0, 2)}); });
  unary("dropout", [](const Var& a) {
    std::mt19937_64 r(11);
    return dropout(a, 0.3, r);
  });
  {
    ParameterStore ps;
    ps.add("a", rnd(4, 5));
    ps.add("b", rnd(5, 3));
    auto w = weights(4, 3);
    cases.push_back({"matmul", ps, [w, project](Scope& s) { return project(matmul(s.get("a"), s.get("b")), w); }});
  }
  {
    ParameterStore ps;
    ps.add("a", rnd(4, 3));
    cases.push_back({"sum_mean", ps, [](Scope& s) {
                       return add(scale(sum(square(s.get("a"))), 0.5), mean(exp(s.get("a"))));
                     }});
  }
  {
    ParameterStore ps;
    ps.add("a", rnd(1, 3));
    auto w = weights(5, 3);
    cases.push_back({"repeat_rows", ps, [w, project](Scope& s) { return project(repeat_rows(s.get("a"), 5), w); }});
  }
  for (bool reverse : {false, true}) {
    ParameterStore ps;
    const int in = 3, hidden = 4;
    ps.add("x", rnd(6, in));
    ps.add("wx", rnd(in, 4 * hidden, 0.7));
    ps.add("wh", rnd(hidden, 4 * hidden, 0.7));
    ps.add("b", rnd(1, 4 * hidden, 0.5));
    auto w = weights(1, hidden);
    cases.push_back({reverse ? "lstm_reverse" : "lstm_forward", ps, [w, project, reverse](Scope& s) {
                       return project(lstm_final(s.get("x"), s.get("wx"), s.get("wh"), s.get("b"), reverse), w);
                     }});
  }
  {
    ParameterStore ps;
    init_linear(ps, "lin", 3, 5, rng);
    ps.at("lin.b") = rnd(1, 5);
    ps.add("x", rnd(4, 3));
    auto w = weights(4, 5);
    cases.push_back({"linear", ps, [w, project](Scope& s) { return project(linear(s, "lin", s.get("x")), w); }});
  }
  {
    ParameterStore ps;
    init_ffn(ps, "ffn", 3, 2, 6, 2, rng);
    ps.add("x", rnd(5, 3));
    auto w = weights(5, 2);
    cases.push_back({"ffn", ps, [w, project](Scope& s) { return project(ffn(s, "ffn", s.get("x"), true), w); }});
  }
  {
    ParameterStore ps;
    init_time_embed(ps, "te", 6, rng);
    ps.add("t", rnd(5, 1));
    auto w = weights(5, 6);
    cases.push_back({"time_embed", ps, [w, project](Scope& s) { return project(time_embed(s, "te", s.get("t")), w); }});
  }
  {
    ParameterStore ps;
    init_bilstm(ps, "seq", 3, 4, rng);
    ps.add("x", rnd(7, 3));
    auto w = weights(1, 8);
    cases.push_back({"bilstm", ps, [w, project](Scope& s) { return project(bilstm(s, "seq", s.get("x")), w); }});
  }
  {
    ParameterStore ps;
    init_attention(ps, "att", 8, 2, 2, 12, rng);
    ps.add("x", rnd(5, 8));
    auto w = weights(5, 8);
    cases.push_back(
        {"attention", ps, [w, project](Scope& s) { return project(attention(s, "att", s.get("x"), 2), w); }});
  }
  return cases;
}

}  // namespace fimtest
