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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "fimkit/common.hpp"
#include "fimkit/nn/layers.hpp"
#include "fimkit/nn/weights_io.hpp"
#include "gradcheck.hpp"
#include "primitive_cases.hpp"

using namespace fim;
using namespace fim::nn;

TEST_CASE("every primitive matches finite differences") {
  for (auto& c : fimtest::primitive_cases(42)) {
    CAPTURE(c.name);
    const auto r = fimtest::check_gradients(c.loss, c.params, 60, 7);
    CAPTURE(r.worst);
    CHECK(r.max_rel_err < 1e-4);
  }
}

TEST_CASE("time embedding: zero parameters give zero output") {
  ParameterStore ps;
  ps.add("te.w", Matrix::Zero(1, 5));
  ps.add("te.b", Matrix::Zero(1, 5));
  Scope s(ps, false);
  Matrix t(3, 1);
  t << 0.1, 0.5, 2.0;
  const Matrix y = time_embed(s, "te", constant(t))->value;
  CHECK(y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("time embedding: full period") {
  ParameterStore ps;
  Matrix w = Matrix::Constant(1, 5, 2.0 * std::numbers::pi);
  ps.add("te.w", w);
  ps.add("te.b", Matrix::Zero(1, 5));
  Scope s(ps, false);
  const Matrix y = time_embed(s, "te", constant(Matrix::Constant(1, 1, 1.0)))->value;
  CHECK(y(0, 0) == doctest::Approx(2.0 * std::numbers::pi));
  for (int i = 1; i < 5; ++i) CHECK(std::abs(y(0, i)) < 1e-12);
}

TEST_CASE("identity layer with SeLU on non-negative input") {
  ParameterStore ps;
  ps.add("f.l0.W", Matrix::Identity(3, 3));
  ps.add("f.l0.b", Matrix::Zero(1, 3));
  Scope s(ps, false);
  Matrix x(2, 3);
  x << 0.0, 0.5, 1.0, 2.0, 3.0, 4.0;
  const Matrix y = ffn(s, "f", constant(x), true)->value;
  for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(y(i) == doctest::Approx(kSeluLambda * x(i)).epsilon(1e-15));
}

TEST_CASE("dropout off is bit-deterministic, on rescales survivors") {
  Rng rng(3);
  ParameterStore ps;
  init_ffn(ps, "f", 4, 2, 8, 2, rng);
  const Matrix x = uniform_matrix(5, 4, 1.0, rng);
  Scope s1(ps, false), s2(ps, false);
  CHECK(ffn(s1, "f", constant(x))->value == ffn(s2, "f", constant(x))->value);

  std::mt19937_64 r(5);
  const Matrix ones = Matrix::Ones(200, 10);
  const Matrix d = dropout(constant(ones), 0.25, r)->value;
  for (Eigen::Index i = 0; i < d.size(); ++i) CHECK((d(i) == 0.0 || d(i) == doctest::Approx(1.0 / 0.75)));
}

TEST_CASE("attention: singleton and row normalization") {
  Rng rng(9);
  ParameterStore ps;
  init_attention(ps, "a", 8, 2, 2, 16, rng);
  std::vector<Matrix> w;
  Scope s(ps, false);
  attention(s, "a", constant(uniform_matrix(1, 8, 1.0, rng)), 2, &w);
  for (const auto& m : w) CHECK(m(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  w.clear();
  attention(s, "a", constant(uniform_matrix(5, 8, 1.0, rng)), 2, &w);
  CHECK(w.size() == 4);
  for (const auto& m : w) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) CHECK(std::abs(m.row(r).sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("bidirectional encoder swaps halves under reversal and parameter swap") {
  Rng rng(4);
  ParameterStore ps;
  init_bilstm(ps, "q", 3, 4, rng);
  const Matrix x = uniform_matrix(6, 3, 1.0, rng);
  const Matrix xr = x.colwise().reverse();
  ParameterStore swapped;
  for (const auto& n : ps.names()) {
    std::string other = n;
    if (n.find(".fwd.") != std::string::npos) other.replace(n.find(".fwd."), 5, ".bwd.");
    else other.replace(n.find(".bwd."), 5, ".fwd.");
    swapped.add(n, ps.at(other));
  }
  Scope s1(ps, false), s2(swapped, false);
  const Matrix a = bilstm(s1, "q", constant(x))->value;
  const Matrix b = bilstm(s2, "q", constant(xr))->value;
  CHECK((a.leftCols(4) - b.rightCols(4)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((a.rightCols(4) - b.leftCols(4)).cwiseAbs().maxCoeff() < 1e-14);

  // Length one: both directions read the same element.
  Scope s3(ps, false);
  const Matrix one = bilstm(s3, "q", constant(x.topRows(1)))->value;
  Scope s4(ps, false);
  CHECK(bilstm(s4, "q", constant(x.topRows(1)))->value == one);
}

TEST_CASE("grad contract") {
  Rng rng(1);
  ParameterStore ps;
  ps.add("p", uniform_matrix(3, 4, 1.0, rng));
  ps.add("q", uniform_matrix(1, 2, 1.0, rng));
  const auto g = grad(
      [](Scope& s) { return scale(add(sum(square(s.get("p"))), sum(square(s.get("q")))), 0.5); }, ps);
  CHECK(g.at("p") == ps.at("p"));
  CHECK(g.at("q") == ps.at("q"));

  const auto g0 = grad([](Scope&) { return constant_scalar(3.0); }, ps);
  CHECK(g0.squared_norm() == 0.0);

  CHECK_THROWS_AS(grad([](Scope& s) { return s.get("p"); }, ps), ValidationError);
}

TEST_CASE("flatten and unflatten round-trip") {
  Rng rng(2);
  ParameterStore ps;
  init_attention(ps, "a", 8, 2, 1, 8, rng);
  const auto flat = ps.flatten();
  CHECK(static_cast<std::size_t>(flat.size()) == ps.total_count());
  ParameterStore other = ps.zeros_like();
  other.unflatten(flat);
  CHECK(other.bitwise_equal(ps));
}

TEST_CASE("weight files round-trip") {
  Rng rng(8);
  ParameterStore ps;
  init_ffn(ps, "f", 3, 1, 5, 2, rng);
  nlohmann::json meta{{"model", "test"}};
  const auto bytes = encode_weights(ps, meta, WeightDtype::F64);
  CHECK(bytes.substr(0, 4) == "FIMW");
  nlohmann::json back;
  CHECK(decode_weights(bytes, &back).bitwise_equal(ps));
  CHECK(back.at("model") == "test");

  const auto f32 = decode_weights(encode_weights(ps, meta, WeightDtype::F32));
  for (const auto& n : ps.names()) {
    CHECK((f32.at(n) - ps.at(n).cast<float>().cast<double>()).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(decode_weights("FIMX0000"), ValidationError);
}

TEST_CASE("net config validation") {
  NetConfig c;
  CHECK_NOTHROW(c.validate());
  c.attn_heads = 3;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK_NOTHROW(NetConfig::paper_scale().validate());
  CHECK(NetConfig::from_json(NetConfig{}.to_json()).embed_dim == 32);
}
