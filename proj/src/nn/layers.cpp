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

#include "fimkit/nn/layers.hpp"

#include <cmath>
#include <numbers>

#include "fimkit/common.hpp"

namespace fim::nn {

using json = nlohmann::json;

void NetConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ValidationError(std::string("net.") + name + " must be positive");
  };
  positive(embed_dim, "embed_dim");
  positive(ffn_width, "ffn_width");
  positive(seq_hidden, "seq_hidden");
  positive(attn_layers, "attn_layers");
  positive(attn_heads, "attn_heads");
  positive(attn_dim, "attn_dim");
  if (ffn_layers < 0) throw ValidationError("net.ffn_layers must be >= 0");
  if (attn_dim % attn_heads != 0) throw ValidationError("net.attn_dim must be divisible by net.attn_heads");
  if (attn_dim != embed_dim) throw ValidationError("net.attn_dim must equal net.embed_dim");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("net.dropout must be in [0, 1)");
}

json NetConfig::to_json() const {
  return json{{"embed_dim", embed_dim},   {"ffn_layers", ffn_layers}, {"ffn_width", ffn_width},
              {"seq_hidden", seq_hidden}, {"attn_layers", attn_layers}, {"attn_heads", attn_heads},
              {"attn_dim", attn_dim},     {"dropout", dropout}};
}

NetConfig NetConfig::from_json(const json& j) {
  NetConfig c;
  try {
    c.embed_dim = j.at("embed_dim").get<int>();
    c.ffn_layers = j.at("ffn_layers").get<int>();
    c.ffn_width = j.at("ffn_width").get<int>();
    c.seq_hidden = j.at("seq_hidden").get<int>();
    c.attn_layers = j.at("attn_layers").get<int>();
    c.attn_heads = j.at("attn_heads").get<int>();
    c.attn_dim = j.at("attn_dim").get<int>();
    c.dropout = j.at("dropout").get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad network config: ") + e.what());
  }
  c.validate();
  return c;
}

NetConfig NetConfig::paper_scale() {
  NetConfig c;
  c.embed_dim = 512;
  c.ffn_layers = 4;
  c.ffn_width = 1024;
  c.seq_hidden = 256;
  c.attn_layers = 4;
  c.attn_heads = 8;
  c.attn_dim = 512;
  return c;
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

void init_linear(ParameterStore& ps, const std::string& prefix, int in, int out, Rng& rng) {
  ps.add(prefix + ".W", uniform_matrix(in, out, std::sqrt(3.0 / in), rng));
  ps.add(prefix + ".b", Matrix::Zero(1, out));
}

Var linear(Scope& s, const std::string& prefix, const Var& x) {
  return add(matmul(x, s.get(prefix + ".W")), s.get(prefix + ".b"));
}

void init_ffn(ParameterStore& ps, const std::string& prefix, int in, int hidden, int width, int out, Rng& rng) {
  int prev = in;
  for (int l = 0; l < hidden; ++l) {
    init_linear(ps, prefix + ".l" + std::to_string(l), prev, width, rng);
    prev = width;
  }
  init_linear(ps, prefix + ".l" + std::to_string(hidden), prev, out, rng);
}

Var ffn(Scope& s, const std::string& prefix, const Var& x, bool activate_output) {
  Var h = x;
  int l = 0;
  while (true) {
    const std::string name = prefix + ".l" + std::to_string(l);
    const bool last = !s.has(prefix + ".l" + std::to_string(l + 1) + ".W");
    h = linear(s, name, h);
    if (last && !activate_output) break;
    h = s.maybe_dropout(selu(h));
    if (last) break;
    ++l;
  }
  return h;
}

void init_time_embed(ParameterStore& ps, const std::string& prefix, int dim, Rng& rng) {
  Matrix w = uniform_matrix(1, dim, 4.0 * std::numbers::pi, rng);
  Matrix b = uniform_matrix(1, dim, std::numbers::pi, rng);
  w(0, 0) = 1.0;
  b(0, 0) = 0.0;
  ps.add(prefix + ".w", w);
  ps.add(prefix + ".b", b);
}

Var time_embed(Scope& s, const std::string& prefix, const Var& t) {
  if (t->cols() != 1) throw ValidationError("time_embed: expected a column of times");
  return sin_tail(add(matmul(t, s.get(prefix + ".w")), s.get(prefix + ".b")));
}

void init_bilstm(ParameterStore& ps, const std::string& prefix, int in, int hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (const char* dir : {".fwd", ".bwd"}) {
    ps.add(prefix + dir + ".Wx", uniform_matrix(in, 4 * hidden, bound, rng));
    ps.add(prefix + dir + ".Wh", uniform_matrix(hidden, 4 * hidden, bound, rng));
    ps.add(prefix + dir + ".b", uniform_matrix(1, 4 * hidden, bound, rng));
  }
}

Var bilstm(Scope& s, const std::string& prefix, const Var& seq) {
  if (seq->rows() < 1) throw ValidationError("bilstm: empty sequence");
  Var f = lstm_final(seq, s.get(prefix + ".fwd.Wx"), s.get(prefix + ".fwd.Wh"), s.get(prefix + ".fwd.b"), false);
  Var b = lstm_final(seq, s.get(prefix + ".bwd.Wx"), s.get(prefix + ".bwd.Wh"), s.get(prefix + ".bwd.b"), true);
  return concat_cols({f, b});
}

namespace {

void init_layernorm(ParameterStore& ps, const std::string& prefix, int dim) {
  ps.add(prefix + ".g", Matrix::Ones(1, dim));
  ps.add(prefix + ".b", Matrix::Zero(1, dim));
}

Var layernorm(Scope& s, const std::string& prefix, const Var& x) {
  return add(mul(layernorm_rows(x), s.get(prefix + ".g")), s.get(prefix + ".b"));
}

}  // namespace

void init_attention(ParameterStore& ps, const std::string& prefix, int dim, int heads, int layers, int ffn_width,
                    Rng& rng) {
  if (dim % heads != 0) throw ValidationError("attention: dim must be divisible by heads");
  for (int l = 0; l < layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    init_layernorm(ps, p + ".ln1", dim);
    init_linear(ps, p + ".q", dim, dim, rng);
    init_linear(ps, p + ".k", dim, dim, rng);
    init_linear(ps, p + ".v", dim, dim, rng);
    init_linear(ps, p + ".o", dim, dim, rng);
    init_layernorm(ps, p + ".ln2", dim);
    init_ffn(ps, p + ".ff", dim, 1, ffn_width, dim, rng);
  }
  init_layernorm(ps, prefix + ".ln_f", dim);
}

Var attention(Scope& s, const std::string& prefix, const Var& seq, int heads, std::vector<Matrix>* weights) {
  const auto dim = seq->cols();
  if (dim % heads != 0) throw ValidationError("attention: dim must be divisible by heads");
  const auto dh = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Var x = seq;
  for (int l = 0;; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    if (!s.has(p + ".q.W")) break;
    Var n1 = layernorm(s, p + ".ln1", x);
    Var q = linear(s, p + ".q", n1);
    Var k = linear(s, p + ".k", n1);
    Var v = linear(s, p + ".v", n1);
    std::vector<Var> outs;
    for (int h = 0; h < heads; ++h) {
      Var qh = slice_cols(q, h * dh, dh);
      Var kh = slice_cols(k, h * dh, dh);
      Var vh = slice_cols(v, h * dh, dh);
      Var a = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
      if (weights) weights->push_back(a->value);
      outs.push_back(matmul(a, vh));
    }
    x = add(x, s.maybe_dropout(linear(s, p + ".o", concat_cols(outs))));
    Var n2 = layernorm(s, p + ".ln2", x);
    x = add(x, s.maybe_dropout(ffn(s, p + ".ff", n2)));
  }
  return layernorm(s, prefix + ".ln_f", x);
}

}  // namespace fim::nn
