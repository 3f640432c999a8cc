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

#include "fimkit/nn/autodiff.hpp"

#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "fimkit/common.hpp"

namespace fim::nn {

namespace {

thread_local bool g_grad_enabled = true;

Var make_result(Matrix value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!g_grad_enabled) return node;
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (!any) return node;
  node->requires_grad = true;
  node->parents = std::move(parents);
  node->backward_fn = std::move(fn);
  return node;
}

void push(const Var& p, const Matrix& g) {
  if (p->requires_grad) p->accumulate(g);
}

std::string shape(const Matrix& m) { return fmt::format("{}x{}", m.rows(), m.cols()); }

Eigen::Index broadcast_dim(Eigen::Index a, Eigen::Index b, const char* op, const Matrix& ma, const Matrix& mb) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw ValidationError(fmt::format("{}: incompatible shapes {} and {}", op, shape(ma), shape(mb)));
}

Matrix expand(const Matrix& m, Eigen::Index r, Eigen::Index c) {
  if (m.rows() == r && m.cols() == c) return m;
  if (m.rows() == 1 && m.cols() == 1) return Matrix::Constant(r, c, m(0, 0));
  if (m.rows() == 1) return m.replicate(r, 1);
  return m.replicate(1, c);
}

Matrix reduce_to(const Matrix& g, Eigen::Index r, Eigen::Index c) {
  if (g.rows() == r && g.cols() == c) return g;
  if (r == 1 && c == 1) return Matrix::Constant(1, 1, g.sum());
  if (r == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

template <typename Fwd, typename Bwd>
Var unary(const Var& a, Fwd fwd, Bwd bwd) {
  Matrix out = fwd(a->value);
  if (!g_grad_enabled || !a->requires_grad) return make_result(std::move(out), {}, nullptr);
  return make_result(out, {a}, [bwd, out](Node& self) {
    const auto& x = self.parents[0]->value;
    push(self.parents[0], bwd(x, out, self.grad));
  });
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

Var constant_scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

Var leaf(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = g_grad_enabled;
  return node;
}

void backward(const Var& loss) {
  if (loss->rows() != 1 || loss->cols() != 1) {
    throw ValidationError("backward: loss must be a scalar, got " + shape(loss->value));
  }
  if (!loss->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

Var add(const Var& a, const Var& b) {
  const auto r = broadcast_dim(a->rows(), b->rows(), "add", a->value, b->value);
  const auto c = broadcast_dim(a->cols(), b->cols(), "add", a->value, b->value);
  Matrix out = expand(a->value, r, c) + expand(b->value, r, c);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    push(pa, reduce_to(self.grad, pa->rows(), pa->cols()));
    push(pb, reduce_to(self.grad, pb->rows(), pb->cols()));
  });
}

Var sub(const Var& a, const Var& b) {
  const auto r = broadcast_dim(a->rows(), b->rows(), "sub", a->value, b->value);
  const auto c = broadcast_dim(a->cols(), b->cols(), "sub", a->value, b->value);
  Matrix out = expand(a->value, r, c) - expand(b->value, r, c);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    push(pa, reduce_to(self.grad, pa->rows(), pa->cols()));
    push(pb, reduce_to(-self.grad, pb->rows(), pb->cols()));
  });
}

Var mul(const Var& a, const Var& b) {
  const auto r = broadcast_dim(a->rows(), b->rows(), "mul", a->value, b->value);
  const auto c = broadcast_dim(a->cols(), b->cols(), "mul", a->value, b->value);
  Matrix out = expand(a->value, r, c).cwiseProduct(expand(b->value, r, c));
  return make_result(std::move(out), {a, b}, [r, c](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (pa->requires_grad) {
      push(pa, reduce_to(self.grad.cwiseProduct(expand(pb->value, r, c)), pa->rows(), pa->cols()));
    }
    if (pb->requires_grad) {
      push(pb, reduce_to(self.grad.cwiseProduct(expand(pa->value, r, c)), pb->rows(), pb->cols()));
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a->cols() != b->rows()) {
    throw ValidationError(fmt::format("matmul: incompatible shapes {} and {}", shape(a->value), shape(b->value)));
  }
  Matrix out = a->value * b->value;
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (pa->requires_grad) push(pa, self.grad * pb->value.transpose());
    if (pb->requires_grad) push(pb, pa->value.transpose() * self.grad);
  });
}

Var scale(const Var& a, double s) {
  return make_result(a->value * s, {a}, [s](Node& self) { push(self.parents[0], self.grad * s); });
}

Var add_scalar(const Var& a, double s) {
  return make_result(a->value.array() + s, {a}, [](Node& self) { push(self.parents[0], self.grad); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var selu(const Var& a) {
  return unary(
      a,
      [](const Matrix& x) -> Matrix {
        return x.unaryExpr([](double v) { return v > 0.0 ? kSeluLambda * v : kSeluLambda * kSeluAlpha * std::expm1(v); });
      },
      [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
        return g.binaryExpr(x, [](double gi, double v) {
          return gi * (v > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(v));
        });
      });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }); },
      [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix {
        return g.cwiseProduct(y.unaryExpr([](double s) { return s * (1.0 - s); }));
      });
}

Var tanh(const Var& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().tanh().matrix(); },
      [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix {
        return g.cwiseProduct(y.unaryExpr([](double t) { return 1.0 - t * t; }));
      });
}

Var exp(const Var& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().exp().matrix(); },
      [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix { return g.cwiseProduct(y); });
}

Var abs(const Var& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.cwiseAbs(); },
      [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
        return g.binaryExpr(x, [](double gi, double v) { return v > 0.0 ? gi : (v < 0.0 ? -gi : 0.0); });
      });
}

Var square(const Var& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.cwiseAbs2(); },
      [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix { return 2.0 * g.cwiseProduct(x); });
}

Var sin_tail(const Var& a) {
  return unary(
      a,
      [](const Matrix& x) -> Matrix {
        Matrix y = x;
        if (x.cols() > 1) y.rightCols(x.cols() - 1) = x.rightCols(x.cols() - 1).array().sin().matrix();
        return y;
      },
      [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
        Matrix d = g;
        if (x.cols() > 1) {
          d.rightCols(x.cols() - 1) = g.rightCols(x.cols() - 1).cwiseProduct(x.rightCols(x.cols() - 1).array().cos().matrix());
        }
        return d;
      });
}

Var sum(const Var& a) {
  return make_result(Matrix::Constant(1, 1, a->value.sum()), {a}, [](Node& self) {
    const auto& p = self.parents[0];
    push(p, Matrix::Constant(p->rows(), p->cols(), self.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a->value.size());
  return make_result(Matrix::Constant(1, 1, a->value.sum() / n), {a}, [n](Node& self) {
    const auto& p = self.parents[0];
    push(p, Matrix::Constant(p->rows(), p->cols(), self.grad(0, 0) / n));
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no inputs");
  const auto r = parts.front()->rows();
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    if (p->rows() != r) throw ValidationError("concat_cols: row counts differ");
    c += p->cols();
  }
  Matrix out(r, c);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p->cols()) = p->value;
    off += p->cols();
  }
  return make_result(std::move(out), parts, [](Node& self) {
    Eigen::Index o = 0;
    for (const auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad.middleCols(o, p->cols()));
      o += p->cols();
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_rows: no inputs");
  const auto c = parts.front()->cols();
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    if (p->cols() != c) throw ValidationError("concat_rows: column counts differ");
    r += p->rows();
  }
  Matrix out(r, c);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p->rows()) = p->value;
    off += p->rows();
  }
  return make_result(std::move(out), parts, [](Node& self) {
    Eigen::Index o = 0;
    for (const auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad.middleRows(o, p->rows()));
      o += p->rows();
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a->cols()) throw ValidationError("slice_cols: out of range");
  return make_result(a->value.middleCols(start, count), {a}, [start, count](Node& self) {
    const auto& p = self.parents[0];
    Matrix g = Matrix::Zero(p->rows(), p->cols());
    g.middleCols(start, count) = self.grad;
    push(p, g);
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a->rows()) throw ValidationError("slice_rows: out of range");
  return make_result(a->value.middleRows(start, count), {a}, [start, count](Node& self) {
    const auto& p = self.parents[0];
    Matrix g = Matrix::Zero(p->rows(), p->cols());
    g.middleRows(start, count) = self.grad;
    push(p, g);
  });
}

Var transpose(const Var& a) {
  return make_result(a->value.transpose(), {a}, [](Node& self) { push(self.parents[0], self.grad.transpose()); });
}

Var repeat_rows(const Var& a, Eigen::Index n) {
  if (a->rows() != 1) throw ValidationError("repeat_rows: expected a single row");
  return make_result(a->value.replicate(n, 1), {a}, [](Node& self) { push(self.parents[0], self.grad.colwise().sum()); });
}

Var softmax_rows(const Var& a) {
  Matrix y = a->value;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double m = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return make_result(y, {a}, [y](Node& self) {
    Matrix g(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = self.grad.row(i).dot(y.row(i));
      g.row(i) = y.row(i).cwiseProduct((self.grad.row(i).array() - dot).matrix());
    }
    push(self.parents[0], g);
  });
}

Var layernorm_rows(const Var& a, double eps) {
  const auto& x = a->value;
  const auto n = x.cols();
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mu) * inv_std(i);
  }
  return make_result(xhat, {a}, [xhat, inv_std](Node& self) {
    Matrix g(xhat.rows(), xhat.cols());
    for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
      const auto dy = self.grad.row(i);
      const double m1 = dy.mean();
      const double m2 = dy.dot(xhat.row(i)) / static_cast<double>(xhat.cols());
      g.row(i) = inv_std(i) * (dy.array() - m1 - xhat.row(i).array() * m2).matrix();
    }
    push(self.parents[0], g);
  });
}

Var dropout(const Var& a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw ValidationError("dropout: p must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(a->rows(), a->cols());
  const double s = 1.0 / (1.0 - p);
  for (Eigen::Index j = 0; j < mask.cols(); ++j)
    for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = keep(rng) ? s : 0.0;
  return make_result(a->value.cwiseProduct(mask), {a},
                     [mask](Node& self) { push(self.parents[0], self.grad.cwiseProduct(mask)); });
}

Var lstm_final(const Var& x, const Var& wx, const Var& wh, const Var& b, bool reverse) {
  const auto steps = x->rows();
  const auto hidden = wh->rows();
  if (steps < 1) throw ValidationError("lstm: empty sequence");
  if (wx->rows() != x->cols() || wx->cols() != 4 * hidden || wh->cols() != 4 * hidden || b->rows() != 1 ||
      b->cols() != 4 * hidden) {
    throw ValidationError("lstm: parameter shapes do not match input");
  }

  // Pre-activations from the inputs for all steps at once.
  const Matrix zx = x->value * wx->value;
  // Per-step caches, indexed by processing order.
  Matrix gates(steps, 4 * hidden);  // activated i, f, g, o
  Matrix cs(steps, hidden), hs_prev(steps, hidden), cs_prev(steps, hidden), tcs(steps, hidden);
  RowVector h = RowVector::Zero(hidden), c = RowVector::Zero(hidden);
  for (Eigen::Index s = 0; s < steps; ++s) {
    const Eigen::Index row = reverse ? steps - 1 - s : s;
    RowVector z = zx.row(row) + h * wh->value + b->value;
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    RowVector ig = z.segment(0, hidden).unaryExpr(sig);
    RowVector fg = z.segment(hidden, hidden).unaryExpr(sig);
    RowVector gg = z.segment(2 * hidden, hidden).array().tanh().matrix();
    RowVector og = z.segment(3 * hidden, hidden).unaryExpr(sig);
    hs_prev.row(s) = h;
    cs_prev.row(s) = c;
    c = fg.cwiseProduct(c) + ig.cwiseProduct(gg);
    RowVector tc = c.array().tanh().matrix();
    h = og.cwiseProduct(tc);
    gates.row(s) << ig, fg, gg, og;
    cs.row(s) = c;
    tcs.row(s) = tc;
  }

  return make_result(h, {x, wx, wh, b}, [=](Node& self) {
    const auto& px = self.parents[0];
    const auto& pwx = self.parents[1];
    const auto& pwh = self.parents[2];
    const auto& pb = self.parents[3];
    const Matrix& whv = pwh->value;
    Matrix dz_all(steps, 4 * hidden);  // by input row
    RowVector dh = self.grad.row(0);
    RowVector dc = RowVector::Zero(hidden);
    Matrix dwh = Matrix::Zero(hidden, 4 * hidden);
    for (Eigen::Index s = steps - 1; s >= 0; --s) {
      const auto ig = gates.row(s).segment(0, hidden);
      const auto fg = gates.row(s).segment(hidden, hidden);
      const auto gg = gates.row(s).segment(2 * hidden, hidden);
      const auto og = gates.row(s).segment(3 * hidden, hidden);
      const auto tc = tcs.row(s);
      RowVector d_o = dh.cwiseProduct(tc);
      dc += dh.cwiseProduct(og).cwiseProduct((1.0 - tc.array().square()).matrix());
      RowVector d_i = dc.cwiseProduct(gg);
      RowVector d_g = dc.cwiseProduct(ig);
      RowVector d_f = dc.cwiseProduct(cs_prev.row(s));
      RowVector dz(4 * hidden);
      dz.segment(0, hidden) = d_i.array() * ig.array() * (1.0 - ig.array());
      dz.segment(hidden, hidden) = d_f.array() * fg.array() * (1.0 - fg.array());
      dz.segment(2 * hidden, hidden) = d_g.array() * (1.0 - gg.array().square());
      dz.segment(3 * hidden, hidden) = d_o.array() * og.array() * (1.0 - og.array());
      dc = dc.cwiseProduct(fg);
      dwh.noalias() += hs_prev.row(s).transpose() * dz;
      dh = dz * whv.transpose();
      const Eigen::Index row = reverse ? steps - 1 - s : s;
      dz_all.row(row) = dz;
    }
    if (px->requires_grad) px->accumulate(dz_all * pwx->value.transpose());
    if (pwx->requires_grad) pwx->accumulate(px->value.transpose() * dz_all);
    if (pwh->requires_grad) pwh->accumulate(dwh);
    if (pb->requires_grad) pb->accumulate(dz_all.colwise().sum());
  });
}

}  // namespace fim::nn
