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
#include <random>

#include "fimkit/eval.hpp"
#include "oracles.hpp"

using namespace fim;
using namespace fim::eval;

namespace {

std::vector<std::vector<double>> rows_of(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
  }
  return out;
}

double cubic(double t) { return 0.5 * t * t * t - 2.0 * t * t + t - 3.0; }
double cubic_d(double t) { return 1.5 * t * t - 4.0 * t + 1.0; }

}  // namespace

TEST_CASE("metrics on a worked example") {
  Eigen::MatrixXd x(3, 1), xh(3, 1), m(3, 1);
  x << 1.0, 2.0, 3.0;
  xh << 1.5, 2.0, 1.0;
  m << 1.0, 0.0, 1.0;
  const auto r = metrics(x, xh, m);
  CHECK(r.mae == doctest::Approx(1.25));
  CHECK(r.mse == doctest::Approx(2.125));
  CHECK(r.rmse == doctest::Approx(std::sqrt(2.125)));
  CHECK(r.mre == doctest::Approx(2.5 / 4.0));
  CHECK(r.r2 == doctest::Approx(1.0 - 4.25 / 2.0));
  CHECK(r2_accuracy({0.95, 0.9, 0.2, 0.99}) == doctest::Approx(0.5));
}

TEST_CASE("metrics agree with naive loops") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> n01;
  std::uniform_int_distribution<int> len(5, 40), dims(1, 3);
  for (int k = 0; k < 200; ++k) {
    const int L = len(rng), D = dims(rng);
    Eigen::MatrixXd x(L, D), xh(L, D), m(L, D);
    for (int i = 0; i < L; ++i) {
      for (int d = 0; d < D; ++d) {
        x(i, d) = n01(rng);
        xh(i, d) = x(i, d) + 0.3 * n01(rng);
        m(i, d) = n01(rng) > 0.0 ? 1.0 : 0.0;
      }
    }
    m(0, 0) = 1.0;
    const auto a = metrics(x, xh, m);
    const auto b = fimtest::naive_metrics(rows_of(x), rows_of(xh), rows_of(m));
    CHECK(std::abs(a.mae - b.mae) < 1e-12);
    CHECK(std::abs(a.mse - b.mse) < 1e-12);
    CHECK(std::abs(a.rmse - b.rmse) < 1e-12);
    CHECK(std::abs(a.mre - b.mre) < 1e-12);
    CHECK(std::abs(a.r2 - b.r2) < 1e-12);
  }
}

TEST_CASE("metric preconditions") {
  Eigen::MatrixXd x(2, 1), z = Eigen::MatrixXd::Zero(2, 1), one = Eigen::MatrixXd::Ones(2, 1);
  x << 1.0, 2.0;
  CHECK_THROWS_AS(metrics(x, x, z), ValidationError);
  CHECK_THROWS_AS(metrics(x, Eigen::MatrixXd::Zero(3, 1), one), ValidationError);
  CHECK_THROWS_AS(metrics(x, x, one * 0.5), ValidationError);
  CHECK_THROWS_AS(metrics(one, one, one), ValidationError);  // constant target
  CHECK(mask_mode_from_name("gap") == MaskMode::GapOnly);
  CHECK(std::string(mask_mode_name(MaskMode::MissingOnly)) == "missing");
}

TEST_CASE("aggregation uses the population deviation") {
  std::vector<Metrics> per{{1.0, 1.0, 1.0, 0.1, 0.95}, {3.0, 9.0, 3.0, 0.3, 0.5}};
  const auto r = aggregate(per, MaskMode::All);
  CHECK(r.mean.mae == 2.0);
  CHECK(r.std.mae == 1.0);
  CHECK(r.std.mse == 4.0);
  CHECK(r.r2_accuracy == 0.5);
}

TEST_CASE("cubic splines interpolate and reproduce cubics") {
  std::vector<double> t, y;
  for (double s : {0.0, 0.3, 0.5, 1.1, 1.6, 2.0, 2.9, 3.0}) {
    t.push_back(s);
    y.push_back(cubic(s));
  }
  const CubicSpline sp(t, y);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(sp.value(t[i]) == doctest::Approx(y[i]).epsilon(1e-14));
  for (double s = -0.2; s <= 3.2; s += 0.0137) {
    CHECK(std::abs(sp.value(s) - cubic(s)) < 1e-8);
    CHECK(std::abs(sp.derivative(s) - cubic_d(s)) < 1e-7);
  }
  const CubicSpline nat(t, y, SplineBoundary::Natural);
  CHECK(std::abs(nat.second_derivative(0.0)) < 1e-12);
  CHECK(std::abs(nat.second_derivative(3.0)) < 1e-12);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(nat.value(t[i]) == doctest::Approx(y[i]).epsilon(1e-14));
  // Natural splines reproduce straight lines.
  std::vector<double> line;
  for (double s : t) line.push_back(2.0 * s - 1.0);
  const CubicSpline nl(t, line, SplineBoundary::Natural);
  CHECK(std::abs(nl.value(1.37) - 1.74) < 1e-12);
  CHECK_THROWS_AS(CubicSpline({0.0, 1.0, 1.0, 2.0}, {0, 0, 0, 0}), ValidationError);
}

TEST_CASE("Savitzky-Golay matches the classic five-point weights") {
  std::vector<double> t, y;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (int i = 0; i < 30; ++i) {
    t.push_back(0.1 * i);
    y.push_back(n01(rng));
  }
  const auto s = savgol(t, y, {5, 2});
  const double w[5] = {-3.0, 12.0, 17.0, 12.0, -3.0};
  for (std::size_t i = 2; i + 2 < y.size(); ++i) {
    double ref = 0.0;
    for (int k = 0; k < 5; ++k) ref += w[k] * y[i - 2 + static_cast<std::size_t>(k)];
    CHECK(s[i] == doctest::Approx(ref / 35.0).epsilon(1e-12));
  }
  CHECK(s.front() == y.front());
  CHECK(s.back() == y.back());
}

TEST_CASE("Savitzky-Golay is exact on polynomials up to its order") {
  std::vector<double> t;
  for (int i = 0; i < 40; ++i) t.push_back(0.05 * i + 0.01 * std::sin(i));
  for (const auto spec : {SavgolSpec{15, 3}, SavgolSpec{7, 2}, SavgolSpec{9, 0}, SavgolSpec{5, 4}}) {
    std::vector<double> y;
    for (double s : t) {
      double v = 0.0, p = 1.0;
      for (int k = 0; k <= spec.order; ++k, p *= s) v += (k + 1.0) * p;
      y.push_back(v);
    }
    const auto out = savgol(t, y, spec);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(out[i] == doctest::Approx(y[i]).epsilon(1e-9));
  }
  CHECK_THROWS_AS((SavgolSpec{8, 3}.validate()), ValidationError);
  CHECK_THROWS_AS((SavgolSpec{3, 3}.validate()), ValidationError);
}

TEST_CASE("imputers by name") {
  CHECK(imputer_by_name("spline").name == "spline");
  CHECK(imputer_by_name("spline+savgol15").name == "spline+savgol15");
  CHECK(imputer_by_name("spline+savgol7_2").name == "spline+savgol7_2");
  CHECK_THROWS_AS(imputer_by_name("spline+savgol8"), ValidationError);
  CHECK_THROWS_AS(imputer_by_name("linear"), ValidationError);
  TimeSeries s{{0.0, 1.0, 2.0}, {1.0, 2.0, 3.0}, {}};
  CHECK_THROWS_AS(spline_baseline(s, std::nullopt), ValidationError);
}

TEST_CASE("benchmark grid layout and determinism") {
  const std::vector<BenchmarkSystem> systems{simulate_builtin("van_der_pol", 256), simulate_builtin("rossler", 256)};
  BenchmarkConfig cfg;
  cfg.samplings = 3;
  cfg.seed = 5;
  cfg.gammas = {0.0, 0.05, 0.2};
  const auto spline = spline_imputer();
  auto twin = spline;
  twin.name = "spline-twin";
  const auto cells = benchmark(systems, {spline, twin}, cfg);
  REQUIRE(cells.size() == 2 * 2 * 3 * 2);
  CHECK(cells[0].system == "van_der_pol");
  CHECK(cells[0].imputer == "spline");
  CHECK(cells[1].imputer == "spline-twin");
  CHECK(cells[2].gamma == 0.05);
  CHECK(cells[6].rho == 0.5);
  for (std::size_t i = 0; i < cells.size(); i += 2) {
    CHECK(cells[i].report.mean.mae == cells[i + 1].report.mean.mae);
    CHECK(cells[i].derivative_mae_mean == cells[i + 1].derivative_mae_mean);
    CHECK(cells[i].failures == 0);
  }
  // Interpolating the full clean series is exact at the observations.
  CHECK(cells[0].report.mean.mae < 1e-12);
  // More noise hurts.
  CHECK(cells[0].report.mean.mae < cells[2].report.mean.mae);
  CHECK(cells[2].report.mean.mae < cells[4].report.mean.mae);
  const auto again = benchmark(systems, {spline}, cfg);
  CHECK(again[1].report.mean.mae == cells[2].report.mean.mae);
  const auto csv = benchmark_csv(cells);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 25);
  CHECK(benchmark_json(cells).size() == 24);
  cfg.mask_mode = MaskMode::GapOnly;
  CHECK_THROWS_AS(benchmark(systems, {spline}, cfg), ValidationError);
}

TEST_CASE("phase portraits from a random model") {
  nn::NetConfig c;
  c.embed_dim = 8;
  c.ffn_width = 16;
  c.seq_hidden = 8;
  c.attn_dim = 8;
  const auto model = std::make_shared<const local::LocalModel>(local::LocalModel::initialize(c, 1));
  TimeSeries s;
  for (int i = 0; i < 100; ++i) {
    s.times.push_back(0.1 * i);
    s.values.push_back(std::sin(0.1 * i));
  }
  PhasePortraitConfig cfg;
  cfg.grid_points = 64;
  cfg.dense_points = 256;
  const auto p1 = phase_portrait(model, s, cfg);
  CHECK(p1.t.size() == 64);
  CHECK(p1.ddx.empty());
  cfg.depth = 2;
  const auto p2 = phase_portrait(model, s, cfg);
  CHECK(p2.ddx.size() == 64);
  CHECK(p2.x == p1.x);
  CHECK(phase_portrait_csv(p2).rfind("t,x,dx,ddx\n", 0) == 0);
  cfg.depth = 3;
  CHECK_THROWS_AS(phase_portrait(model, s, cfg), ValidationError);
}

TEST_CASE("SVG output") {
  const auto svg = svg_line_plot({{"a", {0.0, 1.0, 2.0}, {1.0, 0.0, 1.0}, "#1f77b4", true}}, "demo & test");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("demo &amp; test") != std::string::npos);
  CHECK(svg.find("<circle") != std::string::npos);
}
