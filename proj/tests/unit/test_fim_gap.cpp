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

#include "fimkit/fim_gap.hpp"

using namespace fim;
using namespace fim::gap;

namespace {

nn::NetConfig small_config() {
  nn::NetConfig c;
  c.embed_dim = 8;
  c.ffn_width = 16;
  c.seq_hidden = 8;
  c.attn_dim = 8;
  c.attn_heads = 2;
  c.attn_layers = 1;
  return c;
}

GapModel small_gap_model(std::uint64_t seed = 4) {
  auto theta = std::make_shared<const local::LocalModel>(local::LocalModel::initialize(small_config(), seed));
  return GapModel::initialize(theta, seed + 1);
}

std::vector<double> grid_times(std::size_t n, double t0, double dt) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = t0 + dt * static_cast<double>(i);
  return t;
}

std::vector<double> without_gap(std::size_t n_left, std::size_t n_right) {
  auto t = grid_times(n_left, 0.0, 1.0);
  const auto r = grid_times(n_right, static_cast<double>(n_left) + 10.0, 1.0);
  t.insert(t.end(), r.begin(), r.end());
  return t;
}

TimeSeries wave(std::size_t n) {
  TimeSeries s;
  s.times = grid_times(n, 0.0, 0.05);
  for (double t : s.times) s.values.push_back(std::cos(t) + 0.3 * t);
  return s;
}

}  // namespace

TEST_CASE("balanced gaps sit in the middle slot") {
  const auto t = without_gap(40, 40);
  const auto s = split_sets(t, 39.5, 49.5);
  CHECK(s.q == 3);
  const std::array<std::size_t, kSets> counts{20, 20, 0, 20, 20};
  const std::array<std::size_t, kSets> firsts{0, 20, 40, 40, 60};
  for (int k = 0; k < kSets; ++k) {
    CHECK(s.sets[static_cast<std::size_t>(k)].count == counts[static_cast<std::size_t>(k)]);
    CHECK(s.sets[static_cast<std::size_t>(k)].first == firsts[static_cast<std::size_t>(k)]);
  }
  CHECK(s.gap_first == 39.0);
  CHECK(s.gap_last == 50.0);
  const auto obs = s.observed();
  CHECK(obs[2].first == 40);
}

TEST_CASE("the gap slot follows the share of observations") {
  CHECK(split_sets(without_gap(60, 20), 59.5, 69.5).q == 4);
  CHECK(split_sets(without_gap(10, 70), 9.5, 19.5).q == 2);
  // Remainders go to the leftmost sets of each side.
  const auto s = split_sets(without_gap(7, 9), 6.5, 16.5);
  CHECK(s.q == 3);
  CHECK(s.sets[0].count == 4);
  CHECK(s.sets[1].count == 3);
  CHECK(s.sets[3].count == 5);
  CHECK(s.sets[4].count == 4);
  // The preferred count is infeasible, so the nearest feasible one wins.
  const auto skew = split_sets(without_gap(3, 8), 2.5, 12.5);
  CHECK(skew.q == 2);
  CHECK(skew.sets[0].count == 3);
}

TEST_CASE("invalid gaps are rejected") {
  const auto t = without_gap(10, 10);
  CHECK_THROWS_AS(split_sets(t, -5.0, -1.0), ValidationError);
  CHECK_THROWS_AS(split_sets(t, 25.0, 40.0), ValidationError);
  CHECK_THROWS_AS(split_sets(t, 5.0, 4.0), ValidationError);
  CHECK_THROWS_AS(split_sets(t, 4.5, 12.0), ValidationError);
  CHECK_THROWS_AS(split_sets(without_gap(1, 20), 0.5, 10.5), ValidationError);
  CHECK_THROWS_AS(split_sets(without_gap(3, 3), 2.5, 12.5), ValidationError);
}

TEST_CASE("scale statistics") {
  const std::vector<double> tau{0.1, 0.2, 0.4};
  const std::vector<double> y{0.5, -0.5, 0.25};
  const auto st = scale_stats(tau, y);
  const std::array<double, kStats> expect{-0.5, 0.5, 1.0, 0.5, 0.25, -0.25, 0.1, 0.4, 0.30000000000000004};
  for (int i = 0; i < kStats; ++i) CHECK(st[static_cast<std::size_t>(i)] == doctest::Approx(expect[static_cast<std::size_t>(i)]));
  const std::vector<double> one_t{0.3}, one_y{1.0};
  CHECK(scale_stats(one_t, one_y)[8] == kTauDiffFloor);
}

TEST_CASE("stitching hits both boundary values exactly") {
  // f(t) = 2 t on [1, 3]: both extensions are quadratics, the trapezoid rule
  // on a fine grid integrates them almost exactly.
  std::vector<double> grid, f;
  for (int i = 0; i <= 2000; ++i) {
    grid.push_back(1.0 + 2.0 * i / 2000.0);
    f.push_back(2.0 * grid.back());
  }
  const StitchedGap g(5.0, -1.0, grid, f);
  CHECK(g.value(1.0) == 5.0);
  CHECK(g.value(3.0) == -1.0);
  for (double t : {1.3, 2.0, 2.71}) {
    const double xl = 5.0 + (t * t - 1.0);
    const double xr = -1.0 - (9.0 - t * t);
    const double wl = (3.0 - t) / 2.0;
    CHECK(g.left_extension(t) == doctest::Approx(xl).epsilon(1e-6));
    CHECK(g.right_extension(t) == doctest::Approx(xr).epsilon(1e-6));
    CHECK(g.value(t) == doctest::Approx(wl * xl + (1.0 - wl) * xr).epsilon(1e-6));
    const double h = 1e-4;
    CHECK(g.derivative(t) == doctest::Approx((g.value(t + h) - g.value(t - h)) / (2 * h)).epsilon(1e-5));
  }
  CHECK_THROWS_AS(StitchedGap(0.0, 0.0, {1.0}, {0.0}), ValidationError);
}

TEST_CASE("imputation is continuous at the gap edges") {
  const auto model = small_gap_model();
  TimeSeries s = wave(200);
  s.mask.assign(200, 1);
  for (std::size_t i = 90; i < 120; ++i) s.mask[i] = 0;
  const double lo = s.times[89] + 0.01, hi = s.times[120] - 0.01;
  const auto traj = impute_gap(model, s, lo, hi, local::ByCount{1});
  const double a = traj->stitched().t_first(), b = traj->stitched().t_last();
  CHECK(a == s.times[89]);
  CHECK(b == s.times[120]);
  const double eps = 1e-9;
  CHECK(std::abs(traj->value(a - eps) - traj->value(a)) < 1e-6);
  CHECK(std::abs(traj->value(b + eps) - traj->value(b)) < 1e-6);
  // Outside the gap the left series is imputed by the local model alone.
  TimeSeries left;
  for (std::size_t i = 0; i < 90; ++i) {
    left.times.push_back(s.times[i]);
    left.values.push_back(s.values[i]);
  }
  const auto plain = local::compose_windows(model.theta_ptr(), left, local::ByCount{1});
  CHECK(traj->value(1.0) == plain->value(1.0));
  CHECK(traj->split().q >= 1);
  CHECK(std::isfinite(traj->derivative_log_var(0.5 * (a + b))));
  // Observed points inside the requested gap are ignored.
  TimeSeries full = wave(200);
  const auto same = impute_gap(model, full, lo, hi, local::ByCount{1});
  CHECK(same->value(0.5 * (a + b)) == traj->value(0.5 * (a + b)));
  CHECK_THROWS_AS(impute_gap(model, s, -1.0, 2.0, local::ByCount{1}), ValidationError);
}

TEST_CASE("gap weight files hold both parameter groups") {
  const auto model = small_gap_model(9);
  const auto path = std::filesystem::temp_directory_path() / "fimkit_test_gap.fimw";
  model.save(path, nn::WeightDtype::F64);
  const auto loaded = GapModel::load(path);
  std::filesystem::remove(path);
  CHECK(loaded.phi().flatten() == model.phi().flatten());
  CHECK(loaded.theta().params().flatten() == model.theta().params().flatten());
  TimeSeries s = wave(120);
  const auto a = impute_gap(model, s, 2.0, 3.0, local::ByCount{1});
  const auto b = impute_gap(loaded, s, 2.0, 3.0, local::ByCount{1});
  CHECK(a->value(2.5) == b->value(2.5));
}
