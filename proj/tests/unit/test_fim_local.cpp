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
#include <limits>

#include "fimkit/fim_local.hpp"

using namespace fim;
using namespace fim::local;

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

std::shared_ptr<const LocalModel> small_model(std::uint64_t seed = 3) {
  return std::make_shared<const LocalModel>(LocalModel::initialize(small_config(), seed));
}

TimeSeries sine_series(std::size_t n, double t0, double t1, double a = 1.0, double b = 0.0) {
  TimeSeries s;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n - 1);
    s.times.push_back(t);
    s.values.push_back(a * std::sin(3.0 * (t - t0) / (t1 - t0)) + b);
  }
  return s;
}

}  // namespace

TEST_CASE("normalization maps observed points onto the unit box") {
  TimeSeries s{{1.0, 2.0, 3.0, 5.0}, {4.0, -2.0, 1e9, 6.0}, {1, 1, 0, 1}};
  const auto ns = normalize(s);
  CHECK(ns.tau == std::vector<double>{0.0, 0.25, 1.0});
  CHECK(ns.y == std::vector<double>{0.75, 0.0, 1.0});
  CHECK(ns.norm.dy() == 8.0);
  CHECK(ns.norm.dtau() == 4.0);
  CHECK(ns.norm.time_from_norm(0.5) == 3.0);
  const auto flat = normalize(TimeSeries{{0.0, 1.0}, {2.0, 2.0}, {}});
  CHECK(flat.norm.degenerate);
  CHECK(flat.y == std::vector<double>{0.0, 0.0});
  CHECK_THROWS_AS(normalize(TimeSeries{{0.0}, {1.0}, {}}), ValidationError);
}

TEST_CASE("renormalization scales by dy / dtau") {
  NormalizationParams n;
  n.y_min = -1.0;
  n.y_max = 3.0;
  n.tau_min = 2.0;
  n.tau_max = 10.0;
  const auto f = renormalize_derivative({0.6, -1.0}, n);
  CHECK(f.mean == doctest::Approx(0.3));
  CHECK(f.log_var == doctest::Approx(-1.0 + std::log(0.25)));
  const auto x0 = renormalize_initial({0.5, 0.2}, n);
  CHECK(x0.mean == doctest::Approx(1.0));
  CHECK(x0.log_var == doctest::Approx(0.2 + std::log(16.0)));
}

TEST_CASE("affine changes of units carry through inference") {
  const auto model = small_model();
  const auto base = infer(model, sine_series(40, 0.0, 1.0));
  const double a = 7.5, b = -3.0, k = 4.0, c = 2.0;
  TimeSeries scaled = sine_series(40, 0.0, 1.0);
  for (auto& t : scaled.times) t = c + k * t;
  for (auto& v : scaled.values) v = a * v + b;
  const auto moved = infer(model, scaled);
  for (double s : {0.0, 0.13, 0.5, 0.77, 1.0}) {
    const double t = c + k * s;
    CHECK(moved->value(t) == doctest::Approx(a * base->value(s) + b).epsilon(1e-9));
    CHECK(moved->derivative(t) == doctest::Approx(a / k * base->derivative(s)).epsilon(1e-9));
    CHECK(moved->derivative_log_var(t) ==
          doctest::Approx(base->derivative_log_var(s) + 2.0 * std::log(a / k)).epsilon(1e-9));
  }
}

TEST_CASE("reconstruction starts at the initial estimate and integrates the derivative") {
  const auto model = small_model();
  const auto out = infer(model, sine_series(50, -1.0, 2.0));
  CHECK(out->value(-1.0) == doctest::Approx(out->initial().mean));
  // Trapezoid oracle on a fine grid.
  const int n = 20000;
  double x = out->initial_normalized().mean;
  double prev = out->derivative_normalized(0.0).mean;
  for (int i = 1; i <= n; ++i) {
    const double s = static_cast<double>(i) / n;
    const double f = out->derivative_normalized(s).mean;
    x += 0.5 * (prev + f) / n;
    prev = f;
  }
  const double s1 = 1.0;
  CHECK(out->reconstruct_normalized(std::span<const double>(&s1, 1)).front() == doctest::Approx(x).epsilon(1e-3));
  // Linear extension outside the observation interval.
  const double slope = out->derivative(2.0);
  CHECK(out->value(2.5) == doctest::Approx(out->value(2.0) + 0.5 * slope).epsilon(1e-9));
  CHECK(reconstruction_grid_size(10) == kMinReconstructionGrid);
  CHECK(reconstruction_grid_size(100) == 400);
}

TEST_CASE("masked points do not influence inference") {
  const auto model = small_model();
  TimeSeries s = sine_series(30, 0.0, 1.0);
  s.mask.assign(30, 1);
  s.mask[7] = 0;
  s.mask[8] = 0;
  TimeSeries other = s;
  other.values[7] = std::numeric_limits<double>::quiet_NaN();
  other.values[8] = 1e6;
  const auto a = infer(model, s);
  const auto b = infer(model, other);
  for (double t : {0.1, 0.25, 0.6}) CHECK(a->value(t) == b->value(t));
  TimeSeries lone = sine_series(7, 0.0, 1.0);
  lone.mask = {0, 0, 0, 1, 0, 0, 0};
  CHECK_THROWS_AS(infer(model, lone), ValidationError);
}

TEST_CASE("windowing strings") {
  CHECK(std::get<ByCount>(parse_windowing("count:8")).windows == 8);
  CHECK(std::get<ByCount>(parse_windowing("5")).windows == 5);
  CHECK(std::get<ByObservations>(parse_windowing("obs:32")).per_window == 32);
  CHECK(windowing_name(parse_windowing("obs:32")) == "obs:32");
  CHECK_THROWS_AS(parse_windowing("count:0"), ValidationError);
  CHECK_THROWS_AS(parse_windowing("slices:4"), ValidationError);
  CHECK_THROWS_AS(parse_windowing("obs:x"), ValidationError);
}

TEST_CASE("window plans cover the series with shared observations") {
  std::vector<double> times;
  for (int i = 0; i < 200; ++i) times.push_back(0.01 * i + (i % 3) * 0.001);
  for (const auto& spec : {"count:1", "count:3", "count:8", "obs:16", "obs:64"}) {
    CAPTURE(spec);
    const auto r = plan_windows(times, parse_windowing(spec));
    REQUIRE(!r.empty());
    CHECK(r.front().first == 0);
    CHECK(r.back().last == times.size() - 1);
    for (std::size_t k = 0; k < r.size(); ++k) {
      CHECK(r[k].count() >= static_cast<std::size_t>(kMinContext));
      if (k > 0) {
        CHECK(r[k].first > r[k - 1].first);
        CHECK(r[k].last > r[k - 1].last);
        CHECK(r[k - 1].last >= r[k].first + 1);
      }
    }
  }
  CHECK(plan_windows(times, ByCount{1}).size() == 1);
  CHECK(plan_windows(times, ByCount{4}).size() == 4);
}

TEST_CASE("composed trajectories blend continuously") {
  const auto model = small_model(11);
  const auto series = sine_series(120, 0.0, 6.0, 2.0, 1.0);
  const auto comp = compose_windows(model, series, ByCount{4});
  REQUIRE(comp->window_count() == 4);
  const auto ov = comp->overlaps();
  REQUIRE(ov.size() == 3);
  for (std::size_t k = 0; k < ov.size(); ++k) {
    const auto [t0b, t1a] = ov[k];
    CHECK(comp->value(t0b) == doctest::Approx(comp->window(k).value(t0b)));
    CHECK(comp->value(t1a) == doctest::Approx(comp->window(k + 1).value(t1a)));
    const double mid = 0.5 * (t0b + t1a);
    CHECK(comp->value(mid) ==
          doctest::Approx(0.5 * comp->window(k).value(mid) + 0.5 * comp->window(k + 1).value(mid)));
    const double eps = 1e-9;
    for (double edge : {t0b, t1a}) {
      CHECK(std::abs(comp->value(edge - eps) - comp->value(edge + eps)) < 1e-6);
    }
    // Product rule on the linear blend weights.
    const auto& wa = comp->window(k);
    const auto& wb = comp->window(k + 1);
    const double blend = 0.5 * wa.derivative(mid) + 0.5 * wb.derivative(mid) + (wb.value(mid) - wa.value(mid)) / (t1a - t0b);
    CHECK(comp->derivative(mid) == doctest::Approx(blend));
    // The reported derivative is the network output, which the trapezoid
    // reconstruction follows up to grid resolution.
    const double h = 1e-5;
    const double fd = (comp->value(mid + h) - comp->value(mid - h)) / (2 * h);
    CHECK(comp->derivative(mid) == doctest::Approx(fd).epsilon(1e-2));
  }
  // Batched and pointwise evaluation agree.
  std::vector<double> ts{0.0, 0.7, 1.9, 3.3, 4.1, 5.99};
  const auto vs = comp->values(ts);
  for (std::size_t i = 0; i < ts.size(); ++i) CHECK(vs[i] == comp->value(ts[i]));
  // A single window reproduces plain inference.
  const auto single = compose_windows(model, series, ByCount{1});
  CHECK(single->value(2.2) == infer(model, series)->value(2.2));
}

TEST_CASE("channels fail independently") {
  const auto model = small_model();
  TimeSeries lone = sine_series(40, 0.0, 1.0);
  lone.mask.assign(40, 0);
  lone.mask[3] = 1;
  std::vector<TimeSeries> channels{sine_series(40, 0.0, 1.0), lone, sine_series(40, 0.0, 1.0, -1.0)};
  const auto out = compose_channels(model, channels, ByCount{1});
  REQUIRE(out.size() == 3);
  CHECK(out[0].trajectory != nullptr);
  CHECK(out[1].trajectory == nullptr);
  CHECK(!out[1].error.empty());
  CHECK(out[2].trajectory != nullptr);
  const auto threaded = compose_channels(model, channels, ByCount{1}, 2);
  CHECK(threaded[2].trajectory->value(0.4) == out[2].trajectory->value(0.4));
}

TEST_CASE("saved models reload to identical outputs") {
  const auto model = small_model(21);
  const auto path = std::filesystem::temp_directory_path() / "fimkit_test_local.fimw";
  model->save(path, nn::WeightDtype::F64);
  const auto loaded = std::make_shared<const LocalModel>(LocalModel::load(path));
  std::filesystem::remove(path);
  const auto series = sine_series(30, 0.0, 1.0);
  CHECK(infer(model, series)->value(0.37) == infer(loaded, series)->value(0.37));
  CHECK(loaded->config().embed_dim == 8);
}
