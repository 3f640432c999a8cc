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

#include "fimkit/fim_gap.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace fim::gap {

using nn::Matrix;
using nn::Var;
using json = nlohmann::json;

std::array<SetRange, kObservedSets> SetSplit::observed() const {
  std::array<SetRange, kObservedSets> out{};
  std::size_t j = 0;
  for (int k = 0; k < kSets; ++k) {
    if (k == q - 1) continue;
    out[j++] = sets[static_cast<std::size_t>(k)];
  }
  return out;
}

namespace {

std::vector<std::size_t> partition_counts(std::size_t n, int parts) {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(parts), n / static_cast<std::size_t>(parts));
  for (std::size_t i = 0; i < n % static_cast<std::size_t>(parts); ++i) ++sizes[i];
  return sizes;
}

}  // namespace

SetSplit split_sets(std::span<const double> times, double gap_lo, double gap_hi) {
  if (!(gap_hi > gap_lo)) throw ValidationError("gap: upper bound must exceed lower bound");
  std::size_t n_left = 0, n_right = 0;
  for (double t : times) {
    if (t < gap_lo) {
      ++n_left;
    } else if (t > gap_hi) {
      ++n_right;
    } else {
      throw ValidationError(fmt::format("gap: observation at t = {} lies inside the gap", t));
    }
  }
  if (n_left == 0 || n_right == 0) throw ValidationError("gap touches the start or end of the series");
  const std::size_t n = n_left + n_right;
  const auto min_set = static_cast<std::size_t>(kMinSetObservations);
  if (n < static_cast<std::size_t>(kObservedSets) * min_set) {
    throw ValidationError(fmt::format("gap: {} observations outside the gap, need at least {}", n,
                                      kObservedSets * kMinSetObservations));
  }

  // Preferred number of sets on the left, then the other feasible choices by
  // distance from it.
  const double share = kObservedSets * static_cast<double>(n_left) / static_cast<double>(n);
  std::vector<int> candidates{1, 2, 3};
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](int a, int b) { return std::abs(a - share) < std::abs(b - share); });
  int sets_left = 0;
  for (int c : candidates) {
    if (n_left >= static_cast<std::size_t>(c) * min_set &&
        n_right >= static_cast<std::size_t>(kObservedSets - c) * min_set) {
      sets_left = c;
      break;
    }
  }
  if (sets_left == 0) {
    throw ValidationError(fmt::format("gap: cannot split {} left and {} right observations into sets of at least {}",
                                      n_left, n_right, kMinSetObservations));
  }

  SetSplit split;
  split.q = sets_left + 1;
  std::size_t k = 0, offset = 0;
  for (auto c : partition_counts(n_left, sets_left)) {
    split.sets[k++] = {offset, c};
    offset += c;
  }
  split.sets[k++] = {offset, 0};
  for (auto c : partition_counts(n_right, kObservedSets - sets_left)) {
    split.sets[k++] = {offset, c};
    offset += c;
  }
  split.gap_first = times[n_left - 1];
  split.gap_last = times[n_left];
  return split;
}

std::array<double, kStats> scale_stats(std::span<const double> tau, std::span<const double> y) {
  if (tau.empty() || tau.size() != y.size()) throw ValidationError("scale_stats: empty or mismatched set");
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  return {*lo,         *hi,        *hi - *lo, y.front(), y.back(), y.back() - y.front(),
          tau.front(), tau.back(), std::max(tau.back() - tau.front(), kTauDiffFloor)};
}

void init_gap_params(nn::ParameterStore& ps, const nn::NetConfig& cfg, nn::Rng& rng) {
  cfg.validate();
  const int e = cfg.embed_dim;
  nn::init_linear(ps, "gap.phi8", kStats, e, rng);
  ps.add("gap.token", nn::uniform_matrix(1, e, 0.1, rng));
  ps.add("gap.pos", nn::uniform_matrix(kSets, e, 0.1, rng));
  nn::init_attention(ps, "gap.psi2", e, cfg.attn_heads, cfg.attn_layers, cfg.ffn_width, rng);
}

SetFeatures set_features(const local::LocalModel& theta, std::span<const double> tau, std::span<const double> y,
                         const SetSplit& split) {
  const int e = theta.config().embed_dim;
  SetFeatures f{Matrix(kObservedSets, e), Matrix(kObservedSets, kStats)};
  const auto sets = split.observed();
  for (int j = 0; j < kObservedSets; ++j) {
    const auto& r = sets[static_cast<std::size_t>(j)];
    const auto st = tau.subspan(r.first, r.count);
    const auto sy = y.subspan(r.first, r.count);
    const auto norm = local::fit_normalization(st, sy);
    std::vector<double> lt(r.count), ly(r.count);
    for (std::size_t i = 0; i < r.count; ++i) {
      lt[i] = norm.time_to_norm(st[i]);
      ly[i] = norm.value_to_norm(sy[i]);
    }
    f.u.row(j) = theta.context(lt, ly);
    const auto s = scale_stats(st, sy);
    for (int c = 0; c < kStats; ++c) f.stats(j, c) = s[static_cast<std::size_t>(c)];
  }
  return f;
}

Var gap_context(nn::Scope& phi, const SetFeatures& features, int q, int heads, std::vector<Matrix>* attention_weights) {
  if (q < 1 || q > kSets) throw ValidationError("gap_context: gap position out of range");
  Var embedded = nn::add(nn::constant(features.u), nn::linear(phi, "gap.phi8", nn::constant(features.stats)));
  std::vector<Var> rows;
  int j = 0;
  for (int k = 0; k < kSets; ++k) {
    if (k == q - 1) {
      rows.push_back(phi.get("gap.token"));
    } else {
      rows.push_back(nn::slice_rows(embedded, j++, 1));
    }
  }
  Var seq = nn::add(nn::concat_rows(rows), phi.get("gap.pos"));
  Var out = nn::attention(phi, "gap.psi2", seq, heads, attention_weights);
  return nn::slice_rows(out, q - 1, 1);
}

local::HeadOutput gap_query(nn::Scope& theta, const Var& u_q, const Var& t, double gap_first, double gap_last) {
  const double diff = std::max(gap_last - gap_first, kTauDiffFloor);
  Var t_local = nn::add_scalar(nn::scale(t, 1.0 / diff), -gap_first / diff);
  auto heads = local::derivative_heads(theta, local::trunk(theta, t_local), u_q);
  return {nn::scale(heads.mean, 1.0 / diff), nn::add_scalar(heads.log_var, -2.0 * std::log(diff))};
}

GapModel::GapModel(std::shared_ptr<const local::LocalModel> theta, nn::ParameterStore phi)
    : theta_(std::move(theta)), phi_(std::move(phi)) {
  nn::ParameterStore reference;
  nn::Rng rng(0);
  init_gap_params(reference, theta_->config(), rng);
  if (!reference.same_layout(phi_)) throw ValidationError("gap parameters do not match the network config");
}

GapModel GapModel::initialize(std::shared_ptr<const local::LocalModel> theta, std::uint64_t seed) {
  nn::ParameterStore phi;
  nn::Rng rng(seed);
  init_gap_params(phi, theta->config(), rng);
  return GapModel(std::move(theta), std::move(phi));
}

GapModel GapModel::load(const std::filesystem::path& path) {
  json meta;
  nn::ParameterStore all = nn::load_weights(path, &meta);
  if (meta.value("model", std::string()) != "fim_gap") {
    throw ValidationError(path.string() + ": not a gap model weight file");
  }
  nn::ParameterStore theta, phi;
  for (const auto& name : all.names()) {
    if (name.rfind("gap.", 0) == 0) {
      phi.add(name, all.at(name));
    } else {
      theta.add(name, all.at(name));
    }
  }
  auto local_model =
      std::make_shared<const local::LocalModel>(nn::NetConfig::from_json(meta.at("net")), std::move(theta));
  return GapModel(std::move(local_model), std::move(phi));
}

void GapModel::save(const std::filesystem::path& path, nn::WeightDtype dtype) const {
  nn::ParameterStore all = theta_->params();
  all.merge(phi_);
  json meta{{"model", "fim_gap"}, {"net", theta_->config().to_json()}};
  nn::save_weights(path, all, meta, dtype);
}

StitchedGap::StitchedGap(double left_value, double right_value, std::vector<double> grid, std::vector<double> f)
    : left_value_(left_value), right_value_(right_value), grid_(std::move(grid)), f_(std::move(f)) {
  if (grid_.size() < 2 || grid_.size() != f_.size()) throw ValidationError("stitch: bad derivative grid");
  if (!(grid_.back() > grid_.front())) throw ValidationError("stitch: empty gap interval");
  cum_ = cumulative_trapezoid(grid_, f_, 0.0);
}

double StitchedGap::integral(double t) const { return interp_linear(grid_, cum_, t); }

double StitchedGap::left_extension(double t) const { return left_value_ + integral(t); }

double StitchedGap::right_extension(double t) const { return right_value_ - (cum_.back() - integral(t)); }

double StitchedGap::value(double t) const {
  const double wl = (t_last() - t) / (t_last() - t_first());
  return wl * left_extension(t) + (1.0 - wl) * right_extension(t);
}

double StitchedGap::derivative(double t) const {
  const double f = interp_linear(grid_, f_, t);
  return f + (right_extension(t) - left_extension(t)) / (t_last() - t_first());
}

GapTrajectory::GapTrajectory(std::unique_ptr<local::ComposedTrajectory> left,
                             std::unique_ptr<local::ComposedTrajectory> right, StitchedGap stitched,
                             std::vector<double> grid_log_var, SetSplit split, local::NormalizationParams global_norm)
    : left_(std::move(left)),
      right_(std::move(right)),
      stitched_(std::move(stitched)),
      grid_log_var_(std::move(grid_log_var)),
      split_(split),
      norm_(global_norm) {}

double GapTrajectory::value(double t) const { return values(std::span<const double>(&t, 1)).front(); }
double GapTrajectory::derivative(double t) const { return derivatives(std::span<const double>(&t, 1)).front(); }
double GapTrajectory::derivative_log_var(double t) const {
  return derivative_log_vars(std::span<const double>(&t, 1)).front();
}

namespace {

enum class Region { Left, Gap, Right };

// Applies `side` to the left and right times in one batch each and `inside`
// to the gap times.
template <typename Side, typename Inside>
std::vector<double> route(std::span<const double> ts, double first, double last, Side side, Inside inside) {
  std::vector<double> lt, rt;
  std::vector<Region> region(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i] < first) {
      region[i] = Region::Left;
      lt.push_back(ts[i]);
    } else if (ts[i] > last) {
      region[i] = Region::Right;
      rt.push_back(ts[i]);
    } else {
      region[i] = Region::Gap;
    }
  }
  const auto lv = side(true, lt);
  const auto rv = side(false, rt);
  std::vector<double> out(ts.size());
  std::size_t li = 0, ri = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    switch (region[i]) {
      case Region::Left:
        out[i] = lv[li++];
        break;
      case Region::Right:
        out[i] = rv[ri++];
        break;
      case Region::Gap:
        out[i] = inside(ts[i]);
        break;
    }
  }
  return out;
}

}  // namespace

std::vector<double> GapTrajectory::values(std::span<const double> ts) const {
  return route(
      ts, stitched_.t_first(), stitched_.t_last(),
      [&](bool left, const std::vector<double>& t) { return left ? left_->values(t) : right_->values(t); },
      [&](double t) { return stitched_.value(t); });
}

std::vector<double> GapTrajectory::derivatives(std::span<const double> ts) const {
  return route(
      ts, stitched_.t_first(), stitched_.t_last(),
      [&](bool left, const std::vector<double>& t) { return left ? left_->derivatives(t) : right_->derivatives(t); },
      [&](double t) { return stitched_.derivative(t); });
}

std::vector<double> GapTrajectory::derivative_log_vars(std::span<const double> ts) const {
  const auto grid = linspace(stitched_.t_first(), stitched_.t_last(), grid_log_var_.size());
  return route(
      ts, stitched_.t_first(), stitched_.t_last(),
      [&](bool left, const std::vector<double>& t) {
        return left ? left_->derivative_log_vars(t) : right_->derivative_log_vars(t);
      },
      [&](double t) { return interp_linear(grid, grid_log_var_, t); });
}

std::unique_ptr<GapTrajectory> impute_gap(const GapModel& model, const TimeSeries& series, double gap_lo,
                                          double gap_hi, const local::Windowing& windowing, int threads) {
  series.validate();
  const TimeSeries all = series.observed_only();
  if (!(gap_hi > gap_lo)) throw ValidationError("gap: upper bound must exceed lower bound");
  if (all.size() == 0 || gap_lo <= all.times.front() || gap_hi >= all.times.back()) {
    throw ValidationError("gap must lie strictly inside the observed time span");
  }
  TimeSeries obs, left, right;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const double t = all.times[i];
    if (t >= gap_lo && t <= gap_hi) continue;
    obs.times.push_back(t);
    obs.values.push_back(all.values[i]);
    TimeSeries& side = t < gap_lo ? left : right;
    side.times.push_back(t);
    side.values.push_back(all.values[i]);
  }
  const SetSplit split = split_sets(obs.times, gap_lo, gap_hi);
  const auto norm = local::fit_normalization(obs.times, obs.values);
  std::vector<double> tau(obs.size()), y(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    tau[i] = norm.time_to_norm(obs.times[i]);
    y[i] = norm.value_to_norm(obs.values[i]);
  }
  const SetFeatures features = set_features(model.theta(), tau, y, split);

  const int n_grid = local::reconstruction_grid_size(obs.size());
  std::vector<double> grid = linspace(split.gap_first, split.gap_last, static_cast<std::size_t>(n_grid));
  std::vector<double> f(grid.size()), log_var(grid.size());
  {
    nn::NoGradGuard guard;
    nn::Scope phi(model.phi(), false);
    nn::Scope theta(model.theta().params(), false);
    Var u_q = gap_context(phi, features, split.q, model.theta().config().attn_heads);
    Matrix t(static_cast<Eigen::Index>(grid.size()), 1);
    for (std::size_t i = 0; i < grid.size(); ++i) t(static_cast<Eigen::Index>(i), 0) = norm.time_to_norm(grid[i]);
    const auto heads = gap_query(theta, u_q, nn::constant(t), norm.time_to_norm(split.gap_first),
                                 norm.time_to_norm(split.gap_last));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const auto e = local::renormalize_derivative({heads.mean->value(r, 0), heads.log_var->value(r, 0)}, norm);
      f[i] = e.mean;
      log_var[i] = e.log_var;
      if (!std::isfinite(f[i]) || !std::isfinite(log_var[i])) throw RuntimeError("gap model produced non-finite output");
    }
  }

  auto left_traj = local::compose_windows(model.theta_ptr(), left, windowing, threads);
  auto right_traj = local::compose_windows(model.theta_ptr(), right, windowing, threads);
  StitchedGap stitched(left_traj->value(split.gap_first), right_traj->value(split.gap_last), std::move(grid),
                       std::move(f));
  return std::make_unique<GapTrajectory>(std::move(left_traj), std::move(right_traj), std::move(stitched),
                                         std::move(log_var), split, norm);
}

}  // namespace fim::gap
