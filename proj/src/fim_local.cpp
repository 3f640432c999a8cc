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

#include "fimkit/fim_local.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace fim::local {

using nn::Matrix;
using nn::Var;
using json = nlohmann::json;

json NormalizationParams::to_json() const {
  return json{{"y_min", y_min},       {"y_max", y_max},         {"tau_min", tau_min},
              {"tau_max", tau_max},   {"degenerate", degenerate}};
}

NormalizationParams fit_normalization(std::span<const double> tau, std::span<const double> y) {
  if (tau.size() < 2) throw ValidationError("normalize: need at least 2 observations");
  if (tau.size() != y.size()) throw ValidationError("normalize: times and values differ in length");
  NormalizationParams n;
  n.tau_min = tau.front();
  n.tau_max = tau.back();
  if (!(n.tau_max > n.tau_min)) throw ValidationError("normalize: observation times must span a positive interval");
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  n.y_min = *lo;
  n.y_max = *hi;
  n.degenerate = !(n.y_max > n.y_min);
  return n;
}

NormalizedSeries normalize(const TimeSeries& series) {
  series.validate();
  const TimeSeries obs = series.observed_only();
  NormalizedSeries out;
  out.norm = fit_normalization(obs.times, obs.values);
  out.tau.reserve(obs.size());
  out.y.reserve(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    out.tau.push_back(out.norm.time_to_norm(obs.times[i]));
    out.y.push_back(out.norm.value_to_norm(obs.values[i]));
  }
  return out;
}

GaussianEstimate renormalize_derivative(const GaussianEstimate& f, const NormalizationParams& n) {
  const double r = n.dy() / n.dtau();
  return {f.mean * r, f.log_var + 2.0 * std::log(r)};
}

GaussianEstimate renormalize_initial(const GaussianEstimate& x0, const NormalizationParams& n) {
  return {x0.mean * n.dy() + n.y_min, x0.log_var + 2.0 * std::log(n.dy())};
}

void init_local_params(nn::ParameterStore& ps, const nn::NetConfig& cfg, nn::Rng& rng) {
  cfg.validate();
  const int e = cfg.embed_dim;
  const int w = cfg.ffn_width;
  const int l = cfg.ffn_layers;
  nn::init_time_embed(ps, "phi0", e, rng);
  nn::init_ffn(ps, "phi1", e, l, w, e, rng);
  nn::init_bilstm(ps, "psi1", 1 + e, cfg.seq_hidden, rng);
  nn::init_ffn(ps, "phi2", 2 * cfg.seq_hidden, l, w, e, rng);
  nn::init_ffn(ps, "phi3", 2 * e, std::max(l - 1, 0), w, w, rng);
  nn::init_linear(ps, "phi4", w, 1, rng);
  nn::init_linear(ps, "phi5", w, 1, rng);
  nn::init_ffn(ps, "phi6", e, l, w, 1, rng);
  nn::init_ffn(ps, "phi7", e, l, w, 1, rng);
}

namespace {

Var column(std::span<const double> xs) {
  Matrix m(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = xs[i];
  return nn::constant(std::move(m));
}

}  // namespace

Var encode_context(nn::Scope& s, std::span<const double> tau, std::span<const double> y) {
  if (tau.empty() || tau.size() != y.size()) throw ValidationError("encode_context: bad observation arrays");
  Var emb = nn::time_embed(s, "phi0", column(tau));
  Var seq = nn::concat_cols({column(y), emb});
  return nn::ffn(s, "phi2", nn::bilstm(s, "psi1", seq));
}

Var trunk(nn::Scope& s, const Var& t) { return nn::ffn(s, "phi1", nn::time_embed(s, "phi0", t)); }

HeadOutput derivative_heads(nn::Scope& s, const Var& trunk_features, const Var& u) {
  Var h = nn::ffn(s, "phi3", nn::concat_cols({trunk_features, nn::repeat_rows(u, trunk_features->rows())}), true);
  return {nn::linear(s, "phi4", h), nn::linear(s, "phi5", h)};
}

HeadOutput initial_heads(nn::Scope& s, const Var& u) { return {nn::ffn(s, "phi6", u), nn::ffn(s, "phi7", u)}; }

LocalModel::LocalModel(nn::NetConfig cfg, nn::ParameterStore params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  nn::ParameterStore reference;
  nn::Rng rng(0);
  init_local_params(reference, cfg_, rng);
  for (const auto& name : reference.names()) {
    if (!params_.contains(name)) throw ValidationError("weights lack parameter '" + name + "'");
    const auto& a = params_.at(name);
    const auto& b = reference.at(name);
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw ValidationError("parameter '" + name + "' has the wrong shape for this network config");
    }
  }
}

LocalModel LocalModel::initialize(const nn::NetConfig& cfg, std::uint64_t seed) {
  nn::ParameterStore ps;
  nn::Rng rng(seed);
  init_local_params(ps, cfg, rng);
  return LocalModel(cfg, std::move(ps));
}

json LocalModel::meta() const { return json{{"model", "fim_local"}, {"net", cfg_.to_json()}}; }

LocalModel LocalModel::load(const std::filesystem::path& path) {
  json meta;
  nn::ParameterStore ps = nn::load_weights(path, &meta);
  if (!meta.contains("net")) throw ValidationError(path.string() + ": weight file has no network config");
  return LocalModel(nn::NetConfig::from_json(meta.at("net")), std::move(ps));
}

void LocalModel::save(const std::filesystem::path& path, nn::WeightDtype dtype) const {
  nn::save_weights(path, params_, meta(), dtype);
}

Eigen::RowVectorXd LocalModel::context(std::span<const double> tau, std::span<const double> y) const {
  nn::NoGradGuard guard;
  nn::Scope s(params_, false);
  return encode_context(s, tau, y)->value.row(0);
}

std::vector<GaussianEstimate> LocalModel::query(const Eigen::RowVectorXd& u, std::span<const double> t) const {
  std::vector<GaussianEstimate> out(t.size());
  if (t.empty()) return out;
  nn::NoGradGuard guard;
  nn::Scope s(params_, false);
  const auto heads = derivative_heads(s, trunk(s, column(t)), nn::constant(u));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out[i] = {heads.mean->value(r, 0), heads.log_var->value(r, 0)};
  }
  return out;
}

GaussianEstimate LocalModel::initial(const Eigen::RowVectorXd& u) const {
  nn::NoGradGuard guard;
  nn::Scope s(params_, false);
  const auto heads = initial_heads(s, nn::constant(u));
  return {heads.mean->value(0, 0), heads.log_var->value(0, 0)};
}

RecognitionOutput::RecognitionOutput(std::shared_ptr<const LocalModel> model, Eigen::RowVectorXd u,
                                     NormalizationParams norm, GaussianEstimate x0, int grid_points)
    : model_(std::move(model)), u_(std::move(u)), norm_(norm), x0_(x0) {
  grid_ = linspace(0.0, 1.0, static_cast<std::size_t>(std::max(grid_points, 2)));
  const auto q = model_->query(u_, grid_);
  grid_f_.reserve(q.size());
  for (const auto& e : q) grid_f_.push_back(e.mean);
  grid_x_ = cumulative_trapezoid(grid_, grid_f_, x0_.mean);
}

GaussianEstimate RecognitionOutput::derivative_normalized(double s) const {
  const double c = std::clamp(s, 0.0, 1.0);
  return model_->query(u_, std::span<const double>(&c, 1)).front();
}

std::vector<double> RecognitionOutput::reconstruct_normalized(std::span<const double> s) const {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] <= 0.0) {
      out[i] = grid_x_.front() + grid_f_.front() * s[i];
    } else if (s[i] >= 1.0) {
      out[i] = grid_x_.back() + grid_f_.back() * (s[i] - 1.0);
    } else {
      out[i] = interp_linear(grid_, grid_x_, s[i]);
    }
  }
  return out;
}

std::vector<GaussianEstimate> RecognitionOutput::query_clamped(std::span<const double> ts) const {
  std::vector<double> s(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) s[i] = std::clamp(norm_.time_to_norm(ts[i]), 0.0, 1.0);
  auto q = model_->query(u_, s);
  for (auto& e : q) e = renormalize_derivative(e, norm_);
  return q;
}

double RecognitionOutput::value(double t) const { return values(std::span<const double>(&t, 1)).front(); }
double RecognitionOutput::derivative(double t) const { return derivatives(std::span<const double>(&t, 1)).front(); }
double RecognitionOutput::derivative_log_var(double t) const {
  return derivative_log_vars(std::span<const double>(&t, 1)).front();
}

std::vector<double> RecognitionOutput::values(std::span<const double> ts) const {
  std::vector<double> s(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) s[i] = norm_.time_to_norm(ts[i]);
  auto x = reconstruct_normalized(s);
  for (auto& v : x) v = norm_.value_from_norm(v);
  return x;
}

std::vector<double> RecognitionOutput::derivatives(std::span<const double> ts) const {
  const auto q = query_clamped(ts);
  std::vector<double> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = q[i].mean;
  return out;
}

std::vector<double> RecognitionOutput::derivative_log_vars(std::span<const double> ts) const {
  const auto q = query_clamped(ts);
  std::vector<double> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = q[i].log_var;
  return out;
}

int reconstruction_grid_size(std::size_t n_obs) {
  return std::max(kMinReconstructionGrid, static_cast<int>(4 * n_obs));
}

std::unique_ptr<RecognitionOutput> infer(std::shared_ptr<const LocalModel> model, const TimeSeries& series) {
  const NormalizedSeries ns = normalize(series);
  if (ns.tau.size() < static_cast<std::size_t>(kMinContext)) {
    spdlog::warn("only {} observations; fewer than {} is outside the training distribution", ns.tau.size(),
                 kMinContext);
  }
  Eigen::RowVectorXd u = model->context(ns.tau, ns.y);
  const GaussianEstimate x0 = model->initial(u);
  return std::make_unique<RecognitionOutput>(std::move(model), std::move(u), ns.norm, x0,
                                             reconstruction_grid_size(ns.tau.size()));
}

Windowing parse_windowing(const std::string& spec) {
  auto parse_int = [&](const std::string& s) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || pos == 0) throw ValidationError("bad windowing spec '" + spec + "'");
    return v;
  };
  Windowing w;
  if (spec.rfind("count:", 0) == 0) {
    w = ByCount{parse_int(spec.substr(6))};
  } else if (spec.rfind("obs:", 0) == 0) {
    w = ByObservations{parse_int(spec.substr(4))};
  } else {
    w = ByCount{parse_int(spec)};
  }
  if (const auto* c = std::get_if<ByCount>(&w); c && c->windows < 1) {
    throw ValidationError("window count must be >= 1");
  }
  if (const auto* o = std::get_if<ByObservations>(&w); o && o->per_window < 3) {
    throw ValidationError("observations per window must be >= 3");
  }
  return w;
}

std::string windowing_name(const Windowing& w) {
  if (const auto* c = std::get_if<ByCount>(&w)) return fmt::format("count:{}", c->windows);
  return fmt::format("obs:{}", std::get<ByObservations>(w).per_window);
}

namespace {

void merge_small_windows(std::vector<WindowRange>& r) {
  const auto min_count = static_cast<std::size_t>(kMinContext);
  std::size_t k = 0;
  while (k + 1 < r.size()) {
    if (r[k].count() < min_count) {
      r[k].last = r[k + 1].last;
      r.erase(r.begin() + static_cast<std::ptrdiff_t>(k) + 1);
    } else {
      ++k;
    }
  }
  if (r.size() > 1 && r.back().count() < min_count) {
    r[r.size() - 2].last = r.back().last;
    r.pop_back();
  }
}

// Overlap k spans [first of k+1, last of k]; overlaps must not interleave.
void separate_overlaps(std::vector<WindowRange>& r) {
  std::size_t k = 1;
  while (k + 1 < r.size()) {
    if (r[k + 1].first <= r[k - 1].last) {
      r[k].last = r[k + 1].last;
      r.erase(r.begin() + static_cast<std::ptrdiff_t>(k) + 1);
    } else {
      ++k;
    }
  }
}

}  // namespace

std::vector<WindowRange> plan_windows(std::span<const double> times, const Windowing& w) {
  const std::size_t n = times.size();
  if (n < 2) throw ValidationError("windowing needs at least 2 observations");
  std::vector<WindowRange> r;
  if (const auto* c = std::get_if<ByCount>(&w)) {
    if (c->windows < 1) throw ValidationError("window count must be >= 1");
    if (c->windows == 1) return {WindowRange{0, n - 1}};
    const int m = c->windows;
    const double t0 = times.front();
    const double span = times.back() - t0;
    const double width = span / (m - 0.25 * (m - 1));
    const double stride = 0.75 * width;
    for (int k = 0; k < m; ++k) {
      const double a = t0 + k * stride;
      const double b = k == m - 1 ? times.back() : a + width;
      const auto lo = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), a) - times.begin());
      const auto hi = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), b) - times.begin());
      if (hi == 0 || lo >= hi) continue;
      r.push_back({lo, hi - 1});
    }
    if (r.empty()) return {WindowRange{0, n - 1}};
    r.front().first = 0;
    r.back().last = n - 1;
    // Share at least two observations with the predecessor; drop windows
    // that end up inside it.
    std::vector<WindowRange> chained{r.front()};
    for (std::size_t k = 1; k < r.size(); ++k) {
      WindowRange cur = r[k];
      const auto& prev = chained.back();
      if (cur.first + 1 > prev.last) cur.first = prev.last - 1;
      if (cur.last <= prev.last) {
        chained.back().last = std::max(prev.last, cur.last);
        continue;
      }
      chained.push_back(cur);
    }
    r = std::move(chained);
  } else {
    const int per = std::get<ByObservations>(w).per_window;
    if (per < 3) throw ValidationError("observations per window must be >= 3");
    std::size_t start = 0;
    while (true) {
      const std::size_t last = std::min(start + static_cast<std::size_t>(per) - 1, n - 1);
      r.push_back({start, last});
      if (last == n - 1) break;
      start = last - 1;
    }
  }
  merge_small_windows(r);
  separate_overlaps(r);
  return r;
}

ComposedTrajectory::ComposedTrajectory(std::vector<std::unique_ptr<RecognitionOutput>> windows,
                                       std::vector<WindowRange> ranges)
    : windows_(std::move(windows)), ranges_(std::move(ranges)) {
  if (windows_.empty()) throw ValidationError("composition needs at least one window");
  for (std::size_t k = 0; k + 1 < windows_.size(); ++k) {
    overlaps_.emplace_back(windows_[k + 1]->t_start(), windows_[k]->t_end());
    if (!(overlaps_.back().second > overlaps_.back().first)) {
      throw ValidationError(fmt::format("windows {} and {} do not overlap", k, k + 1));
    }
  }
}

std::vector<std::pair<double, double>> ComposedTrajectory::overlaps() const { return overlaps_; }

ComposedTrajectory::Piece ComposedTrajectory::locate(double t) const {
  for (std::size_t k = 0; k < overlaps_.size(); ++k) {
    const auto [t0b, t1a] = overlaps_[k];
    if (t < t0b) return {k, k, 1.0, 0.0};
    if (t <= t1a) return {k, k + 1, (t1a - t) / (t1a - t0b), t1a - t0b};
  }
  const std::size_t last = windows_.size() - 1;
  return {last, last, 1.0, 0.0};
}

double ComposedTrajectory::value(double t) const { return values(std::span<const double>(&t, 1)).front(); }
double ComposedTrajectory::derivative(double t) const { return derivatives(std::span<const double>(&t, 1)).front(); }
double ComposedTrajectory::derivative_log_var(double t) const {
  return derivative_log_vars(std::span<const double>(&t, 1)).front();
}

std::vector<double> ComposedTrajectory::values(std::span<const double> ts) const {
  if (windows_.size() == 1) return windows_.front()->values(ts);
  std::vector<Piece> pieces(ts.size());
  std::vector<std::vector<double>> routed(windows_.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    pieces[i] = locate(ts[i]);
    routed[pieces[i].a].push_back(ts[i]);
    if (pieces[i].b != pieces[i].a) routed[pieces[i].b].push_back(ts[i]);
  }
  std::vector<std::vector<double>> xs(windows_.size());
  for (std::size_t w = 0; w < windows_.size(); ++w) xs[w] = windows_[w]->values(routed[w]);
  std::vector<std::size_t> cursor(windows_.size(), 0);
  std::vector<double> out(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& p = pieces[i];
    const double xa = xs[p.a][cursor[p.a]++];
    if (p.b == p.a) {
      out[i] = xa;
    } else {
      const double xb = xs[p.b][cursor[p.b]++];
      out[i] = p.wa * xa + (1.0 - p.wa) * xb;
    }
  }
  return out;
}

std::vector<double> ComposedTrajectory::derivatives(std::span<const double> ts) const {
  if (windows_.size() == 1) return windows_.front()->derivatives(ts);
  std::vector<Piece> pieces(ts.size());
  std::vector<std::vector<double>> routed(windows_.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    pieces[i] = locate(ts[i]);
    routed[pieces[i].a].push_back(ts[i]);
    if (pieces[i].b != pieces[i].a) routed[pieces[i].b].push_back(ts[i]);
  }
  std::vector<std::vector<double>> xs(windows_.size()), fs(windows_.size());
  for (std::size_t w = 0; w < windows_.size(); ++w) {
    if (routed[w].empty()) continue;
    xs[w] = windows_[w]->values(routed[w]);
    fs[w] = windows_[w]->derivatives(routed[w]);
  }
  std::vector<std::size_t> cursor(windows_.size(), 0);
  std::vector<double> out(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& p = pieces[i];
    const std::size_t ia = cursor[p.a]++;
    if (p.b == p.a) {
      out[i] = fs[p.a][ia];
    } else {
      const std::size_t ib = cursor[p.b]++;
      // Derivative of the blend, including the moving weights.
      out[i] = p.wa * fs[p.a][ia] + (1.0 - p.wa) * fs[p.b][ib] + (xs[p.b][ib] - xs[p.a][ia]) / p.span;
    }
  }
  return out;
}

std::vector<double> ComposedTrajectory::derivative_log_vars(std::span<const double> ts) const {
  if (windows_.size() == 1) return windows_.front()->derivative_log_vars(ts);
  std::vector<Piece> pieces(ts.size());
  std::vector<std::vector<double>> routed(windows_.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    pieces[i] = locate(ts[i]);
    routed[pieces[i].a].push_back(ts[i]);
    if (pieces[i].b != pieces[i].a) routed[pieces[i].b].push_back(ts[i]);
  }
  std::vector<std::vector<double>> lv(windows_.size());
  for (std::size_t w = 0; w < windows_.size(); ++w) lv[w] = windows_[w]->derivative_log_vars(routed[w]);
  std::vector<std::size_t> cursor(windows_.size(), 0);
  std::vector<double> out(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& p = pieces[i];
    const double la = lv[p.a][cursor[p.a]++];
    if (p.b == p.a) {
      out[i] = la;
    } else {
      const double lb = lv[p.b][cursor[p.b]++];
      out[i] = std::log(p.wa * std::exp(la) + (1.0 - p.wa) * std::exp(lb));
    }
  }
  return out;
}

std::unique_ptr<ComposedTrajectory> compose_windows(std::shared_ptr<const LocalModel> model, const TimeSeries& series,
                                                    const Windowing& windowing, int threads) {
  series.validate();
  const TimeSeries obs = series.observed_only();
  const auto ranges = plan_windows(obs.times, windowing);
  std::vector<std::unique_ptr<RecognitionOutput>> windows(ranges.size());
  parallel_for(ranges.size(), threads, [&](std::size_t k) {
    TimeSeries sub;
    sub.times.assign(obs.times.begin() + static_cast<std::ptrdiff_t>(ranges[k].first),
                     obs.times.begin() + static_cast<std::ptrdiff_t>(ranges[k].last) + 1);
    sub.values.assign(obs.values.begin() + static_cast<std::ptrdiff_t>(ranges[k].first),
                      obs.values.begin() + static_cast<std::ptrdiff_t>(ranges[k].last) + 1);
    auto out = infer(model, sub);
    const auto x0 = out->initial();
    const auto probe = out->values(std::vector<double>{out->t_start(), out->t_end()});
    if (!std::isfinite(x0.mean) || !std::isfinite(x0.log_var) || !std::isfinite(probe[0]) ||
        !std::isfinite(probe[1])) {
      throw RuntimeError(fmt::format("window {} (observations {}..{}) produced non-finite output", k, ranges[k].first,
                                     ranges[k].last));
    }
    windows[k] = std::move(out);
  });
  return std::make_unique<ComposedTrajectory>(std::move(windows), ranges);
}

std::vector<ChannelResult> compose_channels(std::shared_ptr<const LocalModel> model,
                                            const std::vector<TimeSeries>& channels, const Windowing& windowing,
                                            int threads) {
  std::vector<ChannelResult> out(channels.size());
  parallel_for(channels.size(), threads, [&](std::size_t c) {
    try {
      out[c].trajectory = compose_windows(model, channels[c], windowing, 1);
    } catch (const std::exception& e) {
      out[c].error = e.what();
    }
  });
  return out;
}

}  // namespace fim::local
