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

// Imputation across one contiguous gap. The observations around the gap are
// split into four ordered sets, each encoded by the frozen local branch net.
// An attention stack over the five set positions, with a learned token in
// the gap's slot, yields a context for the gap that drives the frozen local
// derivative heads. Left and right solutions are extended into the gap by
// integrating that derivative and blended linearly.

#pragma once

#include <array>
#include <memory>
#include <utility>

#include "fimkit/fim_local.hpp"

namespace fim::gap {

inline constexpr int kSets = 5;
inline constexpr int kObservedSets = 4;
inline constexpr int kMinSetObservations = 2;
inline constexpr double kTauDiffFloor = 1e-6;
inline constexpr int kStats = 9;

struct SetRange {
  std::size_t first = 0;  // into the observed points outside the gap
  std::size_t count = 0;  // zero for the gap set
};

struct SetSplit {
  int q = 1;  // 1-based position of the gap set
  std::array<SetRange, kSets> sets{};
  // Observation times bounding the gap: last before it and first after it.
  double gap_first = 0.0;
  double gap_last = 0.0;

  // Observed sets in order, skipping q.
  std::array<SetRange, kObservedSets> observed() const;
};

// `times` are the observation times outside the gap, sorted. Observations
// left of the gap are split into as many equal-count sets as their share of
// the total suggests (at least one, remainder to the left), likewise on the
// right. Throws ValidationError if the gap touches either end or a set would
// hold fewer than kMinSetObservations points.
SetSplit split_sets(std::span<const double> times, double gap_lo, double gap_hi);

// [y_min, y_max, y_range, y_first, y_last, y_diff, tau_first, tau_last, tau_diff]
// with tau_diff floored at kTauDiffFloor.
std::array<double, kStats> scale_stats(std::span<const double> tau, std::span<const double> y);

void init_gap_params(nn::ParameterStore& ps, const nn::NetConfig& cfg, nn::Rng& rng);

// Frozen per-set encodings (4 x E) and statistics (4 x 9) for a split of a
// globally normalized series.
struct SetFeatures {
  nn::Matrix u;
  nn::Matrix stats;
};
SetFeatures set_features(const local::LocalModel& theta, std::span<const double> tau, std::span<const double> y,
                         const SetSplit& split);

// Differentiable gap context (1 x E) from cached set features.
nn::Var gap_context(nn::Scope& phi, const SetFeatures& features, int q, int heads,
                    std::vector<nn::Matrix>* attention_weights = nullptr);

// Gap derivative at globally normalized times `t` (T x 1), in globally
// normalized units. Only the frozen local trunk and heads are used.
local::HeadOutput gap_query(nn::Scope& theta, const nn::Var& u_q, const nn::Var& t, double gap_first,
                            double gap_last);

class GapModel {
 public:
  GapModel(std::shared_ptr<const local::LocalModel> theta, nn::ParameterStore phi);
  static GapModel initialize(std::shared_ptr<const local::LocalModel> theta, std::uint64_t seed);
  // A gap weight file holds both the local parameters and the gap ones
  // (prefixed "gap.").
  static GapModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path, nn::WeightDtype dtype = nn::WeightDtype::F32) const;

  const local::LocalModel& theta() const { return *theta_; }
  std::shared_ptr<const local::LocalModel> theta_ptr() const { return theta_; }
  const nn::ParameterStore& phi() const { return phi_; }
  nn::ParameterStore& phi() { return phi_; }

 private:
  std::shared_ptr<const local::LocalModel> theta_;
  nn::ParameterStore phi_;
};

// Weighted blend of a left extension xl(t) = left(t_first) + int_{t_first}^t f
// and a right extension xr(t) = right(t_last) - int_t^{t_last} f with weights
// (t_last - t) / (t_last - t_first) and (t - t_first) / (t_last - t_first).
// `grid` spans [t_first, t_last] and `f` holds the derivative on it.
class StitchedGap {
 public:
  StitchedGap(double left_value, double right_value, std::vector<double> grid, std::vector<double> f);
  double t_first() const { return grid_.front(); }
  double t_last() const { return grid_.back(); }
  double value(double t) const;
  double derivative(double t) const;
  double left_extension(double t) const;
  double right_extension(double t) const;

 private:
  double integral(double t) const;  // int_{t_first}^t f
  double left_value_, right_value_;
  std::vector<double> grid_, f_, cum_;
};

// Full imputation of a series with one gap: composed left and right
// trajectories outside, stitched gap estimate inside.
class GapTrajectory : public Trajectory {
 public:
  GapTrajectory(std::unique_ptr<local::ComposedTrajectory> left, std::unique_ptr<local::ComposedTrajectory> right,
                StitchedGap stitched, std::vector<double> grid_log_var, SetSplit split,
                local::NormalizationParams global_norm);

  const SetSplit& split() const { return split_; }
  const StitchedGap& stitched() const { return stitched_; }
  const local::NormalizationParams& global_norm() const { return norm_; }

  double value(double t) const override;
  double derivative(double t) const override;
  double derivative_log_var(double t) const override;
  std::vector<double> values(std::span<const double> ts) const override;
  std::vector<double> derivatives(std::span<const double> ts) const override;
  std::vector<double> derivative_log_vars(std::span<const double> ts) const override;

 private:
  std::unique_ptr<local::ComposedTrajectory> left_, right_;
  StitchedGap stitched_;
  std::vector<double> grid_log_var_;
  SetSplit split_;
  local::NormalizationParams norm_;
};

std::unique_ptr<GapTrajectory> impute_gap(const GapModel& model, const TimeSeries& series, double gap_lo,
                                          double gap_hi, const local::Windowing& windowing, int threads = 1);

}  // namespace fim::gap
