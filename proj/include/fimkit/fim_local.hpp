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

// The local recognition model. Observations are min-max normalized, encoded
// into a context vector u by a BiLSTM branch net, and combined with a trunk
// net over query times to give a Gaussian estimate of the derivative. A
// second pair of heads estimates the initial value from u alone.

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fimkit/common.hpp"
#include "fimkit/nn/layers.hpp"
#include "fimkit/nn/weights_io.hpp"
#include "fimkit/trajectory.hpp"

namespace fim::local {

inline constexpr int kMinContext = 8;
inline constexpr int kMinReconstructionGrid = 128;

struct NormalizationParams {
  double y_min = 0.0, y_max = 1.0;
  double tau_min = 0.0, tau_max = 1.0;
  bool degenerate = false;  // constant values; the range was replaced by 1

  double dy() const { return degenerate ? 1.0 : y_max - y_min; }
  double dtau() const { return tau_max - tau_min; }
  double time_to_norm(double t) const { return (t - tau_min) / dtau(); }
  double time_from_norm(double s) const { return tau_min + s * dtau(); }
  double value_to_norm(double y) const { return (y - y_min) / dy(); }
  double value_from_norm(double v) const { return y_min + v * dy(); }
  nlohmann::json to_json() const;
};

struct NormalizedSeries {
  std::vector<double> tau;  // observed points only
  std::vector<double> y;
  NormalizationParams norm;
};

// Uses the observed points only. Throws ValidationError on fewer than two
// observations or non-increasing times.
NormalizedSeries normalize(const TimeSeries& series);
NormalizationParams fit_normalization(std::span<const double> tau, std::span<const double> y);

// Derivative and initial-value estimates in normalized units.
struct GaussianEstimate {
  double mean = 0.0;
  double log_var = 0.0;
};

// Maps normalized estimates back to the original scale.
GaussianEstimate renormalize_derivative(const GaussianEstimate& f, const NormalizationParams& n);
GaussianEstimate renormalize_initial(const GaussianEstimate& x0, const NormalizationParams& n);

void init_local_params(nn::ParameterStore& ps, const nn::NetConfig& cfg, nn::Rng& rng);

// Differentiable pieces, usable with trainable or frozen scopes.
struct HeadOutput {
  nn::Var mean;
  nn::Var log_var;
};
// 1 x E context from normalized observations.
nn::Var encode_context(nn::Scope& s, std::span<const double> tau, std::span<const double> y);
// phi1(phi0(t)) for a column of normalized times.
nn::Var trunk(nn::Scope& s, const nn::Var& t);
// Derivative heads from trunk features (T x E) and a 1 x E context.
HeadOutput derivative_heads(nn::Scope& s, const nn::Var& trunk_features, const nn::Var& u);
HeadOutput initial_heads(nn::Scope& s, const nn::Var& u);

// A parameter set together with the architecture that reads it.
class LocalModel {
 public:
  LocalModel() = default;
  LocalModel(nn::NetConfig cfg, nn::ParameterStore params);
  static LocalModel initialize(const nn::NetConfig& cfg, std::uint64_t seed);
  static LocalModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path, nn::WeightDtype dtype = nn::WeightDtype::F32) const;

  const nn::NetConfig& config() const { return cfg_; }
  const nn::ParameterStore& params() const { return params_; }
  nn::ParameterStore& params() { return params_; }
  nlohmann::json meta() const;

  // Inference, dropout off, normalized units.
  Eigen::RowVectorXd context(std::span<const double> tau, std::span<const double> y) const;
  std::vector<GaussianEstimate> query(const Eigen::RowVectorXd& u, std::span<const double> t) const;
  GaussianEstimate initial(const Eigen::RowVectorXd& u) const;

 private:
  nn::NetConfig cfg_;
  nn::ParameterStore params_;
};

// Result of one inference pass on one (window of a) series. The derivative is
// available at any time through the model; the solution is integrated on a
// dense grid over the normalized observation span.
class RecognitionOutput : public Trajectory {
 public:
  RecognitionOutput(std::shared_ptr<const LocalModel> model, Eigen::RowVectorXd u, NormalizationParams norm,
                    GaussianEstimate x0, int grid_points);

  const NormalizationParams& norm() const { return norm_; }
  const Eigen::RowVectorXd& context() const { return u_; }
  // Normalized units.
  GaussianEstimate initial_normalized() const { return x0_; }
  GaussianEstimate derivative_normalized(double s) const;
  // Original units.
  GaussianEstimate initial() const { return renormalize_initial(x0_, norm_); }
  double t_start() const { return norm_.tau_min; }
  double t_end() const { return norm_.tau_max; }

  // Reconstructed solution at normalized times; linear first-order
  // extension outside [0, 1].
  std::vector<double> reconstruct_normalized(std::span<const double> s) const;

  double value(double t) const override;
  double derivative(double t) const override;
  double derivative_log_var(double t) const override;
  std::vector<double> values(std::span<const double> ts) const override;
  std::vector<double> derivatives(std::span<const double> ts) const override;
  std::vector<double> derivative_log_vars(std::span<const double> ts) const override;

 private:
  std::vector<GaussianEstimate> query_clamped(std::span<const double> ts) const;

  std::shared_ptr<const LocalModel> model_;
  Eigen::RowVectorXd u_;
  NormalizationParams norm_;
  GaussianEstimate x0_;
  std::vector<double> grid_;    // normalized times on [0, 1]
  std::vector<double> grid_f_;  // normalized derivative means
  std::vector<double> grid_x_;  // normalized solution
};

// Plain inference on the observed points of a series. Fewer than kMinContext
// observations is allowed but logged as out of distribution.
std::unique_ptr<RecognitionOutput> infer(std::shared_ptr<const LocalModel> model, const TimeSeries& series);
int reconstruction_grid_size(std::size_t n_obs);

struct ByCount {
  int windows = 1;
};
struct ByObservations {
  int per_window = 32;
};
using Windowing = std::variant<ByCount, ByObservations>;
Windowing parse_windowing(const std::string& spec);  // "count:8" or "obs:32", or a bare count
std::string windowing_name(const Windowing& w);

// Inclusive index ranges into the observed points.
struct WindowRange {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t count() const { return last - first + 1; }
};
// Consecutive windows share at least two observations and every overlap
// region is disjoint from the next one. Windows with fewer than kMinContext
// points are merged into the next window (the last one into its predecessor).
std::vector<WindowRange> plan_windows(std::span<const double> times, const Windowing& w);

// Blend of per-window outputs. On the overlap [t0B, t1A] of consecutive
// windows A and B, x = wA xA + wB xB with wA = (t1A - t) / (t1A - t0B) and
// wB = 1 - wA, where t0B is B's first and t1A is A's last observation time.
class ComposedTrajectory : public Trajectory {
 public:
  ComposedTrajectory(std::vector<std::unique_ptr<RecognitionOutput>> windows, std::vector<WindowRange> ranges);

  std::size_t window_count() const { return windows_.size(); }
  const RecognitionOutput& window(std::size_t i) const { return *windows_[i]; }
  const std::vector<WindowRange>& ranges() const { return ranges_; }
  // Overlap intervals [t0B, t1A] in window order.
  std::vector<std::pair<double, double>> overlaps() const;

  double value(double t) const override;
  double derivative(double t) const override;
  double derivative_log_var(double t) const override;
  std::vector<double> values(std::span<const double> ts) const override;
  std::vector<double> derivatives(std::span<const double> ts) const override;
  std::vector<double> derivative_log_vars(std::span<const double> ts) const override;

 private:
  struct Piece {
    std::size_t a = 0;  // window index
    std::size_t b = 0;  // equals a outside overlaps
    double wa = 1.0;    // weight on window a
    double span = 0.0;  // t1A - t0B inside an overlap
  };
  Piece locate(double t) const;

  std::vector<std::unique_ptr<RecognitionOutput>> windows_;
  std::vector<WindowRange> ranges_;
  std::vector<std::pair<double, double>> overlaps_;
};

std::unique_ptr<ComposedTrajectory> compose_windows(std::shared_ptr<const LocalModel> model, const TimeSeries& series,
                                                    const Windowing& windowing, int threads = 1);

struct ChannelResult {
  std::unique_ptr<ComposedTrajectory> trajectory;  // null on failure
  std::string error;
};
// Channels are independent; a failing channel does not stop the others.
std::vector<ChannelResult> compose_channels(std::shared_ptr<const LocalModel> model,
                                            const std::vector<TimeSeries>& channels, const Windowing& windowing,
                                            int threads = 1);

}  // namespace fim::local
