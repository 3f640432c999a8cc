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

// Imputation metrics, classical baselines, the corruption benchmark and
// phase-portrait extraction.

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fimkit/fim_local.hpp"
#include "fimkit/odesim.hpp"
#include "fimkit/trajectory.hpp"

namespace fim::eval {

// ---- metrics ----------------------------------------------------------------

enum class MaskMode { MissingOnly, GapOnly, All };
const char* mask_mode_name(MaskMode m);
MaskMode mask_mode_from_name(const std::string& name);

struct Metrics {
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  double mre = 0.0;
  double r2 = 0.0;
};

// Rows are time points, columns dimensions. MAE, MSE, RMSE and MRE use the
// mask (nonzero entries count); R^2 is unmasked and averaged over columns.
// Throws ValidationError on shape mismatch, a non-binary or empty mask, a
// zero masked |target| sum (MRE) or a zero-variance target column (R^2).
Metrics metrics(const Eigen::MatrixXd& target, const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& mask);

// Fraction of values strictly above 0.9.
double r2_accuracy(const std::vector<double>& r2);

struct MetricReport {
  MaskMode mask_mode = MaskMode::All;
  std::vector<Metrics> per_trajectory;
  Metrics mean;
  Metrics std;  // population standard deviation across trajectories
  double r2_accuracy = 0.0;
};
MetricReport aggregate(std::vector<Metrics> per_trajectory, MaskMode mode);

// ---- baselines --------------------------------------------------------------

enum class SplineBoundary { NotAKnot, Natural };

// Piecewise cubic interpolant through (times, values). Outside the knots the
// end pieces are extended.
class CubicSpline : public Trajectory {
 public:
  CubicSpline(std::vector<double> times, std::vector<double> values,
              SplineBoundary boundary = SplineBoundary::NotAKnot);

  double value(double t) const override;
  double derivative(double t) const override;
  double second_derivative(double t) const;

 private:
  std::size_t piece(double t) const;
  std::vector<double> t_, y_, m_;  // m_ holds second derivatives at the knots
};

struct SavgolSpec {
  int window = 15;
  int order = 3;
  void validate() const;  // odd window > order >= 0
};

// Local least-squares polynomial smoothing in the actual observation times.
// Near the ends the window shrinks symmetrically; when it holds no more
// points than order + 1 the polynomial interpolates and the value is kept.
std::vector<double> savgol(std::span<const double> times, std::span<const double> values, const SavgolSpec& spec);

// Cubic spline through the observed points, optionally smoothed first.
// Needs at least four observations.
std::unique_ptr<CubicSpline> spline_baseline(const TimeSeries& series, const std::optional<SavgolSpec>& smoothing,
                                             SplineBoundary boundary = SplineBoundary::NotAKnot);

// ---- imputers and benchmark -------------------------------------------------

struct Imputer {
  std::string name;
  std::function<std::unique_ptr<Trajectory>(const TimeSeries&)> fit;
};
Imputer spline_imputer(const std::optional<SavgolSpec>& smoothing = std::nullopt);
Imputer fim_imputer(std::shared_ptr<const local::LocalModel> model, const local::Windowing& windowing);
// "spline", "spline+savgol<w>" (order 3) or "spline+savgol<w>_<order>".
Imputer imputer_by_name(const std::string& name);

struct BenchmarkSystem {
  std::string name;
  odesim::Trajectory clean;
  odesim::VectorField vector_field;  // empty for user data: no derivative score
};
BenchmarkSystem simulate_builtin(const std::string& name, int n_points);

struct BenchmarkConfig {
  std::vector<double> rhos{0.0, 0.5};
  std::vector<double> gammas{0.0, 0.05};
  int samplings = 10;
  std::uint64_t seed = 0;
  MaskMode mask_mode = MaskMode::All;
  int threads = 1;

  void validate() const;
};

struct BenchmarkCell {
  std::string system;
  double rho = 0.0, gamma = 0.0;
  std::string imputer;
  MetricReport report;
  double derivative_mae_mean = 0.0;  // NaN without a vector field
  double derivative_mae_std = 0.0;
  int failures = 0;
  std::string error;  // first failure message
};

// Cells ordered by system, then rho, then gamma, then imputer. The
// corruption seed of each sampling depends on system, corruption and
// sampling index only, so imputers see identical inputs.
std::vector<BenchmarkCell> benchmark(const std::vector<BenchmarkSystem>& systems,
                                     const std::vector<Imputer>& imputers, const BenchmarkConfig& cfg);

std::string benchmark_csv(const std::vector<BenchmarkCell>& cells);
nlohmann::json benchmark_json(const std::vector<BenchmarkCell>& cells);

// ---- phase portraits --------------------------------------------------------

struct PhasePortrait {
  std::vector<double> t, x, dx, ddx;  // ddx empty at depth 1
};

struct PhasePortraitConfig {
  int depth = 1;
  int grid_points = 8192;      // plotting grid
  int dense_points = 8192;     // discretization of the inferred derivative at depth 2
  local::Windowing windowing = local::ByCount{1};
  local::Windowing second_windowing = local::ByObservations{64};
  int threads = 1;

  void validate() const;
};

PhasePortrait phase_portrait(std::shared_ptr<const local::LocalModel> model, const TimeSeries& series,
                             const PhasePortraitConfig& cfg);
std::string phase_portrait_csv(const PhasePortrait& p);

// ---- plotting ---------------------------------------------------------------

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
  std::string color;
  bool markers = false;
};
std::string svg_line_plot(const std::vector<SvgSeries>& series, const std::string& title, int width = 720,
                          int height = 420);

}  // namespace fim::eval
