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

#include "fimkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <regex>

#include <Eigen/QR>
#include <Eigen/Sparse>
#include <fmt/format.h>

namespace fim::eval {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

// ---- metrics ----------------------------------------------------------------

const char* mask_mode_name(MaskMode m) {
  switch (m) {
    case MaskMode::MissingOnly:
      return "missing";
    case MaskMode::GapOnly:
      return "gap";
    case MaskMode::All:
      return "all";
  }
  return "?";
}

MaskMode mask_mode_from_name(const std::string& name) {
  if (name == "missing") return MaskMode::MissingOnly;
  if (name == "gap") return MaskMode::GapOnly;
  if (name == "all") return MaskMode::All;
  throw ValidationError("unknown mask mode '" + name + "' (expected missing, gap or all)");
}

Metrics metrics(const Eigen::MatrixXd& target, const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& mask) {
  if (target.rows() != prediction.rows() || target.cols() != prediction.cols() || target.rows() != mask.rows() ||
      target.cols() != mask.cols()) {
    throw ValidationError("metrics: target, prediction and mask shapes differ");
  }
  if (target.size() == 0) throw ValidationError("metrics: empty target");
  if (((mask.array() != 0.0) && (mask.array() != 1.0)).any()) throw ValidationError("metrics: mask must be 0/1");
  const double count = mask.sum();
  if (count == 0.0) throw ValidationError("metrics: mask selects no entries");

  const Eigen::ArrayXXd err = target.array() - prediction.array();
  const Eigen::ArrayXXd m = mask.array();
  Metrics r;
  r.mae = (err.abs() * m).sum() / count;
  r.mse = (err.square() * m).sum() / count;
  r.rmse = std::sqrt(r.mse);
  const double denom = (target.array().abs() * m).sum();
  if (denom == 0.0) throw ValidationError("metrics: relative error undefined for an all-zero masked target");
  r.mre = (err.abs() * m).sum() / denom;

  double r2 = 0.0;
  for (Eigen::Index d = 0; d < target.cols(); ++d) {
    const double mean = target.col(d).mean();
    const double ss_tot = (target.col(d).array() - mean).square().sum();
    if (ss_tot == 0.0) throw ValidationError(fmt::format("metrics: R^2 undefined, target column {} is constant", d));
    r2 += 1.0 - err.col(d).square().sum() / ss_tot;
  }
  r.r2 = r2 / static_cast<double>(target.cols());
  return r;
}

double r2_accuracy(const std::vector<double>& r2) {
  if (r2.empty()) return kNaN;
  const auto hits = std::count_if(r2.begin(), r2.end(), [](double v) { return v > 0.9; });
  return static_cast<double>(hits) / static_cast<double>(r2.size());
}

MetricReport aggregate(std::vector<Metrics> per_trajectory, MaskMode mode) {
  MetricReport rep;
  rep.mask_mode = mode;
  rep.per_trajectory = std::move(per_trajectory);
  const auto& v = rep.per_trajectory;
  if (v.empty()) {
    rep.mean = rep.std = {kNaN, kNaN, kNaN, kNaN, kNaN};
    rep.r2_accuracy = kNaN;
    return rep;
  }
  const double n = static_cast<double>(v.size());
  auto stat = [&](double Metrics::*field, double& mean, double& sd) {
    double s = 0.0;
    for (const auto& m : v) s += m.*field;
    mean = s / n;
    double q = 0.0;
    for (const auto& m : v) q += (m.*field - mean) * (m.*field - mean);
    sd = std::sqrt(q / n);
  };
  stat(&Metrics::mae, rep.mean.mae, rep.std.mae);
  stat(&Metrics::mse, rep.mean.mse, rep.std.mse);
  stat(&Metrics::rmse, rep.mean.rmse, rep.std.rmse);
  stat(&Metrics::mre, rep.mean.mre, rep.std.mre);
  stat(&Metrics::r2, rep.mean.r2, rep.std.r2);
  std::vector<double> r2;
  for (const auto& m : v) r2.push_back(m.r2);
  rep.r2_accuracy = r2_accuracy(r2);
  return rep;
}

// ---- baselines --------------------------------------------------------------

CubicSpline::CubicSpline(std::vector<double> times, std::vector<double> values, SplineBoundary boundary)
    : t_(std::move(times)), y_(std::move(values)) {
  const std::size_t n = t_.size();
  if (n != y_.size()) throw ValidationError("spline: times and values differ in length");
  const std::size_t min_n = boundary == SplineBoundary::NotAKnot ? 4 : 2;
  if (n < min_n) throw ValidationError(fmt::format("spline: needs at least {} points, got {}", min_n, n));
  for (std::size_t i = 1; i < n; ++i) {
    if (!(t_[i] > t_[i - 1])) throw ValidationError("spline: times must be strictly increasing");
  }
  for (double v : y_) {
    if (!std::isfinite(v)) throw ValidationError("spline: non-finite value");
  }

  std::vector<double> h(n - 1), d(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = t_[i + 1] - t_[i];
    d[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> trip;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  const auto N = static_cast<Eigen::Index>(n);
  if (boundary == SplineBoundary::Natural) {
    trip.emplace_back(0, 0, 1.0);
    trip.emplace_back(N - 1, N - 1, 1.0);
  } else {
    // Third derivative continuous across the second and second-to-last knots.
    trip.emplace_back(0, 0, h[1]);
    trip.emplace_back(0, 1, -(h[0] + h[1]));
    trip.emplace_back(0, 2, h[0]);
    trip.emplace_back(N - 1, N - 3, h[n - 2]);
    trip.emplace_back(N - 1, N - 2, -(h[n - 3] + h[n - 2]));
    trip.emplace_back(N - 1, N - 1, h[n - 3]);
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    trip.emplace_back(r, r - 1, h[i - 1]);
    trip.emplace_back(r, r, 2.0 * (h[i - 1] + h[i]));
    trip.emplace_back(r, r + 1, h[i]);
    rhs(r) = 6.0 * (d[i] - d[i - 1]);
  }
  Eigen::SparseMatrix<double> A(N, N);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw RuntimeError("spline: singular system");
  const Eigen::VectorXd m = lu.solve(rhs);
  m_.assign(m.data(), m.data() + m.size());
}

std::size_t CubicSpline::piece(double t) const {
  const auto it = std::upper_bound(t_.begin(), t_.end(), t);
  const auto i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - t_.begin() - 1, 0));
  return std::min(i, t_.size() - 2);
}

double CubicSpline::value(double t) const {
  const std::size_t i = piece(t);
  const double h = t_[i + 1] - t_[i];
  const double a = (t_[i + 1] - t) / h, b = (t - t_[i]) / h;
  return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

double CubicSpline::derivative(double t) const {
  const std::size_t i = piece(t);
  const double h = t_[i + 1] - t_[i];
  const double a = (t_[i + 1] - t) / h, b = (t - t_[i]) / h;
  return (y_[i + 1] - y_[i]) / h - (3.0 * a * a - 1.0) * h * m_[i] / 6.0 + (3.0 * b * b - 1.0) * h * m_[i + 1] / 6.0;
}

double CubicSpline::second_derivative(double t) const {
  const std::size_t i = piece(t);
  const double h = t_[i + 1] - t_[i];
  const double a = (t_[i + 1] - t) / h, b = (t - t_[i]) / h;
  return a * m_[i] + b * m_[i + 1];
}

void SavgolSpec::validate() const {
  if (order < 0) throw ValidationError("savgol: order must be >= 0");
  if (window % 2 == 0) throw ValidationError(fmt::format("savgol: window {} must be odd", window));
  if (window <= order) throw ValidationError(fmt::format("savgol: window {} must exceed order {}", window, order));
}

std::vector<double> savgol(std::span<const double> times, std::span<const double> values, const SavgolSpec& spec) {
  spec.validate();
  if (times.size() != values.size()) throw ValidationError("savgol: times and values differ in length");
  const auto n = static_cast<std::ptrdiff_t>(values.size());
  const std::ptrdiff_t half = spec.window / 2;
  std::vector<double> out(values.begin(), values.end());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t k = std::min({half, i, n - 1 - i});
    const std::ptrdiff_t count = 2 * k + 1;
    if (count <= spec.order + 1) continue;
    double scale = 0.0;
    for (std::ptrdiff_t j = i - k; j <= i + k; ++j) scale = std::max(scale, std::abs(times[j] - times[i]));
    Eigen::MatrixXd V(count, spec.order + 1);
    Eigen::VectorXd b(count);
    for (std::ptrdiff_t j = 0; j < count; ++j) {
      const double z = (times[i - k + j] - times[i]) / scale;
      double p = 1.0;
      for (int c = 0; c <= spec.order; ++c) {
        V(j, c) = p;
        p *= z;
      }
      b(j) = values[i - k + j];
    }
    out[i] = V.colPivHouseholderQr().solve(b)(0);
  }
  return out;
}

std::unique_ptr<CubicSpline> spline_baseline(const TimeSeries& series, const std::optional<SavgolSpec>& smoothing,
                                             SplineBoundary boundary) {
  series.validate();
  TimeSeries obs = series.observed_only();
  if (obs.size() < 4) throw ValidationError(fmt::format("spline baseline needs >= 4 observations, got {}", obs.size()));
  if (smoothing) obs.values = savgol(obs.times, obs.values, *smoothing);
  return std::make_unique<CubicSpline>(std::move(obs.times), std::move(obs.values), boundary);
}

// ---- imputers and benchmark -------------------------------------------------

Imputer spline_imputer(const std::optional<SavgolSpec>& smoothing) {
  if (smoothing) smoothing->validate();
  std::string name = "spline";
  if (smoothing) {
    name += smoothing->order == 3 ? fmt::format("+savgol{}", smoothing->window)
                                  : fmt::format("+savgol{}_{}", smoothing->window, smoothing->order);
  }
  return {name, [smoothing](const TimeSeries& s) -> std::unique_ptr<Trajectory> {
            return spline_baseline(s, smoothing);
          }};
}

Imputer fim_imputer(std::shared_ptr<const local::LocalModel> model, const local::Windowing& windowing) {
  return {"fim", [model, windowing](const TimeSeries& s) -> std::unique_ptr<Trajectory> {
            return local::compose_windows(model, s, windowing, 1);
          }};
}

Imputer imputer_by_name(const std::string& name) {
  if (name == "spline") return spline_imputer();
  static const std::regex re(R"(spline\+savgol(\d+)(?:_(\d+))?)");
  std::smatch m;
  if (std::regex_match(name, m, re)) {
    SavgolSpec spec;
    spec.window = std::stoi(m[1].str());
    if (m[2].matched) spec.order = std::stoi(m[2].str());
    return spline_imputer(spec);
  }
  throw ValidationError("unknown imputer '" + name + "' (expected spline, spline+savgol<w>[_<order>] or fim)");
}

BenchmarkSystem simulate_builtin(const std::string& name, int n_points) {
  const auto sys = odesim::system_by_name(name);
  return {sys.name, odesim::rk4_simulate(sys, sys.initial_state, sys.t_end, n_points), sys.vector_field};
}

void BenchmarkConfig::validate() const {
  if (rhos.empty() || gammas.empty()) throw ValidationError("benchmark: empty corruption grid");
  for (double r : rhos) odesim::CorruptionSpec{r, 0.0, 0}.validate();
  for (double g : gammas) odesim::CorruptionSpec{0.0, g, 0}.validate();
  if (samplings < 1) throw ValidationError("benchmark.samplings must be >= 1");
  if (mask_mode == MaskMode::GapOnly) throw ValidationError("benchmark: gap mask mode needs a gap; use missing or all");
}

namespace {

struct SamplingScore {
  std::optional<Metrics> metrics;
  double derivative_mae = kNaN;
  std::string error;
};

SamplingScore score_sampling(const BenchmarkSystem& sys, const Imputer& imp, const odesim::CorruptionSpec& spec,
                             MaskMode mode) {
  SamplingScore out;
  try {
    const auto channels = odesim::corrupt(sys.clean, spec);
    const auto n = static_cast<Eigen::Index>(sys.clean.times.size());
    const auto dim = static_cast<Eigen::Index>(sys.clean.dim());
    Eigen::MatrixXd target(n, dim), pred(n, dim), mask(n, dim), dpred(n, dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
      const auto traj = imp.fit(channels[static_cast<std::size_t>(d)]);
      const auto v = traj->values(sys.clean.times);
      const auto dv = traj->derivatives(sys.clean.times);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        target(i, d) = sys.clean.states[k][static_cast<std::size_t>(d)];
        pred(i, d) = v[k];
        dpred(i, d) = dv[k];
        mask(i, d) = mode == MaskMode::All ? 1.0 : (channels[static_cast<std::size_t>(d)].observed(k) ? 0.0 : 1.0);
      }
    }
    if (!pred.allFinite()) throw RuntimeError("imputer produced non-finite values");
    out.metrics = metrics(target, pred, mask);
    if (sys.vector_field) {
      double s = 0.0;
      odesim::State dx(static_cast<std::size_t>(dim));
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        sys.vector_field(sys.clean.times[k], sys.clean.states[k], dx);
        for (Eigen::Index d = 0; d < dim; ++d) s += std::abs(dpred(i, d) - dx[static_cast<std::size_t>(d)]);
      }
      out.derivative_mae = s / static_cast<double>(n * dim);
    }
  } catch (const std::exception& e) {
    out.metrics.reset();
    out.error = e.what();
  }
  return out;
}

}  // namespace

std::vector<BenchmarkCell> benchmark(const std::vector<BenchmarkSystem>& systems,
                                     const std::vector<Imputer>& imputers, const BenchmarkConfig& cfg) {
  cfg.validate();
  if (systems.empty()) throw ValidationError("benchmark: no systems");
  if (imputers.empty()) throw ValidationError("benchmark: no imputers");
  const std::size_t n_rho = cfg.rhos.size(), n_gamma = cfg.gammas.size(), n_imp = imputers.size();
  const std::size_t n_cells = systems.size() * n_rho * n_gamma * n_imp;
  const auto S = static_cast<std::size_t>(cfg.samplings);

  std::vector<SamplingScore> scores(n_cells * S);
  parallel_for(scores.size(), resolve_threads(cfg.threads), [&](std::size_t job) {
    const std::size_t cell = job / S, s = job % S;
    const std::size_t imp = cell % n_imp;
    const std::size_t corr = (cell / n_imp) % (n_rho * n_gamma);
    const std::size_t sys = cell / (n_imp * n_rho * n_gamma);
    const odesim::CorruptionSpec spec{cfg.rhos[corr / n_gamma], cfg.gammas[corr % n_gamma],
                                      derive_seed(derive_seed(cfg.seed, sys), corr, s)};
    scores[job] = score_sampling(systems[sys], imputers[imp], spec, cfg.mask_mode);
  });

  std::vector<BenchmarkCell> cells(n_cells);
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    const std::size_t imp = cell % n_imp;
    const std::size_t corr = (cell / n_imp) % (n_rho * n_gamma);
    const std::size_t sys = cell / (n_imp * n_rho * n_gamma);
    BenchmarkCell& c = cells[cell];
    c.system = systems[sys].name;
    c.rho = cfg.rhos[corr / n_gamma];
    c.gamma = cfg.gammas[corr % n_gamma];
    c.imputer = imputers[imp].name;
    std::vector<Metrics> ok;
    std::vector<double> dmae;
    for (std::size_t s = 0; s < S; ++s) {
      const auto& sc = scores[cell * S + s];
      if (!sc.metrics) {
        if (c.failures++ == 0) c.error = sc.error;
        continue;
      }
      ok.push_back(*sc.metrics);
      dmae.push_back(sc.derivative_mae);
    }
    c.report = aggregate(std::move(ok), cfg.mask_mode);
    if (dmae.empty() || !systems[sys].vector_field) {
      c.derivative_mae_mean = c.derivative_mae_std = kNaN;
    } else {
      double mean = 0.0, q = 0.0;
      for (double v : dmae) mean += v;
      mean /= static_cast<double>(dmae.size());
      for (double v : dmae) q += (v - mean) * (v - mean);
      c.derivative_mae_mean = mean;
      c.derivative_mae_std = std::sqrt(q / static_cast<double>(dmae.size()));
    }
  }
  return cells;
}

std::string benchmark_csv(const std::vector<BenchmarkCell>& cells) {
  std::string out =
      "system,rho,gamma,imputer,mask_mode,n_ok,n_failed,mae_mean,mae_std,mse_mean,mse_std,rmse_mean,rmse_std,"
      "mre_mean,mre_std,r2_mean,r2_std,r2_accuracy,deriv_mae_mean,deriv_mae_std,error\n";
  for (const auto& c : cells) {
    const auto& m = c.report.mean;
    const auto& s = c.report.std;
    std::string err = c.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    out += fmt::format(
        "{},{},{},{},{},{},{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},"
        "{:.10g},{:.10g},\"{}\"\n",
        c.system, c.rho, c.gamma, c.imputer, mask_mode_name(c.report.mask_mode), c.report.per_trajectory.size(),
        c.failures, m.mae, s.mae, m.mse, s.mse, m.rmse, s.rmse, m.mre, s.mre, m.r2, s.r2, c.report.r2_accuracy,
        c.derivative_mae_mean, c.derivative_mae_std, err);
  }
  return out;
}

nlohmann::json benchmark_json(const std::vector<BenchmarkCell>& cells) {
  auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  auto metrics_json = [&](const Metrics& m) {
    return nlohmann::json{{"mae", num(m.mae)}, {"mse", num(m.mse)}, {"rmse", num(m.rmse)},
                          {"mre", num(m.mre)}, {"r2", num(m.r2)}};
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : cells) {
    rows.push_back({{"system", c.system},
                    {"rho", c.rho},
                    {"gamma", c.gamma},
                    {"imputer", c.imputer},
                    {"mask_mode", mask_mode_name(c.report.mask_mode)},
                    {"n_ok", c.report.per_trajectory.size()},
                    {"n_failed", c.failures},
                    {"mean", metrics_json(c.report.mean)},
                    {"std", metrics_json(c.report.std)},
                    {"r2_accuracy", num(c.report.r2_accuracy)},
                    {"derivative_mae", {{"mean", num(c.derivative_mae_mean)}, {"std", num(c.derivative_mae_std)}}},
                    {"error", c.error}});
  }
  return rows;
}

// ---- phase portraits --------------------------------------------------------

void PhasePortraitConfig::validate() const {
  if (depth != 1 && depth != 2) throw ValidationError("phase portrait depth must be 1 or 2");
  if (grid_points < 2) throw ValidationError("phase portrait grid_points must be >= 2");
  if (depth == 2 && dense_points < local::kMinContext) {
    throw ValidationError(fmt::format("phase portrait dense_points must be >= {}", local::kMinContext));
  }
}

PhasePortrait phase_portrait(std::shared_ptr<const local::LocalModel> model, const TimeSeries& series,
                             const PhasePortraitConfig& cfg) {
  cfg.validate();
  series.validate();
  const TimeSeries obs = series.observed_only();
  if (obs.size() < 2) throw ValidationError("phase portrait needs at least 2 observations");
  const auto first = local::compose_windows(model, series, cfg.windowing, cfg.threads);
  PhasePortrait p;
  p.t = linspace(obs.times.front(), obs.times.back(), static_cast<std::size_t>(cfg.grid_points));
  p.x = first->values(p.t);
  p.dx = first->derivatives(p.t);
  if (cfg.depth == 2) {
    TimeSeries velocity;
    velocity.times = linspace(obs.times.front(), obs.times.back(), static_cast<std::size_t>(cfg.dense_points));
    velocity.values = first->derivatives(velocity.times);
    const auto second = local::compose_windows(model, velocity, cfg.second_windowing, cfg.threads);
    p.ddx = second->derivatives(p.t);
  }
  return p;
}

std::string phase_portrait_csv(const PhasePortrait& p) {
  const bool second = !p.ddx.empty();
  std::string out = second ? "t,x,dx,ddx\n" : "t,x,dx\n";
  for (std::size_t i = 0; i < p.t.size(); ++i) {
    out += second ? fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", p.t[i], p.x[i], p.dx[i], p.ddx[i])
                  : fmt::format("{:.17g},{:.17g},{:.17g}\n", p.t[i], p.x[i], p.dx[i]);
  }
  return out;
}

// ---- plotting ---------------------------------------------------------------

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

std::string svg_line_plot(const std::vector<SvgSeries>& series, const std::string& title, int width, int height) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x1 > x0)) {
    x0 -= 0.5;
    x1 = x0 + 1.0;
  }
  if (!(y1 > y0)) {
    y0 -= 0.5;
    y1 = y0 + 1.0;
  }
  const double margin = 48.0;
  const double pw = width - 2 * margin, ph = height - 2 * margin;
  auto px = [&](double x) { return margin + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return height - margin - (y - y0) / (y1 - y0) * ph; };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{3}</text>\n"
      "<rect x=\"{4}\" y=\"{4}\" width=\"{5}\" height=\"{6}\" fill=\"none\" stroke=\"#888\"/>\n"
      "<text x=\"{4}\" y=\"{7}\" font-family=\"sans-serif\" font-size=\"10\">{8:.4g}</text>\n"
      "<text x=\"{9}\" y=\"{7}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{10:.4g}</text>\n"
      "<text x=\"4\" y=\"{11}\" font-family=\"sans-serif\" font-size=\"10\">{12:.4g}</text>\n"
      "<text x=\"4\" y=\"{13}\" font-family=\"sans-serif\" font-size=\"10\">{14:.4g}</text>\n",
      width, height, width / 2, xml_escape(title), margin, pw, ph, height - margin + 14, x0, width - margin, x1, height - margin,
      y0, margin + 4, y1);
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const std::string color = s.color.empty() ? palette[k % 6] : s.color;
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2\" fill=\"{}\"/>\n", px(s.x[i]), py(s.y[i]), color);
      }
    } else {
      out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"", color);
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        out += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
      }
      out += "\"/>\n";
    }
    out += fmt::format("<text x=\"{:.0f}\" y=\"{:.0f}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
                       width - margin - 120, margin + 14 + 14 * static_cast<double>(k), color, xml_escape(s.label));
  }
  out += "</svg>\n";
  return out;
}

}  // namespace fim::eval
