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

#include "fimkit/odesim.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace fim::odesim {

State DynamicalSystem::eval(double t, const State& x) const {
  State out(x.size());
  vector_field(t, x, out);
  return out;
}

std::vector<double> Trajectory::channel(int d) const {
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(s[static_cast<std::size_t>(d)]);
  return out;
}

Trajectory rk4_simulate(const DynamicalSystem& sys, const State& x0, double t_end, int n_points, int substeps) {
  if (n_points < 2) throw ValidationError("rk4_simulate: need at least 2 output points");
  if (!(t_end > 0.0)) throw ValidationError("rk4_simulate: t_end must be positive");
  if (substeps < 1) throw ValidationError("rk4_simulate: substeps must be >= 1");
  if (static_cast<int>(x0.size()) != sys.dim) throw ValidationError("rk4_simulate: initial state has wrong dimension");

  Trajectory traj;
  traj.times = linspace(0.0, t_end, static_cast<std::size_t>(n_points));
  traj.states.reserve(static_cast<std::size_t>(n_points));
  traj.states.push_back(x0);

  const std::size_t n = x0.size();
  State x = x0, k1(n), k2(n), k3(n), k4(n), tmp(n);
  for (int i = 1; i < n_points; ++i) {
    const double t0 = traj.times[static_cast<std::size_t>(i - 1)];
    const double h = (traj.times[static_cast<std::size_t>(i)] - t0) / substeps;
    for (int s = 0; s < substeps; ++s) {
      const double t = t0 + s * h;
      sys.vector_field(t, x, k1);
      for (std::size_t d = 0; d < n; ++d) tmp[d] = x[d] + 0.5 * h * k1[d];
      sys.vector_field(t + 0.5 * h, tmp, k2);
      for (std::size_t d = 0; d < n; ++d) tmp[d] = x[d] + 0.5 * h * k2[d];
      sys.vector_field(t + 0.5 * h, tmp, k3);
      for (std::size_t d = 0; d < n; ++d) tmp[d] = x[d] + h * k3[d];
      sys.vector_field(t + h, tmp, k4);
      for (std::size_t d = 0; d < n; ++d) x[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
      for (double v : x) {
        if (!std::isfinite(v)) {
          throw RuntimeError(fmt::format("{}: state became non-finite at t = {:.6g}", sys.name, t + h));
        }
      }
    }
    traj.states.push_back(x);
  }
  return traj;
}

DynamicalSystem van_der_pol(double mu) {
  DynamicalSystem sys;
  sys.name = "van_der_pol";
  sys.dim = 2;
  sys.vector_field = [mu](double, const State& x, State& dx) {
    dx[0] = x[1];
    dx[1] = mu * (1.0 - x[0] * x[0]) * x[1] - x[0];
  };
  sys.initial_state = {3.0, 0.0};
  return sys;
}

DynamicalSystem rossler() {
  DynamicalSystem sys;
  sys.name = "rossler";
  sys.dim = 3;
  // Chaotic variant on a x5 time scale.
  sys.vector_field = [](double, const State& x, State& dx) {
    dx[0] = -5.0 * (x[1] + x[2]);
    dx[1] = 5.0 * (0.2 * x[1] + x[0]);
    dx[2] = 5.0 * (0.2 + x[2] * (-5.7 + x[0]));
  };
  sys.initial_state = {2.3, 1.1, 0.8};
  return sys;
}

DynamicalSystem lorenz(double sigma, double rho, double beta) {
  DynamicalSystem sys;
  sys.name = "lorenz";
  sys.dim = 3;
  sys.vector_field = [=](double, const State& x, State& dx) {
    dx[0] = sigma * (x[1] - x[0]);
    dx[1] = x[0] * (rho - x[2]) - x[1];
    dx[2] = x[0] * x[1] - beta * x[2];
  };
  sys.initial_state = {2.3, 8.1, 12.4};
  return sys;
}

DynamicalSystem linear_system(std::vector<double> a_row_major, int dim) {
  if (static_cast<int>(a_row_major.size()) != dim * dim) throw ValidationError("linear_system: matrix size mismatch");
  DynamicalSystem sys;
  sys.name = "linear";
  sys.dim = dim;
  sys.vector_field = [a = std::move(a_row_major), dim](double, const State& x, State& dx) {
    for (int i = 0; i < dim; ++i) {
      double acc = 0.0;
      for (int j = 0; j < dim; ++j) acc += a[static_cast<std::size_t>(i * dim + j)] * x[static_cast<std::size_t>(j)];
      dx[static_cast<std::size_t>(i)] = acc;
    }
  };
  sys.initial_state.assign(static_cast<std::size_t>(dim), 1.0);
  return sys;
}

std::vector<DynamicalSystem> builtin_systems() { return {van_der_pol(0.5), rossler(), lorenz()}; }

DynamicalSystem system_by_name(const std::string& name) {
  if (name == "van_der_pol" || name == "vdp") return van_der_pol(0.5);
  if (name == "rossler") return rossler();
  if (name == "lorenz") return lorenz();
  throw ValidationError("unknown system '" + name + "' (expected van_der_pol, rossler or lorenz)");
}

void CorruptionSpec::validate() const {
  if (!(rho >= 0.0 && rho < 1.0)) throw ValidationError("corruption rho must be in [0, 1)");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("corruption gamma must be >= 0");
}

std::vector<TimeSeries> corrupt(const Trajectory& traj, const CorruptionSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t n = traj.times.size();
  const int dim = traj.dim();

  std::vector<std::uint8_t> keep(n, 1);
  if (spec.rho > 0.0) {
    std::bernoulli_distribution drop(spec.rho);
    for (auto& k : keep) k = drop(rng) ? 0 : 1;
  }
  std::size_t kept = 0;
  for (auto k : keep) kept += k;
  if (kept == 0) throw RuntimeError("corruption dropped every point");

  std::normal_distribution<double> eps(0.0, spec.gamma);
  std::vector<TimeSeries> out(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    auto& ts = out[static_cast<std::size_t>(d)];
    ts.times = traj.times;
    ts.values.assign(n, std::numeric_limits<double>::quiet_NaN());
    ts.mask = keep;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    for (int d = 0; d < dim; ++d) {
      const double e = spec.gamma > 0.0 ? eps(rng) : 0.0;
      out[static_cast<std::size_t>(d)].values[i] = (1.0 + e) * traj.states[i][static_cast<std::size_t>(d)];
    }
  }
  return out;
}

std::string trajectory_to_csv(const Trajectory& traj, const std::vector<TimeSeries>* corrupted) {
  std::ostringstream out;
  const int dim = traj.dim();
  out << "t";
  for (int d = 1; d <= dim; ++d) out << ",x" << d;
  if (corrupted) {
    for (int d = 1; d <= dim; ++d) out << ",y" << d;
    for (int d = 1; d <= dim; ++d) out << ",m" << d;
  }
  out << '\n';
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    out << fmt::format("{:.17g}", traj.times[i]);
    for (int d = 0; d < dim; ++d) out << fmt::format(",{:.17g}", traj.states[i][static_cast<std::size_t>(d)]);
    if (corrupted) {
      for (int d = 0; d < dim; ++d) {
        const auto& ts = (*corrupted)[static_cast<std::size_t>(d)];
        out << ',';
        if (ts.observed(i)) out << fmt::format("{:.17g}", ts.values[i]);
      }
      for (int d = 0; d < dim; ++d) out << ',' << ((*corrupted)[static_cast<std::size_t>(d)].observed(i) ? 1 : 0);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace fim::odesim
