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

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fimkit/common.hpp"

namespace fim::odesim {

using State = std::vector<double>;
using VectorField = std::function<void(double t, const State& x, State& dxdt)>;

struct DynamicalSystem {
  std::string name;
  int dim = 0;
  VectorField vector_field;
  State initial_state;  // default initial condition
  double t_end = 10.0;  // default simulation span (0, t_end)

  State eval(double t, const State& x) const;
};

// Samples on a regular output grid, row i at times[i].
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;

  int dim() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }
  std::vector<double> channel(int d) const;
};

// Classical RK4 on (0, t_end) with `substeps` internal steps per output
// interval. Throws RuntimeError naming the time at which the state stopped
// being finite.
Trajectory rk4_simulate(const DynamicalSystem& sys, const State& x0, double t_end, int n_points, int substeps = 8);

DynamicalSystem van_der_pol(double mu = 0.5);
DynamicalSystem rossler();
// dx = sigma (y - x), dy = x (rho - z) - y, dz = x y - beta z.
DynamicalSystem lorenz(double sigma = 10.0, double rho = 28.0, double beta = 8.0 / 3.0);
DynamicalSystem linear_system(std::vector<double> a_row_major, int dim);

std::vector<DynamicalSystem> builtin_systems();
DynamicalSystem system_by_name(const std::string& name);

struct CorruptionSpec {
  double rho = 0.0;    // drop probability per fine-grid point
  double gamma = 0.0;  // std of the multiplicative noise epsilon
  std::uint64_t seed = 0;

  void validate() const;
};

// Corrupted copy of a trajectory: one TimeSeries per channel on the full
// fine grid, mask 0 where the point was dropped. All channels share the mask.
std::vector<TimeSeries> corrupt(const Trajectory& traj, const CorruptionSpec& spec);

// `t,x1..xD` header, optionally followed by `m1..mD` 0/1 mask columns.
std::string trajectory_to_csv(const Trajectory& traj, const std::vector<TimeSeries>* corrupted = nullptr);

}  // namespace fim::odesim
