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

#include <span>
#include <vector>

namespace fim {

// A continuous-time estimate of a scalar solution in the original time and
// value scale.
class Trajectory {
 public:
  virtual ~Trajectory() = default;

  virtual double value(double t) const = 0;
  virtual double derivative(double t) const = 0;
  // Log-variance of the derivative estimate; 0 for methods without one.
  virtual double derivative_log_var(double) const { return 0.0; }

  virtual std::vector<double> values(std::span<const double> ts) const;
  virtual std::vector<double> derivatives(std::span<const double> ts) const;
  virtual std::vector<double> derivative_log_vars(std::span<const double> ts) const;
};

}  // namespace fim
