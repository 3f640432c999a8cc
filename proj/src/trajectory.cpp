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

#include "fimkit/trajectory.hpp"

namespace fim {

std::vector<double> Trajectory::values(std::span<const double> ts) const {
  std::vector<double> out(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) out[i] = value(ts[i]);
  return out;
}

std::vector<double> Trajectory::derivatives(std::span<const double> ts) const {
  std::vector<double> out(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) out[i] = derivative(ts[i]);
  return out;
}

std::vector<double> Trajectory::derivative_log_vars(std::span<const double> ts) const {
  std::vector<double> out(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) out[i] = derivative_log_var(ts[i]);
  return out;
}

}  // namespace fim
