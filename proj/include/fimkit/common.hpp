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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fim {

// Bad input, bad configuration or a violated precondition. Maps to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while executing a valid request (blow-up, NaN, I/O). Exit code 3.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A scalar series with strictly increasing observation times. A zero in
// `mask` marks a missing value; such entries carry no information.
struct TimeSeries {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;  // empty means all observed

  std::size_t size() const { return times.size(); }
  bool observed(std::size_t i) const { return mask.empty() || mask[i] != 0; }

  // Only the observed points, with an empty mask.
  TimeSeries observed_only() const;

  // Throws ValidationError on length mismatch, non-finite observed values or
  // non-increasing times.
  void validate() const;
};

// SplitMix64 finalizer; the basis of counter-based seed derivation.
std::uint64_t mix64(std::uint64_t x);

// Deterministic seed for stream `index` under `base`. Independent of the
// order in which indices are visited.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b);

// Number of worker threads: explicit value if > 0, else FIM_THREADS, else 1.
int resolve_threads(int requested);

// Runs fn(i) for i in [0, n) over `threads` workers. Work is split in
// contiguous chunks; callers that write results into slot i get output that
// does not depend on the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// Regular grid of n points on [a, b], both endpoints included.
std::vector<double> linspace(double a, double b, std::size_t n);

// Cumulative trapezoid of `values` sampled at `times`, starting from `start`.
std::vector<double> cumulative_trapezoid(std::span<const double> times, std::span<const double> values,
                                         double start);

// Piecewise-linear interpolation of (xs, ys) at x. Outside the range the end
// segments are extended linearly.
double interp_linear(std::span<const double> xs, std::span<const double> ys, double x);

}  // namespace fim
