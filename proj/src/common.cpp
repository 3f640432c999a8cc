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

#include "fimkit/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace fim {

TimeSeries TimeSeries::observed_only() const {
  TimeSeries out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (!observed(i)) continue;
    out.times.push_back(times[i]);
    out.values.push_back(values[i]);
  }
  return out;
}

void TimeSeries::validate() const {
  if (values.size() != times.size()) {
    throw ValidationError("time series: " + std::to_string(times.size()) + " times but " +
                          std::to_string(values.size()) + " values");
  }
  if (!mask.empty() && mask.size() != times.size()) {
    throw ValidationError("time series: mask length does not match times");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (!std::isfinite(times[i])) throw ValidationError("time series: non-finite time at " + std::to_string(i));
    if (i > 0 && !(times[i] > times[i - 1])) {
      throw ValidationError("time series: times not strictly increasing at index " + std::to_string(i));
    }
    if (observed(i) && !std::isfinite(values[i])) {
      throw ValidationError("time series: non-finite observed value at index " + std::to_string(i));
    }
  }
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return mix64(mix64(base) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(base, a), b);
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("FIM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = a;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  out.back() = b;
  return out;
}

std::vector<double> cumulative_trapezoid(std::span<const double> times, std::span<const double> values,
                                         double start) {
  std::vector<double> out(times.size());
  if (times.empty()) return out;
  out[0] = start;
  for (std::size_t i = 1; i < times.size(); ++i) {
    out[i] = out[i - 1] + 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
  }
  return out;
}

double interp_linear(std::span<const double> xs, std::span<const double> ys, double x) {
  const std::size_t n = xs.size();
  if (n == 1) return ys[0];
  std::size_t hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
  hi = std::clamp<std::size_t>(hi, 1, n - 1);
  const std::size_t lo = hi - 1;
  const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
  if (w == 0.0) return ys[lo];
  if (w == 1.0) return ys[hi];
  return ys[lo] + w * (ys[hi] - ys[lo]);
}

}  // namespace fim
