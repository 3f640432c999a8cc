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

// Synthetic training data: random functions f on a fine grid over [0, 1],
// their integrals x = x0 + int f, sparse observation grids and noisy
// observations y of x.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace fim::synthgen {

using Rng = std::mt19937_64;

inline constexpr int kMinObservations = 8;     // L_min
inline constexpr int kMaxChebyshevDegree = 16;  // truncation of the Zipf(2) degree prior
inline constexpr int kPointwiseGridLen = 128;
inline constexpr int kTemporalGridLen = 256;
inline constexpr int kObservedSets = 4;

// Values of a scalar function on the regular grid t_i = i / (L - 1).
struct FineGridFunction {
  std::vector<double> values;

  int size() const { return static_cast<int>(values.size()); }
  double time(int i) const { return static_cast<double>(i) / static_cast<double>(size() - 1); }
};

std::vector<double> fine_grid(int len);

enum class Family : std::uint8_t { ChebyshevRand = 0, GpRbf = 1, GpPeriodic = 2 };
const char* family_name(Family f);
Family family_from_name(const std::string& name);

enum class GridScheme : std::uint8_t { Regular = 0, Irregular = 1 };

struct ObservationGrid {
  std::vector<int> indices;  // strictly increasing fine-grid indices
  GridScheme scheme = GridScheme::Regular;
  int stride = 0;               // Regular only
  double survival_prob = 0.0;   // Irregular only
  // Temporal patterns: first and last fine-grid index of the removed
  // observations, and how many observed sets lie left of them (1..3).
  std::optional<std::pair<int, int>> gap;
  int gap_position = 0;

  int size() const { return static_cast<int>(indices.size()); }
  void validate(int fine_grid_len) const;
};

struct GenerationRecord {
  std::uint64_t seed = 0;
  Family family = Family::ChebyshevRand;
  FineGridFunction f;
  FineGridFunction x;
  double x0 = 0.0;
  ObservationGrid grid;
  std::vector<double> y;
  double sigma = 0.0;

  int fine_grid_len() const { return f.size(); }
  std::vector<double> observation_times() const;
};

enum class DatasetKind { PointWise, TemporalGap };

struct GenerationConfig {
  DatasetKind kind = DatasetKind::PointWise;
  int n_records = 4096;
  int fine_grid_len = kPointwiseGridLen;
  double noise_lambda = 0.1;
  std::array<double, 3> family_mix{0.5, 0.5, 0.0};  // indexed by Family
  std::uint64_t base_seed = 0;

  static GenerationConfig defaults(DatasetKind kind);
  void validate() const;
};

// Zipf(2) truncated to 1..max_degree.
double zipf_probability(int m, int max_degree = kMaxChebyshevDegree);
int sample_zipf_degree(Rng& rng, int max_degree = kMaxChebyshevDegree);

// f(t) = sum_{m=1..M} a_m T_m(2t - 1); coeffs holds a_1..a_M.
FineGridFunction chebyshev_function(std::span<const double> coeffs, int len);
FineGridFunction sample_chebyshev(Rng& rng, int len = kPointwiseGridLen);

struct RbfKernel {
  double lengthscale;
};
struct PeriodicKernel {
  double lengthscale;
  double period;
};
using Kernel = std::variant<RbfKernel, PeriodicKernel>;

double kernel_value(const Kernel& k, double s, double t);
Eigen::MatrixXd gram_matrix(const Kernel& k, std::span<const double> times);

// Lengthscale ~ 1/2 Beta(2, 10) + 1/2 Beta(2, 5).
double sample_rbf_lengthscale(Rng& rng);
// Lengthscale ~ U(0.75, 1), period ~ U(0.3, 0.5).
PeriodicKernel sample_periodic_hyperparameters(Rng& rng);
double sample_beta(Rng& rng, double a, double b);

// One zero-mean GP draw. Jitter starts at 1e-6 of the mean diagonal and grows
// x10 up to 1e-2; throws RuntimeError if the factorization still fails.
FineGridFunction sample_gp(const Kernel& k, Rng& rng, int len = kPointwiseGridLen);

// x(t_i) = x0 + cumulative trapezoid of f.
FineGridFunction integrate_solution(const FineGridFunction& f, double x0);

ObservationGrid regular_grid(int len, int stride);
// Bernoulli mask with survival probability p, redrawn until >= L_min points.
ObservationGrid sample_irregular_grid(Rng& rng, int len, double p);
ObservationGrid sample_grid_pointwise(Rng& rng, int len = kPointwiseGridLen);

// Removes `gap_len` consecutive observations from `base`, leaving `position`
// equal-count observed sets to their left.
ObservationGrid insert_temporal_gap(const ObservationGrid& base, int gap_len, int position);
ObservationGrid sample_grid_temporal(Rng& rng, int len = kTemporalGridLen);

// Sizes of `parts` contiguous groups of n items; the remainder goes to the
// leftmost groups.
std::vector<int> equal_partition(int n, int parts);

struct NoisyObservations {
  std::vector<double> y;
  double sigma = 0.0;
};
// sigma = |N(0, lambda)| once per trajectory, y_i ~ N(x_i, sigma).
NoisyObservations apply_noise(std::span<const double> x_at_obs, double lambda, Rng& rng);

// Record `index` of the dataset described by `cfg`. Returns nullopt and
// fills `reason` if a sampler failed.
std::optional<GenerationRecord> generate_record(const GenerationConfig& cfg, std::uint64_t index,
                                                std::string* reason = nullptr);

// Generates all records (possibly concurrently) and hands them to `sink` in
// index order. Failed indices go to `on_skip` and are not renumbered.
void generate_dataset(const GenerationConfig& cfg, int threads,
                      const std::function<void(std::uint64_t, const GenerationRecord&)>& sink,
                      const std::function<void(std::uint64_t, const std::string&)>& on_skip = {});

}  // namespace fim::synthgen
