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

#include "fimkit/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Cholesky>

#include "fimkit/common.hpp"

namespace fim::synthgen {

std::vector<double> fine_grid(int len) { return linspace(0.0, 1.0, static_cast<std::size_t>(len)); }

const char* family_name(Family f) {
  switch (f) {
    case Family::ChebyshevRand:
      return "chebyshev";
    case Family::GpRbf:
      return "gp_rbf";
    case Family::GpPeriodic:
      return "gp_periodic";
  }
  return "unknown";
}

Family family_from_name(const std::string& name) {
  if (name == "chebyshev") return Family::ChebyshevRand;
  if (name == "gp_rbf") return Family::GpRbf;
  if (name == "gp_periodic") return Family::GpPeriodic;
  throw ValidationError("unknown function family '" + name + "'");
}

void ObservationGrid::validate(int fine_grid_len) const {
  if (size() < kMinObservations) {
    throw ValidationError("observation grid has " + std::to_string(size()) + " points, need at least 8");
  }
  if (size() > fine_grid_len) throw ValidationError("observation grid larger than fine grid");
  for (int i = 0; i < size(); ++i) {
    if (indices[i] < 0 || indices[i] >= fine_grid_len) throw ValidationError("observation index out of range");
    if (i > 0 && indices[i] <= indices[i - 1]) throw ValidationError("observation indices not increasing");
  }
  if (gap) {
    const auto [lo, hi] = *gap;
    if (lo > hi) throw ValidationError("gap range reversed");
    for (int idx : indices) {
      if (idx >= lo && idx <= hi) throw ValidationError("gap range contains an observation");
    }
  }
}

std::vector<double> GenerationRecord::observation_times() const {
  std::vector<double> out;
  out.reserve(grid.indices.size());
  for (int idx : grid.indices) out.push_back(f.time(idx));
  return out;
}

GenerationConfig GenerationConfig::defaults(DatasetKind kind) {
  GenerationConfig cfg;
  cfg.kind = kind;
  if (kind == DatasetKind::TemporalGap) {
    cfg.fine_grid_len = kTemporalGridLen;
    cfg.noise_lambda = 0.05;
    cfg.family_mix = {0.0, 0.0, 1.0};
  }
  return cfg;
}

void GenerationConfig::validate() const {
  if (n_records <= 0) throw ValidationError("n_records must be positive");
  if (fine_grid_len < kMinObservations) throw ValidationError("fine_grid_len must be at least 8");
  if (!(noise_lambda >= 0.0) || !std::isfinite(noise_lambda)) {
    throw ValidationError("noise_lambda must be finite and non-negative");
  }
  double total = 0.0;
  for (double p : family_mix) {
    if (!(p >= 0.0)) throw ValidationError("family_mix entries must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("family_mix must sum to 1 (got " + std::to_string(total) + ")");
  }
}

double zipf_probability(int m, int max_degree) {
  if (m < 1 || m > max_degree) return 0.0;
  double norm = 0.0;
  for (int k = 1; k <= max_degree; ++k) norm += 1.0 / (static_cast<double>(k) * k);
  return 1.0 / (static_cast<double>(m) * m) / norm;
}

int sample_zipf_degree(Rng& rng, int max_degree) {
  double norm = 0.0;
  for (int k = 1; k <= max_degree; ++k) norm += 1.0 / (static_cast<double>(k) * k);
  const double u = std::uniform_real_distribution<double>(0.0, norm)(rng);
  double acc = 0.0;
  for (int k = 1; k <= max_degree; ++k) {
    acc += 1.0 / (static_cast<double>(k) * k);
    if (u < acc) return k;
  }
  return max_degree;
}

FineGridFunction chebyshev_function(std::span<const double> coeffs, int len) {
  FineGridFunction f;
  f.values.assign(static_cast<std::size_t>(len), 0.0);
  for (int i = 0; i < len; ++i) {
    const double u = 2.0 * f.time(i) - 1.0;
    double t_prev = 1.0;  // T_0
    double t_cur = u;     // T_1
    double acc = 0.0;
    for (std::size_t m = 1; m <= coeffs.size(); ++m) {
      acc += coeffs[m - 1] * t_cur;
      const double t_next = 2.0 * u * t_cur - t_prev;
      t_prev = t_cur;
      t_cur = t_next;
    }
    f.values[static_cast<std::size_t>(i)] = acc;
  }
  return f;
}

FineGridFunction sample_chebyshev(Rng& rng, int len) {
  const int degree = sample_zipf_degree(rng);
  std::normal_distribution<double> coeff(0.0, 1.0 / std::sqrt(static_cast<double>(degree)));
  std::vector<double> a(static_cast<std::size_t>(degree));
  for (auto& c : a) c = coeff(rng);
  return chebyshev_function(a, len);
}

double kernel_value(const Kernel& k, double s, double t) {
  const double d = s - t;
  if (const auto* rbf = std::get_if<RbfKernel>(&k)) {
    return std::exp(-0.5 * d * d / (rbf->lengthscale * rbf->lengthscale));
  }
  const auto& per = std::get<PeriodicKernel>(k);
  const double sn = std::sin(std::numbers::pi * std::abs(d) / per.period);
  return std::exp(-2.0 * sn * sn / (per.lengthscale * per.lengthscale));
}

Eigen::MatrixXd gram_matrix(const Kernel& k, std::span<const double> times) {
  const auto n = static_cast<Eigen::Index>(times.size());
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = kernel_value(k, times[static_cast<std::size_t>(i)], times[static_cast<std::size_t>(j)]);
      gram(i, j) = v;
      gram(j, i) = v;
    }
  }
  return gram;
}

double sample_beta(Rng& rng, double a, double b) {
  const double x = std::gamma_distribution<double>(a, 1.0)(rng);
  const double y = std::gamma_distribution<double>(b, 1.0)(rng);
  return x / (x + y);
}

double sample_rbf_lengthscale(Rng& rng) {
  const bool first = std::bernoulli_distribution(0.5)(rng);
  return first ? sample_beta(rng, 2.0, 10.0) : sample_beta(rng, 2.0, 5.0);
}

PeriodicKernel sample_periodic_hyperparameters(Rng& rng) {
  PeriodicKernel k{};
  k.lengthscale = std::uniform_real_distribution<double>(0.75, 1.0)(rng);
  k.period = std::uniform_real_distribution<double>(0.3, 0.5)(rng);
  return k;
}

FineGridFunction sample_gp(const Kernel& k, Rng& rng, int len) {
  const auto grid = fine_grid(len);
  const Eigen::MatrixXd gram = gram_matrix(k, grid);
  const double mean_diag = gram.diagonal().mean();

  Eigen::LLT<Eigen::MatrixXd> llt;
  bool ok = false;
  for (double jitter = 1e-6; jitter <= 1e-2 * (1.0 + 1e-9); jitter *= 10.0) {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += jitter * mean_diag;
    llt.compute(a);
    if (llt.info() == Eigen::Success) {
      ok = true;
      break;
    }
  }
  if (!ok) throw RuntimeError("GP Cholesky failed after maximum jitter");

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(len);
  for (int i = 0; i < len; ++i) z(i) = normal(rng);
  const Eigen::VectorXd sample = llt.matrixL() * z;

  FineGridFunction f;
  f.values.assign(sample.data(), sample.data() + sample.size());
  return f;
}

FineGridFunction integrate_solution(const FineGridFunction& f, double x0) {
  FineGridFunction x;
  x.values = cumulative_trapezoid(fine_grid(f.size()), f.values, x0);
  return x;
}

ObservationGrid regular_grid(int len, int stride) {
  ObservationGrid g;
  g.scheme = GridScheme::Regular;
  g.stride = stride;
  for (int i = 0; i < len; i += stride) g.indices.push_back(i);
  return g;
}

ObservationGrid sample_irregular_grid(Rng& rng, int len, double p) {
  ObservationGrid g;
  g.scheme = GridScheme::Irregular;
  g.survival_prob = p;
  std::bernoulli_distribution keep(p);
  do {
    g.indices.clear();
    for (int i = 0; i < len; ++i) {
      if (keep(rng)) g.indices.push_back(i);
    }
  } while (g.size() < kMinObservations);
  return g;
}

ObservationGrid sample_grid_pointwise(Rng& rng, int len) {
  if (std::bernoulli_distribution(0.5)(rng)) {
    const int stride = std::uniform_int_distribution<int>(1, 16)(rng);
    ObservationGrid g = regular_grid(len, stride);
    if (g.size() >= kMinObservations) return g;
    // Strides leaving fewer than L_min points only arise for short custom grids.
    return sample_irregular_grid(rng, len, 0.5);
  }
  static constexpr std::array<double, 3> kSurvival{0.0625, 0.25, 0.5};
  std::discrete_distribution<int> which({0.5, 0.25, 0.25});
  return sample_irregular_grid(rng, len, kSurvival[static_cast<std::size_t>(which(rng))]);
}

std::vector<int> equal_partition(int n, int parts) {
  std::vector<int> sizes(static_cast<std::size_t>(parts), n / parts);
  for (int i = 0; i < n % parts; ++i) ++sizes[static_cast<std::size_t>(i)];
  return sizes;
}

ObservationGrid insert_temporal_gap(const ObservationGrid& base, int gap_len, int position) {
  const int n = base.size();
  if (position < 1 || position > kObservedSets - 1) throw ValidationError("gap position must be in 1..3");
  if (gap_len < 1 || n - gap_len < kObservedSets) throw ValidationError("gap too long for the observation grid");
  const auto sizes = equal_partition(n - gap_len, kObservedSets);
  const int left = std::accumulate(sizes.begin(), sizes.begin() + position, 0);

  ObservationGrid g = base;
  g.indices.clear();
  for (int i = 0; i < n; ++i) {
    if (i < left || i >= left + gap_len) g.indices.push_back(base.indices[static_cast<std::size_t>(i)]);
  }
  g.gap = std::make_pair(base.indices[static_cast<std::size_t>(left)],
                         base.indices[static_cast<std::size_t>(left + gap_len - 1)]);
  g.gap_position = position;
  return g;
}

ObservationGrid sample_grid_temporal(Rng& rng, int len) {
  ObservationGrid base;
  if (std::bernoulli_distribution(0.5)(rng)) {
    base = regular_grid(len, std::uniform_int_distribution<int>(1, 4)(rng));
  } else {
    base = sample_irregular_grid(rng, len, 0.5);
  }
  const int position = std::uniform_int_distribution<int>(1, 3)(rng);
  std::uniform_int_distribution<int> gap_dist(10, 30);
  int gap_len = gap_dist(rng);
  // Keep at least two observations in every observed set.
  const int max_gap = base.size() - 2 * kObservedSets;
  if (max_gap < 1) throw RuntimeError("observation grid too sparse for a temporal gap");
  gap_len = std::min(gap_len, max_gap);
  return insert_temporal_gap(base, gap_len, position);
}

NoisyObservations apply_noise(std::span<const double> x_at_obs, double lambda, Rng& rng) {
  NoisyObservations out;
  out.sigma = lambda > 0.0 ? std::abs(std::normal_distribution<double>(0.0, lambda)(rng)) : 0.0;
  out.y.assign(x_at_obs.begin(), x_at_obs.end());
  if (out.sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : out.y) v += out.sigma * normal(rng);
  }
  return out;
}

std::optional<GenerationRecord> generate_record(const GenerationConfig& cfg, std::uint64_t index,
                                                std::string* reason) {
  GenerationRecord rec;
  rec.seed = derive_seed(cfg.base_seed, index);
  Rng rng(rec.seed);
  try {
    std::discrete_distribution<int> family_dist(cfg.family_mix.begin(), cfg.family_mix.end());
    rec.family = static_cast<Family>(family_dist(rng));
    switch (rec.family) {
      case Family::ChebyshevRand:
        rec.f = sample_chebyshev(rng, cfg.fine_grid_len);
        break;
      case Family::GpRbf:
        rec.f = sample_gp(RbfKernel{sample_rbf_lengthscale(rng)}, rng, cfg.fine_grid_len);
        break;
      case Family::GpPeriodic:
        rec.f = sample_gp(sample_periodic_hyperparameters(rng), rng, cfg.fine_grid_len);
        break;
    }
    rec.x0 = std::normal_distribution<double>(0.0, 1.0)(rng);
    rec.x = integrate_solution(rec.f, rec.x0);
    rec.grid = cfg.kind == DatasetKind::TemporalGap ? sample_grid_temporal(rng, cfg.fine_grid_len)
                                                    : sample_grid_pointwise(rng, cfg.fine_grid_len);
    std::vector<double> x_obs;
    x_obs.reserve(rec.grid.indices.size());
    for (int idx : rec.grid.indices) x_obs.push_back(rec.x.values[static_cast<std::size_t>(idx)]);
    auto noisy = apply_noise(x_obs, cfg.noise_lambda, rng);
    rec.y = std::move(noisy.y);
    rec.sigma = noisy.sigma;
  } catch (const std::exception& e) {
    if (reason) *reason = e.what();
    return std::nullopt;
  }
  return rec;
}

void generate_dataset(const GenerationConfig& cfg, int threads,
                      const std::function<void(std::uint64_t, const GenerationRecord&)>& sink,
                      const std::function<void(std::uint64_t, const std::string&)>& on_skip) {
  cfg.validate();
  // Bounded blocks keep memory flat while the writer stays in index order.
  constexpr std::size_t kBlock = 1024;
  const auto total = static_cast<std::size_t>(cfg.n_records);
  for (std::size_t start = 0; start < total; start += kBlock) {
    const std::size_t count = std::min(kBlock, total - start);
    std::vector<std::optional<GenerationRecord>> block(count);
    std::vector<std::string> reasons(count);
    parallel_for(count, threads, [&](std::size_t i) {
      block[i] = generate_record(cfg, start + i, &reasons[i]);
    });
    for (std::size_t i = 0; i < count; ++i) {
      if (block[i]) {
        sink(start + i, *block[i]);
      } else if (on_skip) {
        on_skip(start + i, reasons[i]);
      }
    }
  }
}

}  // namespace fim::synthgen
