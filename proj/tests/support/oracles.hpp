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

// Independent reference implementations used as test oracles.

#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace fimtest {

// exp(M) by scaling and squaring of a truncated Taylor series.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& m) {
  const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  while (norm / std::pow(2.0, squarings) > 0.1) ++squarings;
  const Eigen::MatrixXd a = m / std::pow(2.0, squarings);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  Eigen::MatrixXd sum = term;
  for (int k = 1; k <= 20; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

struct NaiveMetrics {
  double mae, mse, rmse, mre, r2;
};

// Element-by-element loops over [time][dim] arrays.
inline NaiveMetrics naive_metrics(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& xh,
                                  const std::vector<std::vector<double>>& m) {
  const std::size_t L = x.size(), D = x[0].size();
  double abs_sum = 0.0, sq_sum = 0.0, msum = 0.0, xabs = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t d = 0; d < D; ++d) {
      abs_sum += std::abs(x[i][d] - xh[i][d]) * m[i][d];
      sq_sum += (x[i][d] - xh[i][d]) * (x[i][d] - xh[i][d]) * m[i][d];
      msum += m[i][d];
      xabs += std::abs(x[i][d]) * m[i][d];
    }
  }
  double r2 = 0.0;
  for (std::size_t d = 0; d < D; ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < L; ++i) mean += x[i][d];
    mean /= static_cast<double>(L);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
      num += (x[i][d] - xh[i][d]) * (x[i][d] - xh[i][d]);
      den += (x[i][d] - mean) * (x[i][d] - mean);
    }
    r2 += 1.0 - num / den;
  }
  const double mse = sq_sum / msum;
  return {abs_sum / msum, mse, std::sqrt(mse), abs_sum / xabs, r2 / static_cast<double>(D)};
}

}  // namespace fimtest
