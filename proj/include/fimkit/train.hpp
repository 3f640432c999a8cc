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

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fimkit/fim_gap.hpp"
#include "fimkit/fim_local.hpp"
#include "fimkit/synthgen.hpp"

namespace fim::train {

enum class Stage { LocalFIM, GapFIM, FineTune };
const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct Schedule {
  enum class Kind { Constant, Cosine } kind = Kind::Constant;
  double lr_hi = 1e-3;  // the constant rate for Kind::Constant
  double lr_lo = 1e-6;
  // lr(e) = lo + (hi - lo) (1 + cos(pi e / (E - 1))) / 2 for cosine.
  double at(int epoch, int epochs) const;
};

struct TrainConfig {
  Stage stage = Stage::LocalFIM;
  Schedule schedule;
  double weight_decay = 1e-4;
  int batch_size = 64;
  int epochs = 2000;
  std::uint64_t seed = 0;
  double grad_clip = 10.0;  // global norm; <= 0 disables
  double val_fraction = 0.1;
  int threads = 1;
  int checkpoint_every = 0;  // epochs; writes epoch-NNNN.ckpt, 0 disables
  std::filesystem::path checkpoint_dir;  // empty disables checkpoints
  std::filesystem::path resume_from;     // checkpoint to continue from

  void validate() const;
  static TrainConfig defaults(Stage stage);
};

// ---- losses ---------------------------------------------------------------

// One point-wise record in normalized coordinates.
struct LocalExample {
  std::uint64_t seed = 0;
  std::vector<double> tau, y;  // normalized observations
  nn::Matrix t;                // L x 1 normalized fine-grid times
  nn::Matrix f;                // L x 1 normalized derivative
  nn::Matrix x;                // L x 1 normalized solution
  double x0 = 0.0;             // normalized solution at the first observation
  double dt = 0.0;             // normalized fine-grid spacing
};
LocalExample make_local_example(const synthgen::GenerationRecord& rec);

struct LossParts {
  double f_nll = 0.0;
  double euler = 0.0;
  double x0_nll = 0.0;
  double total() const { return f_nll + euler + x0_nll; }
};

// sum_i (f_i - m_i)^2 / (2 exp(v_i)) + v_i / 2
nn::Var gaussian_nll(const nn::Var& target, const nn::Var& mean, const nn::Var& log_var);

// Derivative NLL over every fine-grid point, one-step Euler error
// sum |x_{i+1} - (x_i + f_hat_i dt)| and initial-value NLL.
nn::Var loss_local(nn::Scope& s, const LocalExample& ex, LossParts* parts = nullptr);

// One temporal record prepared for the gap stage. The frozen set encodings
// are cached since they never change during gap training.
struct GapExample {
  std::uint64_t seed = 0;
  gap::SetFeatures features;
  int q = 1;
  double gap_first = 0.0, gap_last = 0.0;  // globally normalized
  nn::Matrix t;                            // M x 1 fine-grid times strictly inside the gap, normalized
  nn::Matrix f;                            // M x 1 globally normalized derivative
};
GapExample make_gap_example(const local::LocalModel& theta, const synthgen::GenerationRecord& rec);

// Derivative NLL over the fine-grid points inside the gap.
nn::Var loss_gap(nn::Scope& phi, nn::Scope& theta, const GapExample& ex, int heads);

// ---- optimizer --------------------------------------------------------------

class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(const nn::ParameterStore& layout, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Decoupled weight decay: p -= lr wd p, then the bias-corrected Adam step.
  void step(nn::ParameterStore& params, const nn::ParameterStore& grads, double lr, double weight_decay);

  long steps() const { return t_; }
  const nn::ParameterStore& first_moment() const { return m_; }
  const nn::ParameterStore& second_moment() const { return v_; }
  void restore(nn::ParameterStore m, nn::ParameterStore v, long t);

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  nn::ParameterStore m_, v_;
  long t_ = 0;
};

// Scales `grads` to global norm `max_norm` when above it; returns the norm
// before clipping.
double clip_global_norm(nn::ParameterStore& grads, double max_norm);

// ---- training loops -------------------------------------------------------

struct EpochMetrics {
  int epoch = 0;
  std::string split;  // "train" or "val"
  LossParts loss;     // per-record averages
  double lr = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  int epochs_run = 0;
  double best_val = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Deterministic split: the first ceil(fraction n) entries of a seeded
// permutation are held out.
struct DataSplit {
  std::vector<std::size_t> train, val;
};
DataSplit split_records(std::size_t n, double val_fraction, std::uint64_t seed);

TrainResult train_local(local::LocalModel& model, const std::vector<synthgen::GenerationRecord>& records,
                        const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Updates the gap parameters only; the local parameters are read through a
// frozen scope and never written.
TrainResult train_gap(gap::GapModel& model, const std::vector<synthgen::GenerationRecord>& records,
                      const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Held-out diagnostics for a local model.
struct LocalEvaluation {
  LossParts loss;            // per-record averages, dropout off
  double recon_mae = 0.0;    // |x_hat - x| over the fine grid
  double mean_mae = 0.0;     // same for the constant mean-of-observations predictor
};
LocalEvaluation evaluate_local(const local::LocalModel& model, const std::vector<synthgen::GenerationRecord>& records,
                               const std::vector<std::size_t>& indices, int threads = 1);
double evaluate_gap(const gap::GapModel& model, const std::vector<GapExample>& examples, int threads = 1);

// ---- reconstruction fine-tuning ---------------------------------------------

// Differentiable mean absolute error of the windowed reconstruction at the
// observation times of `series`.
nn::Var reconstruction_loss(nn::Scope& s, const TimeSeries& series, const local::Windowing& windowing);

struct FineTuneResult {
  std::vector<double> epoch_mae;  // mean over series, before each epoch's updates
  double final_mae = 0.0;
};
FineTuneResult finetune_reconstruction(local::LocalModel& model, const std::vector<TimeSeries>& series,
                                       const TrainConfig& cfg, const local::Windowing& windowing,
                                       const EpochCallback& on_epoch = {});
double reconstruction_mae(const local::LocalModel& model, const std::vector<TimeSeries>& series,
                          const local::Windowing& windowing, int threads = 1);

}  // namespace fim::train
