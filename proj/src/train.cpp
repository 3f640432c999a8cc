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

#include "fimkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fimkit/nn/weights_io.hpp"

namespace fim::train {

using nn::Matrix;
using nn::ParameterStore;
using nn::Var;
using json = nlohmann::json;

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::LocalFIM:
      return "local";
    case Stage::GapFIM:
      return "gap";
    case Stage::FineTune:
      return "finetune";
  }
  return "?";
}

Stage stage_from_name(const std::string& name) {
  if (name == "local") return Stage::LocalFIM;
  if (name == "gap") return Stage::GapFIM;
  if (name == "finetune") return Stage::FineTune;
  throw ValidationError("unknown stage '" + name + "' (expected local, gap or finetune)");
}

double Schedule::at(int epoch, int epochs) const {
  if (kind == Kind::Constant || epochs <= 1) return lr_hi;
  const double c = std::cos(std::numbers::pi * epoch / static_cast<double>(epochs - 1));
  return lr_lo + 0.5 * (lr_hi - lr_lo) * (1.0 + c);
}

void TrainConfig::validate() const {
  if (!(schedule.lr_hi >= 0.0) || !std::isfinite(schedule.lr_hi)) throw ValidationError("train.lr must be >= 0");
  if (schedule.kind == Schedule::Kind::Cosine && !(schedule.lr_lo >= 0.0)) {
    throw ValidationError("train.lr_min must be >= 0");
  }
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (epochs < 0) throw ValidationError("train.epochs must be >= 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("train.weight_decay must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ValidationError("train.val_fraction must be in [0, 1)");
  if (checkpoint_every < 0) throw ValidationError("train.checkpoint_every must be >= 0");
}

TrainConfig TrainConfig::defaults(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  switch (stage) {
    case Stage::LocalFIM:
      c.schedule = {Schedule::Kind::Constant, 1e-3, 1e-3};
      c.weight_decay = 1e-4;
      c.epochs = 2000;
      break;
    case Stage::GapFIM:
      c.schedule = {Schedule::Kind::Cosine, 1e-3, 1e-6};
      c.weight_decay = 1e-3;
      c.epochs = 400;
      break;
    case Stage::FineTune:
      c.schedule = {Schedule::Kind::Constant, 1e-5, 1e-5};
      c.weight_decay = 0.0;
      c.batch_size = 1;
      c.epochs = 10;
      c.val_fraction = 0.0;
      break;
  }
  return c;
}

// ---- losses ---------------------------------------------------------------

LocalExample make_local_example(const synthgen::GenerationRecord& rec) {
  const int len = rec.fine_grid_len();
  const auto& idx = rec.grid.indices;
  if (idx.size() < 2) throw ValidationError(fmt::format("record {}: fewer than 2 observations", rec.seed));
  std::vector<double> obs_t(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) obs_t[i] = rec.f.time(idx[i]);
  const auto norm = local::fit_normalization(obs_t, rec.y);

  LocalExample ex;
  ex.seed = rec.seed;
  ex.tau.resize(idx.size());
  ex.y.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    ex.tau[i] = norm.time_to_norm(obs_t[i]);
    ex.y[i] = norm.value_to_norm(rec.y[i]);
  }
  const double rate = norm.dtau() / norm.dy();
  ex.t.resize(len, 1);
  ex.f.resize(len, 1);
  ex.x.resize(len, 1);
  for (int i = 0; i < len; ++i) {
    const auto k = static_cast<std::size_t>(i);
    ex.t(i, 0) = norm.time_to_norm(rec.f.time(i));
    ex.f(i, 0) = rec.f.values[k] * rate;
    ex.x(i, 0) = norm.value_to_norm(rec.x.values[k]);
  }
  ex.x0 = ex.x(idx.front(), 0);
  ex.dt = (rec.f.time(1) - rec.f.time(0)) / norm.dtau();
  return ex;
}

Var gaussian_nll(const Var& target, const Var& mean, const Var& log_var) {
  Var sq = nn::square(nn::sub(target, mean));
  Var quad = nn::mul(sq, nn::exp(nn::neg(log_var)));
  return nn::add(nn::scale(nn::sum(quad), 0.5), nn::scale(nn::sum(log_var), 0.5));
}

Var loss_local(nn::Scope& s, const LocalExample& ex, LossParts* parts) {
  Var u = local::encode_context(s, ex.tau, ex.y);
  auto f = local::derivative_heads(s, local::trunk(s, nn::constant(ex.t)), u);
  auto x0 = local::initial_heads(s, u);

  Var f_nll = gaussian_nll(nn::constant(ex.f), f.mean, f.log_var);

  const auto steps = ex.x.rows() - 1;
  Var next = nn::constant(ex.x.bottomRows(steps));
  Var prev = nn::constant(ex.x.topRows(steps));
  Var euler_pred = nn::add(prev, nn::scale(nn::slice_rows(f.mean, 0, steps), ex.dt));
  Var euler = nn::sum(nn::abs(nn::sub(next, euler_pred)));

  Var x0_nll = gaussian_nll(nn::constant_scalar(ex.x0), x0.mean, x0.log_var);
  Var total = nn::add(nn::add(f_nll, euler), x0_nll);
  if (parts) {
    parts->f_nll = f_nll->value(0, 0);
    parts->euler = euler->value(0, 0);
    parts->x0_nll = x0_nll->value(0, 0);
  }
  return total;
}

GapExample make_gap_example(const local::LocalModel& theta, const synthgen::GenerationRecord& rec) {
  if (!rec.grid.gap) throw ValidationError(fmt::format("record {} has no gap", rec.seed));
  const auto [lo, hi] = *rec.grid.gap;
  const auto& idx = rec.grid.indices;
  std::vector<double> obs_t(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) obs_t[i] = rec.f.time(idx[i]);
  const auto split = gap::split_sets(obs_t, rec.f.time(lo), rec.f.time(hi));
  const auto norm = local::fit_normalization(obs_t, rec.y);
  std::vector<double> tau(idx.size()), y(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    tau[i] = norm.time_to_norm(obs_t[i]);
    y[i] = norm.value_to_norm(rec.y[i]);
  }

  GapExample ex;
  ex.seed = rec.seed;
  ex.features = gap::set_features(theta, tau, y, split);
  ex.q = split.q;
  ex.gap_first = norm.time_to_norm(split.gap_first);
  ex.gap_last = norm.time_to_norm(split.gap_last);
  // Every fine-grid point strictly between the observations bounding the gap.
  const auto after = std::upper_bound(idx.begin(), idx.end(), hi);
  const int first = *(after - 1) + 1;
  const int last = *after - 1;
  const int m = last - first + 1;
  if (m < 1) throw ValidationError(fmt::format("record {}: empty gap", rec.seed));
  const double rate = norm.dtau() / norm.dy();
  ex.t.resize(m, 1);
  ex.f.resize(m, 1);
  for (int i = 0; i < m; ++i) {
    ex.t(i, 0) = norm.time_to_norm(rec.f.time(first + i));
    ex.f(i, 0) = rec.f.values[static_cast<std::size_t>(first + i)] * rate;
  }
  return ex;
}

Var loss_gap(nn::Scope& phi, nn::Scope& theta, const GapExample& ex, int heads) {
  Var u_q = gap::gap_context(phi, ex.features, ex.q, heads);
  auto f = gap::gap_query(theta, u_q, nn::constant(ex.t), ex.gap_first, ex.gap_last);
  return gaussian_nll(nn::constant(ex.f), f.mean, f.log_var);
}

// ---- optimizer --------------------------------------------------------------

AdamW::AdamW(const ParameterStore& layout, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(layout.zeros_like()), v_(layout.zeros_like()) {}

void AdamW::step(ParameterStore& params, const ParameterStore& grads, double lr, double weight_decay) {
  if (!params.same_layout(grads) || !params.same_layout(m_)) throw ValidationError("AdamW: layout mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& name : params.names()) {
    Matrix& p = params.at(name);
    const Matrix& g = grads.at(name);
    Matrix& m = m_.at(name);
    Matrix& v = v_.at(name);
    if (weight_decay != 0.0) p -= (lr * weight_decay) * p;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
  }
}

void AdamW::restore(ParameterStore m, ParameterStore v, long t) {
  if (!m.same_layout(m_) || !v.same_layout(v_)) throw ValidationError("AdamW: checkpoint state layout mismatch");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

double clip_global_norm(ParameterStore& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& name : grads.names()) grads.at(name) *= s;
  }
  return norm;
}

// ---- training loops -------------------------------------------------------

std::string metrics_csv_header() { return "epoch,split,loss_f_nll,loss_euler,loss_x0,total\n"; }

std::string metrics_csv_row(const EpochMetrics& m) {
  return fmt::format("{},{},{:.10g},{:.10g},{:.10g},{:.10g}\n", m.epoch, m.split, m.loss.f_nll, m.loss.euler,
                     m.loss.x0_nll, m.loss.total());
}

DataSplit split_records(std::size_t n, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0x5e11));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(n)));
  if (n_val >= n) n_val = n > 1 ? n - 1 : 0;
  DataSplit s;
  s.val.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

namespace {

// Loss of example i. With `grads` set the gradient is added into it;
// `rng` drives dropout when training.
using ExampleFn = std::function<LossParts(std::size_t i, bool training, std::mt19937_64* rng, ParameterStore* grads)>;

LossParts average(const std::vector<LossParts>& parts) {
  LossParts a;
  if (parts.empty()) return a;
  for (const auto& p : parts) {
    a.f_nll += p.f_nll;
    a.euler += p.euler;
    a.x0_nll += p.x0_nll;
  }
  const double n = static_cast<double>(parts.size());
  a.f_nll /= n;
  a.euler /= n;
  a.x0_nll /= n;
  return a;
}

struct Checkpoint {
  std::filesystem::path path;
  std::function<json()> model_meta;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params, const AdamW& opt, int next_epoch,
                     double best_val, const std::vector<EpochMetrics>& metrics, const json& model_meta) {
  ParameterStore all;
  for (const auto& n : params.names()) all.add("param:" + n, params.at(n));
  for (const auto& n : params.names()) all.add("adam.m:" + n, opt.first_moment().at(n));
  for (const auto& n : params.names()) all.add("adam.v:" + n, opt.second_moment().at(n));
  json rows = json::array();
  for (const auto& m : metrics) {
    rows.push_back({m.epoch, m.split, m.loss.f_nll, m.loss.euler, m.loss.x0_nll, m.lr});
  }
  json meta{{"checkpoint", true}, {"next_epoch", next_epoch}, {"adam_steps", opt.steps()},
            {"best_val", best_val},  {"metrics", rows},         {"model", model_meta}};
  nn::save_weights(path, all, meta, nn::WeightDtype::F64);
}

struct Resumed {
  int next_epoch = 0;
  double best_val = 0.0;
  std::vector<EpochMetrics> metrics;
};

Resumed load_checkpoint(const std::filesystem::path& path, ParameterStore& params, AdamW& opt) {
  json meta;
  ParameterStore all = nn::load_weights(path, &meta);
  if (!meta.value("checkpoint", false)) throw ValidationError(path.string() + " is not a training checkpoint");
  ParameterStore m, v;
  for (const auto& n : params.names()) {
    params.set(n, all.at("param:" + n));
    m.add(n, all.at("adam.m:" + n));
    v.add(n, all.at("adam.v:" + n));
  }
  opt.restore(std::move(m), std::move(v), meta.at("adam_steps").get<long>());
  Resumed r;
  r.next_epoch = meta.at("next_epoch").get<int>();
  r.best_val = meta.at("best_val").get<double>();
  for (const auto& row : meta.at("metrics")) {
    EpochMetrics e;
    e.epoch = row.at(0).get<int>();
    e.split = row.at(1).get<std::string>();
    e.loss = {row.at(2).get<double>(), row.at(3).get<double>(), row.at(4).get<double>()};
    e.lr = row.at(5).get<double>();
    r.metrics.push_back(e);
  }
  return r;
}

LossParts evaluate_examples(const std::vector<std::size_t>& indices, const ExampleFn& fn, int threads) {
  std::vector<LossParts> parts(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t k) { parts[k] = fn(indices[k], false, nullptr, nullptr); });
  return average(parts);
}

// Shared minibatch loop for the local and gap stages.
TrainResult run_training(ParameterStore& params, std::size_t n_examples, const ExampleFn& fn, const TrainConfig& cfg,
                         const json& model_meta, const std::function<void(const std::filesystem::path&)>& save_best,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  const DataSplit split = split_records(n_examples, cfg.val_fraction, cfg.seed);
  if (split.train.empty() && cfg.epochs > 0) throw ValidationError("no training records");
  AdamW opt(params);
  TrainResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  int start = 0;
  if (!cfg.resume_from.empty()) {
    const auto r = load_checkpoint(cfg.resume_from, params, opt);
    start = r.next_epoch;
    result.best_val = r.best_val;
    result.metrics = r.metrics;
  }
  const bool checkpoints = !cfg.checkpoint_dir.empty();
  if (checkpoints) std::filesystem::create_directories(cfg.checkpoint_dir);
  const int threads = resolve_threads(cfg.threads);

  for (int epoch = start; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.schedule.at(epoch, cfg.epochs);
    std::vector<std::size_t> order = split.train;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    std::vector<LossParts> epoch_parts;
    epoch_parts.reserve(order.size());
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t nb = b1 - b0;
      std::vector<ParameterStore> grads(nb);
      std::vector<LossParts> parts(nb);
      parallel_for(nb, threads, [&](std::size_t k) {
        const std::size_t idx = order[b0 + k];
        std::mt19937_64 rng(derive_seed(cfg.seed, 2 + static_cast<std::uint64_t>(epoch), idx));
        grads[k] = params.zeros_like();
        parts[k] = fn(idx, true, &rng, &grads[k]);
      });
      ParameterStore total = params.zeros_like();
      for (std::size_t k = 0; k < nb; ++k) {
        if (!std::isfinite(parts[k].total())) {
          throw RuntimeError(fmt::format("non-finite loss at epoch {} on record index {}", epoch, order[b0 + k]));
        }
        total.add_scaled(grads[k], 1.0);
        epoch_parts.push_back(parts[k]);
      }
      for (const auto& name : total.names()) total.at(name) /= static_cast<double>(nb);
      const double norm = clip_global_norm(total, cfg.grad_clip);
      if (!std::isfinite(norm)) throw RuntimeError(fmt::format("non-finite gradient at epoch {}", epoch));
      opt.step(params, total, lr, cfg.weight_decay);
    }

    EpochMetrics train_m{epoch, "train", average(epoch_parts), lr};
    result.metrics.push_back(train_m);
    if (on_epoch) on_epoch(train_m);
    if (!split.val.empty()) {
      EpochMetrics val_m{epoch, "val", evaluate_examples(split.val, fn, threads), lr};
      result.metrics.push_back(val_m);
      if (on_epoch) on_epoch(val_m);
      if (val_m.loss.total() < result.best_val) {
        result.best_val = val_m.loss.total();
        if (checkpoints && save_best) save_best(cfg.checkpoint_dir / "best.fimw");
      }
    }
    result.epochs_run = epoch + 1;
    const bool periodic = cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0;
    if (checkpoints && periodic) {
      save_checkpoint(cfg.checkpoint_dir / fmt::format("epoch-{:04d}.ckpt", epoch + 1), params, opt, epoch + 1,
                      result.best_val, result.metrics, model_meta);
    }
    if (checkpoints && (periodic || epoch + 1 == cfg.epochs)) {
      save_checkpoint(cfg.checkpoint_dir / "last.ckpt", params, opt, epoch + 1, result.best_val, result.metrics,
                      model_meta);
    }
  }
  if (result.epochs_run < start) result.epochs_run = start;
  return result;
}

}  // namespace

TrainResult train_local(local::LocalModel& model, const std::vector<synthgen::GenerationRecord>& records,
                        const TrainConfig& cfg, const EpochCallback& on_epoch) {
  for (const auto& r : records) {
    if (r.grid.gap) throw ValidationError("local training expects a point-wise dataset (record has a gap)");
  }
  std::vector<LocalExample> examples(records.size());
  parallel_for(records.size(), resolve_threads(cfg.threads),
               [&](std::size_t i) { examples[i] = make_local_example(records[i]); });
  const double dropout = model.config().dropout;
  ParameterStore& params = model.params();
  ExampleFn fn = [&](std::size_t i, bool training, std::mt19937_64* rng, ParameterStore* grads) {
    LossParts parts;
    if (grads == nullptr) {
      nn::NoGradGuard guard;
      nn::Scope s(params, false);
      loss_local(s, examples[i], &parts);
      return parts;
    }
    nn::Scope s(params, true, {training, dropout, rng});
    Var loss = loss_local(s, examples[i], &parts);
    nn::backward(loss);
    s.accumulate_gradients(*grads);
    return parts;
  };
  return run_training(params, examples.size(), fn, cfg, model.meta(),
                      [&](const std::filesystem::path& p) { model.save(p, nn::WeightDtype::F64); }, on_epoch);
}

TrainResult train_gap(gap::GapModel& model, const std::vector<synthgen::GenerationRecord>& records,
                      const TrainConfig& cfg, const EpochCallback& on_epoch) {
  std::vector<GapExample> examples(records.size());
  parallel_for(records.size(), resolve_threads(cfg.threads), [&](std::size_t i) {
    if (!records[i].grid.gap) throw ValidationError("gap training expects a temporal dataset (record has no gap)");
    examples[i] = make_gap_example(model.theta(), records[i]);
  });
  const double dropout = model.theta().config().dropout;
  const int heads = model.theta().config().attn_heads;
  ParameterStore& phi = model.phi();
  const ParameterStore& theta = model.theta().params();
  ExampleFn fn = [&](std::size_t i, bool training, std::mt19937_64* rng, ParameterStore* grads) {
    LossParts parts;
    if (grads == nullptr) {
      nn::NoGradGuard guard;
      nn::Scope sp(phi, false), st(theta, false);
      parts.f_nll = loss_gap(sp, st, examples[i], heads)->value(0, 0);
      return parts;
    }
    nn::Scope sp(phi, true, {training, dropout, rng});
    nn::Scope st(theta, false);
    Var loss = loss_gap(sp, st, examples[i], heads);
    nn::backward(loss);
    sp.accumulate_gradients(*grads);
    parts.f_nll = loss->value(0, 0);
    return parts;
  };
  json meta{{"model", "fim_gap"}, {"net", model.theta().config().to_json()}};
  return run_training(phi, examples.size(), fn, cfg, meta,
                      [&](const std::filesystem::path& p) { model.save(p, nn::WeightDtype::F64); }, on_epoch);
}

LocalEvaluation evaluate_local(const local::LocalModel& model, const std::vector<synthgen::GenerationRecord>& records,
                               const std::vector<std::size_t>& indices, int threads) {
  auto shared = std::make_shared<const local::LocalModel>(model);
  std::vector<LossParts> parts(indices.size());
  std::vector<double> recon(indices.size()), naive(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t k) {
    const auto& rec = records[indices[k]];
    const LocalExample ex = make_local_example(rec);
    {
      nn::NoGradGuard guard;
      nn::Scope s(model.params(), false);
      loss_local(s, ex, &parts[k]);
    }
    TimeSeries ts;
    for (std::size_t i = 0; i < rec.grid.indices.size(); ++i) {
      ts.times.push_back(rec.f.time(rec.grid.indices[i]));
      ts.values.push_back(rec.y[i]);
    }
    const auto out = local::infer(shared, ts);
    std::vector<double> grid(static_cast<std::size_t>(rec.fine_grid_len()));
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = rec.f.time(static_cast<int>(i));
    const auto xhat = out->values(grid);
    const double mean_y = std::accumulate(rec.y.begin(), rec.y.end(), 0.0) / static_cast<double>(rec.y.size());
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      e1 += std::abs(xhat[i] - rec.x.values[i]);
      e2 += std::abs(mean_y - rec.x.values[i]);
    }
    recon[k] = e1 / static_cast<double>(grid.size());
    naive[k] = e2 / static_cast<double>(grid.size());
  });
  LocalEvaluation ev;
  ev.loss = average(parts);
  if (!indices.empty()) {
    ev.recon_mae = std::accumulate(recon.begin(), recon.end(), 0.0) / static_cast<double>(indices.size());
    ev.mean_mae = std::accumulate(naive.begin(), naive.end(), 0.0) / static_cast<double>(indices.size());
  }
  return ev;
}

double evaluate_gap(const gap::GapModel& model, const std::vector<GapExample>& examples, int threads) {
  std::vector<double> losses(examples.size());
  const int heads = model.theta().config().attn_heads;
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    nn::NoGradGuard guard;
    nn::Scope sp(model.phi(), false), st(model.theta().params(), false);
    losses[i] = loss_gap(sp, st, examples[i], heads)->value(0, 0);
  });
  if (losses.empty()) return 0.0;
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

// ---- reconstruction fine-tuning ---------------------------------------------

namespace {

// Linear map from the dense-grid derivative to the reconstructed solution
// (minus x0) at normalized times `s`: interpolation after cumulative trapezoid.
Matrix reconstruction_operator(const std::vector<double>& grid, std::span<const double> s) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  Matrix cum = Matrix::Zero(n, n);
  for (Eigen::Index k = 1; k < n; ++k) {
    cum.row(k) = cum.row(k - 1);
    const double h = grid[static_cast<std::size_t>(k)] - grid[static_cast<std::size_t>(k - 1)];
    cum(k, k - 1) += 0.5 * h;
    cum(k, k) += 0.5 * h;
  }
  Matrix interp = Matrix::Zero(static_cast<Eigen::Index>(s.size()), n);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double x = std::clamp(s[i], 0.0, 1.0);
    std::size_t hi = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), x) - grid.begin());
    hi = std::clamp<std::size_t>(hi, 1, grid.size() - 1);
    const std::size_t lo = hi - 1;
    const double w = (x - grid[lo]) / (grid[hi] - grid[lo]);
    interp(r, static_cast<Eigen::Index>(lo)) += 1.0 - w;
    interp(r, static_cast<Eigen::Index>(hi)) += w;
  }
  return interp * cum;
}

}  // namespace

Var reconstruction_loss(nn::Scope& s, const TimeSeries& series, const local::Windowing& windowing) {
  series.validate();
  const TimeSeries obs = series.observed_only();
  const auto ranges = local::plan_windows(obs.times, windowing);
  const auto n = static_cast<Eigen::Index>(obs.size());
  Var total;
  for (std::size_t w = 0; w < ranges.size(); ++w) {
    const auto& r = ranges[w];
    const std::span<const double> st(obs.times.data() + r.first, r.count());
    const std::span<const double> sy(obs.values.data() + r.first, r.count());
    const auto norm = local::fit_normalization(st, sy);
    std::vector<double> tau(r.count()), y(r.count());
    for (std::size_t i = 0; i < r.count(); ++i) {
      tau[i] = norm.time_to_norm(st[i]);
      y[i] = norm.value_to_norm(sy[i]);
    }
    Var u = local::encode_context(s, tau, y);
    const auto grid = linspace(0.0, 1.0, static_cast<std::size_t>(local::reconstruction_grid_size(r.count())));
    Matrix tg(static_cast<Eigen::Index>(grid.size()), 1);
    for (std::size_t i = 0; i < grid.size(); ++i) tg(static_cast<Eigen::Index>(i), 0) = grid[i];
    auto f = local::derivative_heads(s, local::trunk(s, nn::constant(tg)), u);
    auto x0 = local::initial_heads(s, u);
    Var xn = nn::add(nn::matmul(nn::constant(reconstruction_operator(grid, tau)), f.mean), x0.mean);
    Var x = nn::add_scalar(nn::scale(xn, norm.dy()), norm.y_min);

    // Blend weights of this window at every observation of the series.
    Matrix weights = Matrix::Zero(n, static_cast<Eigen::Index>(r.count()));
    for (std::size_t i = r.first; i <= r.last; ++i) {
      double wgt = 1.0;
      const double t = obs.times[i];
      if (w > 0 && i <= ranges[w - 1].last) {
        const double t0b = obs.times[r.first], t1a = obs.times[ranges[w - 1].last];
        wgt = 1.0 - (t1a - t) / (t1a - t0b);
      }
      if (w + 1 < ranges.size() && i >= ranges[w + 1].first) {
        const double t0b = obs.times[ranges[w + 1].first], t1a = obs.times[r.last];
        wgt = (t1a - t) / (t1a - t0b);
      }
      weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - r.first)) = wgt;
    }
    Var contrib = nn::matmul(nn::constant(std::move(weights)), x);
    total = total ? nn::add(total, contrib) : contrib;
  }
  Matrix target(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) target(i, 0) = obs.values[static_cast<std::size_t>(i)];
  return nn::mean(nn::abs(nn::sub(total, nn::constant(std::move(target)))));
}

double reconstruction_mae(const local::LocalModel& model, const std::vector<TimeSeries>& series,
                          const local::Windowing& windowing, int threads) {
  std::vector<double> mae(series.size());
  parallel_for(series.size(), threads, [&](std::size_t i) {
    nn::NoGradGuard guard;
    nn::Scope s(model.params(), false);
    mae[i] = reconstruction_loss(s, series[i], windowing)->value(0, 0);
  });
  if (mae.empty()) return 0.0;
  return std::accumulate(mae.begin(), mae.end(), 0.0) / static_cast<double>(mae.size());
}

FineTuneResult finetune_reconstruction(local::LocalModel& model, const std::vector<TimeSeries>& series,
                                       const TrainConfig& cfg, const local::Windowing& windowing,
                                       const EpochCallback& on_epoch) {
  cfg.validate();
  if (series.empty()) throw ValidationError("fine-tuning needs at least one series");
  ParameterStore& params = model.params();
  AdamW opt(params);
  const int threads = resolve_threads(cfg.threads);
  FineTuneResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.schedule.at(epoch, cfg.epochs);
    std::vector<std::size_t> order(series.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t nb = b1 - b0;
      std::vector<ParameterStore> grads(nb);
      std::vector<double> losses(nb);
      parallel_for(nb, threads, [&](std::size_t k) {
        nn::Scope s(params, true);
        Var loss = reconstruction_loss(s, series[order[b0 + k]], windowing);
        nn::backward(loss);
        grads[k] = s.gradients();
        losses[k] = loss->value(0, 0);
      });
      ParameterStore total = params.zeros_like();
      for (std::size_t k = 0; k < nb; ++k) {
        if (!std::isfinite(losses[k])) throw RuntimeError(fmt::format("non-finite fine-tuning loss at epoch {}", epoch));
        total.add_scaled(grads[k], 1.0 / static_cast<double>(nb));
        epoch_loss += losses[k];
      }
      clip_global_norm(total, cfg.grad_clip);
      opt.step(params, total, lr, cfg.weight_decay);
    }
    const double mae = epoch_loss / static_cast<double>(series.size());
    result.epoch_mae.push_back(mae);
    if (on_epoch) on_epoch(EpochMetrics{epoch, "train", LossParts{0.0, mae, 0.0}, lr});
  }
  result.final_mae = reconstruction_mae(model, series, windowing, threads);
  return result;
}

}  // namespace fim::train
