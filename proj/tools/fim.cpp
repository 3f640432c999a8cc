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

// fim: command-line front end for data generation, training, imputation,
// benchmarking, simulation and phase portraits.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fimkit/dataset_io.hpp"
#include "fimkit/eval.hpp"
#include "fimkit/fim_gap.hpp"
#include "fimkit/fim_local.hpp"
#include "fimkit/odesim.hpp"
#include "fimkit/series_io.hpp"
#include "fimkit/synthgen.hpp"
#include "fimkit/train.hpp"

namespace {

using namespace fim;
using json = nlohmann::json;

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

// ---- generate ---------------------------------------------------------------

struct GenerateOpts {
  std::string kind = "pointwise";
  int n = 4096;
  std::uint64_t seed = 0;
  std::string out = "dataset.jsonl";
  std::string format;
  double lambda = 0.1;
  std::vector<double> family_mix;
  int grid_len = 0;
  int threads = 0;
};

void add_generate(CLI::App& app, GenerateOpts& o) {
  app.add_option("--kind", o.kind, "pointwise or temporal")->check(CLI::IsMember({"pointwise", "temporal"}));
  app.add_option("--n", o.n, "number of records");
  app.add_option("--seed", o.seed, "base seed")->required();
  app.add_option("--out", o.out, "output dataset path");
  app.add_option("--format", o.format, "jsonl or packed (default: from the extension, .fimd is packed)");
  app.add_option("--lambda", o.lambda, "scale of the folded-normal noise prior");
  app.add_option("--family-mix", o.family_mix, "chebyshev,gp_rbf,gp_periodic weights (default 0.5,0.5,0)")
      ->delimiter(',')
      ->expected(3);
  app.add_option("--grid-len", o.grid_len, "fine grid length (0: 128 pointwise, 256 temporal)");
  app.add_option("--threads", o.threads, "worker threads (0: FIM_THREADS or all cores)");
}

int run_generate(const GenerateOpts& o) {
  using namespace synthgen;
  auto cfg = GenerationConfig::defaults(o.kind == "temporal" ? DatasetKind::TemporalGap : DatasetKind::PointWise);
  cfg.n_records = o.n;
  cfg.base_seed = o.seed;
  cfg.noise_lambda = o.lambda;
  if (!o.family_mix.empty()) std::copy(o.family_mix.begin(), o.family_mix.end(), cfg.family_mix.begin());
  if (o.grid_len > 0) cfg.fine_grid_len = o.grid_len;
  cfg.validate();
  std::string format = o.format;
  if (format.empty()) format = std::filesystem::path(o.out).extension() == ".fimd" ? "packed" : "jsonl";

  io::DatasetWriter writer(o.out, io::dataset_format_from_name(format));
  std::array<std::size_t, 3> tally{};
  std::size_t skipped = 0;
  generate_dataset(
      cfg, resolve_threads(o.threads),
      [&](std::uint64_t, const GenerationRecord& rec) {
        writer.write(rec);
        ++tally[static_cast<std::size_t>(rec.family)];
      },
      [&](std::uint64_t idx, const std::string& why) {
        ++skipped;
        spdlog::warn("record {} skipped: {}", idx, why);
      });
  writer.commit();
  fmt::print("wrote {} records to {}\n", writer.count(), o.out);
  for (std::size_t f = 0; f < tally.size(); ++f) {
    fmt::print("  {}: {}\n", family_name(static_cast<Family>(f)), tally[f]);
  }
  if (skipped) fmt::print("  skipped: {}\n", skipped);
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainOpts {
  std::string stage = "local";
  std::string data;
  std::string weights;
  std::string out = "model.fimw";
  std::string metrics;
  std::uint64_t seed = 0;
  int epochs = 2000;
  std::string schedule;
  double lr = 1e-3;
  double lr_min = 1e-6;
  double weight_decay = 1e-4;
  int batch_size = 64;
  double val_fraction = 0.1;
  double grad_clip = 10.0;
  int threads = 0;
  std::string checkpoint_dir;
  int checkpoint_every = 0;
  std::string resume;
  std::string dtype = "f32";
  std::string windows = "1";
  nn::NetConfig net;
};

void add_train(CLI::App& app, TrainOpts& o) {
  app.add_option("--stage", o.stage, "local, gap or finetune")->check(CLI::IsMember({"local", "gap", "finetune"}));
  app.add_option("--data", o.data, "training dataset (local, gap) or series file (finetune)")->required();
  app.add_option("--weights", o.weights, "initial weights; the frozen local model for --stage gap");
  app.add_option("--out", o.out, "output weight file");
  app.add_option("--metrics", o.metrics, "metrics CSV (default: <out>.metrics.csv)");
  app.add_option("--seed", o.seed, "seed for initialization, shuffling and dropout")->required();
  app.add_option("--epochs", o.epochs, "epochs (stage defaults: local 2000, gap 400, finetune 10)");
  app.add_option("--schedule", o.schedule, "constant or cosine (stage defaults: local constant, gap cosine)")
      ->check(CLI::IsMember({"constant", "cosine"}));
  app.add_option("--lr", o.lr, "learning rate, the peak for cosine (finetune default 1e-5)");
  app.add_option("--lr-min", o.lr_min, "final cosine learning rate");
  app.add_option("--weight-decay", o.weight_decay, "AdamW decoupled weight decay (gap default 1e-3, finetune 0)");
  app.add_option("--batch-size", o.batch_size, "records per step (finetune default 1)");
  app.add_option("--val-fraction", o.val_fraction, "held-out share of the records (finetune: unused)");
  app.add_option("--grad-clip", o.grad_clip, "global gradient norm cap (<= 0 disables)");
  app.add_option("--threads", o.threads, "worker threads (0: FIM_THREADS or all cores; 1 is deterministic)");
  app.add_option("--checkpoint-dir", o.checkpoint_dir, "directory for last.ckpt, epoch-NNNN.ckpt and best.fimw");
  app.add_option("--checkpoint-every", o.checkpoint_every, "epochs between periodic checkpoints (0: off)");
  app.add_option("--resume", o.resume, "checkpoint to continue from");
  app.add_option("--dtype", o.dtype, "weight file precision")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--windows", o.windows, "windowing for finetune: N, count:N or obs:N");
  app.add_option("--embed-dim", o.net.embed_dim, "embedding width E");
  app.add_option("--ffn-layers", o.net.ffn_layers, "hidden layers per feed-forward stack");
  app.add_option("--ffn-width", o.net.ffn_width, "hidden width of the feed-forward stacks");
  app.add_option("--seq-hidden", o.net.seq_hidden, "BiLSTM hidden size per direction");
  app.add_option("--attn-layers", o.net.attn_layers, "attention layers of the gap model");
  app.add_option("--attn-heads", o.net.attn_heads, "attention heads of the gap model");
  app.add_option("--attn-dim", o.net.attn_dim, "attention width (must equal --embed-dim)");
  app.add_option("--dropout", o.net.dropout, "dropout rate during training");
}

train::TrainConfig train_config(const CLI::App& app, const TrainOpts& o, train::Stage stage) {
  auto cfg = train::TrainConfig::defaults(stage);
  auto given = [&](const char* name) { return app.count(name) > 0; };
  if (given("--epochs")) cfg.epochs = o.epochs;
  if (given("--schedule")) cfg.schedule.kind = o.schedule == "cosine" ? train::Schedule::Kind::Cosine
                                                                       : train::Schedule::Kind::Constant;
  if (given("--lr")) {
    cfg.schedule.lr_hi = o.lr;
    if (cfg.schedule.kind == train::Schedule::Kind::Constant) cfg.schedule.lr_lo = o.lr;
  }
  if (given("--lr-min")) cfg.schedule.lr_lo = o.lr_min;
  if (given("--weight-decay")) cfg.weight_decay = o.weight_decay;
  if (given("--batch-size")) cfg.batch_size = o.batch_size;
  if (given("--val-fraction")) cfg.val_fraction = o.val_fraction;
  cfg.grad_clip = o.grad_clip;
  cfg.seed = o.seed;
  cfg.threads = resolve_threads(o.threads);
  cfg.checkpoint_every = o.checkpoint_every;
  cfg.checkpoint_dir = o.checkpoint_dir;
  cfg.resume_from = o.resume;
  cfg.validate();
  return cfg;
}

void log_epoch(const train::EpochMetrics& m) {
  spdlog::info("epoch {:>4} {:<5} lr {:.3g}  f_nll {:.5g}  euler {:.5g}  x0 {:.5g}  total {:.5g}", m.epoch, m.split,
               m.lr, m.loss.f_nll, m.loss.euler, m.loss.x0_nll, m.loss.total());
}

std::vector<TimeSeries> read_channels(const std::string& path) {
  std::vector<TimeSeries> out;
  for (auto& ns : io::read_series(path)) out.push_back(std::move(ns.series));
  return out;
}

int run_train(const CLI::App& app, const TrainOpts& o) {
  const auto stage = train::stage_from_name(o.stage);
  const auto cfg = train_config(app, o, stage);
  const auto dtype = o.dtype == "f64" ? nn::WeightDtype::F64 : nn::WeightDtype::F32;
  const std::string metrics_path = o.metrics.empty() ? o.out + ".metrics.csv" : o.metrics;
  std::string log;

  if (stage == train::Stage::LocalFIM) {
    o.net.validate();
    auto model = o.weights.empty() ? local::LocalModel::initialize(o.net, o.seed) : local::LocalModel::load(o.weights);
    const auto records = io::read_dataset(o.data);
    spdlog::info("local stage: {} records, {} parameters, {} epochs", records.size(), model.params().total_count(),
                 cfg.epochs);
    const auto result = train::train_local(model, records, cfg, log_epoch);
    model.save(o.out, dtype);
    log = train::metrics_csv_header();
    for (const auto& m : result.metrics) log += train::metrics_csv_row(m);
  } else if (stage == train::Stage::GapFIM) {
    if (o.weights.empty()) throw ValidationError("--stage gap needs --weights with a trained local model");
    auto theta = std::make_shared<const local::LocalModel>(local::LocalModel::load(o.weights));
    auto model = gap::GapModel::initialize(theta, o.seed);
    const auto records = io::read_dataset(o.data);
    spdlog::info("gap stage: {} records, {} trainable parameters, {} epochs", records.size(),
                 model.phi().total_count(), cfg.epochs);
    const auto result = train::train_gap(model, records, cfg, log_epoch);
    model.save(o.out, dtype);
    log = train::metrics_csv_header();
    for (const auto& m : result.metrics) log += train::metrics_csv_row(m);
  } else {
    if (o.weights.empty()) throw ValidationError("--stage finetune needs --weights");
    auto model = local::LocalModel::load(o.weights);
    const auto series = read_channels(o.data);
    const auto windowing = local::parse_windowing(o.windows);
    const auto result = train::finetune_reconstruction(model, series, cfg, windowing, [](const train::EpochMetrics& m) {
      spdlog::info("epoch {:>4} lr {:.3g}  mae {:.6g}", m.epoch, m.lr, m.loss.euler);
    });
    model.save(o.out, dtype);
    log = "epoch,mae\n";
    for (std::size_t e = 0; e < result.epoch_mae.size(); ++e) log += fmt::format("{},{:.10g}\n", e, result.epoch_mae[e]);
    log += fmt::format("final,{:.10g}\n", result.final_mae);
  }
  io::write_file_atomic(metrics_path, log);
  fmt::print("wrote {} and {}\n", o.out, metrics_path);
  return 0;
}

// ---- impute -----------------------------------------------------------------

struct ImputeOpts {
  std::string input;
  std::string weights;
  std::string windows = "1";
  std::vector<double> gap;
  std::string out;
  int grid = 0;
  int threads = 0;
};

void add_impute(CLI::App& app, ImputeOpts& o) {
  app.add_option("--input", o.input, "series file (.csv or .jsonl)")->required();
  app.add_option("--weights", o.weights, "local or gap weight file")->required();
  app.add_option("--windows", o.windows, "windowing: N, count:N or obs:N");
  app.add_option("--gap", o.gap, "gap bounds lo,hi; switches to gap imputation")->delimiter(',')->expected(2);
  app.add_option("--out", o.out, "output path (.json or .csv)")->required();
  app.add_option("--grid", o.grid, "output grid points over the series span (0: input times)");
  app.add_option("--threads", o.threads, "worker threads (0: FIM_THREADS or all cores)");
}

int run_impute(const ImputeOpts& o) {
  const auto channels = io::read_series(o.input);
  const auto windowing = local::parse_windowing(o.windows);
  const int threads = resolve_threads(o.threads);
  const std::string ext = std::filesystem::path(o.out).extension().string();
  if (ext != ".json" && ext != ".csv") throw ValidationError("--out must end in .json or .csv");

  std::vector<io::ImputedChannel> out;
  json info{{"windowing", local::windowing_name(windowing)}, {"weights", o.weights}};
  auto grid_for = [&](const TimeSeries& s) {
    if (o.grid <= 0) return s.times;
    return linspace(s.times.front(), s.times.back(), static_cast<std::size_t>(o.grid));
  };
  if (!o.gap.empty()) {
    info["mode"] = "gap";
    info["gap"] = o.gap;
    const auto model = gap::GapModel::load(o.weights);
    for (const auto& ch : channels) {
      const auto traj = gap::impute_gap(model, ch.series, o.gap[0], o.gap[1], windowing, threads);
      out.push_back(io::evaluate_channel(ch.name, *traj, grid_for(ch.series)));
    }
  } else {
    info["mode"] = "pointwise";
    auto model = std::make_shared<const local::LocalModel>(local::LocalModel::load(o.weights));
    std::vector<TimeSeries> series;
    for (const auto& ch : channels) series.push_back(ch.series);
    auto results = local::compose_channels(model, series, windowing, threads);
    for (std::size_t c = 0; c < channels.size(); ++c) {
      if (!results[c].trajectory) {
        spdlog::warn("channel {} failed: {}", channels[c].name, results[c].error);
        io::ImputedChannel failed;
        failed.name = channels[c].name;
        failed.error = results[c].error;
        out.push_back(std::move(failed));
        continue;
      }
      out.push_back(io::evaluate_channel(channels[c].name, *results[c].trajectory, grid_for(channels[c].series)));
    }
  }
  io::write_file_atomic(o.out, ext == ".csv" ? io::imputation_csv(out) : io::imputation_json(out, info).dump(1) + "\n");
  const auto failed = std::count_if(out.begin(), out.end(), [](const auto& c) { return !c.error.empty(); });
  fmt::print("imputed {} channel(s) into {}\n", out.size() - static_cast<std::size_t>(failed), o.out);
  return failed == static_cast<std::ptrdiff_t>(out.size()) ? kExitRuntime : 0;
}

// ---- benchmark --------------------------------------------------------------

struct BenchmarkOpts {
  std::vector<std::string> systems{"van_der_pol", "rossler", "lorenz"};
  std::vector<std::string> trajectories;
  std::vector<double> rhos{0.0, 0.5};
  std::vector<double> gammas{0.0, 0.05};
  int samplings = 10;
  std::vector<std::string> imputers{"spline", "spline+savgol15"};
  std::string weights;
  std::string windows = "obs:64";
  int points = 512;
  std::string mask = "all";
  std::uint64_t seed = 0;
  std::string out = "benchmark";
  int threads = 0;
};

void add_benchmark(CLI::App& app, BenchmarkOpts& o) {
  app.add_option("--systems", o.systems, "built-in systems: van_der_pol (vdp), rossler, lorenz")->delimiter(',');
  app.add_option("--trajectory", o.trajectories, "clean user trajectory CSV (t,x1..xD); repeatable");
  app.add_option("--rhos", o.rhos, "drop probabilities")->delimiter(',');
  app.add_option("--gammas", o.gammas, "multiplicative noise levels")->delimiter(',');
  app.add_option("--samplings", o.samplings, "corruption resamplings per cell");
  app.add_option("--imputers", o.imputers, "spline, spline+savgol<w>[_<order>], fim")->delimiter(',');
  app.add_option("--weights", o.weights, "local weights; adds the fim imputer");
  app.add_option("--windows", o.windows, "windowing of the fim imputer");
  app.add_option("--points", o.points, "simulation output points of the built-in systems");
  app.add_option("--mask", o.mask, "all or missing")->check(CLI::IsMember({"all", "missing"}));
  app.add_option("--seed", o.seed, "corruption seed")->required();
  app.add_option("--out", o.out, "report prefix; writes <out>.csv and <out>.json");
  app.add_option("--threads", o.threads, "worker threads (0: FIM_THREADS or all cores)");
}

int run_benchmark(const CLI::App& app, const BenchmarkOpts& o) {
  std::vector<eval::BenchmarkSystem> systems;
  const bool builtin = app.count("--systems") > 0 || o.trajectories.empty();
  if (builtin) {
    for (const auto& name : o.systems) {
      if (o.points < 2) throw ValidationError("--points must be >= 2");
      systems.push_back(eval::simulate_builtin(name, o.points));
    }
  }
  for (const auto& path : o.trajectories) {
    const auto channels = io::read_series(path);
    eval::BenchmarkSystem sys;
    sys.name = std::filesystem::path(path).stem().string();
    sys.clean.times = channels.front().series.times;
    for (std::size_t i = 0; i < sys.clean.times.size(); ++i) {
      odesim::State st;
      for (const auto& c : channels) {
        if (!c.series.observed(i)) throw ValidationError(path + ": benchmark trajectories must be complete");
        st.push_back(c.series.values[i]);
      }
      sys.clean.states.push_back(std::move(st));
    }
    systems.push_back(std::move(sys));
  }

  std::vector<eval::Imputer> imputers;
  std::shared_ptr<const local::LocalModel> model;
  if (!o.weights.empty()) model = std::make_shared<const local::LocalModel>(local::LocalModel::load(o.weights));
  auto names = o.imputers;
  if (model && std::find(names.begin(), names.end(), "fim") == names.end()) names.push_back("fim");
  for (const auto& name : names) {
    if (name == "fim") {
      if (!model) throw ValidationError("imputer 'fim' needs --weights");
      imputers.push_back(eval::fim_imputer(model, local::parse_windowing(o.windows)));
    } else {
      imputers.push_back(eval::imputer_by_name(name));
    }
  }

  eval::BenchmarkConfig cfg;
  cfg.rhos = o.rhos;
  cfg.gammas = o.gammas;
  cfg.samplings = o.samplings;
  cfg.seed = o.seed;
  cfg.mask_mode = eval::mask_mode_from_name(o.mask);
  cfg.threads = resolve_threads(o.threads);
  const auto cells = eval::benchmark(systems, imputers, cfg);

  io::write_file_atomic(o.out + ".csv", eval::benchmark_csv(cells));
  io::write_file_atomic(o.out + ".json", eval::benchmark_json(cells).dump(1) + "\n");
  fmt::print("{:<12} {:>5} {:>6} {:<18} {:>24} {:>8}\n", "system", "rho", "gamma", "imputer", "MAE (mean +- std)",
             "failed");
  for (const auto& c : cells) {
    fmt::print("{:<12} {:>5} {:>6} {:<18} {:>11.5g} +- {:<9.3g} {:>8}\n", c.system, c.rho, c.gamma, c.imputer,
               c.report.mean.mae, c.report.std.mae, c.failures);
  }
  fmt::print("wrote {0}.csv and {0}.json ({1} rows)\n", o.out, cells.size());
  return 0;
}

// ---- simulate ---------------------------------------------------------------

struct SimulateOpts {
  std::string system;
  int points = 512;
  double t_end = 0.0;
  double rho = 0.0;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string svg;
};

void add_simulate(CLI::App& app, SimulateOpts& o) {
  app.add_option("--system", o.system, "van_der_pol (vdp), rossler or lorenz")->required();
  app.add_option("--points", o.points, "output points");
  app.add_option("--t-end", o.t_end, "simulation span (0: the system default, 10)");
  app.add_option("--rho", o.rho, "drop probability of the corruption");
  app.add_option("--gamma", o.gamma, "multiplicative noise level of the corruption");
  app.add_option("--seed", o.seed, "corruption seed (required when corrupting)");
  app.add_option("--out", o.out, "output CSV")->required();
  app.add_option("--svg", o.svg, "optional SVG plot of the channels");
}

int run_simulate(const CLI::App& app, const SimulateOpts& o) {
  const auto sys = odesim::system_by_name(o.system);
  const double t_end = o.t_end > 0.0 ? o.t_end : sys.t_end;
  const auto traj = odesim::rk4_simulate(sys, sys.initial_state, t_end, o.points);
  std::string csv;
  const bool corrupting = o.rho > 0.0 || o.gamma > 0.0;
  std::vector<TimeSeries> corrupted;
  if (corrupting) {
    if (app.count("--seed") == 0) throw ValidationError("--seed is required when --rho or --gamma is set");
    corrupted = odesim::corrupt(traj, {o.rho, o.gamma, o.seed});
    csv = odesim::trajectory_to_csv(traj, &corrupted);
  } else {
    csv = odesim::trajectory_to_csv(traj);
  }
  io::write_file_atomic(o.out, csv);
  if (!o.svg.empty()) {
    std::vector<eval::SvgSeries> lines;
    for (int d = 0; d < traj.dim(); ++d) {
      lines.push_back({fmt::format("x{}", d + 1), traj.times, traj.channel(d), "", false});
      if (corrupting) {
        const auto obs = corrupted[static_cast<std::size_t>(d)].observed_only();
        lines.push_back({fmt::format("y{}", d + 1), obs.times, obs.values, "", true});
      }
    }
    io::write_file_atomic(o.svg, eval::svg_line_plot(lines, sys.name));
  }
  fmt::print("wrote {} ({} points, {} channels)\n", o.out, traj.times.size(), traj.dim());
  return 0;
}

// ---- phase-portrait ---------------------------------------------------------

struct PhaseOpts {
  std::string input;
  std::string channel;
  std::string weights;
  int depth = 1;
  int grid = 8192;
  int dense = 8192;
  std::string windows = "1";
  std::string windows2 = "obs:64";
  std::string out;
  std::string svg;
  int threads = 0;
};

void add_phase(CLI::App& app, PhaseOpts& o) {
  app.add_option("--input", o.input, "series file (.csv or .jsonl)")->required();
  app.add_option("--channel", o.channel, "channel name (default: the first)");
  app.add_option("--weights", o.weights, "local weight file")->required();
  app.add_option("--depth", o.depth, "1: (x, dx); 2: also ddx from a second pass")->check(CLI::IsMember({1, 2}));
  app.add_option("--grid", o.grid, "plotting grid points");
  app.add_option("--dense", o.dense, "discretization of dx for the second pass");
  app.add_option("--windows", o.windows, "windowing of the first pass");
  app.add_option("--windows2", o.windows2, "windowing of the second pass");
  app.add_option("--out", o.out, "output CSV (t,x,dx[,ddx])")->required();
  app.add_option("--svg", o.svg, "optional SVG of the portrait");
  app.add_option("--threads", o.threads, "worker threads (0: FIM_THREADS or all cores)");
}

int run_phase(const PhaseOpts& o) {
  const auto channels = io::read_series(o.input);
  const io::NamedSeries* ch = &channels.front();
  if (!o.channel.empty()) {
    const auto it = std::find_if(channels.begin(), channels.end(), [&](const auto& c) { return c.name == o.channel; });
    if (it == channels.end()) throw ValidationError("no channel named '" + o.channel + "'");
    ch = &*it;
  }
  auto model = std::make_shared<const local::LocalModel>(local::LocalModel::load(o.weights));
  eval::PhasePortraitConfig cfg;
  cfg.depth = o.depth;
  cfg.grid_points = o.grid;
  cfg.dense_points = o.dense;
  cfg.windowing = local::parse_windowing(o.windows);
  cfg.second_windowing = local::parse_windowing(o.windows2);
  cfg.threads = resolve_threads(o.threads);
  const auto p = eval::phase_portrait(model, ch->series, cfg);
  io::write_file_atomic(o.out, eval::phase_portrait_csv(p));
  if (!o.svg.empty()) {
    std::vector<eval::SvgSeries> lines{{"(x, dx)", p.x, p.dx, "", false}};
    if (!p.ddx.empty()) lines.push_back({"(dx, ddx)", p.dx, p.ddx, "", false});
    io::write_file_atomic(o.svg, eval::svg_line_plot(lines, "phase portrait: " + ch->name));
  }
  fmt::print("wrote {} ({} points, depth {})\n", o.out, p.t.size(), o.depth);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("fim");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");

  CLI::App app{"fim: zero-shot imputation of ODE time series"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML config file; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  GenerateOpts gen;
  TrainOpts tr;
  ImputeOpts imp;
  BenchmarkOpts bench;
  SimulateOpts sim;
  PhaseOpts phase;
  auto* c_gen = app.add_subcommand("generate", "sample a synthetic training dataset");
  auto* c_train = app.add_subcommand("train", "train the local model, the gap model or fine-tune");
  auto* c_imp = app.add_subcommand("impute", "impute a series file with trained weights");
  auto* c_bench = app.add_subcommand("benchmark", "corrupt, impute and score the benchmark systems");
  auto* c_sim = app.add_subcommand("simulate", "simulate a built-in system to CSV");
  auto* c_phase = app.add_subcommand("phase-portrait", "phase-portrait columns of a series");
  add_generate(*c_gen, gen);
  add_train(*c_train, tr);
  add_impute(*c_imp, imp);
  add_benchmark(*c_bench, bench);
  add_simulate(*c_sim, sim);
  add_phase(*c_phase, phase);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*c_gen) return run_generate(gen);
    if (*c_train) return run_train(*c_train, tr);
    if (*c_imp) return run_impute(imp);
    if (*c_bench) return run_benchmark(*c_bench, bench);
    if (*c_sim) return run_simulate(*c_sim, sim);
    if (*c_phase) return run_phase(phase);
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const RuntimeError& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitValidation;
}
