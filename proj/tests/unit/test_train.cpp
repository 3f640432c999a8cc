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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "fimkit/train.hpp"
#include "gradcheck.hpp"

using namespace fim;
using namespace fim::train;

namespace {

nn::NetConfig small_config() {
  nn::NetConfig c;
  c.embed_dim = 8;
  c.ffn_width = 16;
  c.seq_hidden = 8;
  c.attn_dim = 8;
  c.attn_heads = 2;
  c.attn_layers = 1;
  return c;
}

std::vector<synthgen::GenerationRecord> records(synthgen::DatasetKind kind, int n, std::uint64_t seed) {
  auto cfg = synthgen::GenerationConfig::defaults(kind);
  cfg.n_records = n;
  cfg.base_seed = seed;
  std::vector<synthgen::GenerationRecord> out;
  synthgen::generate_dataset(cfg, 1, [&](std::uint64_t, const synthgen::GenerationRecord& r) { out.push_back(r); });
  return out;
}

TrainConfig quick(Stage stage, int epochs) {
  auto c = TrainConfig::defaults(stage);
  c.epochs = epochs;
  c.batch_size = 4;
  c.seed = 17;
  c.val_fraction = 0.25;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("fimkit_test_train_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("learning rate schedules") {
  const Schedule cosine{Schedule::Kind::Cosine, 1e-3, 1e-6};
  CHECK(cosine.at(0, 400) == doctest::Approx(1e-3));
  CHECK(cosine.at(399, 400) == doctest::Approx(1e-6));
  CHECK(cosine.at(200, 401) == doctest::Approx(0.5 * (1e-3 + 1e-6)));
  CHECK(cosine.at(100, 401) ==
        doctest::Approx(1e-6 + (1e-3 - 1e-6) * (1.0 + std::cos(std::numbers::pi * 0.25)) / 2.0));
  CHECK(cosine.at(0, 1) == doctest::Approx(1e-3));
  const Schedule constant{Schedule::Kind::Constant, 1e-5, 0.0};
  CHECK(constant.at(0, 10) == 1e-5);
  CHECK(constant.at(9, 10) == 1e-5);
}

TEST_CASE("stage defaults and names") {
  const auto local = TrainConfig::defaults(Stage::LocalFIM);
  CHECK(local.epochs == 2000);
  CHECK(local.batch_size == 64);
  CHECK(local.weight_decay == 1e-4);
  const auto gap = TrainConfig::defaults(Stage::GapFIM);
  CHECK(gap.schedule.kind == Schedule::Kind::Cosine);
  CHECK(gap.weight_decay == 1e-3);
  CHECK(gap.epochs == 400);
  const auto ft = TrainConfig::defaults(Stage::FineTune);
  CHECK(ft.schedule.lr_hi == 1e-5);
  CHECK(ft.batch_size == 1);
  CHECK(stage_from_name(stage_name(Stage::GapFIM)) == Stage::GapFIM);
  CHECK_THROWS_AS(stage_from_name("pretrain"), ValidationError);
  auto bad = local;
  bad.val_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("AdamW against a hand-rolled scalar oracle") {
  nn::ParameterStore p;
  p.add("w", nn::Matrix::Constant(1, 2, 1.0));
  AdamW opt(p);
  const double lr = 0.1, wd = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const std::vector<double> gs{0.5, -0.2, 0.7};
  double w = 1.0, m = 0.0, v = 0.0;
  for (std::size_t k = 0; k < gs.size(); ++k) {
    nn::ParameterStore g = p.zeros_like();
    g.at("w").setConstant(gs[k]);
    opt.step(p, g, lr, wd);
    const int t = static_cast<int>(k) + 1;
    w -= lr * wd * w;
    m = b1 * m + (1 - b1) * gs[k];
    v = b2 * v + (1 - b2) * gs[k] * gs[k];
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    w -= lr * mh / (std::sqrt(vh) + eps);
    CHECK(p.at("w")(0, 0) == doctest::Approx(w).epsilon(1e-14));
  }
  CHECK(opt.steps() == 3);
  // The first step moves every coordinate by lr regardless of the gradient scale.
  nn::ParameterStore q;
  q.add("w", nn::Matrix::Zero(1, 1));
  AdamW first(q);
  nn::ParameterStore g = q.zeros_like();
  g.at("w")(0, 0) = 1234.0;
  first.step(q, g, 0.01, 0.0);
  CHECK(q.at("w")(0, 0) == doctest::Approx(-0.01));
}

TEST_CASE("global norm clipping") {
  nn::ParameterStore g;
  g.add("a", nn::Matrix::Constant(1, 1, 3.0));
  g.add("b", nn::Matrix::Constant(1, 1, 4.0));
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g.at("a")(0, 0) == 3.0);
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g.at("a")(0, 0) == doctest::Approx(0.6));
  CHECK(g.at("b")(0, 0) == doctest::Approx(0.8));
  CHECK(clip_global_norm(g, 0.0) == doctest::Approx(1.0));
  CHECK(g.at("b")(0, 0) == doctest::Approx(0.8));
}

TEST_CASE("record splits are deterministic partitions") {
  const auto s = split_records(101, 0.1, 5);
  CHECK(s.val.size() == 11);
  CHECK(s.train.size() == 90);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  CHECK(all.size() == 101);
  CHECK(std::is_sorted(s.val.begin(), s.val.end()));
  CHECK(split_records(101, 0.1, 5).val == s.val);
  CHECK(split_records(101, 0.1, 6).val != s.val);
  CHECK(split_records(10, 0.0, 5).val.empty());
}

TEST_CASE("Gaussian negative log-likelihood") {
  nn::Matrix f(2, 1), m(2, 1), v(2, 1);
  f << 1.0, -2.0;
  m << 0.5, -1.0;
  v << 0.0, std::log(4.0);
  const double expect = 0.25 / 2.0 + 0.0 + 1.0 / 8.0 + std::log(4.0) / 2.0;
  CHECK(gaussian_nll(nn::constant(f), nn::constant(m), nn::constant(v))->value(0, 0) == doctest::Approx(expect));
}

TEST_CASE("local loss gradients match finite differences") {
  const auto recs = records(synthgen::DatasetKind::PointWise, 2, 3);
  const auto ex = make_local_example(recs[0]);
  CHECK(ex.t.rows() == synthgen::kPointwiseGridLen);
  CHECK(ex.x0 == doctest::Approx(ex.y.front()).epsilon(0.5));
  const auto model = local::LocalModel::initialize(small_config(), 2);
  const auto r = fimtest::check_gradients([&](nn::Scope& s) { return loss_local(s, ex); }, model.params(), 60, 8);
  CAPTURE(r.worst);
  CHECK(r.checked == 60);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("gap loss gradients match finite differences") {
  const auto recs = records(synthgen::DatasetKind::TemporalGap, 2, 4);
  const auto model = gap::GapModel::initialize(
      std::make_shared<const local::LocalModel>(local::LocalModel::initialize(small_config(), 5)), 6);
  const auto ex = make_gap_example(model.theta(), recs[0]);
  REQUIRE(ex.t.rows() > 0);
  for (Eigen::Index i = 0; i < ex.t.rows(); ++i) {
    CHECK(ex.t(i, 0) > ex.gap_first);
    CHECK(ex.t(i, 0) < ex.gap_last);
  }
  const auto r = fimtest::check_gradients(
      [&](nn::Scope& phi) {
        nn::Scope theta(model.theta().params(), false);
        return loss_gap(phi, theta, ex, model.theta().config().attn_heads);
      },
      model.phi(), 60, 9);
  CAPTURE(r.worst);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("local training is deterministic and thread-count independent") {
  const auto recs = records(synthgen::DatasetKind::PointWise, 16, 7);
  auto a = local::LocalModel::initialize(small_config(), 1);
  auto b = a;
  auto c = a;
  const auto cfg = quick(Stage::LocalFIM, 2);
  const auto ra = train_local(a, recs, cfg);
  train_local(b, recs, cfg);
  auto threaded = cfg;
  threaded.threads = 3;
  train_local(c, recs, threaded);
  CHECK(a.params().bitwise_equal(b.params()));
  CHECK(a.params().bitwise_equal(c.params()));
  CHECK(ra.epochs_run == 2);
  CHECK(ra.metrics.size() == 4);
  CHECK(ra.metrics[1].split == "val");
  auto zero = local::LocalModel::initialize(small_config(), 1);
  const auto before = zero.params().flatten();
  train_local(zero, recs, quick(Stage::LocalFIM, 0));
  CHECK(zero.params().flatten() == before);
  CHECK_THROWS_AS(train_local(zero, records(synthgen::DatasetKind::TemporalGap, 2, 1), quick(Stage::LocalFIM, 1)),
                  ValidationError);
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run") {
  const auto recs = records(synthgen::DatasetKind::PointWise, 12, 8);
  auto full = local::LocalModel::initialize(small_config(), 2);
  auto part = full;
  auto cfg = quick(Stage::LocalFIM, 3);
  cfg.schedule = {Schedule::Kind::Cosine, 1e-3, 1e-5};
  train_local(full, recs, cfg);

  const auto dir = scratch("resume");
  auto first = cfg;
  first.checkpoint_dir = dir;
  first.checkpoint_every = 1;
  first.epochs = 3;
  // Stop after two epochs by training on a copy and resuming from epoch-0002.
  auto scratch_model = part;
  train_local(scratch_model, recs, first);
  CHECK(std::filesystem::exists(dir / "epoch-0002.ckpt"));
  CHECK(std::filesystem::exists(dir / "last.ckpt"));
  CHECK(std::filesystem::exists(dir / "best.fimw"));
  auto resume = cfg;
  resume.resume_from = dir / "epoch-0002.ckpt";
  const auto r = train_local(part, recs, resume);
  CHECK(part.params().bitwise_equal(full.params()));
  CHECK(r.epochs_run == 3);
  CHECK(r.metrics.size() == 6);
  std::filesystem::remove_all(dir);
}

TEST_CASE("gap training leaves the local parameters untouched") {
  const auto recs = records(synthgen::DatasetKind::TemporalGap, 12, 9);
  auto theta = std::make_shared<const local::LocalModel>(local::LocalModel::initialize(small_config(), 3));
  const auto before = theta->params();
  auto model = gap::GapModel::initialize(theta, 4);
  const auto phi0 = model.phi().flatten();
  train_gap(model, recs, quick(Stage::GapFIM, 2));
  CHECK(model.theta().params().bitwise_equal(before));
  CHECK(model.phi().flatten() != phi0);
  CHECK_THROWS_AS(train_gap(model, records(synthgen::DatasetKind::PointWise, 2, 1), quick(Stage::GapFIM, 1)),
                  ValidationError);
}

TEST_CASE("reconstruction loss and fine-tuning") {
  const auto model0 = local::LocalModel::initialize(small_config(), 12);
  TimeSeries s;
  for (int i = 0; i < 48; ++i) {
    s.times.push_back(0.1 * i);
    s.values.push_back(std::sin(0.1 * i) + 0.2 * i);
  }
  const auto r = fimtest::check_gradients(
      [&](nn::Scope& sc) { return reconstruction_loss(sc, s, local::ByCount{2}); }, model0.params(), 50, 10);
  CAPTURE(r.worst);
  CHECK(r.max_rel_err < 1e-4);
  // The loss equals the MAE of the inference path.
  {
    nn::NoGradGuard guard;
    nn::Scope sc(model0.params(), false);
    const double loss = reconstruction_loss(sc, s, local::ByCount{2})->value(0, 0);
    CHECK(loss == doctest::Approx(reconstruction_mae(model0, {s}, local::ByCount{2})).epsilon(1e-9));
  }
  auto model = model0;
  auto cfg = TrainConfig::defaults(Stage::FineTune);
  cfg.epochs = 3;
  cfg.seed = 1;
  cfg.schedule.lr_hi = 1e-3;
  const auto ft = finetune_reconstruction(model, {s}, cfg, local::ByCount{2});
  CHECK(ft.epoch_mae.size() == 3);
  CHECK(ft.final_mae < ft.epoch_mae.front());
}
