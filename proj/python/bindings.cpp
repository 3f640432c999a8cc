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

// Python extension module _fimkit.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <optional>

#include "fimkit/dataset_io.hpp"
#include "fimkit/eval.hpp"
#include "fimkit/fim_gap.hpp"
#include "fimkit/odesim.hpp"
#include "fimkit/series_io.hpp"
#include "fimkit/synthgen.hpp"
#include "fimkit/train.hpp"

namespace py = pybind11;
using namespace fim;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw ValidationError("expected a one-dimensional array");
  return {a.data(), a.data() + a.size()};
}

// NaN values are treated as missing unless an explicit mask is given.
TimeSeries make_series(const Array& times, const Array& values, const std::optional<Array>& mask) {
  TimeSeries s;
  s.times = to_vector(times);
  s.values = to_vector(values);
  if (mask) {
    for (double m : to_vector(*mask)) s.mask.push_back(m != 0.0 ? 1 : 0);
  } else {
    for (double v : s.values) s.mask.push_back(std::isnan(v) ? 0 : 1);
  }
  s.validate();
  return s;
}

py::dict evaluate(const Trajectory& traj, const std::vector<double>& query) {
  py::dict out;
  out["times"] = to_array(query);
  out["values"] = to_array(traj.values(query));
  out["derivatives"] = to_array(traj.derivatives(query));
  out["derivative_log_vars"] = to_array(traj.derivative_log_vars(query));
  return out;
}

std::vector<double> query_or(const std::optional<Array>& query, const TimeSeries& s) {
  return query ? to_vector(*query) : s.times;
}

nn::NetConfig net_config(const py::dict& kw) {
  nn::NetConfig c;
  nlohmann::json j = c.to_json();
  for (const auto& [k, v] : kw) {
    const auto key = py::cast<std::string>(k);
    if (!j.contains(key)) throw ValidationError("unknown network option '" + key + "'");
    j[key] = key == "dropout" ? nlohmann::json(py::cast<double>(v)) : nlohmann::json(py::cast<int>(v));
  }
  return nn::NetConfig::from_json(j);
}

train::TrainConfig train_config(train::Stage stage, int epochs, std::uint64_t seed, std::optional<double> lr,
                                std::optional<double> lr_min, std::optional<std::string> schedule,
                                std::optional<int> batch_size, int threads) {
  auto cfg = train::TrainConfig::defaults(stage);
  cfg.epochs = epochs;
  cfg.seed = seed;
  cfg.threads = threads;
  if (schedule) {
    if (*schedule == "cosine") {
      cfg.schedule.kind = train::Schedule::Kind::Cosine;
    } else if (*schedule == "constant") {
      cfg.schedule.kind = train::Schedule::Kind::Constant;
    } else {
      throw ValidationError("schedule must be 'constant' or 'cosine'");
    }
  }
  if (lr) cfg.schedule.lr_hi = *lr;
  if (lr_min) cfg.schedule.lr_lo = *lr_min;
  if (batch_size) cfg.batch_size = *batch_size;
  return cfg;
}

py::list metrics_list(const train::TrainResult& r) {
  py::list out;
  for (const auto& m : r.metrics) {
    py::dict d;
    d["epoch"] = m.epoch;
    d["split"] = m.split;
    d["f_nll"] = m.loss.f_nll;
    d["euler"] = m.loss.euler;
    d["x0_nll"] = m.loss.x0_nll;
    d["lr"] = m.lr;
    out.append(d);
  }
  return out;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_fimkit, m) {
  m.doc() = "Zero-shot imputation of ODE time series with a foundation inference model";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<RuntimeError>(m, "FimRuntimeError", PyExc_RuntimeError);

  m.def(
      "simulate",
      [](const std::string& system, int n_points) {
        const auto sys = odesim::system_by_name(system);
        const auto tr = odesim::rk4_simulate(sys, sys.initial_state, sys.t_end, n_points);
        py::array_t<double> x({static_cast<py::ssize_t>(tr.times.size()), static_cast<py::ssize_t>(sys.dim)});
        auto w = x.mutable_unchecked<2>();
        for (std::size_t i = 0; i < tr.times.size(); ++i) {
          for (int d = 0; d < sys.dim; ++d) w(static_cast<py::ssize_t>(i), d) = tr.states[i][static_cast<std::size_t>(d)];
        }
        return py::make_tuple(to_array(tr.times), x);
      },
      py::arg("system"), py::arg("n_points") = 512, "Simulate a built-in system; returns (t, x) with x of shape (n, D).");

  m.def(
      "corrupt",
      [](const std::string& system, int n_points, double rho, double gamma, std::uint64_t seed) {
        const auto sys = odesim::system_by_name(system);
        const auto tr = odesim::rk4_simulate(sys, sys.initial_state, sys.t_end, n_points);
        py::list channels;
        for (const auto& ch : odesim::corrupt(tr, {rho, gamma, seed})) {
          std::vector<double> v = ch.values;
          for (std::size_t i = 0; i < v.size(); ++i) {
            if (!ch.observed(i)) v[i] = std::nan("");
          }
          channels.append(to_array(v));
        }
        return py::make_tuple(to_array(tr.times), channels);
      },
      py::arg("system"), py::arg("n_points") = 512, py::arg("rho") = 0.0, py::arg("gamma") = 0.0, py::arg("seed"),
      "Simulate and corrupt a built-in system; dropped points are NaN.");

  m.def(
      "generate_record",
      [](const std::string& kind, std::uint64_t index, std::uint64_t seed, std::optional<double> noise_lambda) {
        if (kind != "temporal" && kind != "pointwise") throw ValidationError("kind must be 'pointwise' or 'temporal'");
        auto cfg = synthgen::GenerationConfig::defaults(kind == "temporal" ? synthgen::DatasetKind::TemporalGap
                                                                           : synthgen::DatasetKind::PointWise);
        cfg.base_seed = seed;
        if (noise_lambda) cfg.noise_lambda = *noise_lambda;
        std::string reason;
        const auto rec = synthgen::generate_record(cfg, index, &reason);
        if (!rec) throw RuntimeError("record " + std::to_string(index) + " failed: " + reason);
        return json_to_py(io::record_to_json(*rec));
      },
      py::arg("kind") = "pointwise", py::arg("index") = 0, py::arg("seed"), py::arg("noise_lambda") = py::none(),
      "One synthetic training record as a dict.");

  m.def(
      "metrics",
      [](const Eigen::MatrixXd& target, const Eigen::MatrixXd& prediction, std::optional<Eigen::MatrixXd> mask) {
        const auto r = eval::metrics(target, prediction,
                                     mask ? *mask : Eigen::MatrixXd::Ones(target.rows(), target.cols()).eval());
        py::dict d;
        d["mae"] = r.mae;
        d["mse"] = r.mse;
        d["rmse"] = r.rmse;
        d["mre"] = r.mre;
        d["r2"] = r.r2;
        return d;
      },
      py::arg("target"), py::arg("prediction"), py::arg("mask") = py::none(),
      "MAE, MSE, RMSE and MRE over the mask; R^2 unmasked, averaged over columns.");

  m.def(
      "spline",
      [](const Array& times, const Array& values, std::optional<Array> query, std::optional<int> savgol_window,
         int savgol_order) {
        const auto s = make_series(times, values, std::nullopt);
        std::optional<eval::SavgolSpec> smoothing;
        if (savgol_window) smoothing = eval::SavgolSpec{*savgol_window, savgol_order};
        const auto sp = eval::spline_baseline(s, smoothing);
        return evaluate(*sp, query_or(query, s));
      },
      py::arg("times"), py::arg("values"), py::arg("query") = py::none(), py::arg("savgol_window") = py::none(),
      py::arg("savgol_order") = 3, "Cubic spline baseline, optionally Savitzky-Golay smoothed first.");

  m.def(
      "benchmark",
      [](const std::vector<std::string>& systems, const std::vector<std::string>& imputers, std::uint64_t seed,
         int samplings, int n_points, int threads) {
        std::vector<eval::BenchmarkSystem> sys;
        for (const auto& s : systems) sys.push_back(eval::simulate_builtin(s, n_points));
        std::vector<eval::Imputer> imps;
        for (const auto& i : imputers) imps.push_back(eval::imputer_by_name(i));
        eval::BenchmarkConfig cfg;
        cfg.seed = seed;
        cfg.samplings = samplings;
        cfg.threads = threads;
        nlohmann::json j;
        {
          py::gil_scoped_release release;
          j = eval::benchmark_json(eval::benchmark(sys, imps, cfg));
        }
        return json_to_py(j);
      },
      py::arg("systems") = std::vector<std::string>{"van_der_pol", "rossler", "lorenz"},
      py::arg("imputers") = std::vector<std::string>{"spline", "spline+savgol15"}, py::arg("seed"),
      py::arg("samplings") = 10, py::arg("n_points") = 512, py::arg("threads") = 1,
      "Benchmark baseline imputers on corrupted built-in systems; returns a list of cells.");

  py::class_<local::LocalModel, std::shared_ptr<local::LocalModel>>(m, "LocalModel")
      .def_static(
          "initialize",
          [](std::uint64_t seed, const py::kwargs& kw) {
            return std::make_shared<local::LocalModel>(local::LocalModel::initialize(net_config(kw), seed));
          },
          py::arg("seed"), "Random desk-scale model; keyword arguments override network options.")
      .def_static(
          "load", [](const std::filesystem::path& p) { return std::make_shared<local::LocalModel>(local::LocalModel::load(p)); },
          py::arg("path"))
      .def(
          "save",
          [](const local::LocalModel& self, const std::filesystem::path& p, const std::string& dtype) {
            self.save(p, dtype == "f64" ? nn::WeightDtype::F64 : nn::WeightDtype::F32);
          },
          py::arg("path"), py::arg("dtype") = "f32")
      .def_property_readonly("config", [](const local::LocalModel& self) { return json_to_py(self.config().to_json()); })
      .def_property_readonly("parameter_count",
                             [](const local::LocalModel& self) { return self.params().total_count(); })
      .def(
          "impute",
          [](std::shared_ptr<local::LocalModel> self, const Array& times, const Array& values,
             std::optional<Array> mask, std::optional<Array> query, const std::string& windows) {
            const auto s = make_series(times, values, mask);
            const auto traj = local::compose_windows(self, s, local::parse_windowing(windows));
            return evaluate(*traj, query_or(query, s));
          },
          py::arg("times"), py::arg("values"), py::arg("mask") = py::none(), py::arg("query") = py::none(),
          py::arg("windows") = "1",
          "Impute one channel; NaN values are missing. Returns values, derivatives and their log-variances.")
      .def(
          "train",
          [](local::LocalModel& self, const std::filesystem::path& dataset, int epochs, std::uint64_t seed,
             std::optional<double> lr, std::optional<double> lr_min, std::optional<std::string> schedule,
             std::optional<int> batch_size, int threads) {
            const auto records = io::read_dataset(dataset);
            const auto cfg =
                train_config(train::Stage::LocalFIM, epochs, seed, lr, lr_min, schedule, batch_size, threads);
            train::TrainResult r;
            {
              py::gil_scoped_release release;
              r = train::train_local(self, records, cfg);
            }
            return metrics_list(r);
          },
          py::arg("dataset"), py::arg("epochs"), py::arg("seed"), py::arg("lr") = py::none(),
          py::arg("lr_min") = py::none(), py::arg("schedule") = py::none(), py::arg("batch_size") = py::none(),
          py::arg("threads") = 1, "Train on a point-wise dataset file in place; returns per-epoch metrics.");

  py::class_<gap::GapModel, std::shared_ptr<gap::GapModel>>(m, "GapModel")
      .def_static(
          "initialize",
          [](std::shared_ptr<local::LocalModel> theta, std::uint64_t seed) {
            auto frozen = std::make_shared<const local::LocalModel>(*theta);
            return std::make_shared<gap::GapModel>(gap::GapModel::initialize(frozen, seed));
          },
          py::arg("local_model"), py::arg("seed"), "Fresh gap parameters on top of a copy of a local model.")
      .def_static(
          "load", [](const std::filesystem::path& p) { return std::make_shared<gap::GapModel>(gap::GapModel::load(p)); },
          py::arg("path"))
      .def(
          "save",
          [](const gap::GapModel& self, const std::filesystem::path& p, const std::string& dtype) {
            self.save(p, dtype == "f64" ? nn::WeightDtype::F64 : nn::WeightDtype::F32);
          },
          py::arg("path"), py::arg("dtype") = "f32")
      .def(
          "impute",
          [](const gap::GapModel& self, const Array& times, const Array& values, double gap_lo, double gap_hi,
             std::optional<Array> mask, std::optional<Array> query, const std::string& windows) {
            const auto s = make_series(times, values, mask);
            const auto traj = gap::impute_gap(self, s, gap_lo, gap_hi, local::parse_windowing(windows));
            auto out = evaluate(*traj, query_or(query, s));
            out["gap"] = py::make_tuple(traj->stitched().t_first(), traj->stitched().t_last());
            return out;
          },
          py::arg("times"), py::arg("values"), py::arg("gap_lo"), py::arg("gap_hi"), py::arg("mask") = py::none(),
          py::arg("query") = py::none(), py::arg("windows") = "1", "Impute a series with one unobserved interval.")
      .def(
          "train",
          [](gap::GapModel& self, const std::filesystem::path& dataset, int epochs, std::uint64_t seed,
             std::optional<double> lr, std::optional<double> lr_min, std::optional<int> batch_size, int threads) {
            const auto records = io::read_dataset(dataset);
            const auto cfg =
                train_config(train::Stage::GapFIM, epochs, seed, lr, lr_min, std::nullopt, batch_size, threads);
            train::TrainResult r;
            {
              py::gil_scoped_release release;
              r = train::train_gap(self, records, cfg);
            }
            return metrics_list(r);
          },
          py::arg("dataset"), py::arg("epochs"), py::arg("seed"), py::arg("lr") = py::none(),
          py::arg("lr_min") = py::none(), py::arg("batch_size") = py::none(), py::arg("threads") = 1,
          "Train the gap parameters on a temporal dataset file; the local parameters stay frozen.");

  m.def(
      "read_series",
      [](const std::filesystem::path& p) {
        py::list out;
        for (const auto& ns : io::read_series(p)) {
          std::vector<double> v = ns.series.values;
          for (std::size_t i = 0; i < v.size(); ++i) {
            if (!ns.series.observed(i)) v[i] = std::nan("");
          }
          out.append(py::make_tuple(ns.name, to_array(ns.series.times), to_array(v)));
        }
        return out;
      },
      py::arg("path"), "Read a CSV or JSONL series file as a list of (name, times, values) with NaN for missing.");
}
