# Copyright 2026 The fimkit Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import math

import numpy as np
import pytest

import fimkit

SMALL = dict(embed_dim=8, ffn_width=16, seq_hidden=8, attn_dim=8)


def wave(n=80):
    t = np.linspace(0.0, 4.0, n)
    return t, np.sin(t) + 0.2 * t


def test_simulate_shapes():
    t, x = fimkit.simulate("lorenz", 256)
    assert t.shape == (256,)
    assert x.shape == (256, 3)
    assert np.all(np.isfinite(x))


def test_corrupt_drops_shared_points():
    t, channels = fimkit.corrupt("vdp", 512, rho=0.5, gamma=0.05, seed=3)
    assert len(channels) == 2
    dropped = np.isnan(channels[0])
    assert np.array_equal(dropped, np.isnan(channels[1]))
    assert 0.4 < dropped.mean() < 0.6
    _, again = fimkit.corrupt("vdp", 512, rho=0.5, gamma=0.05, seed=3)
    assert np.array_equal(np.nan_to_num(channels[0]), np.nan_to_num(again[0]))


def test_generate_record_is_reproducible():
    a = fimkit.generate_record("temporal", index=4, seed=9)
    b = fimkit.generate_record("temporal", index=4, seed=9)
    assert a == b
    assert a["fine_grid_len"] == 256
    assert a["gap"] is not None
    with pytest.raises(ValueError):
        fimkit.generate_record("weekly", seed=1)


def test_metrics_match_numpy():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 2))
    xh = x + 0.1 * rng.normal(size=(50, 2))
    m = (rng.random((50, 2)) > 0.3).astype(float)
    r = fimkit.metrics(x, xh, m)
    err = np.abs(x - xh) * m
    assert r["mae"] == pytest.approx(err.sum() / m.sum(), rel=1e-12)
    assert r["mre"] == pytest.approx(err.sum() / (np.abs(x) * m).sum(), rel=1e-12)
    r2 = np.mean([1 - ((x[:, d] - xh[:, d]) ** 2).sum() / ((x[:, d] - x[:, d].mean()) ** 2).sum() for d in range(2)])
    assert r["r2"] == pytest.approx(r2, rel=1e-12)


def test_spline_reproduces_cubics():
    t = np.array([0.0, 0.4, 0.9, 1.3, 2.0, 2.2])
    y = t**3 - t
    q = np.linspace(0.0, 2.2, 31)
    out = fimkit.spline(t, y, query=q)
    assert np.allclose(out["values"], q**3 - q, atol=1e-10)
    assert np.allclose(out["derivatives"], 3 * q**2 - 1, atol=1e-8)


def test_local_model_impute_and_round_trip(tmp_path):
    model = fimkit.LocalModel.initialize(seed=1, **SMALL)
    assert model.config["embed_dim"] == 8
    t, y = wave()
    y[10:20] = np.nan
    out = model.impute(t, y, windows="count:2")
    assert out["values"].shape == t.shape
    assert np.all(np.isfinite(out["values"]))
    path = tmp_path / "m.fimw"
    model.save(path, dtype="f64")
    loaded = fimkit.LocalModel.load(path)
    again = loaded.impute(t, y, windows="count:2")
    assert np.array_equal(out["values"], again["values"])
    with pytest.raises(ValueError):
        fimkit.LocalModel.initialize(seed=1, width=3)


def test_gap_model_is_continuous():
    theta = fimkit.LocalModel.initialize(seed=2, **SMALL)
    gm = fimkit.GapModel.initialize(theta, seed=3)
    t, y = wave(120)
    out = gm.impute(t, y, 1.5, 2.5, query=np.array([1.0, 2.0, 3.0]))
    lo, hi = out["gap"]
    assert lo < 1.5 and hi > 2.5
    edge = gm.impute(t, y, 1.5, 2.5, query=np.array([lo, math.nextafter(lo, -math.inf)]))
    assert abs(edge["values"][0] - edge["values"][1]) < 1e-9
    with pytest.raises(ValueError):
        gm.impute(t, y, -1.0, 0.5)


def test_benchmark_cells():
    cells = fimkit.benchmark(["van_der_pol"], ["spline"], seed=1, samplings=2, n_points=128)
    assert len(cells) == 4
    assert {c["rho"] for c in cells} == {0.0, 0.5}


def test_read_series(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("t,a\n0,1\n1,\n2,3\n")
    [(name, t, v)] = fimkit.read_series(p)
    assert name == "a"
    assert math.isnan(v[1])
    assert list(t) == [0.0, 1.0, 2.0]
