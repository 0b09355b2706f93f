import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vorwave import io as vio
from vorwave.cli import ConfigError, build_parser, load_config, main, resolve_config
from vorwave.residual import PhysicalParams, WaveState, residual
from vorwave.spectral import PeriodicFunction


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def write_config(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_dispersion_shear(tmp_path, capsys):
    assert run(tmp_path, "dispersion", "--gamma", "2") == 0
    out = capsys.readouterr().out
    assert "lambda_minus  -1.9198772881569286" in out
    assert "holds" in out
    rec = vio.read_json(tmp_path / "dispersion.json")
    assert rec["lambda_plus"] == pytest.approx(0.39668897624539895, rel=1e-15)
    assert rec["stagnation_criterion"]["holds"] is True
    assert rec["stagnation_line"]["minus"] == pytest.approx(0.0400613559215357, abs=1e-12)
    assert rec["stagnation_line"]["plus"] is None


def test_dispersion_irrotational(tmp_path, capsys):
    assert run(tmp_path, "dispersion") == 0
    out = capsys.readouterr().out
    assert "no stagnation" in out
    rec = vio.read_json(tmp_path / "dispersion.json")
    assert rec["lambda_plus"] == pytest.approx(math.sqrt(math.tanh(1.0)), rel=1e-15)


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, {"params": {"gama": 1.0}})
    assert main(["dispersion", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "gama" in capsys.readouterr().err
    cfg = write_config(tmp_path, {"solver": {"n_modes": 64}, "colour": 1})
    assert main(["dispersion", "--config", cfg, "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize(
    "data",
    [
        {"params": {"h": -1.0}},
        {"solver": {"newton_tol": 1e-3}},
        {"mode_n": 0},
        {"grid": {"nx": 7}},
        {"params": [1, 2]},
    ],
)
def test_invalid_values_rejected(tmp_path, data):
    cfg = write_config(tmp_path, data)
    assert main(["dispersion", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_malformed_and_missing_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["dispersion", "--config", str(bad)]) == 2
    assert main(["dispersion", "--config", str(tmp_path / "missing.json")]) == 2


def test_flag_overrides_file(tmp_path):
    cfg = write_config(tmp_path, {"params": {"gamma": 1.0, "h": 2.0}, "solver": {"n_modes": 64}})
    args = build_parser().parse_args(
        ["trace", "--config", cfg, "--gamma", "3", "--modes", "32", "--seed-amplitude", "2e-3"]
    )
    rc = resolve_config(args)
    assert rc.params == PhysicalParams(3.0, 1.0, 1.0, 2.0)
    assert rc.solver.n_modes == 32 and rc.solver.ds == 2e-3


def test_load_config_defaults():
    cfg = load_config({})
    assert cfg.params == PhysicalParams() and cfg.grid_nx == 256 and cfg.ny == 64
    with pytest.raises(ConfigError):
        load_config({"mode_n": 200})


def test_bifurcate(tmp_path):
    assert run(tmp_path, "bifurcate", "--gamma", "2", "--n-max", "2", "--modes", "32") == 0
    rec = vio.read_json(tmp_path / "bifurcation.json")
    assert len(rec["points"]) == 4
    assert all(p["null_overlap"] >= 0.999 for p in rec["points"])
    assert run(tmp_path, "bifurcate", "--n-max", "0") == 2


@pytest.fixture(scope="module")
def traced(tmp_path_factory):
    out = tmp_path_factory.mktemp("trace")
    rc = main(["trace", "--gamma", "2", "--side", "minus", "--n-points", "8",
               "--s-max", "0.02", "--modes", "64", "--out", str(out)])
    assert rc == 0
    return out


def test_trace_records(traced):
    records = vio.read_branch(traced / "branch_minus.jsonl")
    assert records[0]["s"] == 0.0
    assert abs(records[-1]["s"]) >= 0.02
    for rec in records:
        assert set(rec["validity"]) == {"os", "gra", "injective"}
        assert all(rec["validity"].values())
        for key in ("s", "lambda", "mu", "m", "Q", "w", "residual_norm"):
            assert key in rec
        state = vio.state_from_record(rec)
        assert residual(state).max_norm() <= 1e-11


def test_trace_is_deterministic(traced, tmp_path):
    assert main(["trace", "--gamma", "2", "--side", "minus", "--n-points", "8",
                 "--s-max", "0.02", "--modes", "64", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "branch_minus.jsonl").read_bytes() == (traced / "branch_minus.jsonl").read_bytes()


def test_trace_divergence_exit_code(tmp_path):
    cfg = write_config(tmp_path, {"solver": {"max_newton_iters": 1, "ds": 1e-2, "ds_min": 5e-3}})
    rc = main(["trace", "--config", cfg, "--gamma", "2", "--n-points", "5", "--out", str(tmp_path)])
    assert rc == 3
    assert len(vio.read_branch(tmp_path / "branch_minus.jsonl")) >= 1


def test_reconstruct_outputs(traced, tmp_path, capsys):
    branch = str(traced / "branch_minus.jsonl")
    assert main(["reconstruct", "--branch", branch, "--index", "3", "--ny", "32",
                 "--emit-gnuplot", "--out", str(tmp_path)]) == 0
    meta, arrays = vio.read_field(tmp_path / "field_3.json")
    assert meta["ny"] == 32 and arrays["psi"].shape == (33, 128)
    assert np.max(np.abs(arrays["psi"][-1])) <= 1e-10
    stag = vio.read_json(tmp_path / "stagnation_3.json")
    assert stag["has_critical_layer"] and len(stag["points"]) >= 2
    header, cols = vio.read_csv_table(tmp_path / "surface_3.csv")
    assert list(cols) == ["X", "Y", "theta0"] and cols["X"].size == 128
    assert (tmp_path / "surface_3.gp").exists()


def test_reconstruct_trivial_is_laminar(traced, tmp_path):
    branch = str(traced / "branch_minus.jsonl")
    assert main(["reconstruct", "--branch", branch, "--index", "0", "--out", str(tmp_path)]) == 0
    meta, arrays = vio.read_field(tmp_path / "field_0.json")
    rec = vio.read_branch(traced / "branch_minus.jsonl")[0]
    gamma, h, m = 2.0, 1.0, rec["m"]
    Y = arrays["V"]
    closed = -0.5 * gamma * Y**2 + (m / h + gamma * h / 2) * Y - m
    assert np.max(np.abs(arrays["psi"] - closed)) <= 1e-10


def test_reconstruct_bad_index(traced, tmp_path):
    branch = str(traced / "branch_minus.jsonl")
    assert main(["reconstruct", "--branch", branch, "--index", "99", "--out", str(tmp_path)]) == 2
    assert main(["reconstruct", "--branch", str(tmp_path / "nope"), "--index", "0"]) == 2


def test_reconstruct_rejects_invalid_state(tmp_path, capsys):
    w = PeriodicFunction.from_callable(lambda x: 1.5 * np.cos(x), 16)
    state = WaveState(PhysicalParams(2.0, 1.0, 1.0, 1.0), 0.5, 0.0, w)
    path = tmp_path / "branch.jsonl"
    vio.write_branch(path, [vio.state_record(state)])
    assert main(["reconstruct", "--branch", str(path), "--index", "0", "--out", str(tmp_path)]) == 4
    assert "[pos]" in capsys.readouterr().err


def test_sweep_csv(tmp_path):
    assert run(tmp_path, "sweep", "--gamma", "2", "--h-count", "50", "--emit-gnuplot") == 0
    header, cols = vio.read_csv_table(tmp_path / "sweep.csv")
    assert header["gamma"] == 2.0
    assert header["h_stagnation"] < header["h_flux_zero"]
    for name in ("h", "m_plus", "m_minus", "stp_holds", "h_star_bracket"):
        assert name in cols
    assert np.all(cols["m_plus"] > 0)
    assert np.count_nonzero(np.diff(np.sign(cols["m_minus"]))) == 1
    assert (tmp_path / "sweep.gp").exists()
    assert run(tmp_path, "sweep", "--h-min", "2", "--h-max", "1") == 2


def test_sweep_irrotational_header(tmp_path):
    assert run(tmp_path, "sweep", "--h-count", "5") == 0
    header, _ = vio.read_csv_table(tmp_path / "sweep.csv")
    assert header["h_flux_zero"] is None


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "vorwave", "dispersion", "--gamma", "2", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and "lambda_plus" in proc.stdout


# -- serialization round trips ---------------------------------------------------

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=1, max_size=20))
def test_json_float_round_trip(values):
    text = vio.dumps({"v": values})
    back = json.loads(text)["v"]
    assert all(np.float64(a) == np.float64(b) and type(b) is float for a, b in zip(values, back))


def test_json_special_values():
    back = json.loads(vio.dumps([math.inf, -math.inf, 1.0, None, True, "x"]))
    assert back[0] == math.inf and back[1] == -math.inf and back[3] is None and back[4] is True
    assert math.isnan(json.loads(vio.dumps(math.nan)))
    with pytest.raises(TypeError):
        vio.dumps(object())


def test_field_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    arrays = {"U": rng.standard_normal((3, 4)), "psi": rng.standard_normal((3, 4))}
    vio.write_field(tmp_path / "f.json", {"nx": 4, "note": "x"}, arrays)
    meta, back = vio.read_field(tmp_path / "f.json")
    assert meta == {"nx": 4, "note": "x"}
    for key in arrays:
        assert np.array_equal(arrays[key], back[key])
    with pytest.raises(ValueError):
        vio.write_field(tmp_path / "g.json", {}, {"a": np.zeros((2, 2)), "b": np.zeros((3, 2))})


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    cols = {"a": rng.standard_normal(6).tolist(), "b": [True, False] * 3}
    vio.write_csv_table(tmp_path / "t.csv", cols, {"h": 0.1 + 0.2, "none": None})
    header, back = vio.read_csv_table(tmp_path / "t.csv")
    assert header == {"h": 0.1 + 0.2, "none": None}
    assert np.array_equal(back["a"], cols["a"]) and np.array_equal(back["b"], [1, 0] * 3)


def test_state_record_round_trip():
    w = PeriodicFunction.from_coefficients(0.0, [0.1, -0.02, 1e-17], n_modes=8)
    state = WaveState(PhysicalParams(1.0, 2.0, 0.5, 3.0), -0.3, 1e-9, w)
    back = vio.state_from_record(json.loads(vio.dumps(vio.state_record(state))))
    assert back.params == state.params and back.lam == state.lam and back.mu == state.mu
    assert np.array_equal(back.w.a, state.w.a)
