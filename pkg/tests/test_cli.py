import csv
import json

import numpy as np
import pytest

from wotrisk.cli import main
from wotrisk.config import DEFAULTS, ConfigError, load_file, parse_flat, resolve
from wotrisk.ctransform import bs_call


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_flat():
    cfg = parse_flat("# comment\nseed = 3\ntrain.epochs=200\nmeasure.kind = gaussian\n"
                     "t_list = [0.1, 0.2]\n")
    assert cfg == {"seed": 3, "train": {"epochs": 200}, "measure": {"kind": "gaussian"},
                   "t_list": [0.1, 0.2]}
    with pytest.raises(ConfigError):
        parse_flat("no equals sign")


def test_json_and_flat_agree(tmp_path):
    a = load_file(_write(tmp_path, "a.json", json.dumps({"train": {"epochs": 300}})))
    b = load_file(_write(tmp_path, "b.cfg", "train.epochs = 300\n"))
    assert resolve("earthquake", a) == resolve("earthquake", b)


def test_resolve_fills_defaults_and_overrides():
    cfg = resolve("earthquake", {}, seed=5, epochs=50)
    assert cfg["seed"] == 5 and cfg["train"]["seed"] == 5
    assert cfg["train"]["epochs"] == 50 and cfg["train"]["window"] == 50
    assert cfg["payoff"] == DEFAULTS["earthquake"]["payoff"]


@pytest.mark.parametrize("user", [
    {"bogus": 1},
    {"train": {"epoch": 10}},
    {"measure": {"kind": "gaussian", "mean": [0, 0], "colour": 1}},
    {"payoff": {"name": "digital"}},
    {"t_list": [0.5, 0.25]},
    {"train": 5},
])
def test_invalid_configs(user):
    exp = "bull-spread" if "t_list" in user else "earthquake"
    with pytest.raises(ConfigError):
        resolve(exp, user)


def test_measure_kind_replaces_block():
    cfg = resolve("earthquake", {"measure": {"kind": "dirac", "point": [0.0, 0.0]}})
    assert cfg["measure"] == {"kind": "dirac", "point": [0.0, 0.0]}


def test_exit_code_config_error(tmp_path, capsys):
    assert main(["earthquake", "--config", _write(tmp_path, "c.cfg", "bogus = 1\n"),
                 "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err
    assert main(["earthquake", "--config", str(tmp_path / "missing.json")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 2


def test_exit_code_numerical_abort(tmp_path, monkeypatch):
    from wotrisk import experiments
    from wotrisk.neural import NumericalAbort

    def boom(cfg, out):
        raise NumericalAbort("non-finite objective")

    monkeypatch.setitem(experiments.RUNNERS, "earthquake", boom)
    assert main(["earthquake", "--out", str(tmp_path), "-q"]) == 3


def test_earthquake_constant_override(tmp_path):
    cfg = _write(tmp_path, "eq.json", json.dumps({
        "payoff": {"name": "constant", "value": 0.3, "dim": 2},
        "train": {"eval_samples": 5000},
        "surface": {"axes": [[-1, 1, 5], [-1, 1, 4]]},
        "oracle_samples": 50,
    }))
    out = tmp_path / "eq"
    assert main(["earthquake", "--config", cfg, "--epochs", "1000", "--out", str(out), "-q"]) == 0
    rho = json.loads((out / "rho.json").read_text())
    # leftover displacement costs a vanishing amount; the bias dwarfs the tiny standard error
    assert rho["estimate"] <= 0.3
    assert abs(rho["estimate"] - 0.3) <= 2 * rho["stderr"] + 1e-5
    assert rho["config"]["train"]["epochs"] == 1000
    assert rho["config"]["measure"]["mean"] == [0.75, 0.25]
    curve = _rows(out / "training_curve.csv")
    assert len(curve) == 1000 and list(curve[0]) == ["epoch", "raw", "ma100"]
    surf = _rows(out / "surface.csv")
    assert len(surf) == 20 and all(float(r["f_C"]) >= float(r["f"]) for r in surf)


def test_earthquake_surface_above_payoff(tmp_path):
    cfg = _write(tmp_path, "eq.cfg", "surface.axes = [[-1, 2.5, 8], [-1.5, 2, 8]]\n"
                 "oracle_samples = 50\ntrain.eval_samples = 2000\n")
    out = tmp_path / "eq"
    assert main(["earthquake", "--config", cfg, "--epochs", "100", "--out", str(out), "-q"]) == 0
    surf = _rows(out / "surface.csv")
    assert all(float(r["f_C"]) >= float(r["f"]) for r in surf)


def test_bull_spread_outputs(tmp_path):
    cfg = _write(tmp_path, "bs.cfg", "t_list = [0.02, 0.25]\nsamples = 20000\n"
                 "ctransform.axes = [[0, 3, 31]]\n")
    out = tmp_path / "bs"
    assert main(["bull-spread", "--config", cfg, "--out", str(out), "-q"]) == 0
    rows = _rows(out / "bounds.csv")
    assert list(rows[0]) == ["t", "lower", "lower_se", "reference", "reference_se", "upper",
                             "upper_se"]
    ref = bs_call(1, 0.9, 0.2, 0.5) - bs_call(1, 1.2, 0.2, 0.5)
    for r in rows:
        v = {k: float(x) for k, x in r.items()}
        assert v["reference"] == float(rows[0]["reference"])
        assert abs(v["reference"] - ref) <= 3 * v["reference_se"]
        assert v["lower"] - 3 * v["lower_se"] <= v["reference"] <= v["upper"] + 3 * v["upper_se"]
    assert float(rows[1]["upper"]) >= float(rows[0]["upper"]) - 3 * float(rows[0]["upper_se"])
    ct = _rows(out / "ctransform.csv")
    assert len(ct) == 31 and list(ct[0]) == ["x1", "f", "f_C"]


def test_max_call_outputs(tmp_path):
    cfg = _write(tmp_path, "mc.json", json.dumps({
        "surface": {"axes": [[0.5, 1.5, 5], [0.5, 1.5, 5]]}, "oracle_samples": 300,
        "train": {"eval_samples": 3000}}))
    out = tmp_path / "mc"
    assert main(["max-call", "--config", cfg, "--epochs", "300", "--out", str(out), "-q"]) == 0
    pay = _rows(out / "surface_payoff.csv")
    assert list(pay[0]) == ["x1", "x2", "f", "network"] and len(pay) == 25
    surf = _rows(out / "surface_ctransform.csv")
    assert all(float(r["f_C"]) >= float(r["f"]) for r in surf)
    rho = json.loads((out / "rho.json").read_text())
    p = rho["paired"]
    assert p["network"] <= p["pointwise"] + 3 * p["difference_se"]
    at = [r for r in pay if float(r["x1"]) == 1.25 and float(r["x2"]) == 0.75]
    assert float(at[0]["f"]) == pytest.approx(0.25)


def test_dim_sweep_outputs(tmp_path):
    cfg = _write(tmp_path, "ds.cfg", "d_list = [1, 3]\ntrain.eval_samples = 20000\n")
    out = tmp_path / "ds"
    assert main(["dim-sweep", "--config", cfg, "--epochs", "200", "--out", str(out), "-q"]) == 0
    rows = _rows(out / "dim_sweep.csv")
    assert list(rows[0]) == ["d", "option", "upper", "se", "wall_seconds"]
    assert len(rows) == 8
    for r in rows:
        if r["option"] == "geometric_put":
            assert float(r["upper"]) <= 1.0


def test_ctransform_grid(tmp_path):
    cfg = _write(tmp_path, "cg.cfg", "axes = [[0, 2, 21]]\ncost.scale = 0\n")
    out = tmp_path / "cg"
    assert main(["ctransform-grid", "--config", cfg, "--out", str(out), "-q"]) == 0
    rows = _rows(out / "ctransform.csv")
    xs = np.array([float(r["x1"]) for r in rows])
    np.testing.assert_allclose([float(r["f_C"]) for r in rows], 0.25 * np.minimum(xs, 1.2),
                               atol=1e-6)


def test_moment_bounds_cli(tmp_path):
    out = tmp_path / "mb"
    assert main(["moment-bounds", "--out", str(out), "-q"]) == 0
    res = json.loads((out / "result.json").read_text())
    assert res["upper"] == pytest.approx(0.25, abs=1e-2)
    assert res["config"]["domain"] == [0.0, 3.0]
    quotes = _write(tmp_path, "q.json", json.dumps({"instruments": [
        {"name": "bull_spread", "K1": 0.9, "K2": 1.2, "bid": 0.17, "ask": 0.17}]}))
    assert main(["moment-bounds", "--config", quotes, "--out", str(out), "-q"]) == 0
    res = json.loads((out / "result.json").read_text())
    assert res["upper"] == pytest.approx(0.17, abs=1e-6)
    assert res["lower"] == pytest.approx(0.17, abs=1e-6)
    bad = _write(tmp_path, "bad.json", json.dumps({"instruments": [
        {"name": "max_call", "K": 0.9, "dim": 1, "bid": 0.05, "ask": 0.05}]}))
    assert main(["moment-bounds", "--config", bad, "--out", str(out), "-q"]) == 4
    assert json.loads((out / "result.json").read_text())["status"] == "infeasible"


def test_moment_bounds_problem_file(tmp_path):
    pf = _write(tmp_path, "q.csv", "x0,1.0\ntarget,bull_spread,0.9,1.2\n")
    cfg = _write(tmp_path, "c.cfg", f"problem_file = {pf}\n")
    out = tmp_path / "mb"
    assert main(["moment-bounds", "--config", cfg, "--out", str(out), "-q"]) == 0
    res = json.loads((out / "result.json").read_text())
    assert res["lower"] == pytest.approx(0.1 * 0.3 / 2.1, abs=1e-3)


def test_reproducible_rerun(tmp_path):
    cfg = _write(tmp_path, "ds.cfg", "d_list = [2]\noptions = [\"max_call\"]\n"
                 "train.eval_samples = 5000\n")
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["dim-sweep", "--config", cfg, "--epochs", "100", "--seed", "7",
                     "--reproducible", "--out", str(out), "-q"]) == 0
        outs.append([{k: v for k, v in r.items() if k != "wall_seconds"}
                     for r in _rows(out / "dim_sweep.csv")])
    assert outs[0] == outs[1]
