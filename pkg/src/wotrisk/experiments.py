"""End-to-end experiment runners writing CSV and JSON artifacts.

Each ``run_*`` takes a resolved config (see ``config.resolve``) and an output
directory and returns a small summary mapping. Numeric CSV columns are fully
determined by the config and seed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path

from . import ctransform as ct
from .config import cost_spec, train_config
from .measures import diffusion_uncorrelated, make_measure, sample
from .moments import MomentConfig, load_problem, moment_bounds, problem_from_dict
from .neural import evaluate, train
from .payoffs import make_payoff
from .risk import bounds_curve, bounds_to_csv, ctransform_values, rho_pointwise

log = logging.getLogger("wotrisk")


def _fmt(v) -> str:
    return f"{float(v):.12g}"


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _search(cfg: dict) -> ct.SearchConfig:
    lo, hi = cfg.get("domain", [None, None])
    return ct.with_domain(None, lo, hi)


def _out(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_earthquake(cfg: dict, out) -> dict:
    out = _out(out)
    measure = make_measure(cfg["measure"])
    f = make_payoff(**cfg["payoff"])
    cost = cost_spec(cfg["cost"])
    tc = train_config(cfg, regime="unconstrained")
    log.info("earthquake: training %d epochs", tc.epochs)
    rep = train(measure, f, cost, "unconstrained", tc)
    rep.curve_to_csv(out / "training_curve.csv")

    grid = ct.ctrans_grid(f, cost, "unconstrained", cfg["surface"]["axes"])
    grid.to_csv(out / "surface.csv")

    oracle = rho_pointwise(measure, f, cost, "unconstrained", cfg["oracle_samples"],
                           rep.eval_seed)
    summary = {
        "estimate": rep.estimate, "stderr": rep.stderr, "n": rep.n_eval, "seed": cfg["seed"],
        "eval_seed": rep.eval_seed, "train_seconds": rep.train_seconds,
        "pointwise": oracle.as_dict(), "config": cfg,
    }
    _write_json(out / "rho.json", summary)
    log.info("earthquake: rho = %.6f (se %.2g), pointwise %.6f", rep.estimate, rep.stderr,
             oracle.value)
    return summary


def run_bull_spread(cfg: dict, out) -> dict:
    out = _out(out)
    measure = make_measure(cfg["measure"])
    f = make_payoff(**cfg["payoff"])
    search = _search(cfg)
    power, scale = float(cfg["cost"]["power"]), float(cfg["cost"].get("scale", 1.0))
    rows = bounds_curve(measure, f, power, cfg["t_list"], cfg["method"], n=cfg["samples"],
                        seed=cfg["seed"], cfg=search,
                        traincfg=train_config(cfg, regime="martingale"), scale=scale,
                        interp_points=cfg["interp_points"])
    bounds_to_csv(rows, out / "bounds.csv")
    ctc = cost_spec(cfg["cost"], timescale=cfg["ctransform"]["t"])
    ct.ctrans_grid(f, ctc, "martingale", cfg["ctransform"]["axes"], search).to_csv(
        out / "ctransform.csv")
    log.info("bull-spread: %d maturities written", len(rows))
    return {"rows": [r.__dict__ for r in rows], "config": cfg}


def run_max_call(cfg: dict, out) -> dict:
    out = _out(out)
    measure = make_measure(cfg["measure"])
    f = make_payoff(**cfg["payoff"])
    cost = cost_spec(cfg["cost"])
    search = _search(cfg)
    tc = train_config(cfg, regime="martingale")
    log.info("max-call: training %d epochs", tc.epochs)
    rep = train(measure, f, cost, "martingale", tc)

    pts, _ = ct.grid_points(cfg["surface"]["axes"])
    net_vals = evaluate(rep.net, f, cost, "martingale", pts)
    with open(out / "surface_payoff.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "f", "network"])
        for p, fv, nv in zip(pts, f._eval(pts), net_vals):
            w.writerow([_fmt(p[0]), _fmt(p[1]), _fmt(fv), _fmt(nv)])
    ct.ctrans_grid(f, cost, "martingale", cfg["surface"]["axes"], search).to_csv(
        out / "surface_ctransform.csv")

    # paired comparison on one common sample
    X = sample(measure, cfg["oracle_samples"], rep.eval_seed)
    pw = ctransform_values(f, cost, "martingale", X, search)
    nv = evaluate(rep.net, f, cost, "martingale", X)
    diff = nv - pw
    summary = {
        "estimate": rep.estimate, "stderr": rep.stderr, "n": rep.n_eval, "seed": cfg["seed"],
        "eval_seed": rep.eval_seed, "train_seconds": rep.train_seconds,
        "pointwise": {"value": float(pw.mean()), "stderr": float(pw.std(ddof=1) / math.sqrt(len(pw))),
                      "n": len(pw)},
        "paired": {"network": float(nv.mean()), "pointwise": float(pw.mean()),
                   "difference": float(diff.mean()),
                   "difference_se": float(diff.std(ddof=1) / math.sqrt(len(diff)))},
        "config": cfg,
    }
    _write_json(out / "rho.json", summary)
    log.info("max-call: network %.6f, pointwise %.6f", rep.estimate, pw.mean())
    return summary


DIM_SWEEP_HEADER = ["d", "option", "upper", "se", "wall_seconds"]


def run_dim_sweep(cfg: dict, out) -> dict:
    out = _out(out)
    m = cfg["measure"]
    cost = cost_spec(cfg["cost"])
    tc = train_config(cfg, regime="martingale")
    rows = []
    with open(out / "dim_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIM_SWEEP_HEADER)
        for d in cfg["d_list"]:
            measure = diffusion_uncorrelated(int(d), m["vol"], m["maturity"], m["x0"], m["corr"])
            for name in cfg["options"]:
                f = make_payoff(name, K=cfg["strike"], dim=int(d))
                rep = train(measure, f, cost, "martingale", tc)
                row = [int(d), name, rep.estimate, rep.stderr, rep.train_seconds]
                rows.append(row)
                w.writerow([row[0], name, _fmt(row[2]), _fmt(row[3]), f"{row[4]:.3f}"])
                fh.flush()
                log.info("dim-sweep: d=%d %s upper %.6f (%.1fs)", d, name, rep.estimate,
                         rep.train_seconds)
    return {"rows": rows, "config": cfg}


def run_ctransform_grid(cfg: dict, out) -> dict:
    out = _out(out)
    f = make_payoff(**cfg["payoff"])
    cost = cost_spec(cfg["cost"])
    grid = ct.ctrans_grid(f, cost, cfg["regime"], cfg["axes"], _search(cfg))
    grid.to_csv(out / "ctransform.csv")
    return {"points": len(grid.points), "config": cfg}


def run_moment_bounds(cfg: dict, out) -> dict:
    out = _out(out)
    lo, hi = cfg["domain"]
    if cfg["problem_file"]:
        problem = load_problem(cfg["problem_file"])
        if Path(cfg["problem_file"]).suffix.lower() != ".json":
            problem = type(problem)(problem.x0, problem.target, problem.instruments, lo, hi)
    else:
        problem = problem_from_dict({"x0": cfg["x0"], "target": cfg["target"],
                                     "instruments": cfg["instruments"], "domain": [lo, hi]})
    res = moment_bounds(problem, MomentConfig(seed=cfg["seed"], **cfg["optimizer"]))
    result = {**res.as_dict(problem), "config": cfg}
    _write_json(out / "result.json", result)
    log.info("moment-bounds: %s upper %s lower %s", res.status, res.upper, res.lower)
    return result


RUNNERS = {
    "earthquake": run_earthquake,
    "bull-spread": run_bull_spread,
    "max-call": run_max_call,
    "dim-sweep": run_dim_sweep,
    "ctransform-grid": run_ctransform_grid,
    "moment-bounds": run_moment_bounds,
}
