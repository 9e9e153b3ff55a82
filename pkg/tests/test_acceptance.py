"""Acceptance criteria, one test each, run at their stated tolerances and budgets."""

import csv
import time

import numpy as np
import pytest

from helpers import gradient_check
from wotrisk.cli import main
from wotrisk.costs import CostSpec
from wotrisk.ctransform import (bs_call, concave_envelope_1d, convex_envelope_1d, ctrans_grid,
                                ctrans_unconstrained, with_domain)
from wotrisk.measures import DiffusionMarginal, Gaussian, LogNormalBS, sample
from wotrisk.moments import Instrument, MomentProblem, moment_bounds
from wotrisk.neural import TrainConfig, evaluate, train
from wotrisk.payoffs import (Affine, BasketCall, BullSpread, Bump, EarthquakeLoss, MaxCall,
                             Quadratic, constant)
from wotrisk.risk import ctransform_values, price_bounds

MU = LogNormalBS(1.0, 0.2, 0.5)
PRICES = with_domain(None, lower=0.0)


def _mc(vals):
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals)))


# ---------------------------------------------------------------- 1


def _pairs():
    mu2 = DiffusionMarginal([1.0, 1.0], [[0.30, 0.0], [0.05, 0.20]], 1.0)
    quake = Gaussian([0.75, 0.25], np.eye(2))
    big = EarthquakeLoss(bumps=(Bump((0.0, 0.0), 1.2, 0.5), Bump((1.5, 0.5), 0.8, 0.3)))
    c3 = CostSpec(3.0, 1 / 12)
    return [  # (label, measure, f, g with f <= g, cost, regime, n)
        ("spread<=0.3", MU, BullSpread(), constant(0.3), c3, "martingale", 20_000),
        ("spread<=wider", MU, BullSpread(0.9, 1.2), BullSpread(0.8, 1.2), c3, "martingale",
         20_000),
        ("maxcall K", mu2, MaxCall(1.1, 2), MaxCall(1.0, 2), c3, "martingale", 1000),
        ("basket<=max", mu2, BasketCall(1.0, 2), MaxCall(1.0, 2), c3, "martingale", 1000),
        ("quake amp", quake, EarthquakeLoss(), big, CostSpec(2.0), "unconstrained", 1000),
    ]


def test_ac1_monetary_axioms(report):
    t0 = time.perf_counter()
    details, ok = [], True
    zero = ctransform_values(constant(0.0), CostSpec(2.0), "unconstrained",
                             sample(MU, 1000, 0))
    ok &= bool(np.all(zero == 0.0))
    details.append(f"rho(0)={zero.mean():g}")
    worst_cash = 0.0
    for label, mu, f, g, cost, regime, n in _pairs():
        X = sample(mu, n, 11)
        vf = ctransform_values(f, cost, regime, X)
        vg = ctransform_values(g, cost, regime, X)
        vm = ctransform_values(f + 0.1, cost, regime, X)
        vh = ctransform_values(f * 0.5 + g * 0.5, cost, regime, X)
        (rf, sf), (rg, sg), (rm, sm), (rh, sh) = map(_mc, (vf, vg, vm, vh))
        cash = abs(rm - rf - 0.1)
        worst_cash = max(worst_cash, cash / (3 * np.hypot(sf, sm) + 1e-300))
        ok &= cash < 3 * np.hypot(sf, sm) or cash < 1e-12
        ok &= rf <= rg + 3 * np.hypot(sf, sg)
        ok &= rh <= 0.5 * rf + 0.5 * rg + 3 * np.sqrt(sh**2 + 0.25 * sf**2 + 0.25 * sg**2)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    details.append(f"cash additivity worst {worst_cash:.2g} of 3se; 5 monotone/convex pairs")
    report(1, "monetary axioms", ok, f"{'; '.join(details)}; {elapsed:.0f}s")


# ---------------------------------------------------------------- 2


def test_ac2_affine_pinning(report):
    t0 = time.perf_counter()
    b = price_bounds(MU, Affine((1.0,), 0.0), 3.0, 1 / 12, n=10**6, seed=21)
    elapsed = time.perf_counter() - t0
    ok = (abs(b.upper - 1) <= 3 * b.upper_se and abs(b.lower - 1) <= 3 * b.lower_se
          and max(b.upper_se, b.lower_se) <= 1e-3 and elapsed < 60)
    report(2, "affine pinning", ok,
           f"upper {b.upper:.6f} lower {b.lower:.6f} se {b.upper_se:.1e}; {elapsed:.0f}s")


# ---------------------------------------------------------------- 3


def test_ac3_zero_cost_envelope(report):
    t0 = time.perf_counter()
    target = 0.25 * (1 - bs_call(1, 1.2, 0.2, 0.5))
    X = sample(MU, 10**6, 31)
    vals = ctransform_values(BullSpread(), CostSpec(3.0, 1 / 12, scale=0.0), "martingale", X,
                             PRICES)
    est = vals.mean()
    # the same target through the envelope oracle on the same sample
    env = concave_envelope_1d(BullSpread())(X[:, 0]).mean()
    elapsed = time.perf_counter() - t0
    rel = abs(est - target) / target
    ok = rel < 0.01 and abs(env - target) / target < 0.01 and elapsed < 120
    report(3, "zero-cost envelope limit", ok,
           f"upper {est:.6f} target {target:.6f} (rel {rel:.1e}); {elapsed:.0f}s")


# ---------------------------------------------------------------- 4


def test_ac4_sandwich_and_widening(report):
    t0 = time.perf_counter()
    ts = [1 / 52, 1 / 12, 1 / 4, 1 / 2]
    rows = [price_bounds(MU, BullSpread(), 3.0, t, n=10**6, seed=41, cfg=PRICES) for t in ts]
    ref = bs_call(1, 0.9, 0.2, 0.5) - bs_call(1, 1.2, 0.2, 0.5)
    ok = True
    for r in rows:
        ok &= r.lower <= r.reference + 3 * np.hypot(r.lower_se, r.reference_se)
        ok &= r.reference <= r.upper + 3 * np.hypot(r.upper_se, r.reference_se)
        ok &= abs(r.reference - ref) <= 3 * r.reference_se
    for a, b in zip(rows, rows[1:]):
        ok &= b.upper >= a.upper - 3 * np.hypot(a.upper_se, b.upper_se)
        ok &= b.lower <= a.lower + 3 * np.hypot(a.lower_se, b.lower_se)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    span = ", ".join(f"[{r.lower:.4f},{r.upper:.4f}]" for r in rows)
    report(4, "sandwich and widening", ok, f"ref {rows[0].reference:.4f} (BS {ref:.4f}); "
           f"bounds {span}; {elapsed:.0f}s")


# ---------------------------------------------------------------- 5


def test_ac5_approximation_from_below(report):
    t0 = time.perf_counter()
    f, cost = BullSpread(), CostSpec(3.0, 1 / 12)
    cfg = TrainConfig(epochs=10_000, batch=100, lr=1e-3, hidden=4, width=20,
                      regime="martingale", seed=0, eval_samples=10**6, eval_seed=51)
    rep = train(MU, f, cost, "martingale", cfg)
    X = sample(MU, 10**6, 51)
    oracle, ose = _mc(ctransform_values(f, cost, "martingale", X))
    net, nse = rep.estimate, rep.stderr
    elapsed = time.perf_counter() - t0
    ok = net <= oracle + 3 * np.hypot(nse, ose) and net >= oracle * 0.98 and elapsed < 600
    report(5, "approximation from below", ok,
           f"network {net:.6f} oracle {oracle:.6f} (gap {(net - oracle) / oracle:+.2%}); "
           f"{elapsed:.0f}s")


# ---------------------------------------------------------------- 6


def test_ac6_gradient_correctness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(61)
    worst = 0.0
    for k in range(10):
        act = ("relu", "tanh", "softplus")[k % 3]
        batch = rng.normal([0.75, 0.25], 0.8, size=(8, 2))
        c2 = CostSpec(float(rng.choice([2.0, 3.0])))
        ct = CostSpec(float(rng.choice([2.0, 3.0])), float(rng.uniform(0.02, 0.5)))
        worst = max(worst, gradient_check("unconstrained", EarthquakeLoss(), c2, batch, 100 + k,
                                          act),
                    gradient_check("martingale", EarthquakeLoss(), ct, batch, 200 + k, act))
    elapsed = time.perf_counter() - t0
    report(6, "gradient correctness", worst < 1e-4 and elapsed < 60,
           f"worst relative error {worst:.1e} over 10 configurations x 2 objectives; "
           f"{elapsed:.0f}s")


# ---------------------------------------------------------------- 7


def test_ac7_ctransform_analytic(report):
    t0 = time.perf_counter()
    xs = np.linspace(-2, 2, 9)
    lin = np.max(np.abs(ctrans_unconstrained(Affine((1.0,), 0.0), CostSpec(2.0), xs) - (xs + 0.25)))
    quad = 0.0
    for c in (0.25, 0.5, 0.75):
        got = ctrans_unconstrained(Quadratic(c, 1), CostSpec(2.0), xs[:, None])
        quad = max(quad, np.max(np.abs(got - c * xs**2 / (1 - c))))
    grid = ctrans_grid(BullSpread(), CostSpec(3.0, scale=0.0), "martingale", [(0.0, 3.0, 2001)],
                       PRICES)
    env = np.max(np.abs(grid.values - concave_envelope_1d(BullSpread())(grid.points[:, 0])))
    elapsed = time.perf_counter() - t0
    ok = lin < 1e-4 and quad < 1e-4 and env < 1e-3 and elapsed < 60
    report(7, "C-transform analytic cases", ok,
           f"linear {lin:.1e}, quadratic {quad:.1e}, envelope sup-norm {env:.1e}; {elapsed:.0f}s")


# ---------------------------------------------------------------- 8


def test_ac8_moment_constraints(report):
    t0 = time.perf_counter()
    f = BullSpread()
    x0 = np.array([1.0])
    plain = moment_bounds(MomentProblem(x0, f, (), 0.0, 3.0))
    up_oracle = concave_envelope_1d(f)(1.0)
    low_oracle = convex_envelope_1d(f)(1.0)
    pinned = moment_bounds(MomentProblem(x0, f, (Instrument(f, 0.17, 0.17),), 0.0, 3.0))
    bad = moment_bounds(MomentProblem(x0, f, (Instrument(MaxCall(0.9, 1), 0.05, 0.05),), 0.0, 3.0))
    elapsed = time.perf_counter() - t0
    ok = (abs(plain.upper - up_oracle) < 1e-2 and abs(plain.upper - 0.25) < 1e-2
          and abs(plain.lower - low_oracle) < 1e-2
          and abs(pinned.upper - 0.17) < 1e-6 and abs(pinned.lower - 0.17) < 1e-6
          and bad.status == "infeasible" and elapsed < 120)
    report(8, "moment constraints", ok,
           f"n=0 upper {plain.upper:.6f} (oracle {up_oracle:.6f}), lower {plain.lower:.6f} "
           f"(convex-envelope oracle {low_oracle:.6f}); pinned [{pinned.lower:.8f}, "
           f"{pinned.upper:.8f}]; infeasible status '{bad.status}'; {elapsed:.0f}s")


# ---------------------------------------------------------------- 9


def test_ac9_dimension_sweep(report, tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text("d_list = [2, 4, 8, 16]\n")
    code = main(["dim-sweep", "--config", str(cfg), "--epochs", "1000", "--out", str(tmp_path),
                 "-q"])
    with open(tmp_path / "dim_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    per_d = {}
    for r in rows:
        per_d[int(r["d"])] = per_d.get(int(r["d"]), 0.0) + float(r["wall_seconds"])
    ratio = per_d[16] / per_d[2]
    finite = all(np.isfinite(float(r["upper"])) for r in rows)
    elapsed = time.perf_counter() - t0
    ok = code == 0 and len(rows) == 16 and finite and ratio < 64 and elapsed < 1200
    report(9, "dimension sweep", ok,
           f"{len(rows)} runs without abort; time(16)/time(2) = {ratio:.2f}; {elapsed:.0f}s")


# ---------------------------------------------------------------- 10


RUNS = {
    "earthquake": ("surface.axes = [[-1, 2.5, 6], [-1.5, 2, 6]]\noracle_samples = 50\n"
                   "train.eval_samples = 5000\n", ["training_curve.csv", "surface.csv"]),
    "bull-spread": ("t_list = [0.02, 0.25]\nsamples = 20000\nctransform.axes = [[0, 3, 31]]\n",
                    ["bounds.csv", "ctransform.csv"]),
    "max-call": ("surface.axes = [[0.5, 1.5, 4], [0.5, 1.5, 4]]\noracle_samples = 100\n"
                 "train.eval_samples = 5000\n", ["surface_payoff.csv", "surface_ctransform.csv"]),
    "dim-sweep": ("d_list = [1, 3]\ntrain.eval_samples = 5000\n", ["dim_sweep.csv"]),
    "ctransform-grid": ("axes = [[0, 3, 61]]\n", ["ctransform.csv"]),
}


def _numeric_columns(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    drop = {i for i, h in enumerate(rows[0]) if h == "wall_seconds"}
    return [[c for i, c in enumerate(r) if i not in drop] for r in rows]


def test_ac10_reproducibility(report, tmp_path):
    mismatched = []
    for exp, (text, files) in RUNS.items():
        cfg = tmp_path / f"{exp}.cfg"
        cfg.write_text(text)
        outs = []
        for k in range(2):
            out = tmp_path / f"{exp}-{k}"
            assert main([exp, "--config", str(cfg), "--seed", "13", "--epochs", "200",
                         "--reproducible", "--out", str(out), "-q"]) == 0
            outs.append(out)
        for name in files:
            if _numeric_columns(outs[0] / name) != _numeric_columns(outs[1] / name):
                mismatched.append(f"{exp}/{name}")
    report(10, "reproducibility", not mismatched,
           f"{sum(len(v[1]) for v in RUNS.values())} CSV files across {len(RUNS)} experiments; "
           f"mismatches: {mismatched or 'none'}")
