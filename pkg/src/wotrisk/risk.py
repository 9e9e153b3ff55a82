"""Risk-measure estimates and model-free price bounds.

``rho(f)`` is the ``mu``-integral of the C-transform, estimated by Monte Carlo
over samples of the reference measure. The upper price bound after a quoted
maturity is ``rho_t(f)`` under the martingale constraint with time-scaled cost
and the lower bound is ``-rho_t(-f)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import ctransform as ct
from .costs import CostSpec
from .measures import ReferenceMeasure, sample
from .neural import TrainConfig, TrainReport, evaluate, train
from .payoffs import Payoff

METHODS = ("pointwise", "network")


@dataclass(frozen=True)
class RhoEstimate:
    value: float
    stderr: float
    method: str
    n: int
    seed: int

    def as_dict(self):
        return {"value": self.value, "stderr": self.stderr, "method": self.method,
                "n": self.n, "seed": self.seed}


def _estimate(vals: np.ndarray, method: str, seed: int) -> RhoEstimate:
    n = len(vals)
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return RhoEstimate(float(vals.mean()), se, method, n, seed)


def ctransform_values(f: Payoff, cost: CostSpec, regime: str, X: np.ndarray,
                      cfg: ct.SearchConfig | None = None,
                      interp_points: int | None = 4001) -> np.ndarray:
    """Pointwise transform at every row of ``X``.

    In one dimension with ``interp_points`` set, the transform is solved on a
    uniform grid spanning the sample range and linearly interpolated; this is
    what makes million-sample estimates affordable.
    """
    X = np.atleast_2d(X)
    if interp_points and X.shape[1] == 1 and len(X) > interp_points:
        lo, hi = float(X.min()), float(X.max())
        grid = np.linspace(lo, hi, interp_points)
        vals = ct.solve(f, cost, grid[:, None], regime, cfg).values
        return np.interp(X[:, 0], grid, vals)
    return ct.solve(f, cost, X, regime, cfg).values


def rho_pointwise(measure: ReferenceMeasure, f: Payoff, cost: CostSpec,
                  regime: str = "unconstrained", n: int = 100_000, seed: int = 0,
                  cfg: ct.SearchConfig | None = None,
                  interp_points: int | None = 4001) -> RhoEstimate:
    """Monte Carlo mean of pointwise C-transform values over ``n`` draws of ``measure``."""
    X = sample(measure, n, seed)
    vals = ctransform_values(f, cost, regime, X, cfg, interp_points)
    return _estimate(vals, "pointwise", seed)


def rho_network(measure: ReferenceMeasure, f: Payoff, cost: CostSpec,
                regime: str = "unconstrained", traincfg: TrainConfig | None = None,
                ) -> tuple[RhoEstimate, TrainReport]:
    """Train a network selection and report its final large-sample evaluation."""
    traincfg = replace(traincfg or TrainConfig(), regime=regime)
    rep = train(measure, f, cost, regime, traincfg)
    return RhoEstimate(rep.estimate, rep.stderr, "network", rep.n_eval, rep.eval_seed), rep


def integrand_pair(measure, f, cost, regime, report: TrainReport, n: int, seed: int,
                   cfg=None, interp_points=4001):
    """Network and pointwise integrands on one common sample (for paired comparisons)."""
    X = sample(measure, n, seed)
    return (evaluate(report.net, f, cost, regime, X),
            ctransform_values(f, cost, regime, X, cfg, interp_points))


# ---------------------------------------------------------------- price bounds


@dataclass(frozen=True)
class PriceBounds:
    t: float
    lower: float
    lower_se: float
    reference: float
    reference_se: float
    upper: float
    upper_se: float

    def sandwich_ok(self, k: float = 3.0) -> bool:
        return (self.lower - k * self.lower_se <= self.reference + k * self.reference_se
                and self.reference - k * self.reference_se <= self.upper + k * self.upper_se)


BOUNDS_HEADER = ["t", "lower", "lower_se", "reference", "reference_se", "upper", "upper_se"]


def bounds_to_csv(rows: list[PriceBounds], path: str | Path, digits: int = 12) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOUNDS_HEADER)
        for b in rows:
            w.writerow([f"{getattr(b, k):.{digits}g}" for k in BOUNDS_HEADER])


def price_bounds(measure: ReferenceMeasure, f: Payoff, p: float, t: float,
                 method: str = "pointwise", n: int = 100_000, seed: int = 0,
                 cfg: ct.SearchConfig | None = None, traincfg: TrainConfig | None = None,
                 scale: float = 1.0, interp_points: int | None = 4001) -> PriceBounds:
    """Upper ``rho_t(f)``, lower ``-rho_t(-f)`` and the reference ``E_mu f``.

    All three integrals use the same ``seed`` so their Monte Carlo errors are
    strongly correlated.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    cost = CostSpec(p, t, scale)
    X = sample(measure, n, seed)
    ref = _estimate(f._eval(X), "reference", seed)
    if method == "pointwise":
        up = _estimate(ctransform_values(f, cost, "martingale", X, cfg, interp_points),
                       method, seed)
        neg = _estimate(ctransform_values(-f, cost, "martingale", X, cfg, interp_points),
                        method, seed)
    else:
        tc = replace(traincfg or TrainConfig(), regime="martingale", eval_samples=n,
                     eval_seed=seed)
        up, _ = rho_network(measure, f, cost, "martingale", tc)
        neg, _ = rho_network(measure, -f, cost, "martingale", tc)
    return PriceBounds(t, -neg.value, neg.stderr, ref.value, ref.stderr, up.value, up.stderr)


def bounds_curve(measure: ReferenceMeasure, f: Payoff, p: float, t_list,
                 method: str = "pointwise", **kwargs) -> list[PriceBounds]:
    t_list = list(t_list)
    if any(t <= 0 for t in t_list) or any(b <= a for a, b in zip(t_list, t_list[1:])):
        raise ValueError("t_list must be positive and strictly increasing")
    return [price_bounds(measure, f, p, t, method, **kwargs) for t in t_list]
