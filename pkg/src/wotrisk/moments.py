"""Model-free price bounds from bid-ask quotes at a single maturity.

Given today's prices ``x0`` and quoted instruments ``f_i`` with bid-ask
intervals ``[b_i, a_i]``, the upper bound is

    sup { sum_k p_k f(y_k) : sum_k p_k y_k = x0,  b_i <= sum_k p_k f_i(y_k) <= a_i }

over finitely many weighted atoms (``2n + 2d + 1`` suffice, by the extreme-point
bound for ``2n + 2d`` moment conditions). The lower bound is ``-sup`` of ``-f``.

Three stages per bound:

1. an exact linear program over the weights of a fixed cloud of candidate
   atoms (grid in one dimension, seeded random cloud otherwise);
2. penalty ascent over atom positions and softmax weights from the LP support
   and from random perturbations of ``x0``, with the penalty weight doubling
   from 10 twelve times;
3. an exact LP re-solve of the weights on the refined atoms, so every reported
   certificate satisfies the constraints to solver precision.

The reported bound is the certificate's own objective, i.e. an inner bound.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog, minimize

from .payoffs import MaxCall, MinPut, Payoff, constant, make_payoff


@dataclass(frozen=True)
class Instrument:
    payoff: Payoff
    bid: float
    ask: float
    name: str = ""

    def __post_init__(self):
        if not 0 <= self.bid <= self.ask:
            raise ValueError(f"instrument {self.name or self.payoff.name}: need 0 <= bid <= ask")


@dataclass(frozen=True)
class MomentProblem:
    x0: np.ndarray
    target: Payoff
    instruments: tuple = ()
    lower: float | None = 0.0
    upper: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))
        object.__setattr__(self, "instruments", tuple(self.instruments))
        if self.lower is not None and np.any(self.x0 < self.lower):
            raise ValueError("x0 lies below the domain")
        if self.upper is not None and np.any(self.x0 > self.upper):
            raise ValueError("x0 lies above the domain")

    @property
    def dim(self):
        return len(self.x0)

    @property
    def n_atoms(self):
        return 2 * len(self.instruments) + 2 * self.dim + 1


@dataclass
class AtomicCandidate:
    atoms: np.ndarray
    weights: np.ndarray

    def objective(self, f: Payoff) -> float:
        return float(self.weights @ f._eval(self.atoms))

    def mean_residual(self, x0) -> float:
        return float(np.linalg.norm(self.weights @ self.atoms - x0))

    def violations(self, instruments) -> list[float]:
        out = []
        for ins in instruments:
            v = float(self.weights @ ins.payoff._eval(self.atoms))
            out.append(max(v - ins.ask, ins.bid - v, 0.0))
        return out

    def as_dict(self):
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}


@dataclass(frozen=True)
class MomentConfig:
    starts: int = 8
    grid_points: int = 601
    cloud_points: int = 4000
    penalty0: float = 10.0
    penalty_doublings: int = 12
    feas_tol: float = 1e-6
    seed: int = 0
    max_iter: int = 200


@dataclass
class MomentResult:
    status: str  # "ok" | "infeasible"
    upper: float
    lower: float
    upper_certificate: AtomicCandidate | None
    lower_certificate: AtomicCandidate | None
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self, problem: MomentProblem) -> dict:
        out = {"status": self.status, "upper": _num(self.upper), "lower": _num(self.lower),
               "diagnostics": self.diagnostics}
        for key, cert in (("upper", self.upper_certificate), ("lower", self.lower_certificate)):
            if cert is not None:
                out[f"{key}_certificate"] = {
                    **cert.as_dict(),
                    "mean_residual": cert.mean_residual(problem.x0),
                    "interval_violations": cert.violations(problem.instruments),
                }
        return out

    def to_json(self, problem: MomentProblem, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(problem), indent=2))


def _num(v):
    return None if v is None or not math.isfinite(v) else v


# ---------------------------------------------------------------- stages


def _strike_scale(problem: MomentProblem) -> float:
    ks = []
    for f in [problem.target] + [i.payoff for i in problem.instruments]:
        for name in ("K", "K1", "K2"):
            if hasattr(f, name):
                ks.append(getattr(f, name))
    spread = float(np.ptp(ks)) if len(ks) > 1 else 0.0
    return max(spread, 0.25 * float(np.max(np.abs(problem.x0))), 0.1)


def _box(problem: MomentProblem, scale: float):
    lo = problem.lower if problem.lower is not None else float(problem.x0.min()) - 6 * scale
    hi = problem.upper
    if hi is None:
        ks = [getattr(f, a) for f in [problem.target] + [i.payoff for i in problem.instruments]
              for a in ("K", "K1", "K2") if hasattr(f, a)]
        hi = max([3.0 * float(problem.x0.max()), float(problem.x0.max()) + 6 * scale]
                 + [2.0 * k for k in ks])
    return lo, hi


def _cloud(problem: MomentProblem, cfg: MomentConfig, lo: float, hi: float) -> np.ndarray:
    d = problem.dim
    if d == 1:
        pts = np.linspace(lo, hi, cfg.grid_points)
        ks = [getattr(f, a) for f in [problem.target] + [i.payoff for i in problem.instruments]
              for a in ("K", "K1", "K2") if hasattr(f, a)]
        pts = np.unique(np.concatenate([pts, problem.x0, [k for k in ks if lo <= k <= hi]]))
        return pts[:, None]
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    cloud = rng.uniform(lo, hi, size=(cfg.cloud_points, d))
    return np.concatenate([problem.x0[None, :], cloud], axis=0)


def _lp(problem: MomentProblem, g: Payoff, atoms: np.ndarray):
    """Exact weights maximizing ``sum w g(atoms)``; ``None`` when infeasible."""
    n = len(atoms)
    A_eq = np.vstack([np.ones((1, n)), atoms.T])
    b_eq = np.concatenate([[1.0], problem.x0])
    A_ub, b_ub = [], []
    for ins in problem.instruments:
        fi = ins.payoff._eval(atoms)
        A_ub += [fi, -fi]
        b_ub += [ins.ask, -ins.bid]
    res = linprog(-g._eval(atoms), A_ub=np.array(A_ub) if A_ub else None,
                  b_ub=np.array(b_ub) if b_ub else None, A_eq=A_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    w = np.clip(res.x, 0.0, None)
    return w / w.sum()


def _certificate(problem, g, atoms, k):
    w = _lp(problem, g, atoms)
    if w is None:
        return None
    order = np.argsort(-w, kind="stable")
    keep = order[: k]
    if np.any(w[order[k:]] > 0):
        # non-basic solution with too many atoms: re-solve on the largest ones
        w2 = _lp(problem, g, atoms[keep])
        if w2 is None:
            return None
        return AtomicCandidate(atoms[keep], w2)
    return AtomicCandidate(atoms[keep], w[keep] / w[keep].sum())


def _penalty_ascent(problem, g, Y0, a0, cfg, lo, hi, objective_weight=1.0):
    """Maximize ``objective_weight * sum p g(y) - lam * violation`` over atoms and logits."""
    k, d = Y0.shape
    x0 = problem.x0
    bounds = [(lo, hi)] * (k * d) + [(None, None)] * k

    def unpack(theta):
        return theta[: k * d].reshape(k, d), theta[k * d:]

    def neg(theta, lam):
        Y, a = unpack(theta)
        e = np.exp(a - a.max())
        p = e / e.sum()
        gv = g._eval(Y)
        val = objective_weight * (p @ gv)
        dY = objective_weight * p[:, None] * g._grad(Y)
        dp = objective_weight * gv
        res = p @ Y - x0
        val -= lam * res @ res
        dY -= lam * 2 * p[:, None] * res[None, :]
        dp = dp - lam * 2 * (Y @ res)
        for ins in problem.instruments:
            fv = ins.payoff._eval(Y)
            F = p @ fv
            ex = max(F - ins.ask, 0.0) - max(ins.bid - F, 0.0)
            val -= lam * (max(F - ins.ask, 0.0) ** 2 + max(ins.bid - F, 0.0) ** 2)
            dY -= lam * 2 * ex * p[:, None] * ins.payoff._grad(Y)
            dp = dp - lam * 2 * ex * fv
        da = p * (dp - p @ dp)
        return -val, -np.concatenate([dY.ravel(), da])

    theta = np.concatenate([np.clip(Y0, lo, hi).ravel(), a0])
    lam = cfg.penalty0
    for _ in range(cfg.penalty_doublings + 1):
        res = minimize(neg, theta, args=(lam,), jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": cfg.max_iter})
        theta = res.x
        lam *= 2
    Y, a = unpack(theta)
    e = np.exp(a - a.max())
    return Y, e / e.sum()


def _violation(problem, cand: AtomicCandidate) -> float:
    return max([cand.mean_residual(problem.x0)] + cand.violations(problem.instruments))


def _best_bound(problem: MomentProblem, g: Payoff, cfg: MomentConfig, lo, hi, scale, cloud):
    k = problem.n_atoms
    d = problem.dim
    rng = np.random.Generator(np.random.Philox(cfg.seed + 1))
    cands = []
    base = _certificate(problem, g, cloud, k)
    starts = []
    if base is not None:
        cands.append(base)
        Y0 = np.vstack([base.atoms, np.repeat(problem.x0[None, :], k - len(base.atoms), axis=0)])
        w0 = np.concatenate([base.weights, np.full(k - len(base.atoms), 1e-9)])
        starts.append((Y0, np.log(np.maximum(w0, 1e-12))))
    while len(starts) < cfg.starts:
        Y0 = problem.x0 + scale * rng.standard_normal((k, d))
        starts.append((Y0, np.zeros(k)))
    for Y0, a0 in starts:
        Y, _ = _penalty_ascent(problem, g, Y0, a0, cfg, lo, hi)
        atoms = Y if base is None else np.vstack([Y, base.atoms])
        cert = _certificate(problem, g, atoms, k)
        if cert is not None:
            cands.append(cert)
    cands = [c for c in cands if _violation(problem, c) < cfg.feas_tol]
    if not cands:
        return None
    # deterministic choice: objective, then lexicographic atoms
    return max(cands, key=lambda c: (round(c.objective(g), 12),
                                     tuple(-v for v in np.sort(c.atoms, axis=0).ravel())))


def _feasibility_floor(problem, cfg, lo, hi, scale) -> float:
    """Smallest violation reached by the penalty method with a zero objective."""
    k, d = problem.n_atoms, problem.dim
    g = constant(0.0, d)
    rng = np.random.Generator(np.random.Philox(cfg.seed + 2))
    best = math.inf
    for _ in range(cfg.starts):
        Y0 = problem.x0 + scale * rng.standard_normal((k, d))
        Y, p = _penalty_ascent(problem, g, Y0, np.zeros(k), cfg, lo, hi)
        best = min(best, _violation(problem, AtomicCandidate(Y, p)))
    return best


def moment_bounds(problem: MomentProblem, cfg: MomentConfig | None = None) -> MomentResult:
    """Upper and lower bounds with feasible atomic certificates, or an infeasible status."""
    cfg = cfg or MomentConfig()
    scale = _strike_scale(problem)
    lo, hi = _box(problem, scale)
    cloud = _cloud(problem, cfg, lo, hi)
    dirac = AtomicCandidate(problem.x0[None, :], np.ones(1))
    diag = {
        "n_atoms": problem.n_atoms,
        "domain": [lo, hi],
        "dirac_x0_violations": dirac.violations(problem.instruments),
    }
    up = _best_bound(problem, problem.target, cfg, lo, hi, scale, cloud)
    low = _best_bound(problem, -problem.target, cfg, lo, hi, scale, cloud)
    if up is None or low is None:
        floor = _feasibility_floor(problem, cfg, lo, hi, scale)
        diag["penalty_floor"] = floor
        # the penalty method could not reach feasibility either: no measure matches the quotes
        status = "infeasible" if floor > cfg.feas_tol else "optimizer_failure"
        return MomentResult(status, math.nan, math.nan, None, None, diag)
    return MomentResult("ok", up.objective(problem.target), -low.objective(-problem.target),
                        up, low, diag)


# ---------------------------------------------------------------- problem files


def load_problem(path: str | Path) -> MomentProblem:
    """Read a JSON problem, or a CSV with ``name,strike,bid,ask`` rows plus ``x0`` and ``target`` rows."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        spec = json.loads(path.read_text())
        return problem_from_dict(spec)
    x0, instruments, target = None, [], None
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            key = row[0].strip().lower()
            if key == "name":
                continue
            if key == "x0":
                x0 = [float(v) for v in row[1:] if v.strip()]
            elif key == "target":
                target = _payoff_from_row(row[1:])
            else:
                strike, bid, ask = (float(v) for v in row[1:4])
                instruments.append(Instrument(_payoff_from_row([key, strike]), bid, ask, key))
    if x0 is None or target is None:
        raise ValueError(f"{path}: need an x0 row and a target row")
    return MomentProblem(np.array(x0), target, tuple(instruments))


def _payoff_from_row(cells):
    name = cells[0].strip().lower()
    nums = [float(c) for c in cells[1:] if str(c).strip()]
    if name in ("call", "put"):
        return _vanilla(name, nums[0])
    if name == "bull_spread":
        return make_payoff(name, K1=nums[0], K2=nums[1])
    return make_payoff(name, K=nums[0], dim=1)


def _vanilla(kind: str, K: float) -> Payoff:
    # one-asset call and put are the max call and min put in dimension 1
    return MaxCall(K, 1) if kind == "call" else MinPut(K, 1)


def problem_from_dict(spec: dict) -> MomentProblem:
    spec = dict(spec)
    x0 = np.atleast_1d(spec.pop("x0"))
    t = dict(spec.pop("target"))
    target = make_payoff(t.pop("name"), **t)
    instruments = []
    for ins in spec.pop("instruments", []):
        ins = dict(ins)
        name = ins.pop("name")
        bid, ask = ins.pop("bid"), ins.pop("ask")
        instruments.append(Instrument(make_payoff(name, **ins), bid, ask, name))
    domain = spec.pop("domain", [0.0, None])
    if spec:
        raise ValueError(f"unknown keys in moment problem: {sorted(spec)}")
    return MomentProblem(x0, target, tuple(instruments), domain[0], domain[1])
