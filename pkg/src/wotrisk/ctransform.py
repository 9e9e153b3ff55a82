"""Pointwise C-transforms and the oracles used to check them.

Three penalty regimes are supported:

* ``unconstrained``: ``f^C(x) = sup_y f(x + y) - c(|y|)``;
* ``martingale``: the sup over two-point measures with barycenter ``x``,
  ``p [f(x + y) - c(|y|)] + (1 - p) [f(x - r y) - c(r |y|)]`` with
  ``r = p / (1 - p)``;
* ``parametric``: location-scale Gaussian families, see ``ctrans_parametric``.

The solvers run a coarse scan of candidate displacements around every ``x``
(doubling the scan radius while the best candidate sits on its edge) and then
refine the best ``starts`` candidates with a batched Nelder-Mead search.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .costs import CostSpec
from .payoffs import Payoff, check_growth
from .search import nelder_mead_max, radial_grid, top_k

REGIMES = ("unconstrained", "martingale")


@dataclass(frozen=True)
class SearchConfig:
    starts: int = 16
    radius0: float = 1.0
    max_radius_doublings: int = 8
    step_tol: float = 1e-8
    grid_points: int = 2001
    p_clip: float = 1e-4
    # scan resolution
    scan_radii: int = 20
    scan_dirs: int = 16
    scan_logits: int = 17
    max_iter: int = 400
    # box on the states reachable by displacement (e.g. lower=0 for prices)
    lower: float | None = None
    upper: float | None = None
    # cap on scan evaluations held in memory at once
    chunk: int = 2_000_000
    # points solved together
    block: int = 4096

    def __post_init__(self):
        for name in ("starts", "radius0", "max_iter", "grid_points", "step_tol", "p_clip",
                     "scan_radii", "scan_dirs", "scan_logits", "chunk", "block"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_radius_doublings < 0:
            raise ValueError("max_radius_doublings must be nonnegative")
        if self.p_clip >= 0.5:
            raise ValueError("p_clip must be below 1/2")

    @property
    def logit_bound(self) -> float:
        e = self.p_clip
        return math.log((1 - e) / e)


class Solution(NamedTuple):
    values: np.ndarray
    argmax: np.ndarray  # search variables of the optimizer, one row per x


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def _in_box(z, lower, upper):
    ok = np.ones(len(z), dtype=bool)
    if lower is not None:
        ok &= np.all(z >= lower, axis=1)
    if upper is not None:
        ok &= np.all(z <= upper, axis=1)
    return ok


def _as_points(f: Payoff, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    d = f.dim
    if arr.ndim == 0:
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if d == 1 and len(arr) != 1:
            return arr[:, None], False
        return arr[None, :], True
    return arr, False


class _Objective:
    """Vectorized ``g(x_rows, z)`` for one regime."""

    def __init__(self, f: Payoff, cost: CostSpec, X: np.ndarray, regime: str, cfg: SearchConfig):
        self.f, self.cost, self.X, self.regime, self.cfg = f, cost, X, regime, cfg
        self.d = X.shape[1]
        self.k = self.d + (1 if regime == "martingale" else 0)

    def split(self, z):
        """Displacement ``y`` and weight ``p`` (``p = 1`` when unconstrained)."""
        y = z[:, : self.d]
        if self.regime == "martingale":
            s = np.clip(z[:, self.d], -self.cfg.logit_bound, self.cfg.logit_bound)
            return y, _sigmoid(s)
        return y, np.ones(len(z))

    def __call__(self, z, rows):
        x = self.X[rows]
        y, p = self.split(z)
        ny = np.linalg.norm(y, axis=1)
        near = x + y
        if self.regime == "unconstrained":
            val = self.f._eval(near) - self.cost.factor * ny**self.cost.power
            ok = _in_box(near, self.cfg.lower, self.cfg.upper)
        else:
            r = p / (1.0 - p)
            far = x - r[:, None] * y
            c = self.cost.factor
            val = (p * (self.f._eval(near) - c * ny**self.cost.power)
                   + (1 - p) * (self.f._eval(far) - c * (r * ny) ** self.cost.power))
            ok = _in_box(near, self.cfg.lower, self.cfg.upper) & _in_box(far, self.cfg.lower,
                                                                        self.cfg.upper)
        ok |= ny == 0
        return np.where(ok, val, -np.inf)

    def candidates(self, radius):
        cfg = self.cfg
        ys = radial_grid(self.d, radius, cfg.scan_radii, cfg.scan_dirs)
        if self.regime == "unconstrained":
            return ys
        L = cfg.logit_bound
        ss = np.linspace(-L, L, cfg.scan_logits)
        yy = np.repeat(ys, len(ss), axis=0)
        return np.concatenate([yy, np.tile(ss, len(ys))[:, None]], axis=1)

    def steps(self, radius):
        st = np.full(self.k, radius / self.cfg.scan_radii)
        if self.regime == "martingale":
            st[-1] = 2 * self.cfg.logit_bound / max(self.cfg.scan_logits - 1, 1)
        return st


def _scan(obj: _Objective, rows: np.ndarray, cands: np.ndarray, starts: int):
    """Evaluate every candidate for every row; return top-``starts`` candidates and values."""
    M = len(cands)
    per = max(1, obj.cfg.chunk // M)
    best_z = np.empty((len(rows), min(starts, M), obj.k))
    best_f = np.empty((len(rows), min(starts, M)))
    for lo in range(0, len(rows), per):
        r = rows[lo: lo + per]
        z = np.tile(cands, (len(r), 1))
        G = obj(z, np.repeat(r, M)).reshape(len(r), M)
        idx = top_k(G, starts)
        best_z[lo: lo + per] = cands[idx]
        best_f[lo: lo + per] = np.take_along_axis(G, idx, axis=1)
    return best_z, best_f


def _solve(obj: _Objective, cfg: SearchConfig) -> Solution:
    N = len(obj.X)
    rows = np.arange(N)
    radius = np.full(N, cfg.radius0)
    cz, cf = _scan(obj, rows, obj.candidates(cfg.radius0), cfg.starts)

    # widen the scan for rows whose best candidate sits on the edge
    for _ in range(cfg.max_radius_doublings):
        y_best = cz[:, 0, : obj.d]
        edge = np.linalg.norm(y_best, axis=1) >= 0.99 * radius
        if not np.any(edge):
            break
        er = rows[edge]
        radius[er] *= 2
        # rows on the edge share the same radius only if they doubled in step
        for rad in np.unique(radius[er]):
            sub = er[radius[er] == rad]
            nz, nf = _scan(obj, sub, obj.candidates(rad), cfg.starts)
            allz = np.concatenate([cz[sub], nz], axis=1)
            allf = np.concatenate([cf[sub], nf], axis=1)
            idx = top_k(allf, cfg.starts)
            cz[sub] = np.take_along_axis(allz, idx[:, :, None], axis=1)
            cf[sub] = np.take_along_axis(allf, idx, axis=1)

    S = cz.shape[1]
    z0 = cz.reshape(N * S, obj.k)
    owner = np.repeat(rows, S)
    step = np.stack([obj.steps(r) for r in radius])[owner]
    finite = np.isfinite(cf.reshape(-1))
    zb, fb = z0.copy(), cf.reshape(-1).copy()
    if np.any(finite):
        sel = np.flatnonzero(finite)
        zr, fr = nelder_mead_max(lambda z, r: obj(z, owner[sel][r]), z0[sel], step[sel],
                                 tol=cfg.step_tol, max_iter=cfg.max_iter)
        better = fr >= fb[sel]
        zb[sel[better]] = zr[better]
        fb[sel[better]] = fr[better]
    fb = fb.reshape(N, S)
    j = np.argmax(fb, axis=1)
    return Solution(fb[rows, j], zb.reshape(N, S, obj.k)[rows, j])


def _check(f: Payoff, cost: CostSpec, regime: str):
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; choose from {REGIMES}")
    if not check_growth(f, cost, regime):
        raise ValueError(
            f"payoff {f.name} violates the growth condition for cost power {cost.power}; "
            "the transform may be infinite"
        )


def solve(f: Payoff, cost: CostSpec, X, regime: str = "unconstrained",
          cfg: SearchConfig | None = None) -> Solution:
    """Batch C-transform of ``f`` at points ``X`` of shape ``(n, d)``."""
    cfg = cfg or SearchConfig()
    _check(f, cost, regime)
    X, _ = _as_points(f, X)
    parts = [_solve(_Objective(f, cost, X[lo: lo + cfg.block], regime, cfg), cfg)
             for lo in range(0, len(X), cfg.block)]
    return Solution(np.concatenate([s.values for s in parts]),
                    np.concatenate([s.argmax for s in parts]))


def martingale_atoms(x, z, p_clip: float = SearchConfig.p_clip):
    """Two-point measure ``(near, far, p)`` encoded by martingale search variables ``z``."""
    x = np.atleast_2d(x)
    z = np.atleast_2d(z)
    d = x.shape[1]
    L = math.log((1 - p_clip) / p_clip)
    p = _sigmoid(np.clip(z[:, d], -L, L))
    y = z[:, :d]
    return x + y, x - (p / (1 - p))[:, None] * y, p


def _scalar_or_array(values, single):
    return float(values[0]) if single else values


def ctrans_unconstrained(f: Payoff, cost: CostSpec, x, cfg: SearchConfig | None = None):
    """``sup_y f(y) - c(|y - x|)`` at a point (float) or a batch of points (array)."""
    X, single = _as_points(f, x)
    return _scalar_or_array(solve(f, cost, X, "unconstrained", cfg).values, single)


def ctrans_martingale(f: Payoff, cost: CostSpec, x, cfg: SearchConfig | None = None):
    """Martingale-constrained transform at a point (float) or a batch of points (array)."""
    X, single = _as_points(f, x)
    return _scalar_or_array(solve(f, cost, X, "martingale", cfg).values, single)


def ctrans_parametric(f: Payoff, x, phi: Callable, psi: Callable, quad: int = 64,
                      cfg: SearchConfig | None = None):
    """Transform over Gaussian location-scale laws ``m + sigma xi``.

    Computes ``sup_{m, sigma >= 0} E f(m + sigma xi) - phi((m - x)**2) - psi(sigma**2)``
    with the expectation by ``quad``-node Gauss-Hermite quadrature. ``phi`` and
    ``psi`` act elementwise on arrays and may return ``inf``.
    """
    cfg = cfg or SearchConfig()
    if f.dim not in (None, 1):
        raise ValueError("parametric transform is implemented for one-dimensional payoffs")
    X, single = _as_points(f, x)
    X = X.reshape(-1, 1)
    nodes, weights = np.polynomial.hermite_e.hermegauss(quad)
    weights = weights / weights.sum()

    def g(z, rows):
        m, sig = z[:, 0], np.abs(z[:, 1])
        pts = (m[:, None] + sig[:, None] * nodes[None, :]).reshape(-1, 1)
        ef = (f._eval(pts).reshape(len(z), quad) * weights).sum(axis=1)
        with np.errstate(invalid="ignore"):
            val = ef - phi((m - X[rows, 0]) ** 2) - psi(sig**2)
        return np.where(np.isnan(val), -np.inf, val)

    R = cfg.radius0
    ms = np.linspace(-R, R, 2 * cfg.scan_radii + 1)
    ss = np.linspace(0, R, cfg.scan_radii + 1)
    base = np.stack(np.meshgrid(ms, ss, indexing="ij"), axis=-1).reshape(-1, 2)
    N = len(X)
    cands = np.repeat(X, len(base), axis=0) * np.array([1.0, 0.0]) + np.tile(base, (N, 1))
    G = g(cands, np.repeat(np.arange(N), len(base))).reshape(N, len(base))
    idx = top_k(G, cfg.starts)
    z0 = cands.reshape(N, len(base), 2)[np.arange(N)[:, None], idx].reshape(-1, 2)
    owner = np.repeat(np.arange(N), idx.shape[1])
    _, fr = nelder_mead_max(lambda z, r: g(z, owner[r]), z0, R / cfg.scan_radii,
                            tol=cfg.step_tol, max_iter=cfg.max_iter)
    vals = np.maximum(fr.reshape(N, -1).max(axis=1), G.max(axis=1))
    return _scalar_or_array(vals, single)


# ---------------------------------------------------------------- grids


@dataclass
class CTransformGrid:
    points: np.ndarray
    payoff_values: np.ndarray
    values: np.ndarray
    method: str
    payoff: dict = field(default_factory=dict)
    cost: dict = field(default_factory=dict)
    shape: tuple = ()

    def to_csv(self, path: str | Path, digits: int = 10) -> None:
        d = self.points.shape[1]
        header = [f"x{i + 1}" for i in range(d)] + ["f", "f_C"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for pt, fv, cv in zip(self.points, self.payoff_values, self.values):
                w.writerow([_fmt(v, digits) for v in (*pt, fv, cv)])


def _fmt(v: float, digits: int = 10) -> str:
    return f"{float(v):.{digits}g}"


def grid_points(axes) -> tuple[np.ndarray, tuple]:
    """Row-major product grid from per-axis ``(min, max, count)``."""
    lins = [np.linspace(lo, hi, int(n)) for lo, hi, n in axes]
    mesh = np.meshgrid(*lins, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), tuple(len(l) for l in lins)


def ctrans_grid(f: Payoff, cost: CostSpec, regime: str, axes,
                cfg: SearchConfig | None = None) -> CTransformGrid:
    pts, shape = grid_points(axes)
    sol = solve(f, cost, pts, regime, cfg)
    return CTransformGrid(pts, f._eval(pts), sol.values, "pointwise", f.describe(),
                          {"power": cost.power, "timescale": cost.timescale, "scale": cost.scale,
                           "regime": regime}, shape)


# ---------------------------------------------------------------- oracles


@dataclass(frozen=True)
class PiecewiseLinear:
    knots_x: np.ndarray
    knots_y: np.ndarray

    def __call__(self, x):
        out = np.interp(np.asarray(x, dtype=float), self.knots_x, self.knots_y)
        return float(out) if np.ndim(out) == 0 else out


def _hull(xs, ys, upper: bool):
    # Andrew's monotone chain on points already sorted by x
    sign = 1.0 if upper else -1.0
    hx, hy = [], []
    for x, y in zip(xs, ys):
        while len(hx) >= 2:
            cross = (hx[-1] - hx[-2]) * (y - hy[-2]) - (hy[-1] - hy[-2]) * (x - hx[-2])
            if sign * cross >= 0:
                hx.pop()
                hy.pop()
            else:
                break
        hx.append(x)
        hy.append(y)
    return PiecewiseLinear(np.array(hx), np.array(hy))


def concave_envelope_1d(f: Payoff, domain=(0.0, 3.0), n: int = 2001) -> PiecewiseLinear:
    """Upper concave hull of ``f`` sampled on ``n`` grid points of ``domain``."""
    if n < 3:
        raise ValueError("need at least 3 grid points")
    xs = np.linspace(domain[0], domain[1], n)
    return _hull(xs, f(xs[:, None]), upper=True)


def convex_envelope_1d(f: Payoff, domain=(0.0, 3.0), n: int = 2001) -> PiecewiseLinear:
    """Lower convex hull of ``f`` sampled on ``n`` grid points of ``domain``."""
    if n < 3:
        raise ValueError("need at least 3 grid points")
    xs = np.linspace(domain[0], domain[1], n)
    return _hull(xs, f(xs[:, None]), upper=False)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def bs_call(spot: float, strike: float, vol: float, T: float) -> float:
    """Zero-rate Black-Scholes call price; degenerate inputs fall back to intrinsic value."""
    if strike <= 0:
        return spot - strike
    sd = vol * math.sqrt(T)
    if sd <= 0:
        return max(spot - strike, 0.0)
    d1 = (math.log(spot / strike) + 0.5 * sd * sd) / sd
    return spot * norm_cdf(d1) - strike * norm_cdf(d1 - sd)


def with_domain(cfg: SearchConfig | None, lower=None, upper=None) -> SearchConfig:
    return replace(cfg or SearchConfig(), lower=lower, upper=upper)
