"""Reference measures with seeded, prefix-stable sampling.

Random numbers come from numpy's counter-based ``Philox`` bit generator keyed
by the 64-bit seed; normal variates use numpy's ziggurat sampler. Draws are
generated row by row, so ``sample(m, n, s)`` is a prefix of ``sample(m, 2n, s)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


class Moment(NamedTuple):
    value: float
    stderr: float = 0.0


def _factor_psd(cov: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Lower factor L with L @ L.T == cov; Cholesky first, eigen fallback for singular PSD."""
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        if w.min() < -tol * max(1.0, abs(w.max())):
            raise ValueError("covariance is not positive semidefinite") from None
        return v * np.sqrt(np.clip(w, 0.0, None))


class ReferenceMeasure:
    """Base class; subclasses implement ``draw(rng, n)``."""

    kind = "measure"
    dim: int

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, seed: int) -> np.ndarray:
        return sample(self, n, seed)

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    # hooks for closed-form moments; None means "use Monte Carlo"
    def _moment_closed(self, p: float) -> float | None:
        return None


@dataclass(frozen=True, eq=False)
class Dirac(ReferenceMeasure):
    point: np.ndarray
    kind = "dirac"

    def __post_init__(self):
        object.__setattr__(self, "point", np.atleast_1d(np.asarray(self.point, dtype=float)))

    @property
    def dim(self):
        return len(self.point)

    def draw(self, rng, n):
        return np.tile(self.point, (n, 1))

    def mean(self):
        return self.point.copy()

    def _moment_closed(self, p):
        return float(np.linalg.norm(self.point) ** p)

    def describe(self):
        return {"kind": self.kind, "point": self.point.tolist()}


@dataclass(frozen=True, eq=False)
class Gaussian(ReferenceMeasure):
    mean_: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)
    kind = "gaussian"

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean_, dtype=float))
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if c.shape != (len(m), len(m)):
            raise ValueError(f"covariance shape {c.shape} does not match mean of length {len(m)}")
        object.__setattr__(self, "mean_", m)
        object.__setattr__(self, "cov", c)
        object.__setattr__(self, "chol", _factor_psd(c))

    @property
    def dim(self):
        return len(self.mean_)

    def draw(self, rng, n):
        z = rng.standard_normal((n, self.dim))
        return self.mean_ + z @ self.chol.T

    def mean(self):
        return self.mean_.copy()

    def _moment_closed(self, p):
        if p == 2:
            return float(np.trace(self.cov) + self.mean_ @ self.mean_)
        if p == 1 and self.dim == 1:
            # folded normal
            mu, s = self.mean_[0], math.sqrt(self.cov[0, 0])
            if s == 0:
                return abs(mu)
            return s * math.sqrt(2 / math.pi) * math.exp(-mu**2 / (2 * s**2)) + mu * math.erf(
                mu / (s * math.sqrt(2))
            )
        return None

    def describe(self):
        return {"kind": self.kind, "mean": self.mean_.tolist(), "cov": self.cov.tolist()}


@dataclass(frozen=True, eq=False)
class LogNormalBS(ReferenceMeasure):
    """Zero-rate Black-Scholes marginal ``spot * exp(vol sqrt(T) Z - vol**2 T / 2)``.

    Several assets are driven by independent normals unless ``corr`` is given.
    """

    spot: np.ndarray
    vol: float
    maturity: float
    corr: np.ndarray | None = None
    kind = "lognormal_bs"

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.spot, dtype=float))
        if np.any(s <= 0):
            raise ValueError("spot must be positive")
        if self.vol <= 0 or self.maturity <= 0:
            raise ValueError("vol and maturity must be positive")
        object.__setattr__(self, "spot", s)
        chol = None
        if self.corr is not None:
            corr = np.atleast_2d(np.asarray(self.corr, dtype=float))
            chol = _factor_psd(corr)
            object.__setattr__(self, "corr", corr)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self):
        return len(self.spot)

    def draw(self, rng, n):
        z = rng.standard_normal((n, self.dim))
        if self._chol is not None:
            z = z @ self._chol.T
        sd = self.vol * math.sqrt(self.maturity)
        return self.spot * np.exp(sd * z - 0.5 * sd**2)

    def mean(self):
        return self.spot.copy()

    def cdf(self, x):
        """Marginal CDF of one asset (first asset by default)."""
        sd = self.vol * math.sqrt(self.maturity)
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(x / self.spot[0]) + 0.5 * sd**2) / sd
        return np.where(x > 0, ndtr(z), 0.0)

    def _moment_closed(self, p):
        if self.dim == 1:
            # E S^p = spot^p exp(p(p-1) vol^2 T / 2)
            return float(self.spot[0] ** p * math.exp(0.5 * p * (p - 1) * self.vol**2 * self.maturity))
        if p == 2:
            return float(np.sum(self.spot**2) * math.exp(self.vol**2 * self.maturity))
        return None

    def describe(self):
        d = {"kind": self.kind, "spot": self.spot.tolist(), "vol": self.vol, "maturity": self.maturity}
        if self.corr is not None:
            d["corr"] = self.corr.tolist()
        return d


@dataclass(frozen=True, eq=False)
class DiffusionMarginal(ReferenceMeasure):
    """Time-``T`` marginal of ``dX = sigma dB``: ``N(x0, T sigma sigma^T)``."""

    x0: np.ndarray
    sigma: np.ndarray
    maturity: float
    kind = "diffusion"

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        sig = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sig.shape != (len(x0), len(x0)):
            raise ValueError(f"sigma shape {sig.shape} does not match x0 of length {len(x0)}")
        if self.maturity <= 0:
            raise ValueError("maturity must be positive")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "sigma", sig)

    @property
    def dim(self):
        return len(self.x0)

    @property
    def covariance(self):
        return self.maturity * self.sigma @ self.sigma.T

    def draw(self, rng, n):
        b = rng.standard_normal((n, self.dim)) * math.sqrt(self.maturity)
        return self.x0 + b @ self.sigma.T

    def mean(self):
        return self.x0.copy()

    def _moment_closed(self, p):
        if p == 2:
            return float(np.trace(self.covariance) + self.x0 @ self.x0)
        return None

    def describe(self):
        return {"kind": self.kind, "x0": self.x0.tolist(), "sigma": self.sigma.tolist(),
                "maturity": self.maturity}


def diffusion_uncorrelated(d: int, vol: float = 0.2, maturity: float = 1.0,
                           x0: float = 1.0, corr: float = 0.0) -> DiffusionMarginal:
    """Equal-vol assets with a common pairwise correlation (independent by default)."""
    c = np.full((d, d), corr) + (1 - corr) * np.eye(d)
    sigma = vol * _factor_psd(c)
    return DiffusionMarginal(np.full(d, x0), sigma, maturity)


@dataclass(frozen=True, eq=False)
class Empirical(ReferenceMeasure):
    points: np.ndarray
    kind = "empirical"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if len(pts) == 0:
            raise ValueError("empirical measure needs at least one point")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self):
        return self.points.shape[1]

    def draw(self, rng, n):
        idx = rng.integers(0, len(self.points), size=n)
        return self.points[idx]

    def mean(self):
        return self.points.mean(axis=0)

    def _moment_closed(self, p):
        return float(np.mean(np.linalg.norm(self.points, axis=1) ** p))

    def describe(self):
        return {"kind": self.kind, "points": self.points.tolist()}

    @classmethod
    def from_csv(cls, path: str | Path) -> "Empirical":
        """One row per point; a non-numeric first row is treated as a header."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        if rows:
            try:
                [float(c) for c in rows[0]]
            except ValueError:
                rows = rows[1:]
        return cls(np.array([[float(c) for c in r] for r in rows]))


def sample(measure: ReferenceMeasure, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. draws of shape ``(n, d)``; deterministic in ``(measure, n, seed)``."""
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    return measure.draw(make_rng(seed), int(n))


def moment(measure: ReferenceMeasure, p: float, n: int = 200_000, seed: int = 0) -> Moment:
    """``E ||X||**p``: closed form where available, else Monte Carlo with its standard error."""
    if p < 1:
        raise ValueError("moment order must be >= 1")
    closed = measure._moment_closed(p)
    if closed is not None:
        return Moment(closed, 0.0)
    vals = np.linalg.norm(sample(measure, n, seed), axis=1) ** p
    return Moment(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n)))


def make_measure(spec: dict) -> ReferenceMeasure:
    """Build a measure from a config mapping with a ``kind`` key; unknown keys are errors."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "dirac":
            m = Dirac(spec.pop("point"))
        elif kind == "gaussian":
            mean = np.atleast_1d(spec.pop("mean"))
            m = Gaussian(mean, spec.pop("cov", np.eye(len(mean)).tolist()))
        elif kind == "lognormal_bs":
            m = LogNormalBS(spec.pop("spot", 1.0), spec.pop("vol"), spec.pop("maturity"),
                            spec.pop("corr", None))
        elif kind == "diffusion" and "d" in spec:
            m = diffusion_uncorrelated(spec.pop("d"), spec.pop("vol", 0.2), spec.pop("maturity", 1.0),
                                       spec.pop("x0", 1.0), spec.pop("corr", 0.0))
        elif kind == "diffusion":
            m = DiffusionMarginal(spec.pop("x0"), spec.pop("sigma"), spec.pop("maturity"))
        elif kind == "empirical":
            m = Empirical.from_csv(spec.pop("csv")) if "csv" in spec else Empirical(spec.pop("points"))
        else:
            raise ValueError(f"unknown measure kind {kind!r}")
    except KeyError as exc:
        raise ValueError(f"measure {kind!r} is missing parameter {exc.args[0]!r}") from None
    if spec:
        raise ValueError(f"unknown keys for measure {kind!r}: {sorted(spec)}")
    return m
