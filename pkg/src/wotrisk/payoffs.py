"""Payoff and loss functions with almost-everywhere gradients.

All payoffs are vectorized: ``f(x)`` accepts a single point of shape ``(d,)``
(returning a float) or a batch of shape ``(n, d)`` (returning shape ``(n,)``).
One-dimensional payoffs also accept a bare scalar. ``f.grad`` follows the same
convention with an extra trailing axis of length ``d``.

At kinks the gradient of the right-hand branch is returned, e.g. a call
``(x - K)^+`` has derivative 1 at ``x = K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import CostSpec


@dataclass(frozen=True)
class Growth:
    """Declared bound ``|f(x)| <= M + c * ||x||**order``."""

    M: float = 0.0
    c: float = 0.0
    order: float = 0.0


class Payoff:
    """Base class. Subclasses implement ``_eval`` and ``_grad`` on ``(n, d)`` batches."""

    name = "payoff"
    dim: int | None = None  # None means any dimension

    @property
    def growth(self) -> Growth:
        raise NotImplementedError

    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _as_batch(self, x):
        arr = np.asarray(x, dtype=float)
        single = arr.ndim <= 1
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"expected a point or a batch of points, got shape {arr.shape}")
        if self.dim is not None and arr.shape[1] != self.dim:
            raise ValueError(
                f"{self.name} expects dimension {self.dim}, got {arr.shape[1]}"
            )
        return arr, single

    def __call__(self, x):
        arr, single = self._as_batch(x)
        out = self._eval(arr)
        return float(out[0]) if single else out

    def grad(self, x):
        arr, single = self._as_batch(x)
        out = self._grad(arr)
        return out[0] if single else out

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"name": self.name, **self.params()}

    # arithmetic used by the axiom checks and the lower price bound
    def __add__(self, other):
        if np.isscalar(other):
            return Combination(((1.0, self),), float(other))
        return Combination(((1.0, self), (1.0, other)))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other if np.isscalar(other) else other * -1.0)

    def __mul__(self, w):
        return Combination(((float(w), self),))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def _relu_step(z):
    # right branch at 0
    return (z >= 0).astype(float)


@dataclass(frozen=True, eq=False)
class Affine(Payoff):
    a: tuple = (1.0,)
    b: float = 0.0
    name = "affine"

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in np.atleast_1d(self.a)))

    @property
    def dim(self):
        return len(self.a)

    @property
    def growth(self):
        return Growth(abs(self.b), float(np.linalg.norm(self.a)), 1.0 if any(self.a) else 0.0)

    def _eval(self, x):
        return x @ np.asarray(self.a) + self.b

    def _grad(self, x):
        return np.broadcast_to(np.asarray(self.a), x.shape).copy()

    def params(self):
        return {"a": list(self.a), "b": self.b}


def constant(m: float, dim: int = 1) -> Affine:
    return Affine(a=(0.0,) * dim, b=float(m))


@dataclass(frozen=True, eq=False)
class Quadratic(Payoff):
    """``coef * ||x||**2``."""

    coef: float = 0.5
    dim: int | None = None
    name = "quadratic"

    @property
    def growth(self):
        return Growth(0.0, abs(self.coef), 2.0)

    def _eval(self, x):
        return self.coef * np.sum(x * x, axis=1)

    def _grad(self, x):
        return 2.0 * self.coef * x

    def params(self):
        return {"coef": self.coef, "dim": self.dim}


@dataclass(frozen=True, eq=False)
class BullSpread(Payoff):
    K1: float = 0.9
    K2: float = 1.2
    name = "bull_spread"
    dim = 1

    def __post_init__(self):
        if not 0 < self.K1 < self.K2:
            raise ValueError("bull spread needs 0 < K1 < K2")

    @property
    def growth(self):
        return Growth(self.K2 - self.K1, 0.0, 0.0)

    def _eval(self, x):
        # clip form: same function as (s-K1)^+ - (s-K2)^+, exactly monotone in floating point
        return np.clip(x[:, 0] - self.K1, 0.0, self.K2 - self.K1)

    def _grad(self, x):
        s = x[:, 0]
        return ((s >= self.K1) & (s < self.K2)).astype(float)[:, None]

    def params(self):
        return {"K1": self.K1, "K2": self.K2}


@dataclass(frozen=True, eq=False)
class _StrikePayoff(Payoff):
    K: float = 1.0
    dim: int | None = None

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("strike must be positive")

    def params(self):
        return {"K": self.K, "dim": self.dim}


class MaxCall(_StrikePayoff):
    """``(max_i x_i - K)^+``."""

    name = "max_call"

    @property
    def growth(self):
        return Growth(0.0, 1.0, 1.0)

    def _eval(self, x):
        return np.maximum(x.max(axis=1) - self.K, 0.0)

    def _grad(self, x):
        g = np.zeros_like(x)
        idx = np.argmax(x, axis=1)
        rows = np.arange(len(x))
        g[rows, idx] = _relu_step(x[rows, idx] - self.K)
        return g


class BasketCall(_StrikePayoff):
    """``(mean_i x_i - K)^+``."""

    name = "basket_call"

    @property
    def growth(self):
        return Growth(0.0, 1.0, 1.0)

    def _eval(self, x):
        return np.maximum(x.mean(axis=1) - self.K, 0.0)

    def _grad(self, x):
        step = _relu_step(x.mean(axis=1) - self.K)
        return np.repeat(step[:, None] / x.shape[1], x.shape[1], axis=1)


class MinPut(_StrikePayoff):
    """``(K - min_i x_i)^+``."""

    name = "min_put"

    @property
    def growth(self):
        return Growth(self.K, 1.0, 1.0)

    def _eval(self, x):
        return np.maximum(self.K - x.min(axis=1), 0.0)

    def _grad(self, x):
        g = np.zeros_like(x)
        idx = np.argmin(x, axis=1)
        rows = np.arange(len(x))
        # put: derivative -1 strictly below the strike, 0 from the strike on
        g[rows, idx] = -(x[rows, idx] < self.K).astype(float)
        return g


class GeometricPut(_StrikePayoff):
    """``(K - (prod_i x_i)**(1/d))^+`` with negative coordinates clamped to 0."""

    name = "geometric_put"

    @property
    def growth(self):
        return Growth(self.K, 0.0, 0.0)

    def _geo(self, x):
        xp = np.maximum(x, 0.0)
        with np.errstate(divide="ignore"):
            return np.exp(np.mean(np.log(xp), axis=1)), xp

    def _eval(self, x):
        g, _ = self._geo(x)
        return np.maximum(self.K - g, 0.0)

    def _grad(self, x):
        g, xp = self._geo(x)
        d = x.shape[1]
        active = (g < self.K) & (g > 0)
        out = np.zeros_like(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            dg = g[:, None] / (d * xp)
        out[active] = -dg[active]
        return out


@dataclass(frozen=True)
class Bump:
    center: tuple
    amplitude: float
    width: float


DEFAULT_BUMPS = (
    Bump((0.0, 0.0), 1.0, 0.5),
    Bump((1.5, 0.5), 0.6, 0.3),
)


@dataclass(frozen=True, eq=False)
class EarthquakeLoss(Payoff):
    """Sum of Gaussian bumps ``amp * exp(-||x - center||**2 / (2 width**2))``."""

    bumps: tuple = DEFAULT_BUMPS
    name = "earthquake"

    def __post_init__(self):
        bumps = tuple(b if isinstance(b, Bump) else Bump(**b) for b in self.bumps)
        if not bumps:
            raise ValueError("earthquake loss needs at least one bump")
        dims = {len(np.atleast_1d(b.center)) for b in bumps}
        if len(dims) != 1:
            raise ValueError("all bump centers must share one dimension")
        for b in bumps:
            if b.amplitude <= 0 or b.width <= 0:
                raise ValueError("bump amplitude and width must be positive")
        object.__setattr__(self, "bumps", bumps)

    @property
    def dim(self):
        return len(np.atleast_1d(self.bumps[0].center))

    @property
    def growth(self):
        return Growth(sum(b.amplitude for b in self.bumps), 0.0, 0.0)

    def _terms(self, x):
        for b in self.bumps:
            diff = x - np.asarray(b.center, dtype=float)
            e = b.amplitude * np.exp(-np.sum(diff * diff, axis=1) / (2 * b.width**2))
            yield b, diff, e

    def _eval(self, x):
        return sum(e for _, _, e in self._terms(x))

    def _grad(self, x):
        return sum(-(diff / b.width**2) * e[:, None] for b, diff, e in self._terms(x))

    def params(self):
        return {
            "bumps": [
                {"center": list(np.atleast_1d(b.center)), "amplitude": b.amplitude, "width": b.width}
                for b in self.bumps
            ]
        }


@dataclass(frozen=True, eq=False)
class Combination(Payoff):
    """``sum_i w_i f_i + const``."""

    terms: tuple = field(default_factory=tuple)
    const: float = 0.0
    name = "combination"

    def __post_init__(self):
        dims = {f.dim for _, f in self.terms if f.dim is not None}
        if len(dims) > 1:
            raise ValueError(f"cannot combine payoffs of dimensions {sorted(dims)}")

    @property
    def dim(self):
        for _, f in self.terms:
            if f.dim is not None:
                return f.dim
        return None

    @property
    def is_affine(self):
        return all(isinstance(f, Affine) or (isinstance(f, Combination) and f.is_affine)
                   for _, f in self.terms)

    @property
    def growth(self):
        gs = [(abs(w), f.growth) for w, f in self.terms]
        order = max((g.order for _, g in gs if g.c > 0), default=0.0)
        M = abs(self.const) + sum(w * g.M for w, g in gs)
        c = 0.0
        for w, g in gs:
            if g.c == 0:
                continue
            if g.order == 0:
                M += w * g.c
            else:
                # ||x||**a <= 1 + ||x||**b for a <= b
                c += w * g.c
                if g.order < order:
                    M += w * g.c
        return Growth(M, c, order)

    def _eval(self, x):
        out = np.full(len(x), self.const)
        for w, f in self.terms:
            out = out + w * f._eval(x)
        return out

    def _grad(self, x):
        out = np.zeros_like(x)
        for w, f in self.terms:
            out = out + w * f._grad(x)
        return out

    def __add__(self, other):
        if np.isscalar(other):
            return Combination(self.terms, self.const + float(other))
        return Combination(self.terms + ((1.0, other),), self.const)

    __radd__ = __add__

    def __mul__(self, w):
        w = float(w)
        return Combination(tuple((w * v, f) for v, f in self.terms), w * self.const)

    __rmul__ = __mul__

    def describe(self):
        return {
            "name": self.name,
            "const": self.const,
            "terms": [{"weight": w, **f.describe()} for w, f in self.terms],
        }


def is_affine(f: Payoff) -> bool:
    return isinstance(f, Affine) or (isinstance(f, Combination) and f.is_affine)


def check_growth(f: Payoff, cost: CostSpec, regime: str = "unconstrained") -> bool:
    """Whether ``f`` has a growth bound compatible with ``cost``.

    Order ``<= p`` is required. A coefficient ``c >= 1`` is only acceptable
    when the order is strictly below ``p`` (then the bound can be restated
    with any positive coefficient). Under the martingale constraint affine
    payoffs are always admissible since the mean is pinned.
    """
    if regime == "martingale" and is_affine(f):
        return True
    g = f.growth
    if cost.is_zero:
        return g.order == 0 or g.c == 0
    if g.order > cost.power:
        return False
    return g.c < 1.0 or g.order < cost.power


PAYOFFS = {
    "bull_spread": BullSpread,
    "max_call": MaxCall,
    "basket_call": BasketCall,
    "min_put": MinPut,
    "geometric_put": GeometricPut,
    "affine": Affine,
    "quadratic": Quadratic,
    "earthquake": EarthquakeLoss,
}


def make_payoff(name: str, **params) -> Payoff:
    """Build a payoff from a config name and parameter map."""
    key = name.replace("-", "_").lower()
    if key == "constant":
        return constant(params.pop("value", params.pop("m", 0.0)), params.pop("dim", 1))
    try:
        cls = PAYOFFS[key]
    except KeyError:
        raise ValueError(f"unknown payoff {name!r}; choose from {sorted(PAYOFFS)}") from None
    if key == "earthquake" and "bumps" in params:
        params["bumps"] = tuple(Bump(tuple(b["center"]), b["amplitude"], b["width"])
                                for b in params["bumps"])
    if key == "affine" and "a" in params:
        params["a"] = tuple(params["a"])
    return cls(**params)
