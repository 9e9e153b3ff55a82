"""Radial transport costs ``c(v) = v**p`` and their time-scaled versions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CostSpec:
    """Power cost of the displacement norm.

    With a timescale ``t`` the cost becomes ``t * c(v / sqrt(t))``, which for
    a power cost equals ``t**(1 - p/2) * v**p``. ``scale`` multiplies the whole
    cost; ``scale=0`` gives the zero-cost limit.
    """

    power: float = 2.0
    timescale: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.power < 1:
            raise ValueError(f"cost power must be >= 1, got {self.power}")
        if self.timescale is not None and self.timescale <= 0:
            raise ValueError(f"timescale must be positive, got {self.timescale}")
        if self.scale < 0:
            raise ValueError(f"scale must be nonnegative, got {self.scale}")

    @property
    def factor(self) -> float:
        """Multiplier in front of ``v**p``."""
        f = self.scale
        if self.timescale is not None:
            f *= self.timescale ** (1.0 - self.power / 2.0)
        return f

    @property
    def is_zero(self) -> bool:
        return self.scale == 0.0

    def __call__(self, v):
        return cost(self, v)

    def deriv(self, v):
        return cost_deriv(self, v)


def cost(spec: CostSpec, v):
    """Evaluate the cost at displacement norm(s) ``v`` (scalar or array)."""
    arr = np.asarray(v, dtype=float)
    if np.any(arr < 0):
        raise ValueError("displacement norm must be nonnegative")
    out = spec.factor * arr**spec.power
    return float(out) if out.ndim == 0 else out


def cost_deriv(spec: CostSpec, v):
    """Derivative of the cost in ``v``; the right derivative at 0 when p == 1."""
    arr = np.asarray(v, dtype=float)
    if np.any(arr < 0):
        raise ValueError("displacement norm must be nonnegative")
    p = spec.power
    if p == 1.0:
        out = np.full_like(arr, spec.factor)
    else:
        out = spec.factor * p * arr ** (p - 1.0)
    return float(out) if out.ndim == 0 else out
