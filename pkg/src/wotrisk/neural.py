"""Feed-forward networks with manual backpropagation, Adam, and the variational trainer.

The trainer *maximizes* the variational objective: Adam moves parameters along
``+gradient``. Integrands per sample point ``x`` with network output ``y(x)``:

* unconstrained: ``f(x + y) - c(|y|)``;
* martingale (output ``(y, v)``, ``p = sigmoid(v)``, ``r = p / (1 - p) = exp(v)``):
  ``p [f(x + y) - c(|y|)] + (1 - p) [f(x - r y) - c(r |y|)]``.

Any network gives a lower estimate of the risk measure, since it selects one
admissible kernel.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .costs import CostSpec
from .measures import ReferenceMeasure, sample
from .payoffs import Payoff, check_growth

ACTIVATIONS = ("relu", "tanh", "softplus")


class NumericalAbort(RuntimeError):
    """Training produced a non-finite objective or gradient."""


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return np.logaddexp(0.0, z)


def _act_deriv(name, z, a):
    if name == "relu":
        # derivative at 0 is 0
        return (z > 0).astype(float)
    if name == "tanh":
        return 1.0 - a * a
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class Mlp:
    """``A_m o act o A_{m-1} o ... o act o A_0``; weights are stored as ``(fan_in, fan_out)``."""

    weights: list
    biases: list
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {i}: weight {W.shape} and bias {b.shape} do not fit")
            if i and W.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i} expects {W.shape[0]} inputs, "
                                 f"previous layer gives {self.weights[i - 1].shape[1]}")

    @classmethod
    def init(cls, d_in: int, d_out: int, hidden: int = 4, width: int = 20,
             activation: str = "relu", rng: np.random.Generator | None = None,
             zero: bool = False, output_scale: float = 0.1) -> "Mlp":
        """He-uniform weights scaled by fan-in, zero biases.

        The output layer is additionally scaled by ``output_scale``. A small
        value starts training close to the identity kernel without sitting
        exactly on it (the zero displacement is a stationary point of the
        martingale objective); ``output_scale=0`` or ``zero=True`` give that
        exact start.
        """
        if rng is None:
            rng = np.random.Generator(np.random.Philox(0))
        sizes = [d_in] + [width] * hidden + [d_out]
        ws, bs = [], []
        last = len(sizes) - 2
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            if zero or (i == last and output_scale == 0):
                ws.append(np.zeros((a, b)))
            elif i == last:
                lim = math.sqrt(6.0 / a)
                ws.append(output_scale * rng.uniform(-lim, lim, size=(a, b)))
            else:
                lim = math.sqrt(6.0 / a)
                ws.append(rng.uniform(-lim, lim, size=(a, b)))
            bs.append(np.zeros(b))
        return cls(ws, bs, activation)

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def params(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                   self.activation)

    def forward(self, x, cache: bool = False):
        h = np.atleast_2d(np.asarray(x, dtype=float))
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"network expects {self.sizes[0]} inputs, got {h.shape[1]}")
        zs, hs = [], [h]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            if i == last:
                h = z
            else:
                zs.append(z)
                h = _act(self.activation, z)
                hs.append(h)
        return (h, (zs, hs)) if cache else h

    def __call__(self, x):
        return self.forward(x)

    def backward(self, cache, dout: np.ndarray) -> list:
        """Parameter gradients ``[dW0, db0, ...]`` of ``sum(dout * output)``."""
        zs, hs = cache
        grads = []
        g = dout
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = hs[i]
            grads.append(g.sum(axis=0))
            grads.append(h_in.T @ g)
            if i:
                g = (g @ self.weights[i].T) * _act_deriv(self.activation, zs[i - 1], hs[i])
        grads.reverse()
        return grads

    def save(self, path: str | Path) -> None:
        """Plain-text dump: header, layer sizes, then per layer row-major weights and biases."""
        with open(path, "w") as fh:
            fh.write("wotrisk-mlp 1\n")
            fh.write(f"activation {self.activation}\n")
            fh.write("sizes " + " ".join(str(s) for s in self.sizes) + "\n")
            for W, b in zip(self.weights, self.biases):
                fh.write(" ".join(repr(float(v)) for v in W.ravel()) + "\n")
                fh.write(" ".join(repr(float(v)) for v in b) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Mlp":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0].split() != ["wotrisk-mlp", "1"]:
            raise ValueError(f"{path} is not a version-1 network dump")
        act = lines[1].split()[1]
        sizes = [int(s) for s in lines[2].split()[1:]]
        ws, bs = [], []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            W = np.array([float(v) for v in lines[3 + 2 * i].split()]).reshape(a, b)
            bias = np.array([float(v) for v in lines[4 + 2 * i].split()]) if b else np.zeros(0)
            ws.append(W)
            bs.append(bias.reshape(b))
        return cls(ws, bs, act)


# ---------------------------------------------------------------- objectives


def _cost_terms(cost: CostSpec, ny):
    """Cost and its derivative in the norm, vectorized."""
    p = cost.power
    c = cost.factor * ny**p
    if p == 1:
        dc = np.full_like(ny, cost.factor)
    else:
        dc = cost.factor * p * ny ** (p - 1)
    return c, dc


def _unit(y, ny):
    out = np.zeros_like(y)
    nz = ny > 0
    out[nz] = y[nz] / ny[nz, None]
    return out


def integrand_unconstrained(out, x, f: Payoff, cost: CostSpec, with_grad: bool = False):
    """Per-sample value and (optionally) its gradient w.r.t. the network output."""
    y = out
    ny = np.linalg.norm(y, axis=1)
    z = x + y
    c, dc = _cost_terms(cost, ny)
    val = f._eval(z) - c
    if not with_grad:
        return val
    return val, f._grad(z) - dc[:, None] * _unit(y, ny)


def _split_martingale(out, d):
    y, v = out[:, :d], out[:, d]
    p = 0.5 * (1.0 + np.tanh(0.5 * v))
    with np.errstate(over="ignore"):
        r = np.exp(v)
    return y, v, p, r


def integrand_martingale(out, x, f: Payoff, cost: CostSpec, with_grad: bool = False):
    d = x.shape[1]
    y, v, p, r = _split_martingale(out, d)
    ny = np.linalg.norm(y, axis=1)
    near = x + y
    far = x - r[:, None] * y
    c1, dc1 = _cost_terms(cost, ny)
    c2, dc2 = _cost_terms(cost, r * ny)
    A = f._eval(near) - c1
    Bv = f._eval(far) - c2
    val = p * A + (1 - p) * Bv
    if not with_grad:
        return val
    u = _unit(y, ny)
    gn, gf = f._grad(near), f._grad(far)
    dy = p[:, None] * (gn - gf - (dc1 + dc2)[:, None] * u)
    dv = p * (1 - p) * (A - Bv) - p * (np.sum(gf * y, axis=1) + dc2 * ny)
    return val, np.concatenate([dy, dv[:, None]], axis=1)


INTEGRANDS = {"unconstrained": integrand_unconstrained, "martingale": integrand_martingale}


def output_dim(d: int, regime: str) -> int:
    return d + 1 if regime == "martingale" else d


def _objective(regime, net: Mlp, f, cost, batch):
    out, cache = net.forward(batch, cache=True)
    if out.shape[1] != output_dim(batch.shape[1], regime):
        raise ValueError(f"{regime} objective needs {output_dim(batch.shape[1], regime)} "
                         f"network outputs, got {out.shape[1]}")
    val, dout = INTEGRANDS[regime](out, batch, f, cost, with_grad=True)
    return float(val.mean()), net.backward(cache, dout / len(batch))


def objective_unconstrained(net: Mlp, f: Payoff, cost: CostSpec, batch):
    """Batch mean of ``f(x + y(x)) - c(|y(x)|)`` and its parameter gradients."""
    return _objective("unconstrained", net, f, cost, np.atleast_2d(batch))


def objective_martingale(net: Mlp, f: Payoff, cost: CostSpec, batch):
    """Batch mean of the two-point martingale integrand and its parameter gradients."""
    return _objective("martingale", net, f, cost, np.atleast_2d(batch))


def evaluate(net: Mlp, f: Payoff, cost: CostSpec, regime: str, X, chunk: int = 100_000):
    """Integrand values of a fixed network at every row of ``X``."""
    X = np.atleast_2d(X)
    out = np.empty(len(X))
    for lo in range(0, len(X), chunk):
        xb = X[lo: lo + chunk]
        out[lo: lo + chunk] = INTEGRANDS[regime](net.forward(xb), xb, f, cost)
    return out


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0


def adam_step(params: list, grads: list, state: AdamState) -> tuple[list, AdamState]:
    """One bias-corrected Adam update *ascending* the objective. Updates in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p += state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10_000
    batch: int = 100
    seed: int = 0
    hidden: int = 4
    width: int = 20
    regime: str = "unconstrained"
    window: int = 100
    eval_samples: int = 1_000_000
    eval_seed: int | None = None
    lr: float = 1e-3
    activation: str = "relu"

    def __post_init__(self):
        for name in ("epochs", "batch", "hidden", "width", "window", "eval_samples"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.window > self.epochs:
            raise ValueError("moving-average window cannot exceed the number of epochs")
        if self.regime not in INTEGRANDS:
            raise ValueError(f"unknown regime {self.regime!r}")

    @property
    def resolved_eval_seed(self) -> int:
        return self.seed if self.eval_seed is None else self.eval_seed


@dataclass
class TrainReport:
    raw: np.ndarray
    moving_average: np.ndarray
    net: Mlp
    estimate: float
    stderr: float
    n_eval: int
    eval_seed: int
    train_seconds: float
    config: TrainConfig

    def curve_to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "raw", f"ma{self.config.window}"])
            for i, (r, m) in enumerate(zip(self.raw, self.moving_average), start=1):
                w.writerow([i, f"{r:.12g}", f"{m:.12g}"])


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average what is available."""
    cs = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (cs[idx] - cs[lo]) / (idx - lo)


def train(measure: ReferenceMeasure, f: Payoff, cost: CostSpec, regime: str | None = None,
          cfg: TrainConfig | None = None, progress=None) -> TrainReport:
    """Stochastic gradient ascent over networks, then a large-sample final evaluation."""
    cfg = cfg or TrainConfig()
    regime = regime or cfg.regime
    if regime not in INTEGRANDS:
        raise ValueError(f"unknown regime {regime!r}")
    if not check_growth(f, cost, regime):
        raise ValueError(f"payoff {f.name} violates the growth condition for power {cost.power}")
    d = measure.dim
    init_ss, batch_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    init_rng = np.random.Generator(np.random.Philox(init_ss))
    batch_rng = np.random.Generator(np.random.Philox(batch_ss))
    net = Mlp.init(d, output_dim(d, regime), cfg.hidden, cfg.width, cfg.activation, init_rng)
    state = AdamState(lr=cfg.lr)
    params = net.params
    raw = np.empty(cfg.epochs)

    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        batch = measure.draw(batch_rng, cfg.batch)
        val, grads = _objective(regime, net, f, cost, batch)
        if not math.isfinite(val) or not all(np.all(np.isfinite(g)) for g in grads):
            raise NumericalAbort(
                f"non-finite objective or gradient at epoch {epoch + 1} (objective={val}); "
                "try a smaller learning rate or check the payoff growth"
            )
        raw[epoch] = val
        adam_step(params, grads, state)
        if progress is not None:
            progress(epoch, val)
    elapsed = time.perf_counter() - t0

    eval_seed = cfg.resolved_eval_seed
    X = sample(measure, cfg.eval_samples, eval_seed)
    vals = evaluate(net, f, cost, regime, X)
    if not np.all(np.isfinite(vals)):
        raise NumericalAbort("non-finite integrand in the final evaluation")
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return TrainReport(raw, moving_average(raw, cfg.window), net, float(vals.mean()), se,
                       len(vals), eval_seed, elapsed, cfg)


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
