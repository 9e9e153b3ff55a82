"""Batched derivative-free maximization.

Every row of a batch is an independent problem; the Nelder-Mead simplices of
all rows advance together so the objective is always called on whole arrays.
"""

from __future__ import annotations

import numpy as np

ALPHA, GAMMA, RHO, SIGMA = 1.0, 2.0, 0.5, 0.5


def _eval(fun, z, rows):
    return np.asarray(fun(z, rows), dtype=float)


def nelder_mead_max(fun, z0: np.ndarray, step: np.ndarray, tol: float = 1e-8,
                    max_iter: int = 500):
    """Maximize ``fun(z, rows)`` independently for every row of ``z0``.

    ``fun`` receives candidate points of shape ``(m, k)`` together with the
    index array ``rows`` (length ``m``) telling which problem each belongs to,
    and returns ``m`` objective values (``-inf`` marks infeasible points).

    Returns ``(z_best, f_best)``. The result is never worse than ``z0``.
    """
    z0 = np.asarray(z0, dtype=float)
    B, k = z0.shape
    step = np.broadcast_to(np.asarray(step, dtype=float), (B, k))
    rows_all = np.arange(B)

    V = np.repeat(z0[:, None, :], k + 1, axis=1)
    for j in range(k):
        V[:, j + 1, j] += step[:, j]
    F = _eval(fun, V.reshape(-1, k), np.repeat(rows_all, k + 1)).reshape(B, k + 1)

    active = np.ones(B, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        order = np.argsort(-F[idx], axis=1, kind="stable")
        Vi = np.take_along_axis(V[idx], order[:, :, None], axis=1)
        Fi = np.take_along_axis(F[idx], order, axis=1)

        # converged rows: simplex collapsed
        diam = np.max(np.abs(Vi[:, 1:, :] - Vi[:, :1, :]), axis=(1, 2))
        done = diam < tol
        if np.any(done):
            V[idx[done]] = Vi[done]
            F[idx[done]] = Fi[done]
            active[idx[done]] = False
            keep = ~done
            idx, Vi, Fi = idx[keep], Vi[keep], Fi[keep]
            if idx.size == 0:
                break

        centroid = Vi[:, :-1, :].mean(axis=1)
        worst = Vi[:, -1, :]
        xr = centroid + ALPHA * (centroid - worst)
        fr = _eval(fun, xr, idx)
        best, second, fworst = Fi[:, 0], Fi[:, -2], Fi[:, -1]

        new_v = worst.copy()
        new_f = fworst.copy()

        # expansion
        exp_mask = fr > best
        if np.any(exp_mask):
            xe = centroid[exp_mask] + GAMMA * (xr[exp_mask] - centroid[exp_mask])
            fe = _eval(fun, xe, idx[exp_mask])
            take_e = fe > fr[exp_mask]
            new_v[exp_mask] = np.where(take_e[:, None], xe, xr[exp_mask])
            new_f[exp_mask] = np.where(take_e, fe, fr[exp_mask])

        # plain reflection
        ref_mask = (~exp_mask) & (fr > second)
        new_v[ref_mask] = xr[ref_mask]
        new_f[ref_mask] = fr[ref_mask]

        # contraction, outside when the reflection beat the worst vertex
        con_mask = ~(exp_mask | ref_mask)
        shrink_mask = np.zeros_like(con_mask)
        if np.any(con_mask):
            outside = fr[con_mask] > fworst[con_mask]
            c = centroid[con_mask]
            target = np.where(outside[:, None], xr[con_mask], worst[con_mask])
            xc = c + RHO * (target - c)
            fc = _eval(fun, xc, idx[con_mask])
            accept = np.where(outside, fc >= fr[con_mask], fc > fworst[con_mask])
            ci = np.flatnonzero(con_mask)
            new_v[ci[accept]] = xc[accept]
            new_f[ci[accept]] = fc[accept]
            shrink_mask[ci[~accept]] = True

        Vi[:, -1, :] = new_v
        Fi[:, -1] = new_f

        if np.any(shrink_mask):
            si = np.flatnonzero(shrink_mask)
            v0 = Vi[si, :1, :]
            Vs = v0 + SIGMA * (Vi[si, 1:, :] - v0)
            Fs = _eval(fun, Vs.reshape(-1, k), np.repeat(idx[si], k)).reshape(len(si), k)
            Vi[si, 1:, :] = Vs
            Fi[si, 1:] = Fs

        V[idx] = Vi
        F[idx] = Fi

    b = np.argmax(F, axis=1)
    return V[rows_all, b], F[rows_all, b]


def top_k(values: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the ``k`` largest entries per row, best first, ties by index."""
    k = min(k, values.shape[1])
    part = np.argsort(-values, axis=1, kind="stable")[:, :k]
    return part


def unit_directions(d: int, count: int, seed: int = 12345) -> np.ndarray:
    """Fixed set of unit vectors: the coordinate axes (both signs) plus seeded random ones."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = np.linspace(0, 2 * np.pi, max(count, 4), endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    eye = np.eye(d)
    dirs = [eye, -eye]
    extra = count - 2 * d
    if extra > 0:
        g = np.random.Generator(np.random.Philox(seed)).standard_normal((extra, d))
        dirs.append(g / np.linalg.norm(g, axis=1, keepdims=True))
    return np.concatenate(dirs, axis=0)


def radial_grid(d: int, radius: float, n_radii: int, n_dirs: int) -> np.ndarray:
    """Displacements on rings around the origin, including the origin itself."""
    if d == 1:
        return np.linspace(-radius, radius, 2 * n_radii + 1)[:, None]
    dirs = unit_directions(d, n_dirs)
    radii = np.linspace(0, radius, n_radii + 1)[1:]
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    return np.concatenate([np.zeros((1, d)), pts], axis=0)
