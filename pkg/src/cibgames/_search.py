"""Batched local search for ``min_theta max_k f_k(theta)`` over row simplices.

Each problem in the batch runs a proximal linearization method: linearize
every ``f_k`` at the current point, take the step minimizing the max of the
linear models plus ``|step|^2 / (2 tau)``, accept it if the true objective
drops by a fraction of the predicted amount, and adapt ``tau``. The step is
found through its dual, a small concave QP over the simplex of weights on
the ``f_k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from ._layout import TeamLayout, project_rows

Oracle = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]

ACCEPT_RATIO = 0.1
TAU_GROW = 2.0
TAU_SHRINK = 0.25
TAU_MAX_FACTOR = 1e3
TAU_MIN_FACTOR = 1e-6


@dataclass(frozen=True)
class SearchSettings:
    max_iter: int = 500
    step: float = 0.25
    eps_opt: float = 1e-4
    qp_iter: int = 60


@dataclass
class SearchResult:
    theta: np.ndarray  # (B, D)
    value: np.ndarray  # (B,) max_k f_k at theta
    f: np.ndarray  # (B, K)
    iters: np.ndarray  # (B,)


def dual_weights(f: np.ndarray, Gp: np.ndarray, tau: np.ndarray, n_iter: int) -> np.ndarray:
    """Maximize ``lam.f - tau/2 |Gp^T lam|^2`` over the simplex, batched."""
    B, K = f.shape
    if K == 1:
        return np.ones((B, 1))
    H = np.einsum("bkd,bjd->bkj", Gp, Gp)
    fs = f - f.max(axis=1, keepdims=True)
    lip = tau * np.trace(H, axis1=1, axis2=2) + 1e-12
    lam = np.zeros((B, K))
    lam[np.arange(B), np.argmax(f, axis=1)] = 1.0
    y, prev, mom = lam.copy(), lam.copy(), 1.0
    for _ in range(n_iter):
        g = fs - tau[:, None] * np.einsum("bkj,bj->bk", H, y)
        lam = project_rows(y + g / lip[:, None])
        nxt = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * mom * mom))
        y = lam + ((mom - 1.0) / nxt) * (lam - prev)
        prev, mom = lam, nxt
    return lam


def minimize_max(
    oracle: Oracle,
    layout: TeamLayout,
    theta0: np.ndarray,
    active: np.ndarray,
    settings: SearchSettings,
) -> SearchResult:
    """Run the local search from every row of ``theta0``.

    ``oracle(theta, idx)`` returns values (b, K) and gradients (b, K, D) for
    the problems ``idx``; ``active`` (B, rows) marks rows that carry mass.
    """
    B = theta0.shape[0]
    act = active.astype(float)
    theta = layout.project(theta0)
    f, G = oracle(theta, np.arange(B))
    F = f.max(axis=1)
    Gp = layout.tangent(G, act[:, None, :])
    gnorm = np.sqrt((Gp**2).sum(axis=2)).max(axis=1)
    tau0 = settings.step / np.maximum(gnorm, 1e-12)
    tau = tau0.copy()
    iters = np.zeros(B, dtype=np.int64)
    running = (gnorm > 0) & (settings.max_iter > 0)
    while running.any():
        idx = np.flatnonzero(running)
        lam = dual_weights(f[idx], Gp[idx], tau[idx], settings.qp_iter)
        step = -tau[idx, None] * np.einsum("bk,bkd->bd", lam, Gp[idx])
        cand = layout.project(theta[idx] + step)
        diff = (cand - theta[idx]) * act[idx][:, layout.row_of_entry]
        cand = theta[idx] + diff
        pred_dec = F[idx] - (f[idx] + np.einsum("bkd,bd->bk", Gp[idx], diff)).max(axis=1)
        tol = settings.eps_opt * np.maximum(1.0, np.abs(F[idx]))
        iters[idx] += 1
        done = pred_dec <= tol
        running[idx[done]] = False
        tr = ~done
        if tr.any():
            tidx = idx[tr]
            fn, Gn = oracle(cand[tr], tidx)
            Fn = fn.max(axis=1)
            ok = (F[tidx] - Fn) >= ACCEPT_RATIO * pred_dec[tr]
            a = tidx[ok]
            theta[a] = cand[tr][ok]
            f[a], G[a], F[a] = fn[ok], Gn[ok], Fn[ok]
            Gp[a] = layout.tangent(Gn[ok], act[a][:, None, :])
            tau[a] = np.minimum(tau[a] * TAU_GROW, tau0[a] * TAU_MAX_FACTOR)
            r = tidx[~ok]
            tau[r] *= TAU_SHRINK
            running[r[tau[r] < tau0[r] * TAU_MIN_FACTOR]] = False
        running &= iters < settings.max_iter
    return SearchResult(theta=theta, value=F, f=f, iters=iters)
