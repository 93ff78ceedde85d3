"""k-nearest-neighbour inverse-distance interpolation under the L1 norm."""

from __future__ import annotations

import os

import numpy as np
from scipy.spatial import cKDTree

EXACT_TOL = 1e-12
EPS0 = 1e-12


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("CIBGAMES_THREADS", "1")))
    except ValueError:
        return 1


class Interpolator:
    def __init__(self, points: np.ndarray, values: np.ndarray, k: int, power: float = 2.0):
        self.points = np.ascontiguousarray(points, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.k = int(min(k, len(self.points)))
        self.power = float(power)
        self.tree = cKDTree(self.points)
        self.constant = bool(np.all(self.values == self.values[0]))

    def query(self, q: np.ndarray, grad: bool = False, offset=None):
        """Values at rows of ``q`` and, optionally, d(value)/dq.

        ``offset`` is extra L1 distance common to every stored point (mass
        outside the stored coordinates).
        """
        M = q.shape[0]
        if M == 0:
            return np.zeros(0), (np.zeros((0, q.shape[1])) if grad else None)
        if self.constant:
            return np.full(M, self.values[0]), (np.zeros_like(q) if grad else None)
        d, idx = self.tree.query(q, k=self.k, p=1, workers=worker_count())
        if self.k == 1:
            d, idx = d[:, None], idx[:, None]
        if offset is not None:
            d = d + np.asarray(offset)[:, None]
        v = self.values[idx]
        exact = d[:, 0] < EXACT_TOL
        dd = np.where(exact[:, None], 1.0, d)
        w = dd ** (-self.power)
        wsum = w.sum(axis=1)
        val = (w * v).sum(axis=1) / wsum
        val = np.where(exact, v[:, 0], val)
        if not grad:
            return val, None
        # dV/dd_i = -p d_i^{-p-1} (v_i - V) / sum(w); dd_i/dq = sign(q - x_i)
        coef = -self.power * w / dd * (v - val[:, None]) / wsum[:, None]
        coef[exact] = 0.0
        sgn = np.sign(q[:, None, :] - self.points[idx])
        g = np.einsum("mk,mkd->md", coef, sgn)
        return val, g

    def extended(self, P: np.ndarray, grad: bool = False):
        """Homogeneous extension ``s * V(P / s)`` over the last axis of ``P``.

        Returns the sum over all leading-axis entries except the first, and the
        gradient with respect to ``P`` when requested.
        """
        lead = P.shape[:-1]
        flat = P.reshape(-1, P.shape[-1])
        s = flat.sum(axis=1)
        live = np.flatnonzero(s > EPS0)
        out = np.zeros(flat.shape[0])
        dP = np.zeros_like(flat) if grad else None
        if live.size:
            q = flat[live] / s[live, None]
            val, g = self.query(q, grad=grad)
            out[live] = s[live] * val
            if grad:
                dP[live] = val[:, None] + g - (q * g).sum(axis=1, keepdims=True)
        total = out.reshape(lead).reshape(lead[0], -1).sum(axis=1)
        return total, (dP.reshape(P.shape) if grad else None)
