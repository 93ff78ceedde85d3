"""Batched evaluation of the stage surrogate ``w(pi, gamma1, gamma2)``.

``w = c~(pi, g1, g2) + sum_z V_ext(P_joint(pi, g1, g2; z))`` where ``V_ext``
is the homogeneous extension of the next-stage interpolant. Beliefs are in
live-cell coordinates; team prescriptions enter as joint product-form
tables.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ._interp import Interpolator
from .model import GameModel

ROW_CHUNK = 16384


class StageSurrogate:
    def __init__(self, model: GameModel, t: int, next_interp: Optional[Interpolator]):
        self.model = model
        self.t = t
        live = model.live_cells()
        self.cells = live
        x, p1, p2 = model.cell_arrays()
        self.p1 = p1[live]
        self.p2 = p2[live]
        L, A, E, Z = len(live), model.n_joint_actions(1), model.n_joint_actions(2), model.n_increments
        self.shape = (L, A, E)
        K = model.kernel(t)[live][:, :, :, live, :]  # (L, A, E, L', Z)
        self.kmat = np.ascontiguousarray(K.transpose(0, 1, 2, 4, 3).reshape(L * A * E, Z * L))
        self.kmat_t = np.ascontiguousarray(self.kmat.T)
        self.n_z = Z
        self.costv = model.cost(t)[x[live]].reshape(-1)  # (L*A*E,)
        self.h1 = np.eye(model.n_joint_info(1))[self.p1]  # (L, P1)
        self.h2 = np.eye(model.n_joint_info(2))[self.p2]
        self.interp = next_interp

    def evaluate(self, pi: np.ndarray, G1: np.ndarray, G2: np.ndarray, grad1: bool = False, grad2: bool = False):
        """Surrogate values (R,) with optional gradients w.r.t. ``G1``/``G2``."""
        R = pi.shape[0]
        if R > ROW_CHUNK:
            parts = [
                self.evaluate(pi[i : i + ROW_CHUNK], G1[i : i + ROW_CHUNK], G2[i : i + ROW_CHUNK], grad1, grad2)
                for i in range(0, R, ROW_CHUNK)
            ]
            w = np.concatenate([p[0] for p in parts])
            d1 = np.concatenate([p[1] for p in parts]) if grad1 else None
            d2 = np.concatenate([p[2] for p in parts]) if grad2 else None
            return w, d1, d2
        L, A, E = self.shape
        g1 = G1[:, self.p1, :]  # (R, L, A)
        g2 = G2[:, self.p2, :]  # (R, L, E)
        W = (pi[:, :, None, None] * g1[:, :, :, None] * g2[:, :, None, :]).reshape(R, -1)
        w = W @ self.costv
        need = grad1 or grad2
        dW = None
        if self.interp is not None:
            P = (W @ self.kmat).reshape(R, self.n_z, L)
            cont, dP = self.interp.extended(P, grad=need)
            w = w + cont
            if need:
                dW = self.costv[None, :] + dP.reshape(R, -1) @ self.kmat_t
        elif need:
            dW = np.broadcast_to(self.costv, (R, self.costv.size))
        d1 = d2 = None
        if need:
            dW = dW.reshape(R, L, A, E) * pi[:, :, None, None]
            if grad1:
                dg1 = np.einsum("rlae,rle->rla", dW, g2)
                d1 = np.einsum("rla,lp->rpa", dg1, self.h1)
            if grad2:
                dg2 = np.einsum("rlae,rla->rle", dW, g1)
                d2 = np.einsum("rle,lq->rqe", dg2, self.h2)
        return w, d1, d2
