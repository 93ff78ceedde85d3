"""Flat parameterization of a team prescription for batched search.

``theta`` concatenates every player's table row-major, player by player
(the layout of :meth:`Prescription.flat`). Each private-info row is a point
on a probability simplex.
"""

from __future__ import annotations

import string
from typing import List, Tuple

import numpy as np

from .model import GameModel
from .prescriptions import Prescription, from_flat


def project_rows(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``v`` (M, n) onto the simplex."""
    n = v.shape[1]
    if n == 1:
        return np.ones_like(v)
    if n == 2:
        a = np.clip((v[:, 0] - v[:, 1] + 1.0) * 0.5, 0.0, 1.0)
        return np.stack([a, 1.0 - a], axis=1)
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ks = np.arange(1, n + 1)
    cond = u - css / ks > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    shift = css[np.arange(len(v)), rho] / (rho + 1)
    return np.maximum(v - shift[:, None], 0.0)


class TeamLayout:
    def __init__(self, model: GameModel, team: int):
        self.team = team
        self.info_sizes = model.info_sizes(team)
        self.action_sizes = model.action_sizes(team)
        self.n_players = len(self.info_sizes)
        self.blocks: List[Tuple[int, int, int]] = []
        rows = []
        off = 0
        for j, (np_, na) in enumerate(zip(self.info_sizes, self.action_sizes)):
            self.blocks.append((off, np_, na))
            for p in range(np_):
                rows.append((j, p, off + p * na, na))
            off += np_ * na
        self.dim = off
        self.rows = rows
        self.n_rows = len(rows)
        self.row_of_entry = np.empty(self.dim, dtype=np.int64)
        for r, (_, _, o, na) in enumerate(rows):
            self.row_of_entry[o : o + na] = r
        self.groups = {}
        for r, (_, _, o, na) in enumerate(rows):
            self.groups.setdefault(na, []).append((r, np.arange(o, o + na)))
        self.groups = {
            na: (np.array([r for r, _ in items]), np.stack([ix for _, ix in items]))
            for na, items in self.groups.items()
        }
        self.row_len = np.array([na for (_, _, _, na) in rows], dtype=float)
        self.n_info = int(np.prod(self.info_sizes))
        self.n_actions = int(np.prod(self.action_sizes))
        self._einsum = self._build_einsum()

    # -- conversions ---------------------------------------------------------
    def tables(self, theta: np.ndarray) -> List[np.ndarray]:
        return [theta[:, o : o + np_ * na].reshape(-1, np_, na) for (o, np_, na) in self.blocks]

    def joint(self, theta: np.ndarray) -> np.ndarray:
        """Product-form table (B, joint info, joint action)."""
        tabs = self.tables(theta)
        G = tabs[0]
        for T in tabs[1:]:
            B = G.shape[0]
            G = (G[:, :, None, :, None] * T[:, None, :, None, :]).reshape(B, G.shape[1] * T.shape[1], G.shape[2] * T.shape[2])
        return G

    def _build_einsum(self):
        n = self.n_players
        ps, us = string.ascii_lowercase[:n], string.ascii_lowercase[n : 2 * n]
        full = "Z" + ps + us
        specs = []
        for j in range(n):
            others = ["Z" + ps[k] + us[k] for k in range(n) if k != j]
            specs.append(",".join([full] + others) + "->Z" + ps[j] + us[j])
        return specs

    def backprop(self, theta: np.ndarray, dG: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. ``theta`` given the gradient w.r.t. the joint table."""
        tabs = self.tables(theta)
        B = theta.shape[0]
        if self.n_players == 1:
            return dG.reshape(B, -1)
        dfull = dG.reshape((B,) + tuple(self.info_sizes) + tuple(self.action_sizes))
        out = []
        for j in range(self.n_players):
            others = [tabs[k] for k in range(self.n_players) if k != j]
            out.append(np.einsum(self._einsum[j], dfull, *others).reshape(B, -1))
        return np.concatenate(out, axis=1)

    def to_prescription(self, model: GameModel, t: int, theta_row: np.ndarray) -> Prescription:
        return from_flat(model, self.team, t, self.project(np.asarray(theta_row, dtype=float)[None])[0])

    # -- geometry ------------------------------------------------------------
    def project(self, theta: np.ndarray) -> np.ndarray:
        out = np.empty_like(theta)
        for na, (_, ix) in self.groups.items():
            sub = theta[:, ix]  # (B, rows, na)
            B, R, _ = sub.shape
            out[:, ix] = project_rows(sub.reshape(B * R, na)).reshape(B, R, na)
        return out

    def tangent(self, grad: np.ndarray, active: np.ndarray) -> np.ndarray:
        """Remove row means and zero inactive rows. ``grad`` (..., D), ``active`` (..., rows)."""
        out = np.empty_like(grad)
        for na, (rows, ix) in self.groups.items():
            sub = grad[..., ix]
            sub = sub - sub.mean(axis=-1, keepdims=True)
            out[..., ix] = sub * active[..., rows, None]
        return out

    def uniform(self, B: int) -> np.ndarray:
        theta = np.empty((B, self.dim))
        for na, (_, ix) in self.groups.items():
            theta[:, ix] = 1.0 / na
        return theta

    def random(self, rng: np.random.Generator, B: int) -> np.ndarray:
        theta = np.empty((B, self.dim))
        for (_, _, o, na) in self.rows:
            theta[:, o : o + na] = rng.dirichlet(np.ones(na), size=B)
        return theta

    def greedy(self, grad: np.ndarray) -> np.ndarray:
        """Per row, a point mass on the entry with the smallest gradient."""
        theta = np.zeros_like(grad)
        for na, (_, ix) in self.groups.items():
            sub = grad[:, ix]
            best = np.argmin(sub, axis=-1)
            B, R = best.shape
            hot = np.zeros_like(sub)
            hot[np.arange(B)[:, None], np.arange(R)[None, :], best] = 1.0
            theta[:, ix] = hot
        return theta


def row_activity(model: GameModel, team: int, layout: TeamLayout, weights: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Probability mass reaching each prescription row, shape (B, rows).

    ``weights`` are beliefs restricted to ``cells``.
    """
    _, p1, p2 = model.cell_arrays()
    pj = (p1 if team == 1 else p2)[cells]
    mass = np.zeros((weights.shape[0], layout.n_rows))
    for r, (j, p, _, _) in enumerate(layout.rows):
        sel = np.array([model.split_info(team, int(q))[j] == p for q in pj])
        mass[:, r] = weights[:, sel].sum(axis=1)
    return mass
