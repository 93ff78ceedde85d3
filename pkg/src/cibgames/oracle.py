"""Brute-force reference values for tiny games.

Both oracles recurse on exact beliefs with no interpolation. The upper
oracle restricts Team 1's prescription rows to a simplex grid and lets
Team 2 choose among pure prescriptions; the best-response oracle expands
the full tree of common increments under a fixed Team-1 policy.
"""

from __future__ import annotations

import itertools
from typing import Optional, Tuple

import numpy as np

from ._layout import TeamLayout, row_activity
from .model import GameModel
from .prescriptions import enumerate_pure, lift
from .solver import _compositions

MASS_EPS = 1e-12
KEY_DECIMALS = 12
CHUNK_ELEMS = 4_000_000


class OracleSizeError(ValueError):
    pass


class _Stages:
    """Per-stage kernels and costs restricted to the live cells."""

    def __init__(self, model: GameModel, cells: np.ndarray):
        x, p1, p2 = model.cell_arrays()
        self.cells = cells
        self.p1, self.p2 = p1[cells], p2[cells]
        self.kern = [model.kernel(t)[cells][:, :, :, cells, :] for t in range(1, model.horizon + 1)]
        self.cost = [model.cost(t)[x[cells]] for t in range(1, model.horizon + 1)]

    def weights(self, pi: np.ndarray, G1: np.ndarray, G2: np.ndarray) -> np.ndarray:
        """Joint (belief, action) weights (..., L, A, E) from product-form tables."""
        return pi[..., :, None, None] * G1[..., self.p1, :, None] * G2[..., self.p2, None, :]

    def stage(self, t: int, W: np.ndarray):
        """Stage cost and unnormalized joint ``(Z, L')`` outcome for weights ``W``."""
        c = np.einsum("...lae,lae->...", W, self.cost[t - 1])
        P = np.einsum("...lae,laemz->...zm", W, self.kern[t - 1])
        return c, P


def _unique_rows(F: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    keys = np.round(F, KEY_DECIMALS)
    _, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    return F[first], inv.reshape(-1)


def _children(P: np.ndarray):
    """Split (n, Z, L) joints into masses and normalized child beliefs (deduplicated)."""
    mass = P.sum(axis=-1)
    live = mass > MASS_EPS
    F = P[live] / mass[live][:, None]
    if len(F) == 0:
        return mass, live, np.zeros((0, P.shape[-1])), np.zeros(0, dtype=np.int64)
    uniq, inv = _unique_rows(F)
    return mass, live, uniq, inv


def _continuation(mass, live, inv, values) -> np.ndarray:
    cont = np.zeros(mass.shape)
    cont[live] = mass[live] * values[inv]
    return cont.sum(axis=-1)


# -- upper value --------------------------------------------------------------


class _UpperOracle:
    def __init__(self, model: GameModel, m: int, work_cap: int):
        self.model, self.m, self.work_cap = model, m, work_cap
        self.cells = model.live_cells()
        self.st = _Stages(model, self.cells)
        self.lay1 = TeamLayout(model, 1)
        self.fam = np.stack([lift(q).joint_table() for q in enumerate_pure(model, 2, 1)])  # (K, P2, E)
        self.grids = {na: _compositions(m, na, 10**7) / m for na in set(self.lay1.action_sizes)}
        self.work = 0

    def _charge(self, n: int) -> None:
        self.work += n
        if self.work > self.work_cap:
            raise OracleSizeError("oracle work exceeds cap %d" % self.work_cap)

    def _candidates(self, active: np.ndarray, skip: Optional[int] = None) -> np.ndarray:
        """Team-1 flat prescriptions: grid rows where active, uniform elsewhere."""
        choices = []
        for r, (_, _, o, na) in enumerate(self.lay1.rows):
            if r == skip or not active[r]:
                choices.append(np.full((1, na), 1.0 / na))
            else:
                choices.append(self.grids[na])
        n = int(np.prod([len(c) for c in choices]))
        out = np.empty((n, self.lay1.dim))
        for i, combo in enumerate(itertools.product(*[range(len(c)) for c in choices])):
            for r, (_, _, o, na) in enumerate(self.lay1.rows):
                out[i, o : o + na] = choices[r][combo[r]]
        return out

    def values(self, t: int, beliefs: np.ndarray) -> np.ndarray:
        """Exact grid-restricted upper values at normalized live-coordinate beliefs."""
        out = np.empty(len(beliefs))
        act = row_activity(self.model, 1, self.lay1, beliefs, self.cells) > 0
        patterns, inv = np.unique(act, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        for g, pat in enumerate(patterns):
            idx = np.flatnonzero(inv == g)
            if t == self.model.horizon:
                out[idx] = self._terminal(beliefs[idx], pat)
            else:
                out[idx] = self._interior(t, beliefs[idx], pat)
        return out

    def _chunk(self, per_belief: int) -> int:
        return max(1, CHUNK_ELEMS // max(1, per_belief))

    def _interior(self, t: int, pis: np.ndarray, active: np.ndarray) -> np.ndarray:
        th = self._candidates(active)
        K = len(self.fam)
        self._charge(len(pis) * len(th) * K)
        G1 = self.lay1.joint(th)  # (N1, P1, A)
        L, Z = len(self.cells), self.model.n_increments
        step = self._chunk(len(th) * K * Z * L * G1.shape[-1] * self.fam.shape[-1])
        out = np.empty(len(pis))
        for s in range(0, len(pis), step):
            sub = pis[s : s + step]
            W = self.st.weights(sub[:, None, None, :], G1[None, :, None], self.fam[None, None])
            c, P = self.st.stage(t, W)  # (n, N1, K), (n, N1, K, Z, L)
            del W
            mass, live, uniq, cinv = _children(P.reshape((-1,) + P.shape[-2:]))
            del P
            vals = self.values(t + 1, uniq) if len(uniq) else np.zeros(0)
            cont = _continuation(mass, live, cinv, vals).reshape(c.shape)
            out[s : s + step] = (c + cont).max(axis=2).min(axis=1)
        return out

    def _cost_coef(self, th: np.ndarray) -> np.ndarray:
        """Terminal cost per (candidate, Team-2 pure, cell), shape (N, K, L)."""
        G1 = self.lay1.joint(th)[:, self.st.p1, :]  # (N, L, A)
        G2 = self.fam[:, self.st.p2, :]  # (K, L, E)
        return np.einsum("nla,kle,lae->nkl", G1, G2, self.st.cost[-1])

    def _terminal(self, pis: np.ndarray, active: np.ndarray) -> np.ndarray:
        rows = self.lay1.rows
        binary = [r for r in range(len(rows)) if active[r] and rows[r][3] == 2]
        K = len(self.fam)
        if not binary:
            coef = self._cost_coef(self._candidates(active))
            self._charge(len(pis) * coef.shape[0] * K)
            return np.einsum("nl,bkl->nbk", pis, coef).max(axis=2).min(axis=1)
        # Cost is linear in each row: minimize over the last binary row exactly.
        r = binary[-1]
        o = rows[r][2]
        th = self._candidates(active, skip=r)
        coefs = []
        for q in (0.0, 1.0):
            tq = th.copy()
            tq[:, o], tq[:, o + 1] = q, 1.0 - q
            coefs.append(self._cost_coef(tq))
        ca, cb = coefs[0], coefs[1] - coefs[0]  # value = a + b * q, q on the first action
        pairs = list(itertools.combinations(range(K), 2))
        n_q = 2 + 2 * len(pairs)
        self._charge(len(pis) * len(th) * K * n_q)
        step = self._chunk(len(th) * n_q * K)
        out = np.empty(len(pis))
        for s in range(0, len(pis), step):
            sub = pis[s : s + step]
            a = np.einsum("nl,bkl->nbk", sub, ca)
            b = np.einsum("nl,bkl->nbk", sub, cb)
            qs = [np.zeros(a.shape[:2]), np.ones(a.shape[:2])]
            for i, j in pairs:
                db = b[..., i] - b[..., j]
                with np.errstate(divide="ignore", invalid="ignore"):
                    cross = np.where(db != 0, (a[..., j] - a[..., i]) / db, 0.0)
                cross = np.clip(cross, 0.0, 1.0) * self.m
                qs.append(np.floor(cross) / self.m)
                qs.append(np.ceil(cross) / self.m)
            Q = np.stack(qs, axis=-1)  # (n, N0, cands)
            f = (a[:, :, None, :] + b[:, :, None, :] * Q[..., None]).max(axis=-1)
            out[s : s + step] = f.min(axis=(1, 2))
        return out


def _check_upper_size(model: GameModel, max_cells: int) -> None:
    if model.horizon > 3:
        raise OracleSizeError("oracle needs horizon <= 3, got %d" % model.horizon)
    if len(model.live_cells()) > max_cells:
        raise OracleSizeError("oracle needs at most %d reachable cells" % max_cells)
    sizes = model.action_sizes(1) + model.action_sizes(2)
    if max(sizes) > 3:
        raise OracleSizeError("oracle needs action alphabets of size <= 3")


def brute_force_upper(model: GameModel, m_presc: int, max_cells: int = 6, work_cap: int = 5 * 10**7) -> float:
    """Upper value at the initial belief with Team-1 rows on the ``m_presc`` grid.

    Exact on its own terms: the value is the min over gridded Team-1
    prescriptions of the max over pure Team-2 prescriptions, recursed on the
    exact reachable beliefs.
    """
    if m_presc < 1:
        raise ValueError("m_presc must be >= 1")
    _check_upper_size(model, max_cells)
    orc = _UpperOracle(model, m_presc, work_cap)
    pi = model.initial_belief[orc.cells][None, :]
    return float(orc.values(1, pi)[0])


# -- best response --------------------------------------------------------------


def brute_force_best_response(model: GameModel, team1_policy, max_increments: int = 24, tree_cap: int = 10**5) -> float:
    """Team 2's exact best-response value against a belief-based Team-1 policy.

    Expands every (pure Team-2 prescription, increment) branch. Beliefs
    along each branch are exact, so equal beliefs share their subtree.
    """
    if model.horizon > 3:
        raise OracleSizeError("oracle needs horizon <= 3, got %d" % model.horizon)
    if model.n_increments > max_increments:
        raise OracleSizeError("oracle needs at most %d increments" % max_increments)
    cells = model.live_cells()
    st = _Stages(model, cells)
    lay1 = TeamLayout(model, 1)
    fams = [np.stack([lift(q).joint_table() for q in enumerate_pure(model, 2, t)]) for t in range(1, model.horizon + 1)]
    nodes = [0]

    def level(t: int, pis: np.ndarray) -> np.ndarray:
        nodes[0] += len(pis)
        if nodes[0] > tree_cap:
            raise OracleSizeError("best-response tree exceeds %d nodes" % tree_cap)
        full = np.zeros((len(pis), model.n_cells))
        full[:, cells] = pis
        G1 = lay1.joint(np.asarray(team1_policy.thetas(t, full), dtype=float))
        fam = fams[t - 1]
        W = st.weights(pis[:, None, :], G1[:, None], fam[None])  # (n, K, L, A, E)
        c, P = st.stage(t, W)
        if t == model.horizon:
            return c.max(axis=1)
        mass, live, uniq, inv = _children(P.reshape((-1,) + P.shape[-2:]))
        vals = level(t + 1, uniq) if len(uniq) else np.zeros(0)
        cont = _continuation(mass, live, inv, vals).reshape(c.shape)
        return (c + cont).max(axis=1)

    pi = model.initial_belief[cells][None, :]
    return float(level(1, pi)[0])
