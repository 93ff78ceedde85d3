"""Behavioral and pure prescriptions.

A team prescription holds, for each player, a table of action
distributions indexed by that player's private information.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .model import GameModel

ROW_TOL = 1e-9
DEFAULT_ENUM_CAP = 10**6


class EnumerationSizeError(ValueError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__("pure prescription set has %d elements, above cap %d" % (count, cap))


@dataclass(frozen=True, eq=False)
class Prescription:
    team: int
    t: int
    maps: Tuple[np.ndarray, ...]  # maps[j] has shape (|P^{i,j}|, |U^{i,j}|)

    def __post_init__(self):
        frozen = []
        for j, m in enumerate(self.maps):
            arr = np.array(m, dtype=float)
            if arr.ndim != 2:
                raise ValueError("player %d table must be 2-D" % (j + 1))
            if (arr < -ROW_TOL).any() or np.abs(arr.sum(axis=1) - 1.0).max(initial=0.0) > ROW_TOL:
                raise ValueError("player %d table rows must be probability vectors" % (j + 1))
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "maps", tuple(frozen))

    def __eq__(self, other):
        return (
            isinstance(other, Prescription)
            and (self.team, self.t) == (other.team, other.t)
            and len(self.maps) == len(other.maps)
            and all(np.array_equal(a, b) for a, b in zip(self.maps, other.maps))
        )

    def at(self, t: int) -> "Prescription":
        return Prescription(self.team, t, self.maps)

    def flat(self) -> np.ndarray:
        """All rows concatenated player-major."""
        return np.concatenate([m.reshape(-1) for m in self.maps])

    def joint_table(self) -> np.ndarray:
        """Product-form probabilities, shape (joint info, joint action)."""
        return joint_table(self.maps)


@dataclass(frozen=True)
class PurePrescription:
    team: int
    t: int
    maps: Tuple[Tuple[int, ...], ...]  # maps[j][p] = action index
    n_actions: Tuple[int, ...]

    def action_names(self, model: GameModel) -> Tuple[Tuple[str, ...], ...]:
        alph = model.actions[self.team - 1]
        return tuple(tuple(alph[j][a] for a in row) for j, row in enumerate(self.maps))


def joint_table(maps: Sequence[np.ndarray]) -> np.ndarray:
    """``G[p, u] = prod_j maps[j][p_j, u_j]`` over joint indices."""
    G = np.ones((1, 1))
    for m in maps:
        G = np.einsum("pu,qv->pquv", G, m).reshape(G.shape[0] * m.shape[0], G.shape[1] * m.shape[1])
    return G


def product_form(gamma: Prescription, p, u) -> float:
    """Probability the team plays joint action ``u`` given joint info ``p``.

    ``p``/``u`` are per-player index tuples, or joint indices when the
    alphabet sizes can be read from ``gamma``.
    """
    info_sizes = tuple(m.shape[0] for m in gamma.maps)
    act_sizes = tuple(m.shape[1] for m in gamma.maps)
    if not isinstance(p, (tuple, list)):
        p = np.unravel_index(int(p), info_sizes)
    if not isinstance(u, (tuple, list)):
        u = np.unravel_index(int(u), act_sizes)
    out = 1.0
    for m, pj, uj in zip(gamma.maps, p, u):
        out *= float(m[pj, uj])
    return out


def uniform(model: GameModel, team: int, t: int) -> Prescription:
    maps = tuple(
        np.full((np_, na), 1.0 / na)
        for np_, na in zip(model.info_sizes(team), model.action_sizes(team))
    )
    return Prescription(team, t, maps)


def from_flat(model: GameModel, team: int, t: int, theta) -> Prescription:
    """Inverse of :meth:`Prescription.flat`."""
    theta = np.asarray(theta, dtype=float)
    maps, off = [], 0
    for np_, na in zip(model.info_sizes(team), model.action_sizes(team)):
        maps.append(theta[off : off + np_ * na].reshape(np_, na))
        off += np_ * na
    return Prescription(team, t, tuple(maps))


def pure_count(model: GameModel, team: int) -> int:
    n = 1
    for np_, na in zip(model.info_sizes(team), model.action_sizes(team)):
        n *= na**np_
    return n


def enumerate_pure(model: GameModel, team: int, t: int, cap: int = DEFAULT_ENUM_CAP) -> List[PurePrescription]:
    """All pure prescriptions in lexicographic order.

    The first player's first private-info row is the most significant
    digit; actions follow game-file order.
    """
    count = pure_count(model, team)
    if count > cap:
        raise EnumerationSizeError(count, cap)
    digits = []
    for np_, na in zip(model.info_sizes(team), model.action_sizes(team)):
        digits.extend([range(na)] * np_)
    sizes = model.info_sizes(team)
    out = []
    for combo in itertools.product(*digits):
        maps, off = [], 0
        for np_ in sizes:
            maps.append(tuple(combo[off : off + np_]))
            off += np_
        out.append(PurePrescription(team, t, tuple(maps), model.action_sizes(team)))
    return out


def lift(q: PurePrescription) -> Prescription:
    """Point-mass behavioral version of a pure prescription."""
    maps = []
    for row, na in zip(q.maps, q.n_actions):
        m = np.zeros((len(row), na))
        m[np.arange(len(row)), list(row)] = 1.0
        maps.append(m)
    return Prescription(q.team, q.t, tuple(maps))


def pure_joint_actions(model: GameModel, team: int, pures: Sequence[PurePrescription]) -> np.ndarray:
    """Joint action chosen at each joint info by each pure prescription.

    Shape (len(pures), joint info).
    """
    sizes = model.info_sizes(team)
    infos = list(itertools.product(*[range(n) for n in sizes]))
    out = np.empty((len(pures), len(infos)), dtype=np.int64)
    for k, q in enumerate(pures):
        for pi, p in enumerate(infos):
            out[k, pi] = model.joint_action(team, [q.maps[j][pj] for j, pj in enumerate(p)])
    return out
