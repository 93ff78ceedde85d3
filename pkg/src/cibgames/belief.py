"""Common-information belief: transforms, update and reduced stage cost.

Beliefs are dense vectors over flattened ``(x, p1, p2)`` cells. The
``extended_*`` functions accept un-normalized weights and are linear in
them; the public operations normalize.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .model import GameModel
from .prescriptions import Prescription

EPS0 = 1e-12
NORM_TOL = 1e-9


class StageMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Belief:
    t: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if (w < 0).any() or abs(w.sum() - 1.0) > NORM_TOL:
            raise ValueError("belief weights must be a probability vector (sum=%r)" % w.sum())
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __eq__(self, other):
        return isinstance(other, Belief) and self.t == other.t and np.array_equal(self.weights, other.weights)

    def state_marginal(self, model: GameModel) -> np.ndarray:
        return self.weights.reshape(model.cell_shape).sum(axis=(1, 2))


@dataclass(frozen=True, eq=False)
class JointOutcomeDist:
    t: int
    weights: np.ndarray  # shape (Z, C) over (z, next cell)

    def next_state_marginal(self, model: GameModel) -> np.ndarray:
        return self.weights.reshape((model.n_increments,) + model.cell_shape).sum(axis=(0, 2, 3))


def uniform_belief(model: GameModel, t: int) -> Belief:
    return Belief(t, np.full(model.n_cells, 1.0 / model.n_cells))


def initial_belief(model: GameModel) -> Belief:
    return Belief(1, model.initial_belief.copy())


def _tables(model: GameModel, t: int, gamma1: Prescription, gamma2: Prescription):
    if gamma1.team != 1 or gamma2.team != 2:
        raise ValueError("expected a Team-1 and a Team-2 prescription")
    if gamma1.t != t or gamma2.t != t:
        raise StageMismatchError("prescriptions at stages %d/%d, belief at %d" % (gamma1.t, gamma2.t, t))
    if not 1 <= t <= model.horizon:
        raise StageMismatchError("stage %d outside 1..%d" % (t, model.horizon))
    return gamma1.joint_table(), gamma2.joint_table()


def _action_weights(model: GameModel, weights: np.ndarray, G1: np.ndarray, G2: np.ndarray) -> np.ndarray:
    """``W[c, u1, u2] = pi(c) G1[p1(c), u1] G2[p2(c), u2]``."""
    _, p1, p2 = model.cell_arrays()
    return weights[:, None, None] * G1[p1][:, :, None] * G2[p2][:, None, :]


def extended_joint(model: GameModel, t: int, weights, gamma1: Prescription, gamma2: Prescription) -> np.ndarray:
    """Un-normalized joint over ``(z, next cell)``, linear in ``weights``."""
    G1, G2 = _tables(model, t, gamma1, gamma2)
    W = _action_weights(model, np.asarray(weights, dtype=float), G1, G2)
    return np.einsum("cab,cabdz->zd", W, model.kernel(t))


def extended_marginal(model: GameModel, t: int, weights, gamma1: Prescription, gamma2: Prescription) -> np.ndarray:
    return extended_joint(model, t, weights, gamma1, gamma2).sum(axis=1)


def extended_stage_cost(model: GameModel, t: int, weights, gamma1: Prescription, gamma2: Prescription) -> float:
    G1, G2 = _tables(model, t, gamma1, gamma2)
    W = _action_weights(model, np.asarray(weights, dtype=float), G1, G2)
    x, _, _ = model.cell_arrays()
    return float(np.sum(W * model.cost(t)[x]))


def joint_transform(model: GameModel, pi: Belief, gamma1: Prescription, gamma2: Prescription) -> JointOutcomeDist:
    return JointOutcomeDist(pi.t, extended_joint(model, pi.t, pi.weights, gamma1, gamma2))


def common_marginal(j: Union[JointOutcomeDist, np.ndarray]) -> np.ndarray:
    w = j.weights if isinstance(j, JointOutcomeDist) else np.asarray(j)
    return w.reshape(w.shape[0], -1).sum(axis=1)


def _z_index(model: GameModel, z) -> int:
    if isinstance(z, str):
        return model.common_increments.index(z)
    z = int(z)
    if not 0 <= z < model.n_increments:
        raise IndexError("increment index %d out of range" % z)
    return z


def _condition(model: GameModel, t: int, column: np.ndarray, mass: float) -> Belief:
    if mass > EPS0:
        w = column / mass
        return Belief(t + 1, w / w.sum())
    return uniform_belief(model, t + 1)


def cib_update(model: GameModel, pi: Belief, gamma1: Prescription, gamma2: Prescription, z) -> Belief:
    """Bayes update of the belief on increment ``z``; uniform if ``z`` is impossible."""
    zi = _z_index(model, z)
    J = extended_joint(model, pi.t, pi.weights, gamma1, gamma2)
    return _condition(model, pi.t, J[zi], J[zi].sum())


def one_sided_kernel(model: GameModel, t: int) -> np.ndarray:
    """``Kz[c, u1, c', z] = K[c, u1, u2(z), c', z]`` (zero where z is unmapped)."""
    key = ("one_sided_kernel", t)
    if key not in model._cache:
        K = model.kernel(t)
        u2z = model.u2_of_z()
        Kz = np.zeros(K.shape[:2] + K.shape[3:])
        for zi, u2 in enumerate(u2z):
            if u2 >= 0:
                Kz[:, :, :, zi] = K[:, :, u2, :, zi]
        Kz.setflags(write=False)
        model._cache[key] = Kz
    return model._cache[key]


def extended_one_sided(model: GameModel, t: int, weights, gamma1: Prescription) -> np.ndarray:
    """Team-2-free factor ``Q[z, c']`` of the joint transform."""
    if gamma1.team != 1 or gamma1.t != t:
        raise StageMismatchError("Team-1 prescription at stage %d, belief at %d" % (gamma1.t, t))
    G1 = gamma1.joint_table()
    _, p1, _ = model.cell_arrays()
    W = np.asarray(weights, dtype=float)[:, None] * G1[p1]
    return np.einsum("ca,cadz->zd", W, one_sided_kernel(model, t))


def cib_update_one_sided(model: GameModel, pi: Belief, gamma1: Prescription, z) -> Belief:
    """Update without Team 2's prescription; needs ``cib_control='team1_only'``."""
    if model.cib_control != "team1_only":
        raise ValueError("one-sided update requires cib_control='team1_only'")
    zi = _z_index(model, z)
    Q = extended_one_sided(model, pi.t, pi.weights, gamma1)
    return _condition(model, pi.t, Q[zi], Q[zi].sum())


def stage_cost(model: GameModel, t: int, pi: Belief, gamma1: Prescription, gamma2: Prescription) -> float:
    if pi.t != t:
        raise StageMismatchError("belief at stage %d, cost requested at %d" % (pi.t, t))
    return extended_stage_cost(model, t, pi.weights, gamma1, gamma2)
