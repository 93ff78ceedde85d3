"""Seeded Monte Carlo rollouts on the true game dynamics.

All randomness comes from keyed uniforms ``u(seed, t, role, player)``, so a
rollout depends only on its seed. Rollouts advance in lockstep, which lets
belief-based policies solve each stage for all distinct beliefs at once.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ._layout import TeamLayout
from .belief import Belief, cib_update, cib_update_one_sided, initial_belief
from .model import GameModel
from .prescriptions import from_flat
from .strategy import rand_index

DIST_TOL = 1e-9


class PolicyError(ValueError):
    pass


def keyed_uniform(seed: int, t: int, role: str, player: int) -> float:
    """Deterministic uniform in (0, 1] keyed by ``(seed, t, role, player)``."""
    h = hashlib.blake2b(("%d:%d:%s:%d" % (seed, t, role, player)).encode(), digest_size=8).digest()
    return (int.from_bytes(h, "little") + 1) / 2.0**64


@dataclass(frozen=True)
class StageRecord:
    t: int
    x: int
    p1: int  # joint index
    p2: int
    u1: int
    u2: int
    z: int
    cost: float  # discounted


@dataclass(frozen=True)
class Trajectory:
    stages: Tuple[StageRecord, ...]
    total: float

    def named(self, model: GameModel) -> List[Dict[str, object]]:
        return [
            {
                "t": s.t,
                "x": model.states[s.x],
                "p1": model.joint_info_name(1, s.p1),
                "p2": model.joint_info_name(2, s.p2),
                "u1": model.joint_action_name(1, s.u1),
                "u2": model.joint_action_name(2, s.u2),
                "z": model.common_increments[s.z],
                "cost": s.cost,
            }
            for s in self.stages
        ]


@dataclass(frozen=True)
class MonteCarloResult:
    mean: float
    stderr: float
    n: int
    degenerate: bool  # n == 1: no spread estimate


# -- Team-2 policies ---------------------------------------------------------


class Team2Policy:
    def thetas(self, t: int, beliefs: np.ndarray, theta1: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ScriptedTeam2(Team2Policy):
    """Fixed per-player action distributions, optionally varying by stage.

    Format: ``{"players": [{"default": {action: prob}, "by_stage":
    {"t": {action: prob}}}]}``; missing actions get probability 0.
    """

    def __init__(self, model: GameModel, spec: Dict[str, object]):
        self.model = model
        players = spec.get("players")
        if not isinstance(players, list) or len(players) != model.team2_players:
            raise PolicyError("scripted opponent needs one entry per Team-2 player")
        self._flat = []
        for t in range(1, model.horizon + 1):
            parts = []
            for j, entry in enumerate(players):
                dist = entry.get("by_stage", {}).get(str(t), entry.get("default"))
                if dist is None:
                    raise PolicyError("player (2,%d) has no distribution for stage %d" % (j + 1, t))
                alph = model.actions[1][j]
                row = np.zeros(len(alph))
                for a, p in dist.items():
                    if a not in alph:
                        raise PolicyError("unknown action %r for player (2,%d)" % (a, j + 1))
                    row[alph.index(a)] = float(p)
                if (row < 0).any() or abs(row.sum() - 1.0) > DIST_TOL:
                    raise PolicyError("player (2,%d) stage %d distribution is not a probability vector" % (j + 1, t))
                parts.append(np.tile(row, len(model.private_info[1][j])))
            self._flat.append(np.concatenate(parts))

    @classmethod
    def uniform(cls, model: GameModel) -> "ScriptedTeam2":
        players = [{"default": {a: 1.0 / len(alph) for a in alph}} for alph in model.actions[1]]
        return cls(model, {"players": players})

    def thetas(self, t: int, beliefs: np.ndarray, theta1: np.ndarray) -> np.ndarray:
        return np.repeat(self._flat[t - 1][None, :], len(beliefs), axis=0)


# -- rollouts ----------------------------------------------------------------


def _check_rows(layout: TeamLayout, thetas: np.ndarray, team: int) -> None:
    if thetas.ndim != 2 or thetas.shape[1] != layout.dim:
        raise PolicyError("Team-%d policy returned prescriptions of the wrong size" % team)
    if not np.all(np.isfinite(thetas)) or (thetas < -DIST_TOL).any():
        raise PolicyError("Team-%d policy emitted an invalid distribution" % team)
    for (_, _, o, na) in layout.rows:
        if np.abs(thetas[:, o : o + na].sum(axis=1) - 1.0).max() > DIST_TOL:
            raise PolicyError("Team-%d policy emitted an invalid distribution" % team)


def _draw_team(model: GameModel, layout: TeamLayout, team: int, theta: np.ndarray, info: int, seed: int, t: int) -> int:
    parts = model.split_info(team, info)
    acts = []
    for j, (o, np_, na) in enumerate(layout.blocks):
        row = theta[o + parts[j] * na : o + (parts[j] + 1) * na]
        acts.append(rand_index(row, keyed_uniform(seed, t, "team%d" % team, j)))
    return model.joint_action(team, acts)


def simulate(model: GameModel, team1, team2: Team2Policy, seeds: Sequence[int]) -> List[Trajectory]:
    """One trajectory per seed; ``team1`` maps beliefs to Team-1 prescriptions."""
    seeds = [int(s) for s in seeds]
    n = len(seeds)
    lay1, lay2 = TeamLayout(model, 1), TeamLayout(model, 2)
    Z = model.n_increments
    cells = np.array([rand_index(model.initial_belief, keyed_uniform(s, 0, "init", 0)) for s in seeds])
    beliefs: List[Belief] = [initial_belief(model)] * n
    records: List[List[StageRecord]] = [[] for _ in range(n)]
    for t in range(1, model.horizon + 1):
        keys: Dict[bytes, int] = {}
        inv = np.empty(n, dtype=np.int64)
        uniq: List[Belief] = []
        for r, b in enumerate(beliefs):
            k = b.weights.tobytes()
            if k not in keys:
                keys[k] = len(uniq)
                uniq.append(b)
            inv[r] = keys[k]
        W = np.stack([b.weights for b in uniq])
        th1 = np.asarray(team1.thetas(t, W), dtype=float)
        _check_rows(lay1, th1, 1)
        th2 = np.asarray(team2.thetas(t, W, th1), dtype=float)
        _check_rows(lay2, th2, 2)
        K = model.kernel(t)
        cost = model.cost(t)
        g1 = [from_flat(model, 1, t, th) for th in th1]
        g2 = [from_flat(model, 2, t, th) for th in th2]
        updates: Dict[Tuple[int, int], Belief] = {}
        for r, seed in enumerate(seeds):
            c = int(cells[r])
            x, p1, p2 = model.cell_parts(c)
            b = inv[r]
            u1 = _draw_team(model, lay1, 1, th1[b], p1, seed, t)
            u2 = _draw_team(model, lay2, 2, th2[b], p2, seed, t)
            row = K[c, u1, u2].reshape(-1)
            nxt = rand_index(row, keyed_uniform(seed, t, "nature", 0))
            c2, z = divmod(nxt, Z)
            records[r].append(StageRecord(t, x, p1, p2, u1, u2, z, float(cost[x, u1, u2])))
            key = (int(b), z)
            if key not in updates:
                if model.cib_control == "team1_only":
                    updates[key] = cib_update_one_sided(model, uniq[b], g1[b], z)
                else:
                    updates[key] = cib_update(model, uniq[b], g1[b], g2[b], z)
            beliefs[r] = updates[key]
            cells[r] = c2
    return [Trajectory(tuple(rec), math.fsum(s.cost for s in rec)) for rec in records]


def rollout(model: GameModel, team1, team2: Team2Policy, seed: int) -> Trajectory:
    return simulate(model, team1, team2, [seed])[0]


def monte_carlo_cost(model: GameModel, team1, team2: Team2Policy, n: int, seed: int) -> MonteCarloResult:
    """Mean and standard error of the total cost over seeds ``seed+1..seed+n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    trajs = simulate(model, team1, team2, range(seed + 1, seed + n + 1))
    return summarize([tr.total for tr in trajs])


def summarize(totals: Sequence[float]) -> MonteCarloResult:
    """Mean and standard error with compensated sums (order-independent up to rounding)."""
    n = len(totals)
    mean = math.fsum(totals) / n
    if n == 1:
        return MonteCarloResult(mean, 0.0, 1, True)
    var = math.fsum((v - mean) ** 2 for v in totals) / (n - 1)
    return MonteCarloResult(mean, math.sqrt(var / n), n, False)


def recompute_total(model: GameModel, traj: Trajectory) -> float:
    """Total discounted cost rebuilt from the stage records and the model."""
    return math.fsum(float(model.cost(s.t)[s.x, s.u1, s.u2]) for s in traj.stages)
