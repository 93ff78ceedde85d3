"""Online Team-1 strategy: belief tracking, prescriptions and action draws."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._layout import TeamLayout
from .belief import Belief, cib_update, cib_update_one_sided
from .belief import initial_belief as _initial_belief
from .model import GameModel
from .prescriptions import Prescription, from_flat, uniform
from .solver import SolverConfig, ValueTable, upper_stage_batch


def rand_index(d: np.ndarray, K: float) -> int:
    """Index of the first entry whose cumulative probability reaches ``K``."""
    d = np.asarray(d, dtype=float)
    cdf = np.cumsum(d)
    hit = np.flatnonzero(cdf >= K)
    if hit.size:
        return int(hit[0])
    return int(np.flatnonzero(d > 0)[-1])  # cdf rounding below K <= 1


def rand_draw(alphabet: Sequence, d, K: float):
    """Inverse-CDF draw: the first element whose CDF is at least ``K`` in (0, 1]."""
    if not 0.0 < K <= 1.0:
        raise ValueError("K must lie in (0, 1]")
    if len(alphabet) != len(d):
        raise ValueError("distribution length does not match the alphabet")
    return alphabet[rand_index(d, K)]


class Team1Policy:
    """Maps stage beliefs to flattened Team-1 prescriptions."""

    def thetas(self, t: int, beliefs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def prescription(self, t: int, belief: Belief) -> Prescription:
        theta = self.thetas(t, belief.weights[None, :])[0]
        return from_flat(self.model, 1, t, theta)


class ConstantPolicy(Team1Policy):
    """The same prescription at every belief (optionally one per stage)."""

    def __init__(self, model: GameModel, prescriptions):
        self.model = model
        if isinstance(prescriptions, Prescription):
            prescriptions = [prescriptions] * model.horizon
        if len(prescriptions) != model.horizon:
            raise ValueError("need one prescription per stage")
        self._flat = [p.flat() for p in prescriptions]

    @classmethod
    def uniform(cls, model: GameModel) -> "ConstantPolicy":
        return cls(model, [uniform(model, 1, t) for t in range(1, model.horizon + 1)])

    def thetas(self, t: int, beliefs: np.ndarray) -> np.ndarray:
        return np.repeat(self._flat[t - 1][None, :], len(beliefs), axis=0)


class MinmaxPolicy(Team1Policy):
    """Team-1 prescriptions from upper value tables.

    ``resolve`` re-solves the stage problem at the exact belief against the
    stored next-stage table; ``table_lookup`` returns the stored argmin of
    the nearest grid belief. With ``reuse_grid`` a belief that coincides
    with a stored grid point reuses that point's stored solve.
    """

    MODES = ("resolve", "table_lookup")

    def __init__(
        self,
        model: GameModel,
        tables: Sequence[ValueTable],
        cfg: Optional[SolverConfig] = None,
        mode: str = "resolve",
        reuse_grid: bool = True,
    ):
        if mode not in self.MODES:
            raise ValueError("mode must be one of %s" % (self.MODES,))
        check_tables(model, tables)
        self.model = model
        self.tables = list(tables)
        self.cfg = cfg or SolverConfig()
        self.mode = mode
        self.reuse_grid = reuse_grid
        self._cache: Dict[Tuple[int, bytes], np.ndarray] = {}
        self.cells = model.live_cells()

    def _live(self, beliefs: np.ndarray) -> np.ndarray:
        w = beliefs[:, self.cells]
        s = w.sum(axis=1, keepdims=True)
        # Mass off the live cells only arises from the uniform fallback.
        d = len(self.cells)
        return np.where(s > 0, w / np.where(s > 0, s, 1.0), 1.0 / d)

    def thetas(self, t: int, beliefs: np.ndarray) -> np.ndarray:
        if not 1 <= t <= self.model.horizon:
            raise ValueError("stage %d outside 1..%d" % (t, self.model.horizon))
        table = self.tables[t - 1]
        pts = self._live(np.asarray(beliefs, dtype=float))
        out = np.empty((len(pts), table.thetas.shape[1]))
        if self.mode == "table_lookup":
            _, idx = table.interpolator().tree.query(pts, k=1, p=1)
            return table.thetas[np.atleast_1d(idx)]
        todo: List[int] = []
        keys = [(t, p.tobytes()) for p in pts]
        for i, (p, key) in enumerate(zip(pts, keys)):
            if key in self._cache:
                out[i] = self._cache[key]
                continue
            j = table.index_of(p) if self.reuse_grid else -1
            if j >= 0:
                out[i] = self._cache[key] = table.thetas[j]
            else:
                todo.append(i)
        if todo:
            uniq: Dict[bytes, int] = {}
            for i in todo:
                uniq.setdefault(keys[i][1], i)
            rows = list(uniq.values())
            nxt = self.tables[t] if t < self.model.horizon else None
            solved = upper_stage_batch(self.model, t, pts[rows], nxt, self.cfg)
            for r, i in enumerate(rows):
                self._cache[keys[i]] = solved.thetas[r]
            for i in todo:
                out[i] = self._cache[keys[i]]
        return out


def check_tables(model: GameModel, tables: Sequence[ValueTable]) -> None:
    if len(tables) != model.horizon:
        raise ValueError("expected %d tables, got %d" % (model.horizon, len(tables)))
    D = TeamLayout(model, 1).dim
    for t, tab in enumerate(tables, start=1):
        if tab.t != t or tab.kind != "upper" or tab.n_cells != model.n_cells or tab.thetas.shape[1] != D:
            raise ValueError("table %d does not match this model's upper solve" % t)


@dataclass(frozen=True, eq=False)
class PolicyExecutor:
    model: GameModel
    policy: Team1Policy
    t: int
    belief: Belief

    @property
    def mode(self) -> str:
        return getattr(self.policy, "mode", "constant")

    def __eq__(self, other):
        return (
            isinstance(other, PolicyExecutor)
            and self.model is other.model
            and self.t == other.t
            and self.belief == other.belief
            and self.mode == other.mode
        )


def start(
    model: GameModel,
    tables: Optional[Sequence[ValueTable]] = None,
    pi1: Optional[Belief] = None,
    cfg: Optional[SolverConfig] = None,
    mode: str = "resolve",
    policy: Optional[Team1Policy] = None,
) -> PolicyExecutor:
    """Executor at stage 1 with the given (default: the model's) initial belief."""
    if policy is None:
        if tables is None:
            raise ValueError("need upper tables or an explicit policy")
        policy = MinmaxPolicy(model, tables, cfg, mode)
    pi1 = pi1 if pi1 is not None else _initial_belief(model)
    if pi1.t != 1 or pi1.weights.size != model.n_cells:
        raise ValueError("initial belief does not match the model")
    return PolicyExecutor(model, policy, 1, pi1)


def prescription_now(ex: PolicyExecutor) -> Prescription:
    if ex.t > ex.model.horizon:
        raise ValueError("executor is past the horizon")
    return ex.policy.prescription(ex.t, ex.belief)


def step(ex: PolicyExecutor, private, K: Sequence[float], z, gamma2: Optional[Prescription] = None):
    """Draw Team-1 actions and advance the belief on the realized increment.

    ``private`` and the returned actions are per-player symbols (indices
    are accepted for ``private``).
    """
    model = ex.model
    if ex.t > model.horizon:
        raise ValueError("executor is past the horizon")
    if len(private) != model.team1_players or len(K) != model.team1_players:
        raise ValueError("need one private-info value and one K per Team-1 player")
    if isinstance(z, str) and z not in model.common_increments:
        raise ValueError("unknown increment %r" % z)
    gamma1 = prescription_now(ex)
    actions = []
    for j, (p, k) in enumerate(zip(private, K)):
        alph = model.private_info[0][j]
        pi_ = alph.index(p) if isinstance(p, str) else int(p)
        if not 0 <= pi_ < len(alph):
            raise ValueError("private info out of range for player (1,%d)" % (j + 1))
        actions.append(rand_draw(model.actions[0][j], gamma1.maps[j][pi_], k))
    if model.cib_control == "team1_only":
        nxt = cib_update_one_sided(model, ex.belief, gamma1, z)
    else:
        if gamma2 is None:
            raise ValueError("two-sided belief update needs Team 2's prescription")
        nxt = cib_update(model, ex.belief, gamma1, gamma2, z)
    return tuple(actions), replace(ex, t=ex.t + 1, belief=nxt)
