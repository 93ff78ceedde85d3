"""Team-2 best response to a fixed belief-based Team-1 policy.

The best-response state is the common-information belief, which the fixed
Team-1 policy and the realized increments determine when Team 1 alone
controls the belief.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ._interp import Interpolator
from .belief import Belief, initial_belief
from .model import GameModel
from .prescriptions import PurePrescription, enumerate_pure, lift
from .solver import SolverConfig, _Stage, grid_points



class UnsupportedStructureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BRTable:
    t: int
    cells: np.ndarray
    n_cells: int
    points: np.ndarray  # (N, d) live coordinates
    values: np.ndarray
    actions: np.ndarray  # index into enumerate_pure(model, 2, t)
    k: int
    power: float = 2.0
    _cache: Dict[str, object] = field(default_factory=dict, repr=False)

    def interpolator(self) -> Interpolator:
        if "interp" not in self._cache:
            self._cache["interp"] = Interpolator(self.points, self.values, self.k, self.power)
        return self._cache["interp"]

    def index_of(self, live_point: np.ndarray) -> int:
        d, i = self.interpolator().tree.query(live_point, k=1, p=1)
        return int(i) if d < 1e-12 else -1

    def belief(self, i: int) -> Belief:
        w = np.zeros(self.n_cells)
        w[self.cells] = self.points[i]
        return Belief(self.t, w)

    def value_at(self, belief: Belief) -> float:
        w = belief.weights[self.cells]
        off = max(0.0, 1.0 - float(w.sum()))
        val, _ = self.interpolator().query(w[None, :], offset=np.array([off]))
        return float(val[0])

    def pure(self, model: GameModel, i: int) -> PurePrescription:
        return enumerate_pure(model, 2, self.t)[int(self.actions[i])]


def _require_one_sided(model: GameModel) -> None:
    if model.cib_control != "team1_only":
        raise UnsupportedStructureError("exact best response needs cib_control='team1_only'")


def pick_max(f: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """Lowest index within ``eps * max(1, |best|)`` of each row's maximum.

    Stage values come from an approximate solve, so near-ties below its
    accuracy are treated as ties.
    """
    best = f.max(axis=1)
    tol = eps * np.maximum(1.0, np.abs(best))
    return np.argmax(f >= (best - tol)[:, None], axis=1)


def _full(model: GameModel, pts: np.ndarray) -> np.ndarray:
    w = np.zeros((len(pts), model.n_cells))
    w[:, model.live_cells()] = pts
    return w


def br_stage_values(model: GameModel, t: int, pts: np.ndarray, theta1: np.ndarray, nxt: Optional[BRTable], cfg: SolverConfig):
    """Values (N, K) of every pure Team-2 prescription at live beliefs ``pts``."""
    stage = _Stage(model, t, nxt, cfg)
    f, _ = stage.evaluate_family(pts, theta1, stage.fam, grad=False)
    return f


def solve_best_response(model: GameModel, policy, cfg: Optional[SolverConfig] = None) -> List[BRTable]:
    """Backward induction of Team 2's best response over the belief grid."""
    _require_one_sided(model)
    cfg = cfg or SolverConfig()
    tables: List[Optional[BRTable]] = [None] * model.horizon
    nxt = None
    cells = model.live_cells()
    for t in range(model.horizon, 0, -1):
        pts = grid_points(model, t, cfg.grid, cfg.refine, cfg.grid_cap)
        theta1 = policy.thetas(t, _full(model, pts))
        f = br_stage_values(model, t, pts, theta1, nxt, cfg)
        if not np.all(np.isfinite(f)):
            raise ValueError("non-finite best-response value at t=%d" % t)
        best = pick_max(f, cfg.eps_opt)
        table = BRTable(
            t=t,
            cells=cells,
            n_cells=model.n_cells,
            points=pts,
            values=f.max(axis=1),
            actions=best,
            k=cfg.neighbours(len(cells)),
            power=cfg.power,
        )
        tables[t - 1] = table
        nxt = table
    return tables


def br_value(tables: Sequence[BRTable], belief: Belief) -> float:
    return tables[belief.t - 1].value_at(belief)


def exploitability(model: GameModel, policy, cfg: Optional[SolverConfig] = None) -> float:
    """Team 2's best-response value at the initial belief."""
    tables = solve_best_response(model, policy, cfg)
    return br_value(tables, initial_belief(model))


class BestResponsePolicy:
    """Team-2 policy acting greedily on the best-response continuation values."""

    def __init__(self, model: GameModel, tables: Sequence[BRTable], cfg: Optional[SolverConfig] = None):
        _require_one_sided(model)
        self.model = model
        self.tables = list(tables)
        self.cfg = cfg or SolverConfig()
        self.pure = [enumerate_pure(model, 2, t) for t in range(1, model.horizon + 1)]
        self._flat = [np.stack([lift(q).flat() for q in qs]) for qs in self.pure]

    def choices(self, t: int, beliefs: np.ndarray, theta1: np.ndarray) -> np.ndarray:
        cells = self.model.live_cells()
        pts = beliefs[:, cells]
        s = pts.sum(axis=1, keepdims=True)
        pts = np.where(s > 0, pts / np.where(s > 0, s, 1.0), 1.0 / len(cells))
        nxt = self.tables[t] if t < self.model.horizon else None
        return pick_max(br_stage_values(self.model, t, pts, theta1, nxt, self.cfg), self.cfg.eps_opt)

    def thetas(self, t: int, beliefs: np.ndarray, theta1: np.ndarray) -> np.ndarray:
        return self._flat[t - 1][self.choices(t, beliefs, theta1)]
