"""Approximate upper/lower dynamic programs over a sampled belief grid.

Stage problems are solved for every grid belief at once; value tables store
the optimizing prescriptions alongside the values.
"""

from __future__ import annotations

import itertools
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from ._interp import Interpolator
from ._layout import TeamLayout, row_activity
from ._search import SearchSettings, minimize_max
from ._surrogate import StageSurrogate
from .belief import Belief
from .model import GameModel
from .prescriptions import Prescription, enumerate_pure, from_flat, lift

DEFAULT_GRID_CAP = 500_000


class SolverError(RuntimeError):
    pass


class GridSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Refinement:
    """Extra grid of denominator ``m`` on the face spanned by ``states``."""

    states: Tuple[str, ...]
    m: int


@dataclass(frozen=True)
class SolverConfig:
    grid: int = 20
    restarts: int = 8
    max_iter: int = 500
    step: float = 0.25
    eps_opt: float = 1e-4
    k: Optional[int] = None  # neighbours; default d + 1
    power: float = 2.0
    seed: int = 0
    refine: Tuple[Refinement, ...] = ()
    grid_cap: int = DEFAULT_GRID_CAP
    enum_cap: int = 10**6
    lower_rounds: int = 6
    upper_rounds: int = 3
    qp_iter: int = 60

    def __post_init__(self):
        if self.grid < 1:
            raise ValueError("grid resolution must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.eps_opt > 0:
            raise ValueError("eps_opt must be positive")
        object.__setattr__(self, "refine", tuple(self.refine))

    def settings(self) -> SearchSettings:
        return SearchSettings(max_iter=self.max_iter, step=self.step, eps_opt=self.eps_opt, qp_iter=self.qp_iter)

    def neighbours(self, d: int) -> int:
        return self.k if self.k is not None else d + 1


@dataclass(frozen=True, eq=False)
class ValueTable:
    t: int
    kind: str  # "upper" stores Team-1 argmins, "lower" Team-2 argmaxes
    cells: np.ndarray  # live cell indices: coordinates of ``points``
    n_cells: int
    points: np.ndarray  # (N, d)
    values: np.ndarray  # (N,)
    thetas: np.ndarray  # (N, D) flattened prescriptions
    heuristic: np.ndarray  # (N,) inner optimization not provably exact
    k: int
    power: float = 2.0
    _cache: Dict[str, object] = field(default_factory=dict, repr=False)

    @property
    def team(self) -> int:
        return 1 if self.kind == "upper" else 2

    def __len__(self) -> int:
        return len(self.values)

    def belief(self, i: int) -> Belief:
        w = np.zeros(self.n_cells)
        w[self.cells] = self.points[i]
        return Belief(self.t, w)

    def beliefs(self) -> List[Belief]:
        return [self.belief(i) for i in range(len(self))]

    def prescription(self, model: GameModel, i: int) -> Prescription:
        return from_flat(model, self.team, self.t, self.thetas[i])

    def entries(self, model: GameModel):
        """Iterate ``(Belief, value, Prescription)`` triples."""
        for i in range(len(self)):
            yield self.belief(i), float(self.values[i]), self.prescription(model, i)

    def interpolator(self) -> Interpolator:
        if "interp" not in self._cache:
            self._cache["interp"] = Interpolator(self.points, self.values, self.k, self.power)
        return self._cache["interp"]

    def index_of(self, live_point: np.ndarray) -> int:
        """Row of a stored point equal to ``live_point`` (L1 < 1e-12), else -1."""
        d, i = self.interpolator().tree.query(live_point, k=1, p=1)
        return int(i) if d < 1e-12 else -1

    def live(self, belief: Belief) -> Tuple[np.ndarray, float]:
        w = belief.weights[self.cells]
        return w, max(0.0, 1.0 - float(w.sum()))


# -- belief grid -------------------------------------------------------------


def _compositions(m: int, d: int, cap: int) -> np.ndarray:
    """Integer compositions of ``m`` into ``d`` parts, first part descending."""
    count = math.comb(m + d - 1, d - 1)
    if count > cap:
        raise GridSizeError("grid with m=%d over %d cells has %d points, above cap %d" % (m, d, count, cap))
    if d == 1:
        return np.array([[m]], dtype=np.int64)
    out = np.empty((count, d), dtype=np.int64)
    n = m + d - 1
    for r, bars in enumerate(itertools.combinations(range(n), d - 1)):
        prev = -1
        for j, b in enumerate(bars):
            out[r, j] = b - prev - 1
            prev = b
        out[r, d - 1] = n - prev - 1
    return out[::-1].copy()


def _key(point: np.ndarray) -> bytes:
    return np.round(point, 12).tobytes()


def grid_points(model: GameModel, t: int, m: int, refine: Sequence[Refinement] = (), cap: int = DEFAULT_GRID_CAP) -> np.ndarray:
    """Sampled beliefs in live-cell coordinates, shape (N, d)."""
    cells = model.live_cells()
    d = len(cells)
    blocks = [_compositions(m, d, cap) / m]
    xs, _, _ = model.cell_arrays()
    for ref in refine:
        unknown = [s for s in ref.states if s not in model.states]
        if unknown:
            raise ValueError("refinement names unknown states %s" % unknown)
        face = np.array([model.states[xs[c]] in ref.states for c in cells])
        if not face.any():
            continue
        sub = _compositions(ref.m, int(face.sum()), cap) / ref.m
        pts = np.zeros((len(sub), d))
        pts[:, face] = sub
        blocks.append(pts)
    if t == 1:
        blocks.append(model.initial_belief[cells][None, :])
    seen, rows = set(), []
    for block in blocks:
        for p in block:
            k = _key(p)
            if k not in seen:
                seen.add(k)
                rows.append(p)
    if len(rows) > cap:
        raise GridSizeError("grid has %d points, above cap %d" % (len(rows), cap))
    return np.array(rows)


def grid_within(model: GameModel, budget: int, max_m: int = 20) -> int:
    """Largest denominator ``m <= max_m`` whose base grid has at most ``budget`` points."""
    d = len(model.live_cells())
    m = 1
    while m < max_m and math.comb(m + d, d - 1) <= budget:
        m += 1
    return m


def sample_beliefs(model: GameModel, t: int, m: int, refine: Sequence[Refinement] = (), cap: int = DEFAULT_GRID_CAP) -> List[Belief]:
    """Simplex grid of denominator ``m`` over the live cells (plus the initial belief at t=1)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    cells = model.live_cells()
    out = []
    for p in grid_points(model, t, m, refine, cap):
        w = np.zeros(model.n_cells)
        w[cells] = p
        out.append(Belief(t, w))
    return out


def interpolate(table: ValueTable, pi: Belief) -> float:
    """k-NN inverse-L1-distance interpolation (exact at stored points)."""
    if pi.t != table.t:
        raise ValueError("belief at stage %d, table at stage %d" % (pi.t, table.t))
    w, off = table.live(pi)
    val, _ = table.interpolator().query(w[None, :], offset=np.array([off]))
    return float(val[0])


# -- stage solves ------------------------------------------------------------


def _point_rng(seed: int, t: int, point: np.ndarray) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(t), zlib.crc32(np.ascontiguousarray(point).tobytes())])


class _Stage:
    """Shared per-stage context for batched solves."""

    def __init__(self, model: GameModel, t: int, next_table: Optional[ValueTable], cfg: SolverConfig):
        if not 1 <= t <= model.horizon:
            raise ValueError("stage %d outside 1..%d" % (t, model.horizon))
        if next_table is not None and next_table.t != t + 1:
            raise ValueError("next table is for stage %d, expected %d" % (next_table.t, t + 1))
        self.model, self.t, self.cfg = model, t, cfg
        interp = next_table.interpolator() if next_table is not None else None
        self.sur = StageSurrogate(model, t, interp)
        self.myopic = StageSurrogate(model, t, None)
        self.lay1 = TeamLayout(model, 1)
        self.lay2 = TeamLayout(model, 2)
        self.cells = model.live_cells()
        self.pure2 = enumerate_pure(model, 2, t, cfg.enum_cap)
        self.fam = np.stack([lift(q).joint_table() for q in self.pure2])  # (K, P2, E)
        self.theta_pure2 = np.stack([lift(q).flat() for q in self.pure2])
        self.settings = cfg.settings()

    def evaluate_family(self, pi: np.ndarray, theta1: np.ndarray, fam: np.ndarray, grad: bool):
        """Values (b, K) of ``w`` against each family member, with theta1 gradients."""
        b, K = theta1.shape[0], fam.shape[-3]
        famb = np.broadcast_to(fam, (b,) + fam.shape[-3:]) if fam.ndim == 3 else fam
        G1 = self.lay1.joint(theta1)
        w, d1, _ = self.sur.evaluate(
            np.repeat(pi, K, axis=0),
            np.repeat(G1, K, axis=0),
            famb.reshape((b * K,) + fam.shape[-2:]),
            grad1=grad,
        )
        if not grad:
            return w.reshape(b, K), None
        dth = self.lay1.backprop(np.repeat(theta1, K, axis=0), d1)
        return w.reshape(b, K), dth.reshape(b, K, -1)

    def starts(self, pts: np.ndarray, R: int, extra: Optional[np.ndarray] = None) -> np.ndarray:
        """(N, R, D1) initial prescriptions: uniform, greedy-myopic, seeded random."""
        N, D = len(pts), self.lay1.dim
        out = np.empty((N, R, D))
        out[:, 0] = self.lay1.uniform(N)
        j = 1
        if extra is not None and R > j:
            out[:, j] = extra
            j += 1
        if R > j:
            G1 = self.lay1.joint(self.lay1.uniform(N))
            G2 = self.lay2.joint(self.lay2.uniform(N))
            _, d1, _ = self.myopic.evaluate(pts, G1, G2, grad1=True)
            out[:, j] = self.lay1.greedy(self.lay1.backprop(self.lay1.uniform(N), d1))
            j += 1
        if R > j:
            for i, p in enumerate(pts):
                out[i, j:] = self.lay1.random(_point_rng(self.cfg.seed, self.t, p), R - j)
        return out

    def active1(self, pts: np.ndarray) -> np.ndarray:
        return row_activity(self.model, 1, self.lay1, pts, self.cells) > 0

    def minimize(self, pts: np.ndarray, starts: np.ndarray, fam: np.ndarray):
        """Minimize max over ``fam`` from every start; returns per-start results."""
        N, R, D = starts.shape
        pi = np.repeat(pts, R, axis=0)
        act = np.repeat(self.active1(pts), R, axis=0)
        famr = fam if fam.ndim == 3 else np.repeat(fam, R, axis=0)

        def oracle(theta, idx):
            sub = famr if famr.ndim == 3 else famr[idx]
            return self.evaluate_family(pi[idx], theta, sub, grad=True)

        res = minimize_max(oracle, self.lay1, starts.reshape(N * R, D), act, self.settings)
        return res.theta.reshape(N, R, D), res.value.reshape(N, R)

    def pick(self, thetas: np.ndarray, values: np.ndarray):
        """Lowest-index restart within eps_opt of the best."""
        best = values.min(axis=1)
        tol = self.cfg.eps_opt * np.maximum(1.0, np.abs(best))
        choice = np.argmax(values <= (best + tol)[:, None], axis=1)
        rows = np.arange(len(values))
        return values[rows, choice], thetas[rows, choice]


def _check_finite(values: np.ndarray, t: int):
    if not np.all(np.isfinite(values)):
        raise SolverError("non-finite stage value at t=%d" % t)


def _upper_batch(stage: _Stage, pts: np.ndarray):
    cfg = stage.cfg
    starts = stage.starts(pts, cfg.restarts)
    thetas, values = stage.minimize(pts, starts, stage.fam)
    val, theta = stage.pick(thetas, values)
    heuristic = np.zeros(len(pts), dtype=bool)
    if stage.model.cib_control == "both":
        val, theta = _refine_inner_max(stage, pts, val, theta)
        heuristic[:] = True
    _check_finite(val, stage.t)
    return val, theta, heuristic


def _refine_inner_max(stage: _Stage, pts: np.ndarray, val: np.ndarray, theta: np.ndarray):
    """Grow each point's Team-2 family by local ascent, then re-minimize."""
    N = len(pts)
    fam = np.repeat(stage.fam[None], N, axis=0)
    lay2 = stage.lay2
    act2 = row_activity(stage.model, 2, lay2, pts, stage.cells) > 0
    for _ in range(stage.cfg.upper_rounds):
        f, _ = stage.evaluate_family(pts, theta, fam, grad=False)
        start = stage.theta_pure2[np.argmax(f[:, : len(stage.pure2)], axis=1)]
        G1 = stage.lay1.joint(theta)

        def oracle(th2, idx):
            w, _, d2 = stage.sur.evaluate(pts[idx], G1[idx], lay2.joint(th2), grad2=True)
            return -w[:, None], -lay2.backprop(th2, d2)[:, None, :]

        res = minimize_max(oracle, lay2, start, act2, stage.settings)
        found = -res.value
        tol = stage.cfg.eps_opt * np.maximum(1.0, np.abs(val))
        grow = found > val + tol
        if not grow.any():
            break
        newcol = np.where(grow[:, None, None], lay2.joint(res.theta), fam[:, :1])
        fam = np.concatenate([fam, newcol[:, None]], axis=1)
        th, v = stage.minimize(pts, theta[:, None, :], fam)
        val, theta = v[:, 0], th[:, 0]
    return val, theta


def _lp_maxmin(M: np.ndarray) -> Tuple[np.ndarray, float]:
    """Max over lam in simplex of min_s M[s] . lam."""
    S, K = M.shape
    c = np.zeros(K + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-M, np.ones((S, 1))])
    A_eq = np.hstack([np.ones((1, K)), np.zeros((1, 1))])
    bounds = [(0.0, 1.0)] * K + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(S), A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        raise SolverError("max-min LP failed: %s" % res.message)
    lam = np.clip(res.x[:K], 0.0, None)
    return lam / lam.sum(), float(-res.fun)


def _lower_batch(stage: _Stage, pts: np.ndarray, warm: Optional[np.ndarray] = None):
    """Max over Team-2 prescriptions of min over Team 1, for every point."""
    cfg = stage.cfg
    N = len(pts)
    K = len(stage.pure2)
    R = cfg.restarts
    starts = stage.starts(pts, R, extra=warm)
    # inner min against each pure Team-2 prescription
    pts_k = np.repeat(pts, K, axis=0)
    starts_k = np.repeat(starts, K, axis=0)
    fam_k = np.tile(stage.fam, (N, 1, 1))[:, None]  # (N*K, 1, P2, E)
    th_k, v_k = stage.minimize(pts_k, starts_k, fam_k)
    v_k, th_k = stage.pick(th_k, v_k)
    v_k, th_k = v_k.reshape(N, K), th_k.reshape(N, K, -1)
    best_k = np.argmax(v_k, axis=1)
    value = v_k[np.arange(N), best_k]
    theta2 = stage.theta_pure2[best_k].copy()
    exact_mix = (
        stage.model.cib_control == "team1_only" and stage.model.team2_players == 1 and stage.model.n_joint_info(2) == 1
    )
    heuristic = np.full(N, not exact_mix)
    if exact_mix and K > 1:
        value, theta2 = _double_oracle(stage, pts, th_k, value, theta2, warm)
    _check_finite(value, stage.t)
    return value, theta2, heuristic


def _double_oracle(stage: _Stage, pts, th_k, value, theta2, warm):
    """Mixed Team-2 refinement by alternating an LP and Team-1 best responses."""
    cfg = stage.cfg
    N, K = th_k.shape[:2]
    cands = [list(th_k[i]) + ([warm[i]] if warm is not None else []) for i in range(N)]
    open_ = np.ones(N, dtype=bool)
    for _ in range(cfg.lower_rounds):
        idx = np.flatnonzero(open_)
        if idx.size == 0:
            break
        lams, bounds = [], []
        for i in idx:
            S = np.array(cands[i])
            M, _ = stage.evaluate_family(np.repeat(pts[i : i + 1], len(S), axis=0), S, stage.fam, grad=False)
            lam, v = _lp_maxmin(M)
            lams.append(lam)
            bounds.append(v)
        lams, bounds = np.array(lams), np.array(bounds)
        fam = np.einsum("bk,kpe->bpe", lams, stage.fam)[:, None]  # mixed Team-2 table
        starts = stage.starts(pts[idx], cfg.restarts)
        # replace the greedy slot by the best current candidate under lam
        for r, i in enumerate(idx):
            S = np.array(cands[i])
            M, _ = stage.evaluate_family(np.repeat(pts[i : i + 1], len(S), axis=0), S, stage.fam, grad=False)
            starts[r, min(1, cfg.restarts - 1)] = S[np.argmin(M @ lams[r])]
        th, v = stage.minimize(pts[idx], starts, fam)
        h, th_best = stage.pick(th, v)
        better = h > value[idx]
        value[idx[better]] = h[better]
        theta2[idx[better]] = lams[better]
        tol = cfg.eps_opt * np.maximum(1.0, np.abs(bounds))
        for r, i in enumerate(idx):
            if bounds[r] - h[r] <= tol[r]:
                open_[i] = False
            else:
                cands[i].append(th_best[r])
    return value, theta2


def _stage_tables(model, t, pts, next_table, cfg, kind, warm=None):
    stage = _Stage(model, t, next_table, cfg)
    if kind == "upper":
        val, theta, heur = _upper_batch(stage, pts)
    else:
        val, theta, heur = _lower_batch(stage, pts, warm)
    d = len(stage.cells)
    return ValueTable(
        t=t,
        kind=kind,
        cells=stage.cells,
        n_cells=model.n_cells,
        points=pts,
        values=val,
        thetas=theta,
        heuristic=heur,
        k=cfg.neighbours(d),
        power=cfg.power,
    )


def _single(model, t, pi: Belief, next_table, cfg, kind):
    if pi.t != t:
        raise ValueError("belief at stage %d, solving stage %d" % (pi.t, t))
    cfg = cfg or SolverConfig()
    cells = model.live_cells()
    off = pi.weights.sum() - pi.weights[cells].sum()
    if off > 1e-12:
        raise ValueError("belief puts mass on cells that no kernel row reaches")
    table = _stage_tables(model, t, pi.weights[cells][None, :], next_table, cfg, kind)
    return float(table.values[0]), table.prescription(model, 0)


def stage_upper(model: GameModel, t: int, pi: Belief, next_table: Optional[ValueTable], cfg: SolverConfig = None):
    """``(value, argmin Team-1 prescription)`` of the upper stage problem at ``pi``."""
    return _single(model, t, pi, next_table, cfg, "upper")


def stage_lower(model: GameModel, t: int, pi: Belief, next_table: Optional[ValueTable], cfg: SolverConfig = None):
    """``(value, argmax Team-2 prescription)`` of the lower stage problem at ``pi``."""
    return _single(model, t, pi, next_table, cfg, "lower")


def upper_stage_batch(model: GameModel, t: int, points_live: np.ndarray, next_table: Optional[ValueTable], cfg: SolverConfig):
    """Batched upper stage solve at live-coordinate beliefs; returns a ValueTable."""
    return _stage_tables(model, t, np.asarray(points_live, dtype=float), next_table, cfg, "upper")


Progress = Callable[[int, ValueTable], None]


def _solve(model: GameModel, cfg: SolverConfig, kind: str, progress: Optional[Progress], warm_tables=None):
    tables: List[Optional[ValueTable]] = [None] * model.horizon
    nxt = None
    for t in range(model.horizon, 0, -1):
        pts = grid_points(model, t, cfg.grid, cfg.refine, cfg.grid_cap)
        warm = None
        if warm_tables is not None:
            warm = _warm_thetas(warm_tables[t - 1], pts)
        table = _stage_tables(model, t, pts, nxt, cfg, kind, warm)
        tables[t - 1] = table
        nxt = table
        if progress is not None:
            progress(t, table)
    return tables


def _warm_thetas(table: ValueTable, pts: np.ndarray) -> Optional[np.ndarray]:
    if table.kind != "upper":
        raise ValueError("warm start needs upper tables")
    rows = [table.index_of(p) for p in pts]
    if min(rows) < 0:
        raise ValueError("warm-start tables were built on a different grid")
    return table.thetas[rows]


def solve_upper(model: GameModel, cfg: SolverConfig = None, progress: Optional[Progress] = None) -> List[ValueTable]:
    """Upper (min-max) value tables for stages 1..T."""
    return _solve(model, cfg or SolverConfig(), "upper", progress)


def solve_lower(
    model: GameModel,
    cfg: SolverConfig = None,
    progress: Optional[Progress] = None,
    warm_start: Optional[Sequence[ValueTable]] = None,
) -> List[ValueTable]:
    """Lower (max-min) value tables for stages 1..T.

    ``warm_start`` upper tables on the same grid seed Team 1's inner
    minimization with the upper argmins.
    """
    return _solve(model, cfg or SolverConfig(), "lower", progress, warm_start)


def game_value(tables: Sequence[ValueTable], pi1: Belief) -> float:
    return interpolate(tables[0], pi1)


def stage_objective(
    model: GameModel,
    t: int,
    weights,
    gamma1: Prescription,
    gamma2: Prescription,
    next_table: Optional[ValueTable],
) -> float:
    """Surrogate ``w`` at possibly un-normalized ``weights`` (full cell coordinates).

    Linear in ``weights`` through the homogeneous extension of the
    next-stage interpolant.
    """
    cells = model.live_cells()
    w = np.asarray(weights, dtype=float)
    interp = next_table.interpolator() if next_table is not None else None
    sur = StageSurrogate(model, t, interp)
    val, _, _ = sur.evaluate(w[cells][None], gamma1.joint_table()[None], gamma2.joint_table()[None])
    return float(val[0])
