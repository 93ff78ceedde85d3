"""Finite zero-sum team games in joint-kernel form.

A game is stored as dense arrays. Information cells are flattened
``(x, p1, p2)`` triples in C order, where ``p1``/``p2`` are *joint* private
information indices of a team (first player most significant). Joint team
actions follow the same convention.

Per stage ``t`` (0-based internally):

* ``kernels[t]`` has shape ``(C, U1, U2, C, Z)``: law of ``(cell', z)``
  given ``(cell, u1, u2)``.
* ``costs[t]`` has shape ``(X, U1, U2)``: undiscounted stage cost.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

PROB_TOL = 1e-12
CONTROL_MODES = ("both", "team1_only")
JOINT_SEP = ","
FIELD_ORDER = (
    "horizon",
    "discount",
    "states",
    "players",
    "actions",
    "private_info",
    "common_increments",
    "kernel",
    "cost",
    "initial_belief",
    "cib_control",
    "u2_projection",
)


class GameFileError(ValueError):
    """Malformed game file (syntax, missing field, unknown symbol)."""


class GameValidationError(ValueError):
    """Game file parsed but violates model invariants."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GameModel:
    horizon: int
    discount: float
    states: Tuple[str, ...]
    actions: Tuple[Tuple[Tuple[str, ...], ...], Tuple[Tuple[str, ...], ...]]
    private_info: Tuple[Tuple[Tuple[str, ...], ...], Tuple[Tuple[str, ...], ...]]
    common_increments: Tuple[str, ...]
    kernels: Tuple[np.ndarray, ...]
    costs: Tuple[np.ndarray, ...]
    initial_belief: np.ndarray
    cib_control: str = "both"
    u2_projection: Optional[Dict[str, Tuple[str, ...]]] = None
    _cache: Dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    # -- sizes ---------------------------------------------------------------
    @property
    def team1_players(self) -> int:
        return len(self.actions[0])

    @property
    def team2_players(self) -> int:
        return len(self.actions[1])

    def n_players(self, team: int) -> int:
        return len(self.actions[team - 1])

    def action_sizes(self, team: int) -> Tuple[int, ...]:
        return tuple(len(a) for a in self.actions[team - 1])

    def info_sizes(self, team: int) -> Tuple[int, ...]:
        return tuple(len(p) for p in self.private_info[team - 1])

    def n_joint_actions(self, team: int) -> int:
        return int(np.prod(self.action_sizes(team)))

    def n_joint_info(self, team: int) -> int:
        return int(np.prod(self.info_sizes(team)))

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_cells(self) -> int:
        return self.n_states * self.n_joint_info(1) * self.n_joint_info(2)

    @property
    def n_increments(self) -> int:
        return len(self.common_increments)

    @property
    def cell_shape(self) -> Tuple[int, int, int]:
        return (self.n_states, self.n_joint_info(1), self.n_joint_info(2))

    # -- index helpers -------------------------------------------------------
    def joint_info(self, team: int, per_player: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(per_player), self.info_sizes(team)))

    def split_info(self, team: int, joint: int) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(joint, self.info_sizes(team)))

    def joint_action(self, team: int, per_player: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(per_player), self.action_sizes(team)))

    def split_action(self, team: int, joint: int) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(joint, self.action_sizes(team)))

    def cell_index(self, x: int, p1: int, p2: int) -> int:
        return int(np.ravel_multi_index((x, p1, p2), self.cell_shape))

    def cell_parts(self, c: int) -> Tuple[int, int, int]:
        x, p1, p2 = np.unravel_index(c, self.cell_shape)
        return int(x), int(p1), int(p2)

    def cell_name(self, c: int) -> str:
        x, p1, p2 = self.cell_parts(c)
        return "(%s, %s, %s)" % (
            self.states[x],
            self.joint_info_name(1, p1),
            self.joint_info_name(2, p2),
        )

    def joint_info_name(self, team: int, joint: int) -> str:
        parts = self.split_info(team, joint)
        return JOINT_SEP.join(self.private_info[team - 1][j][k] for j, k in enumerate(parts))

    def joint_action_name(self, team: int, joint: int) -> str:
        parts = self.split_action(team, joint)
        return JOINT_SEP.join(self.actions[team - 1][j][k] for j, k in enumerate(parts))

    def cell_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-cell ``(x, p1, p2)`` index arrays."""
        grids = np.unravel_index(np.arange(self.n_cells), self.cell_shape)
        return tuple(np.asarray(g) for g in grids)

    def kernel(self, t: int) -> np.ndarray:
        return self.kernels[t - 1]

    def cost(self, t: int) -> np.ndarray:
        """Discounted stage cost ``delta**(t-1) * c_t`` with shape (X, U1, U2)."""
        return self.costs[t - 1] * (self.discount ** (t - 1))

    def cost_bound(self) -> float:
        """Upper bound on |total discounted cost|."""
        return float(sum(np.abs(self.cost(t)).max() for t in range(1, self.horizon + 1)))

    def live_cells(self) -> np.ndarray:
        """Cells that can ever carry belief mass: initial support plus kernel image."""
        if "live" not in self._cache:
            mask = self.initial_belief.reshape(-1) > 0
            for K in _unique_arrays(self.kernels):
                mask |= (K > 0).any(axis=(0, 1, 2, 4))
            self._cache["live"] = _frozen(np.flatnonzero(mask), dtype=np.int64)
        return self._cache["live"]

    def u2_of_z(self) -> np.ndarray:
        """Joint u2 index read off each increment (-1 when unmapped).

        Declared projections take precedence; otherwise the map is inferred
        from the kernel support. Only meaningful when team1_only holds.
        """
        if "u2_of_z" not in self._cache:
            out = np.full(self.n_increments, -1, dtype=np.int64)
            if self.u2_projection is not None:
                for zi, name in enumerate(self.common_increments):
                    if name in self.u2_projection:
                        idx = [self.actions[1][j].index(a) for j, a in enumerate(self.u2_projection[name])]
                        out[zi] = self.joint_action(2, idx)
            else:
                for zi, u2s in enumerate(_u2_support(self)):
                    if len(u2s) == 1:
                        out[zi] = next(iter(u2s))
            out.setflags(write=False)
            self._cache["u2_of_z"] = out
        return self._cache["u2_of_z"]

    def truncated(self, horizon: int) -> "GameModel":
        """The same game cut to its first ``horizon`` stages."""
        if not 1 <= horizon <= self.horizon:
            raise ValueError("horizon must be in [1, %d]" % self.horizon)
        return GameModel(
            horizon=horizon,
            discount=self.discount,
            states=self.states,
            actions=self.actions,
            private_info=self.private_info,
            common_increments=self.common_increments,
            kernels=self.kernels[:horizon],
            costs=self.costs[:horizon],
            initial_belief=self.initial_belief,
            cib_control=self.cib_control,
            u2_projection=self.u2_projection,
        )


def _unique_arrays(arrays: Sequence[np.ndarray]) -> List[np.ndarray]:
    seen: Dict[int, np.ndarray] = {}
    for a in arrays:
        seen.setdefault(id(a), a)
    return list(seen.values())


def _u2_support(model: GameModel) -> List[set]:
    """For each increment, the set of joint u2 that can produce it."""
    out: List[set] = [set() for _ in range(model.n_increments)]
    for K in _unique_arrays(model.kernels):
        hit = (K > 0).any(axis=(0, 1, 3))  # (U2, Z)
        for u2, z in zip(*np.nonzero(hit)):
            out[int(z)].add(int(u2))
    return out


# -- construction ------------------------------------------------------------


def make_model(
    *,
    horizon: int,
    discount: float,
    states: Sequence[str],
    actions: Sequence[Sequence[Sequence[str]]],
    private_info: Sequence[Sequence[Sequence[str]]],
    common_increments: Sequence[str],
    kernel,
    cost,
    initial_belief,
    cib_control: str = "both",
    u2_projection: Optional[Dict[str, Sequence[str]]] = None,
) -> GameModel:
    """Build a model from arrays.

    ``kernel``/``cost`` may be a single array (time-homogeneous) or a list of
    ``horizon`` arrays. Kernel arrays have shape ``(C, U1, U2, C, Z)`` and
    cost arrays ``(X, U1, U2)``; ``initial_belief`` has ``C`` entries.
    """

    def per_stage(obj, name):
        if isinstance(obj, (list, tuple)) and len(obj) == horizon and np.ndim(obj[0]) >= 3:
            arrays = [_frozen(a) for a in obj]
        else:
            arrays = [_frozen(obj)] * horizon
        return tuple(arrays)

    acts = tuple(tuple(tuple(str(a) for a in pl) for pl in team) for team in actions)
    info = tuple(tuple(tuple(str(p) for p in pl) for pl in team) for team in private_info)
    proj = None
    if u2_projection is not None:
        proj = {str(k): tuple(str(a) for a in v) for k, v in u2_projection.items()}
    return GameModel(
        horizon=int(horizon),
        discount=float(discount),
        states=tuple(str(s) for s in states),
        actions=acts,
        private_info=info,
        common_increments=tuple(str(z) for z in common_increments),
        kernels=per_stage(kernel, "kernel"),
        costs=per_stage(cost, "cost"),
        initial_belief=_frozen(np.asarray(initial_belief, dtype=float).reshape(-1)),
        cib_control=str(cib_control),
        u2_projection=proj,
    )


# -- validation --------------------------------------------------------------


def _check_alphabet(name: str, alphabet: Sequence[str], out: List[str]) -> None:
    if len(alphabet) == 0:
        out.append("%s: alphabet is empty" % name)
    if len(set(alphabet)) != len(alphabet):
        dups = sorted({a for a in alphabet if list(alphabet).count(a) > 1})
        out.append("%s: duplicate symbols %s" % (name, dups))


def _row_name(model: GameModel, t: int, c: int, u1: int, u2: int) -> str:
    x, p1, p2 = model.cell_parts(c)
    return "kernel[t=%d][x=%s, p1=%s, p2=%s, u1=%s, u2=%s]" % (
        t,
        model.states[x],
        model.joint_info_name(1, p1),
        model.joint_info_name(2, p2),
        model.joint_action_name(1, u1),
        model.joint_action_name(2, u2),
    )


def validate(model: GameModel) -> List[str]:
    """Every violated invariant, each naming its field and indices."""
    out: List[str] = []
    if not isinstance(model.horizon, int) or model.horizon < 1:
        out.append("horizon: must be a positive integer, got %r" % (model.horizon,))
    if not (0.0 < model.discount <= 1.0):
        out.append("discount: must lie in (0, 1], got %r" % (model.discount,))
    _check_alphabet("states", model.states, out)
    _check_alphabet("common_increments", model.common_increments, out)
    for team in (1, 2):
        key = "team%d" % team
        if len(model.actions[team - 1]) == 0:
            out.append("players.%s: must be a positive integer" % key)
        if len(model.private_info[team - 1]) != len(model.actions[team - 1]):
            out.append("private_info.%s: expected one alphabet per player" % key)
        for j, alph in enumerate(model.actions[team - 1]):
            _check_alphabet("actions.%s[%d]" % (key, j), alph, out)
        for j, alph in enumerate(model.private_info[team - 1]):
            _check_alphabet("private_info.%s[%d]" % (key, j), alph, out)
    if model.cib_control not in CONTROL_MODES:
        out.append("cib_control: must be one of %s, got %r" % (CONTROL_MODES, model.cib_control))
    if out:
        return out  # shapes below depend on sane alphabets

    C, U1, U2, Z = model.n_cells, model.n_joint_actions(1), model.n_joint_actions(2), model.n_increments
    if len(model.kernels) != model.horizon:
        out.append("kernel: expected %d stages, got %d" % (model.horizon, len(model.kernels)))
    if len(model.costs) != model.horizon:
        out.append("cost: expected %d stages, got %d" % (model.horizon, len(model.costs)))
    for t, K in enumerate(model.kernels, start=1):
        if K.shape != (C, U1, U2, C, Z):
            out.append("kernel[t=%d]: shape %s, expected %s" % (t, K.shape, (C, U1, U2, C, Z)))
            continue
        if not np.all(np.isfinite(K)):
            out.append("kernel[t=%d]: non-finite entries" % t)
            continue
        neg = K.min(axis=(3, 4)) < 0
        sums = K.sum(axis=(3, 4))
        bad_sum = np.abs(sums - 1.0) > PROB_TOL
        for c, u1, u2 in zip(*np.nonzero(neg | bad_sum)):
            name = _row_name(model, t, int(c), int(u1), int(u2))
            if neg[c, u1, u2]:
                out.append("%s: negative probability %.17g" % (name, K[c, u1, u2].min()))
            if bad_sum[c, u1, u2]:
                out.append("%s: row sums to %.17g, not 1" % (name, sums[c, u1, u2]))
    for t, c in enumerate(model.costs, start=1):
        if c.shape != (model.n_states, U1, U2):
            out.append("cost[t=%d]: shape %s, expected %s" % (t, c.shape, (model.n_states, U1, U2)))
        elif not np.all(np.isfinite(c)):
            out.append("cost[t=%d]: non-finite entries" % t)
    b = model.initial_belief
    if b.shape != (C,):
        out.append("initial_belief: %d entries, expected %d" % (b.size, C))
    else:
        if (b < 0).any():
            for cidx in np.flatnonzero(b < 0):
                out.append("initial_belief%s: negative probability %.17g" % (model.cell_name(int(cidx)), b[cidx]))
        if abs(b.sum() - 1.0) > PROB_TOL:
            out.append("initial_belief: sums to %.17g, not 1" % b.sum())
    if model.u2_projection is not None:
        for z, u2 in model.u2_projection.items():
            if z not in model.common_increments:
                out.append("u2_projection: unknown increment %r" % z)
            if len(u2) != model.team2_players:
                out.append("u2_projection[%s]: expected %d actions" % (z, model.team2_players))
                continue
            for j, a in enumerate(u2):
                if a not in model.actions[1][j]:
                    out.append("u2_projection[%s]: unknown action %r for player (2,%d)" % (z, a, j + 1))
    if out:
        return out
    if model.cib_control == "team1_only":
        diag = check_one_sided(model)
        if not diag.holds:
            out.append("cib_control: team1_only declared but one-sided condition fails: %s" % diag.reason)
    return out


@dataclass(frozen=True)
class OneSidedDiagnosis:
    holds: bool
    reason: str = ""
    witness: Any = None


def check_one_sided(model: GameModel) -> OneSidedDiagnosis:
    """Whether the belief update can ignore Team 2's prescription.

    Requires singleton Team-2 private information and a deterministic
    ``z -> u2`` projection consistent with the kernel support.
    """
    for j, alph in enumerate(model.private_info[1]):
        if len(alph) != 1:
            return OneSidedDiagnosis(False, "player (2,%d) has %d private-info values" % (j + 1, len(alph)), (2, j + 1))
    support = _u2_support(model)
    declared = model.u2_of_z() if model.u2_projection is not None else None
    for zi, u2s in enumerate(support):
        name = model.common_increments[zi]
        if len(u2s) > 1:
            a, b = sorted(u2s)[:2]
            pair = (model.joint_action_name(2, a), model.joint_action_name(2, b))
            return OneSidedDiagnosis(False, "increment %r arises from distinct u2 %s and %s" % ((name,) + pair), (name, pair))
        if declared is not None and u2s:
            (u2,) = u2s
            if declared[zi] != u2:
                got = model.joint_action_name(2, u2)
                return OneSidedDiagnosis(
                    False,
                    "increment %r arises from u2 %s but u2_projection maps it elsewhere" % (name, got),
                    (name, (got,)),
                )
    return OneSidedDiagnosis(True)


def kernel_row(model: GameModel, t: int, x: int, p1, p2, u1, u2) -> np.ndarray:
    """Copy of ``P[x', p1', p2', z | x, p1, p2, u1, u2]`` shaped (X, P1, P2, Z).

    Team arguments may be joint indices or per-player index tuples.
    """
    if not 1 <= t <= model.horizon:
        raise IndexError("stage %d out of range 1..%d" % (t, model.horizon))
    p1 = model.joint_info(1, p1) if isinstance(p1, (tuple, list)) else int(p1)
    p2 = model.joint_info(2, p2) if isinstance(p2, (tuple, list)) else int(p2)
    u1 = model.joint_action(1, u1) if isinstance(u1, (tuple, list)) else int(u1)
    u2 = model.joint_action(2, u2) if isinstance(u2, (tuple, list)) else int(u2)
    X, P1, P2 = model.cell_shape
    for name, v, n in (("x", x, X), ("p1", p1, P1), ("p2", p2, P2), ("u1", u1, model.n_joint_actions(1)), ("u2", u2, model.n_joint_actions(2))):
        if not 0 <= v < n:
            raise IndexError("%s=%d out of range 0..%d" % (name, v, n - 1))
    c = model.cell_index(x, p1, p2)
    return model.kernel(t)[c, u1, u2].reshape(X, P1, P2, model.n_increments).copy()


# -- game files --------------------------------------------------------------


class _Parser:
    def __init__(self, doc: Dict[str, Any]):
        self.doc = doc

    def require(self, key: str):
        if key not in self.doc:
            raise GameFileError("field '%s': missing" % key)
        return self.doc[key]

    @staticmethod
    def symbols(value, path: str) -> Tuple[str, ...]:
        if not isinstance(value, list) or not all(isinstance(s, str) for s in value):
            raise GameFileError("field '%s': expected a list of strings" % path)
        return tuple(value)

    @staticmethod
    def number(value, path: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise GameFileError("field '%s': expected a number, got %r" % (path, value))
        return float(value)

    @staticmethod
    def mapping(value, path: str) -> Dict[str, Any]:
        if not isinstance(value, dict):
            raise GameFileError("field '%s': expected an object" % path)
        return value

    @staticmethod
    def lookup(index: Dict[str, int], key: str, path: str, what: str) -> int:
        if key not in index:
            raise GameFileError("field '%s': unknown %s %r" % (path, what, key))
        return index[key]


def _joint_names(alphabets: Sequence[Sequence[str]]) -> List[str]:
    return [JOINT_SEP.join(combo) for combo in itertools.product(*alphabets)]


def parse_game(text: str) -> GameModel:
    """Parse a game file without validating invariants."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameFileError("line %d, column %d: %s" % (exc.lineno, exc.colno, exc.msg)) from None
    if not isinstance(doc, dict):
        raise GameFileError("line 1: top level must be an object")
    ps = _Parser(doc)
    unknown = [k for k in doc if k not in FIELD_ORDER]
    if unknown:
        raise GameFileError("field '%s': unknown field" % unknown[0])

    horizon = ps.require("horizon")
    if isinstance(horizon, bool) or not isinstance(horizon, int):
        raise GameFileError("field 'horizon': expected an integer")
    discount = ps.number(ps.require("discount"), "discount")
    states = ps.symbols(ps.require("states"), "states")
    players = ps.mapping(ps.require("players"), "players")
    n_players = []
    for key in ("team1", "team2"):
        n = players.get(key)
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise GameFileError("field 'players.%s': expected a positive integer" % key)
        n_players.append(n)

    def team_alphabets(field_name: str):
        obj = ps.mapping(ps.require(field_name), field_name)
        teams = []
        for ti, key in enumerate(("team1", "team2")):
            lists = obj.get(key)
            path = "%s.%s" % (field_name, key)
            if not isinstance(lists, list) or len(lists) != n_players[ti]:
                raise GameFileError("field '%s': expected %d alphabets" % (path, n_players[ti]))
            teams.append(tuple(ps.symbols(a, "%s[%d]" % (path, j)) for j, a in enumerate(lists)))
        return tuple(teams)

    actions = team_alphabets("actions")
    private_info = team_alphabets("private_info")
    increments = ps.symbols(ps.require("common_increments"), "common_increments")

    X = len(states)
    P1n, P2n = _joint_names(private_info[0]), _joint_names(private_info[1])
    U1n, U2n = _joint_names(actions[0]), _joint_names(actions[1])
    idx = {
        "x": {s: i for i, s in enumerate(states)},
        "p1": {s: i for i, s in enumerate(P1n)},
        "p2": {s: i for i, s in enumerate(P2n)},
        "u1": {s: i for i, s in enumerate(U1n)},
        "u2": {s: i for i, s in enumerate(U2n)},
        "z": {s: i for i, s in enumerate(increments)},
    }
    what = {"x": "state", "p1": "team1 private info", "p2": "team2 private info", "u1": "team1 action", "u2": "team2 action", "z": "common increment"}
    C = X * len(P1n) * len(P2n)

    def walk(obj, levels: Sequence[str], path: str, emit):
        """Visit a nested symbol map, calling ``emit(indices, leaf, path)``."""
        stack = [(obj, (), path)]
        while stack:
            node, keys, p = stack.pop()
            if len(keys) == len(levels):
                emit(keys, node, p)
                continue
            level = levels[len(keys)]
            for k, v in ps.mapping(node, p).items():
                sub = "%s/%s" % (p, k)
                stack.append((v, keys + (ps.lookup(idx[level], k, sub, what[level]),), sub))

    def stage_list(value, path):
        if isinstance(value, list):
            if len(value) != horizon:
                raise GameFileError("field '%s': expected %d stages, got %d" % (path, horizon, len(value)))
            return [(v, "%s[%d]" % (path, i)) for i, v in enumerate(value)]
        return [(value, path)]

    kernels = []
    for kobj, path in stage_list(ps.require("kernel"), "kernel"):
        K = np.zeros((X, len(P1n), len(P2n), len(U1n), len(U2n), X, len(P1n), len(P2n), len(increments)))

        def put_k(keys, leaf, p, K=K):
            K[keys] = ps.number(leaf, p)

        walk(kobj, ("x", "p1", "p2", "u1", "u2", "x", "p1", "p2", "z"), path, put_k)
        kernels.append(K.reshape(C, len(U1n), len(U2n), C, len(increments)))
    costs = []
    for cobj, path in stage_list(ps.require("cost"), "cost"):
        c = np.zeros((X, len(U1n), len(U2n)))

        def put_c(keys, leaf, p, c=c):
            c[keys] = ps.number(leaf, p)

        walk(cobj, ("x", "u1", "u2"), path, put_c)
        costs.append(c)
    b = np.zeros((X, len(P1n), len(P2n)))

    def put_b(keys, leaf, p):
        b[keys] = ps.number(leaf, p)

    walk(ps.require("initial_belief"), ("x", "p1", "p2"), "initial_belief", put_b)
    control = ps.require("cib_control")
    if control not in CONTROL_MODES:
        raise GameFileError("field 'cib_control': expected one of %s, got %r" % (CONTROL_MODES, control))
    proj = None
    if "u2_projection" in doc:
        raw = ps.mapping(doc["u2_projection"], "u2_projection")
        proj = {}
        for z, u2 in raw.items():
            ps.lookup(idx["z"], z, "u2_projection/%s" % z, "common increment")
            if isinstance(u2, str):
                u2 = u2.split(JOINT_SEP)
            proj[z] = ps.symbols(u2, "u2_projection/%s" % z)
    return make_model(
        horizon=horizon,
        discount=discount,
        states=states,
        actions=actions,
        private_info=private_info,
        common_increments=increments,
        kernel=kernels if len(kernels) > 1 else kernels[0],
        cost=costs if len(costs) > 1 else costs[0],
        initial_belief=b.reshape(-1),
        cib_control=control,
        u2_projection=proj,
    )


def load_game(text: str) -> GameModel:
    """Parse and validate a game file; raises on any violation."""
    model = parse_game(text)
    violations = validate(model)
    if violations:
        raise GameValidationError(violations)
    return model


def load_game_file(path) -> GameModel:
    with open(path, "r", encoding="utf-8") as fh:
        return load_game(fh.read())


def _num(v: float):
    f = float(v)
    return int(f) if f.is_integer() and abs(f) < 2**53 else f


def serialize(model: GameModel) -> Dict[str, Any]:
    """Game-file document (sparse: zero entries omitted)."""
    X, P1, P2 = model.cell_shape
    U1, U2, Z = model.n_joint_actions(1), model.n_joint_actions(2), model.n_increments
    P1n, P2n = _joint_names(model.private_info[0]), _joint_names(model.private_info[1])
    U1n, U2n = _joint_names(model.actions[0]), _joint_names(model.actions[1])

    def kernel_doc(K):
        K = K.reshape(X, P1, P2, U1, U2, X, P1, P2, Z)
        out: Dict[str, Any] = {}
        for x, p1, p2, u1, u2 in itertools.product(range(X), range(P1), range(P2), range(U1), range(U2)):
            row = K[x, p1, p2, u1, u2]
            nz = np.argwhere(row != 0)
            if nz.size == 0:
                continue
            leaf = out.setdefault(model.states[x], {}).setdefault(P1n[p1], {}).setdefault(P2n[p2], {})
            leaf = leaf.setdefault(U1n[u1], {}).setdefault(U2n[u2], {})
            for x2, q1, q2, z in nz:
                d = leaf.setdefault(model.states[x2], {}).setdefault(P1n[q1], {}).setdefault(P2n[q2], {})
                d[model.common_increments[z]] = _num(row[x2, q1, q2, z])
        return out

    def cost_doc(c):
        out: Dict[str, Any] = {}
        for x, u1, u2 in itertools.product(range(X), range(U1), range(U2)):
            if c[x, u1, u2] != 0:
                out.setdefault(model.states[x], {}).setdefault(U1n[u1], {})[U2n[u2]] = _num(c[x, u1, u2])
        return out

    def stages(arrays, fn):
        uniq = _unique_arrays(arrays)
        if len(uniq) == 1 or all(np.array_equal(arrays[0], a) for a in arrays[1:]):
            return fn(arrays[0])
        return [fn(a) for a in arrays]

    b = model.initial_belief.reshape(X, P1, P2)
    belief: Dict[str, Any] = {}
    for x, p1, p2 in zip(*np.nonzero(b)):
        belief.setdefault(model.states[x], {}).setdefault(P1n[p1], {})[P2n[p2]] = _num(b[x, p1, p2])
    doc: Dict[str, Any] = {
        "horizon": model.horizon,
        "discount": _num(model.discount),
        "states": list(model.states),
        "players": {"team1": model.team1_players, "team2": model.team2_players},
        "actions": {"team1": [list(a) for a in model.actions[0]], "team2": [list(a) for a in model.actions[1]]},
        "private_info": {"team1": [list(a) for a in model.private_info[0]], "team2": [list(a) for a in model.private_info[1]]},
        "common_increments": list(model.common_increments),
        "kernel": stages(model.kernels, kernel_doc),
        "cost": stages(model.costs, cost_doc),
        "initial_belief": belief,
        "cib_control": model.cib_control,
    }
    if model.u2_projection is not None:
        doc["u2_projection"] = {z: list(u) for z, u in model.u2_projection.items()}
    return doc


def dumps(model: GameModel) -> str:
    return json.dumps(serialize(model), indent=1)


def models_equal(a: GameModel, b: GameModel) -> bool:
    """Structural equality of two models (exact float comparison)."""
    if (a.horizon, a.discount, a.states, a.actions, a.private_info, a.common_increments, a.cib_control) != (
        b.horizon,
        b.discount,
        b.states,
        b.actions,
        b.private_info,
        b.common_increments,
        b.cib_control,
    ):
        return False
    if a.u2_projection != b.u2_projection:
        return False
    pairs = list(zip(a.kernels, b.kernels)) + list(zip(a.costs, b.costs)) + [(a.initial_belief, b.initial_belief)]
    return all(x.shape == y.shape and np.array_equal(x, y) for x, y in pairs)


# -- built-in games ----------------------------------------------------------

# Defender/attacker transitions P[x' | x, u2]; Team 1's actions are irrelevant.
# States: 0=(l, active), 1=(r, active), 2=(l, passive), 3=(r, passive).
DA_TRANSITIONS = {
    "alpha": [[0.5, 0.5, 0, 0], [0, 0, 0, 1], [0.15, 0.15, 0.7, 0], [0.15, 0.15, 0, 0.7]],
    "beta": [[0, 0, 1, 0], [0.5, 0.5, 0, 0], [0.15, 0.15, 0.7, 0], [0.15, 0.15, 0, 0.7]],
    "mu": [[0.7, 0, 0.3, 0], [0, 0.7, 0, 0.3], [0.15, 0.15, 0.7, 0], [0.15, 0.15, 0, 0.7]],
}
# Cost c(x, u12, u2) per state, keyed by (defender action, attacker action).
DA_COSTS = {
    ("alpha", "alpha"): [15, 0, 0, 0],
    ("alpha", "beta"): [0, 15, 0, 0],
    ("alpha", "mu"): [10, 20, 0, 0],
    ("beta", "alpha"): [15, 0, 0, 0],
    ("beta", "beta"): [0, 15, 0, 0],
    ("beta", "mu"): [20, 10, 0, 0],
}


def defender_attacker(horizon: int = 15, discount: float = 0.9) -> GameModel:
    """Two-entity defense game with a signaling teammate.

    Team 1 player 1 sees the state and only signals; player 2 defends blind.
    The attacker observes whether it is active, plus every action.
    """
    states = ("l_a", "r_a", "l_p", "r_p")
    a1, a2 = ("alpha", "beta"), ("alpha", "beta")
    att = ("alpha", "beta", "mu")
    incs = [
        "%s|%s|%s|%s" % (y, u11, u12, u2)
        for y, u11, u12, u2 in itertools.product(("a", "p"), a1, a2, att)
    ]
    zidx = {z: i for i, z in enumerate(incs)}
    X, P1 = 4, 4
    C = X * P1
    K = np.zeros((C, 4, 3, C, len(incs)))
    for x, p, u11, u12, u2 in itertools.product(range(X), range(P1), range(2), range(2), range(3)):
        row = DA_TRANSITIONS[att[u2]][x]
        u1 = u11 * 2 + u12
        for x2, prob in enumerate(row):
            if prob:
                y = "a" if x2 < 2 else "p"
                z = zidx["%s|%s|%s|%s" % (y, a1[u11], a2[u12], att[u2])]
                K[x * P1 + p, u1, u2, x2 * P1 + x2, z] = prob
    cost = np.zeros((X, 4, 3))
    for u11, u12, u2 in itertools.product(range(2), range(2), range(3)):
        cost[:, u11 * 2 + u12, u2] = DA_COSTS[(a2[u12], att[u2])]
    b = np.zeros(C)
    b[0 * P1 + 0] = 0.5
    b[1 * P1 + 1] = 0.5
    proj = {z: (z.split("|")[3],) for z in incs}
    return make_model(
        horizon=horizon,
        discount=discount,
        states=states,
        actions=((a1, a2), (att,)),
        private_info=((states, ("none",)), (("none",),)),
        common_increments=incs,
        kernel=K,
        cost=cost,
        initial_belief=b,
        cib_control="team1_only",
        u2_projection=proj,
    )


def _observed_actions_game(
    *,
    horizon: int,
    discount: float,
    states: Sequence[str],
    t1_actions: Sequence[str],
    t2_actions: Sequence[str],
    transition: np.ndarray,
    cost: np.ndarray,
    initial: np.ndarray,
    signals: Optional[np.ndarray] = None,
    private: Optional[np.ndarray] = None,
    private_names: Optional[Sequence[str]] = None,
) -> GameModel:
    """One player per team; actions are public, Team 2 has no private info.

    ``transition[x, u1, u2, x']``; optional public ``signals[x', y]`` and
    Team-1 private observation ``private[x', p]``. The initial belief is
    over ``(x, p)`` cells.
    """
    X, A1, A2 = len(states), len(t1_actions), len(t2_actions)
    if signals is None:
        signals = np.ones((X, 1))
    if private is None:
        private = np.ones((X, 1))
        private_names = ("none",)
    Y, P = signals.shape[1], private.shape[1]
    incs = ["%s|%s|y%d" % (a, b, y) for a, b, y in itertools.product(t1_actions, t2_actions, range(Y))]
    if Y == 1:
        incs = ["%s|%s" % (a, b) for a, b in itertools.product(t1_actions, t2_actions)]
    K = np.zeros((X * P, A1, A2, X * P, len(incs)))
    for x, p, u1, u2, x2, p2, y in itertools.product(range(X), range(P), range(A1), range(A2), range(X), range(P), range(Y)):
        prob = transition[x, u1, u2, x2] * private[x2, p2] * signals[x2, y]
        if prob:
            K[x * P + p, u1, u2, x2 * P + p2, (u1 * A2 + u2) * Y + y] = prob
    proj = {z: (t2_actions[(i // Y) % A2],) for i, z in enumerate(incs)}
    return make_model(
        horizon=horizon,
        discount=discount,
        states=states,
        actions=((tuple(t1_actions),), (tuple(t2_actions),)),
        private_info=((tuple(private_names),), (("none",),)),
        common_increments=incs,
        kernel=K,
        cost=cost,
        initial_belief=np.asarray(initial, dtype=float).reshape(-1),
        cib_control="team1_only",
        u2_projection=proj,
    )


def zero_game(horizon: int = 3) -> GameModel:
    """Two states, informed Team 1, every cost zero."""
    tr = np.zeros((2, 2, 2, 2))
    tr[0] = [0.6, 0.4]
    tr[1] = [0.3, 0.7]
    tr[0, 1, 1] = [0.1, 0.9]
    return _observed_actions_game(
        horizon=horizon,
        discount=1.0,
        states=("s0", "s1"),
        t1_actions=("a", "b"),
        t2_actions=("a", "b"),
        transition=tr,
        cost=np.zeros((2, 2, 2)),
        initial=np.diag([0.5, 0.5]),  # cells (x, p) with p = x
        private=np.eye(2),
        private_names=("s0", "s1"),
    )


def coin_signal(horizon: int = 2, weight: float = 0.5) -> GameModel:
    """Matching pennies over a hidden coin that Team 1 sees.

    Stage cost ``1[u1 == u2] + weight * 1[u1 != coin]``: Team 1 wants to
    play the coin yet stay unpredictable. The value at a fair coin is
    ``1/2 + (horizon - 1) * (1/2 + weight/2)`` for horizon <= 2.
    """
    tr = np.zeros((2, 2, 2, 2))
    tr[0, :, :, 0] = 1.0
    tr[1, :, :, 1] = 1.0
    cost = np.zeros((2, 2, 2))
    for x, u1, u2 in itertools.product(range(2), range(2), range(2)):
        cost[x, u1, u2] = float(u1 == u2) + weight * float(u1 != x)
    return _observed_actions_game(
        horizon=horizon,
        discount=1.0,
        states=("heads", "tails"),
        t1_actions=("heads", "tails"),
        t2_actions=("heads", "tails"),
        transition=tr,
        cost=cost,
        initial=np.diag([0.5, 0.5]),
        private=np.eye(2),
        private_names=("heads", "tails"),
    )


def matrix_game(cost_matrix, horizon: int = 1) -> GameModel:
    """Repeated matrix game with public actions and a single dummy state."""
    cm = np.asarray(cost_matrix, dtype=float)
    A1, A2 = cm.shape
    tr = np.ones((1, A1, A2, 1))
    return _observed_actions_game(
        horizon=horizon,
        discount=1.0,
        states=("s",),
        t1_actions=tuple("a%d" % i for i in range(A1)),
        t2_actions=tuple("b%d" % i for i in range(A2)),
        transition=tr,
        cost=cm[None],
        initial=np.ones(1),
    )


def random_game(
    rng: np.random.Generator,
    *,
    max_states: int = 3,
    max_horizon: int = 2,
    max_actions: int = 2,
    private: Optional[bool] = None,
) -> GameModel:
    """Small random one-sided game with public actions.

    Team 1 has one player who may receive a binary private observation of
    the state; Team 2 has no private information. Costs lie in [0, 1].
    """
    X = int(rng.integers(2, max_states + 1))
    T = int(rng.integers(1, max_horizon + 1))
    A1 = int(rng.integers(2, max_actions + 1))
    A2 = int(rng.integers(2, max_actions + 1))
    if private is None:
        private = bool(rng.integers(0, 2))
    tr = rng.dirichlet(np.ones(X), size=(X, A1, A2))
    tr = np.round(tr, 3)
    tr[..., -1] = 1.0 - tr[..., :-1].sum(axis=-1)
    tr = np.clip(tr, 0.0, None)
    tr /= tr.sum(axis=-1, keepdims=True)
    cost = np.round(rng.uniform(0, 1, size=(X, A1, A2)), 2)
    signals = None
    if rng.integers(0, 2):
        q = rng.uniform(0.55, 0.95, size=X)
        signals = np.stack([q, 1 - q], axis=1)
    obs, names, P = None, None, 1
    if private:
        q = rng.uniform(0.6, 1.0, size=X)
        obs = np.stack([q, 1 - q], axis=1)
        names, P = ("o0", "o1"), 2
    init = rng.dirichlet(np.ones(X * P))
    return _observed_actions_game(
        horizon=T,
        discount=1.0,
        states=tuple("s%d" % i for i in range(X)),
        t1_actions=tuple("a%d" % i for i in range(A1)),
        t2_actions=tuple("b%d" % i for i in range(A2)),
        transition=tr,
        cost=cost,
        initial=init,
        signals=signals,
        private=obs,
        private_names=names,
    )


_BUILTINS = {
    "defender_attacker": defender_attacker,
    "zero_game": zero_game,
    "coin_signal": coin_signal,
}


def builtin_example(name: str, **kwargs) -> GameModel:
    """One of the built-in games by name."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ValueError("unknown builtin game %r; choose from %s" % (name, sorted(_BUILTINS))) from None
    return factory(**kwargs)


BUILTIN_NAMES = tuple(_BUILTINS)
