"""End-to-end acceptance checks on the defender/attacker example and random games.

The terminal summary prints one PASS/FAIL line per criterion.
"""

import time

import numpy as np
import pytest

from cibgames._layout import TeamLayout
from cibgames._surrogate import StageSurrogate
from cibgames.belief import (
    Belief,
    cib_update,
    cib_update_one_sided,
    common_marginal,
    extended_joint,
    extended_marginal,
    extended_stage_cost,
    initial_belief,
    joint_transform,
)
from cibgames.bestresponse import BestResponsePolicy, br_value, exploitability, solve_best_response
from cibgames.cli import main, read_tables
from cibgames.model import defender_attacker
from cibgames.oracle import brute_force_upper
from cibgames.prescriptions import enumerate_pure, from_flat, lift
from cibgames.sim import monte_carlo_cost
from cibgames.solver import SolverConfig, game_value, grid_within, interpolate, solve_lower, solve_upper
from cibgames.strategy import ConstantPolicy, MinmaxPolicy
from conftest import random_games

DA = defender_attacker()
SOLVE_FLAGS = ["--upper", "--grid", "20", "--restarts", "8", "--seed", "0", "--refine", "l_a,r_a:100"]
SLICE = np.round(np.arange(0.0, 1.0 + 1e-9, 0.01), 2)


def slice_belief(p, t=1):
    w = np.zeros(DA.n_cells)
    w[DA.live_cells()] = [p, 1.0 - p, 0.0, 0.0]
    return Belief(t, w)


@pytest.fixture(scope="module")
def headline(tmp_path_factory):
    out = tmp_path_factory.mktemp("da_upper")
    t0 = time.perf_counter()
    code = main(["solve", "builtin:defender_attacker", "--out", str(out)] + SOLVE_FLAGS)
    elapsed = time.perf_counter() - t0
    assert code == 0
    tables, cfg = read_tables(str(out), DA)
    return {"dir": out, "tables": tables, "cfg": cfg, "elapsed": elapsed}


@pytest.fixture(scope="module")
def minimax_br(headline):
    pol = MinmaxPolicy(DA, headline["tables"], headline["cfg"])
    t0 = time.perf_counter()
    br = solve_best_response(DA, pol, headline["cfg"])
    return {"policy": pol, "tables": br, "elapsed": time.perf_counter() - t0}


@pytest.mark.criterion(1)
def test_c01_headline_value(headline, record_property):
    summary = dict(line.split(" ", 1) for line in (headline["dir"] / "summary.txt").read_text().splitlines())
    value = float(summary["game_value"])
    record_property("detail", "value %.4f in [62, 69], %.0f s" % (value, headline["elapsed"]))
    assert value == game_value(headline["tables"], initial_belief(DA))
    assert 62.0 <= value <= 69.0
    assert headline["elapsed"] <= 300.0


@pytest.mark.criterion(2)
def test_c02_attacker_thresholds(minimax_br, record_property):
    table = minimax_br["tables"][0]
    labels = [q.action_names(DA)[0][0] for q in enumerate_pure(DA, 2, 1)]
    acts = []
    for p in SLICE:
        i = table.index_of(slice_belief(p).weights[DA.live_cells()])
        assert i >= 0, "slice point %.2f missing from the grid" % p
        acts.append(labels[int(table.actions[i])])
    switches = [(SLICE[i], acts[i - 1], acts[i]) for i in range(1, len(acts)) if acts[i] != acts[i - 1]]
    record_property(
        "detail",
        "switches %s, %.0f s" % (", ".join("%s->%s at %.2f" % (a, b, p) for p, a, b in switches), minimax_br["elapsed"]),
    )
    assert len(switches) == 2
    (p_lo, left, mid), (p_hi, mid2, right) = switches
    assert mid == mid2 == "mu"
    assert {left, right} == {"alpha", "beta"}
    assert abs(p_lo - 0.28) <= 0.05 + 1e-9
    assert abs(p_hi - 0.72) <= 0.05 + 1e-9
    assert minimax_br["elapsed"] <= 120.0


@pytest.mark.criterion(3)
def test_c03_value_shape(headline, record_property):
    v = {p: interpolate(headline["tables"][0], slice_belief(p)) for p in (0.05, 0.28, 0.45, 0.5, 0.55, 0.72, 0.95)}
    record_property("detail", " ".join("V(%.2f)=%.3f" % kv for kv in v.items()))
    assert v[0.45] < v[0.5] and v[0.55] < v[0.5]
    for p in (0.28, 0.72):
        assert v[p] < v[0.5] and v[p] < v[0.05] and v[p] < v[0.95]


def test_signaling_rows_on_active_slice(headline):
    # Secrecy versus signaling: distinct signaler rows at 0.5, near-identical at 0.72.
    pol = MinmaxPolicy(DA, headline["tables"], headline["cfg"])

    def gap(p):
        row = pol.prescription(1, slice_belief(p)).maps[0]
        return np.abs(row[0] - row[1]).sum()

    assert gap(0.5) > 0.2
    assert gap(0.72) < 0.1


@pytest.mark.criterion(4)
def test_c04_oracle_equivalence(record_property):
    t0 = time.perf_counter()
    worst = 0.0
    for g in random_games(2024, 25):
        assert g.n_states <= 3 and g.horizon <= 2 and max(g.action_sizes(1) + g.action_sizes(2)) <= 2
        # Default m=20, capped so six live cells do not mean 53k points per stage.
        solved = game_value(solve_upper(g, SolverConfig(grid=grid_within(g, 2000))), initial_belief(g))
        exact = brute_force_upper(g, 100)
        span = max(float(np.max(c)) for c in g.costs) - min(float(np.min(c)) for c in g.costs)
        worst = max(worst, abs(solved - exact) / max(span, 1e-12))
    elapsed = time.perf_counter() - t0
    record_property("detail", "worst |solver - oracle| = %.4f cost ranges (tol 0.05), %.0f s" % (worst, elapsed))
    assert worst <= 0.05
    assert elapsed <= 180.0


@pytest.mark.criterion(5)
def test_c05_pure_sufficiency(headline, record_property):
    rng = np.random.default_rng(5)
    n, draws = 1000, 20
    lay1, lay2 = TeamLayout(DA, 1), TeamLayout(DA, 2)
    sur = StageSurrogate(DA, 1, headline["tables"][1].interpolator())
    pis = rng.dirichlet(np.ones(4), size=n)
    G1 = lay1.joint(lay1.random(rng, n))
    pures = np.stack([lift(q).joint_table() for q in enumerate_pure(DA, 2, 1)])
    pure_max = np.max([sur.evaluate(pis, G1, np.repeat(q[None], n, axis=0))[0] for q in pures], axis=0)
    excess = -np.inf
    for _ in range(draws):
        w, _, _ = sur.evaluate(pis, G1, lay2.joint(lay2.random(rng, n)))
        excess = max(excess, float((w - pure_max).max()))
    record_property("detail", "max behavioural - pure = %.3g over %d x %d draws" % (excess, n, draws))
    assert excess <= 1e-9


def _random_call(rng, models):
    m = models[int(rng.integers(len(models)))]
    t = int(rng.integers(1, m.horizon + 1))
    w = np.zeros(m.n_cells)
    cells = m.live_cells()
    w[cells] = rng.dirichlet(np.ones(len(cells)))
    g1 = from_flat(m, 1, t, TeamLayout(m, 1).random(rng, 1)[0])
    g2 = from_flat(m, 2, t, TeamLayout(m, 2).random(rng, 1)[0])
    return m, t, Belief(t, w), g1, g2


@pytest.mark.criterion(6)
def test_c06_belief_invariants(record_property):
    rng = np.random.default_rng(6)
    models = [DA] + random_games(6, 9, private=True)
    norm_err = agree_err = homog_err = 0.0
    for _ in range(10**4):
        m, t, pi, g1, g2 = _random_call(rng, models)
        p_z = common_marginal(joint_transform(m, pi, g1, g2))
        z = int(rng.choice(m.n_increments, p=p_z / p_z.sum()))
        two = cib_update(m, pi, g1, g2, z)
        one = cib_update_one_sided(m, pi, g1, z)
        norm_err = max(norm_err, abs(two.weights.sum() - 1.0), abs(one.weights.sum() - 1.0))
        agree_err = max(agree_err, float(np.abs(one.weights - two.weights).max()))
        a = float(rng.uniform())
        w = pi.weights
        homog_err = max(
            homog_err,
            float(np.abs(extended_joint(m, t, a * w, g1, g2) - a * extended_joint(m, t, w, g1, g2)).max()),
            float(np.abs(extended_marginal(m, t, a * w, g1, g2) - a * extended_marginal(m, t, w, g1, g2)).max()),
            abs(extended_stage_cost(m, t, a * w, g1, g2) - a * extended_stage_cost(m, t, w, g1, g2)),
        )
    record_property("detail", "norm %.2g, one/two-sided %.2g, homogeneity %.2g" % (norm_err, agree_err, homog_err))
    assert norm_err <= 1e-9
    assert agree_err <= 1e-10
    assert homog_err <= 1e-12


@pytest.mark.criterion(7)
def test_c07_dp_simulation_consistency(headline, minimax_br, record_property):
    brp = BestResponsePolicy(DA, minimax_br["tables"], headline["cfg"])
    res = monte_carlo_cost(DA, minimax_br["policy"], brp, 10**4, seed=0)
    dp = br_value(minimax_br["tables"], initial_belief(DA))
    record_property("detail", "MC %.3f +/- %.3f vs DP %.3f (%.2f stderr)" % (res.mean, res.stderr, dp, (res.mean - dp) / res.stderr))
    assert abs(res.mean - dp) <= 3 * res.stderr


@pytest.mark.criterion(8)
def test_c08_exploitability_ordering(headline, minimax_br, record_property):
    solved = br_value(minimax_br["tables"], initial_belief(DA))
    uniform = exploitability(DA, ConstantPolicy.uniform(DA), headline["cfg"])
    record_property("detail", "uniform %.4f >= minimax %.4f" % (uniform, solved))
    assert uniform >= solved - 1e-6


@pytest.mark.criterion(9)
def test_c09_minimax_sandwich(record_property):
    cfg = SolverConfig(grid=6)
    gaps = []
    up = solve_upper(DA, cfg)
    lo = solve_lower(DA, cfg, warm_start=up)
    gaps.append(game_value(lo, initial_belief(DA)) - game_value(up, initial_belief(DA)))
    small = SolverConfig(grid=8)
    for g in random_games(909, 10):
        up = solve_upper(g, small)
        lo = solve_lower(g, small, warm_start=up)
        gaps.append(game_value(lo, initial_belief(g)) - game_value(up, initial_belief(g)))
    record_property("detail", "max lower - upper = %.3g (tol %.0e)" % (max(gaps), 2 * cfg.eps_opt))
    assert max(gaps) <= 2 * cfg.eps_opt


@pytest.mark.criterion(10)
def test_c10_determinism(tmp_path, record_property):
    flags = ["--grid", "6", "--restarts", "4", "--seed", "3"]
    runs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert main(["solve", "builtin:defender_attacker", "--out", str(d / "up")] + flags) == 0
        assert main(["best-response", "builtin:defender_attacker", "--policy", str(d / "up"), "--out", str(d / "br")]) == 0
        assert main(["simulate", "builtin:defender_attacker", "--policy", str(d / "up"), "--n", "200", "--out", str(d / "mc")]) == 0
        runs.append({p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*.csv"))})
    record_property("detail", "%d CSV files identical across runs" % len(runs[0]))
    assert runs[0].keys() == runs[1].keys() and len(runs[0]) == 2 * DA.horizon + 2 * DA.horizon + 1
    assert runs[0] == runs[1]
