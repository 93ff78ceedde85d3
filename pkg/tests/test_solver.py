import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cibgames._layout import TeamLayout
from cibgames.belief import Belief, initial_belief
from cibgames.model import coin_signal, defender_attacker, matrix_game, random_game, zero_game
from cibgames.prescriptions import enumerate_pure, from_flat, lift
from cibgames.solver import (
    GridSizeError,
    Refinement,
    SolverConfig,
    game_value,
    grid_points,
    grid_within,
    interpolate,
    sample_beliefs,
    solve_lower,
    solve_upper,
    stage_lower,
    stage_objective,
    stage_upper,
)

DA = defender_attacker()
SMALL = SolverConfig(grid=6, restarts=3)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(grid=0)
    with pytest.raises(ValueError):
        SolverConfig(eps_opt=0.0)


def test_grid_points_count_and_simplex():
    pts = grid_points(DA, 1, 4)
    assert len(pts) == 35  # C(4 + 3, 3)
    np.testing.assert_allclose(pts.sum(axis=1), 1.0, atol=1e-15)
    assert pts.min() >= 0.0


def test_grid_refinement_adds_face_points():
    base = grid_points(DA, 1, 4)
    ref = grid_points(DA, 1, 4, [Refinement(("l_a", "r_a"), 100)])
    assert len(ref) == len(base) + 99 - 3  # interior points of the edge not already present
    assert any(np.allclose(p, [0.28, 0.72, 0, 0]) for p in ref)


def test_grid_within_budget():
    assert grid_within(DA, 10**6) == 20
    assert grid_within(DA, 35) == 4  # C(7, 3) = 35, C(8, 3) = 56
    assert grid_within(DA, 1) == 1


def test_grid_cap():
    with pytest.raises(GridSizeError):
        grid_points(DA, 1, 50, cap=100)


def test_sample_beliefs_are_beliefs():
    bs = sample_beliefs(DA, 2, 2)
    assert all(isinstance(b, Belief) and b.t == 2 for b in bs)


def test_zero_game_value_zero():
    m = zero_game()
    up = solve_upper(m, SMALL)
    lo = solve_lower(m, SMALL)
    for tab in up + lo:
        assert np.all(tab.values == 0.0)


def test_matching_pennies_value():
    m = matrix_game([[1.0, 0.0], [0.0, 1.0]])
    v_up = game_value(solve_upper(m, SMALL), initial_belief(m))
    v_lo = game_value(solve_lower(m, SMALL), initial_belief(m))
    assert v_up == pytest.approx(0.5, abs=1e-6)
    assert v_lo == pytest.approx(0.5, abs=1e-6)


def test_coin_signal_one_stage():
    m = coin_signal(1)
    assert game_value(solve_upper(m, SolverConfig(grid=10, restarts=4)), initial_belief(m)) == pytest.approx(0.5, abs=1e-6)


def test_coin_signal_two_stages_converges():
    # Interpolating the concave continuation undershoots between nodes; the gap shrinks with the grid.
    m = coin_signal(2)
    vals = [game_value(solve_upper(m, SolverConfig(grid=g, restarts=4)), initial_belief(m)) for g in (10, 20, 40)]
    gaps = [1.25 - v for v in vals]
    assert all(0 <= g < 5e-3 for g in gaps)
    assert gaps[0] > gaps[1] > gaps[2]


def test_solve_deterministic():
    m = random_game(np.random.default_rng(3))
    a, b = solve_upper(m, SMALL), solve_upper(m, SMALL)
    for x, y in zip(a, b):
        assert x.values.tobytes() == y.values.tobytes()
        assert x.thetas.tobytes() == y.thetas.tobytes()


def test_tables_store_prescriptions():
    tabs = solve_upper(DA.truncated(1), SMALL)
    for belief, value, g in list(tabs[0].entries(DA.truncated(1)))[:5]:
        assert g.t == 1 and g.team == 1
        assert interpolate(tabs[0], belief) == value


def test_stage_single_matches_batch():
    m = DA.truncated(2)
    tabs = solve_upper(m, SMALL)
    belief = tabs[0].belief(7)
    v, g = stage_upper(m, 1, belief, tabs[1], SMALL)
    assert v == pytest.approx(tabs[0].values[7], abs=1e-9)
    with pytest.raises(ValueError):
        stage_upper(m, 2, belief, None, SMALL)


def test_terminal_stage_lower_below_upper():
    rng = np.random.default_rng(5)
    for _ in range(5):
        m = random_game(rng).truncated(1)
        pi = initial_belief(m)
        up, _ = stage_upper(m, 1, pi, None, SMALL)
        lo, _ = stage_lower(m, 1, pi, None, SMALL)
        assert lo <= up + 2 * SMALL.eps_opt


def test_lower_warm_start_needs_same_grid():
    m = zero_game()
    up = solve_upper(m, SolverConfig(grid=4, restarts=2))
    with pytest.raises(ValueError):
        solve_lower(m, SolverConfig(grid=5, restarts=2), warm_start=up)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_pure_team2_suffices(seed):
    # The surrogate is linear in each Team-2 row, so no mixture beats the best pure prescription.
    rng = np.random.default_rng(seed)
    m = DA.truncated(1)
    w = np.zeros(m.n_cells)
    w[m.live_cells()] = rng.dirichlet(np.ones(4))
    g1 = from_flat(m, 1, 1, TeamLayout(m, 1).random(rng, 1)[0])
    g2 = from_flat(m, 2, 1, TeamLayout(m, 2).random(rng, 1)[0])
    behavioural = stage_objective(m, 1, w, g1, g2, None)
    pure = max(stage_objective(m, 1, w, g1, lift(q), None) for q in enumerate_pure(m, 2, 1))
    assert behavioural <= pure + 1e-9


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.25, 0.5, 2.0, 8.0]))
def test_stage_objective_homogeneous(seed, alpha):
    # Power-of-two scales keep normalized child beliefs bit-identical, so kNN ties cannot flip.
    rng = np.random.default_rng(seed)
    m = DA.truncated(2)
    tabs = _da2_tables()
    w = np.zeros(m.n_cells)
    w[m.live_cells()] = rng.dirichlet(np.ones(4))
    g1 = from_flat(m, 1, 1, TeamLayout(m, 1).random(rng, 1)[0])
    g2 = from_flat(m, 2, 1, TeamLayout(m, 2).random(rng, 1)[0])
    a = stage_objective(m, 1, alpha * w, g1, g2, tabs[1])
    b = alpha * stage_objective(m, 1, w, g1, g2, tabs[1])
    assert abs(a - b) <= 1e-12 * max(1.0, abs(b))


_CACHE = {}


def _da2_tables():
    if "da2" not in _CACHE:
        _CACHE["da2"] = solve_upper(DA.truncated(2), SMALL)
    return _CACHE["da2"]
