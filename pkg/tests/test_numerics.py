import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cibgames._interp import Interpolator, worker_count
from cibgames._layout import TeamLayout, project_rows, row_activity
from cibgames._search import SearchSettings, dual_weights, minimize_max
from cibgames._surrogate import StageSurrogate
from cibgames.belief import Belief, extended_joint, stage_cost
from cibgames.model import defender_attacker, matrix_game
from cibgames.prescriptions import from_flat
from cibgames.solver import grid_points

DA = defender_attacker()


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6))
def test_projection_lands_on_simplex(v):
    p = project_rows(np.array([v]))
    assert p.min() >= 0.0
    assert abs(p.sum() - 1.0) <= 1e-12


def test_projection_fixes_simplex_points():
    x = np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
    np.testing.assert_allclose(project_rows(x), x, atol=1e-15)


def test_layout_joint_matches_prescription():
    lay = TeamLayout(DA, 1)
    rng = np.random.default_rng(0)
    th = lay.random(rng, 3)
    G = lay.joint(th)
    for b in range(3):
        np.testing.assert_allclose(G[b], from_flat(DA, 1, 1, th[b]).joint_table(), atol=1e-15)


def test_layout_backprop_finite_difference():
    lay = TeamLayout(DA, 1)
    rng = np.random.default_rng(1)
    th = lay.random(rng, 1)
    C = rng.normal(size=lay.joint(th).shape)

    def f(t):
        return float((lay.joint(t) * C).sum())

    g = lay.backprop(th, C)[0]
    eps = 1e-6
    for i in range(lay.dim):
        e = np.zeros_like(th)
        e[0, i] = eps
        assert (f(th + e) - f(th - e)) / (2 * eps) == pytest.approx(g[i], abs=1e-7)


def test_row_activity_da():
    lay = TeamLayout(DA, 1)
    pts = np.array([[0.5, 0.5, 0.0, 0.0]])
    mass = row_activity(DA, 1, lay, pts, DA.live_cells())
    # rows: signaler on l_a, r_a, l_p, r_p, then the blind defender
    np.testing.assert_allclose(mass[0], [0.5, 0.5, 0.0, 0.0, 1.0])


def test_interpolator_exact_at_nodes():
    pts = grid_points(DA, 2, 4)
    vals = np.random.default_rng(2).normal(size=len(pts))
    it = Interpolator(pts, vals, k=5)
    out, _ = it.query(pts)
    np.testing.assert_array_equal(out, vals)


def test_interpolator_reproduces_constants_and_bounds():
    pts = grid_points(DA, 2, 4)
    it = Interpolator(pts, np.full(len(pts), 3.5), k=5)
    q = np.random.default_rng(3).dirichlet(np.ones(4), size=20)
    np.testing.assert_array_equal(it.query(q)[0], 3.5)
    vals = np.random.default_rng(4).uniform(size=len(pts))
    v, _ = Interpolator(pts, vals, k=5).query(q)
    assert v.min() >= vals.min() and v.max() <= vals.max()


def test_interpolator_gradient_finite_difference():
    pts = grid_points(DA, 2, 5)
    vals = np.random.default_rng(5).normal(size=len(pts))
    it = Interpolator(pts, vals, k=5)
    q = np.array([[0.31, 0.27, 0.23, 0.19]])
    _, g = it.query(q, grad=True)
    eps = 1e-7
    for i in range(4):
        e = np.zeros_like(q)
        e[0, i] = eps
        fd = (it.query(q + e)[0] - it.query(q - e)[0]) / (2 * eps)
        assert fd[0] == pytest.approx(g[0, i], rel=1e-4, abs=1e-6)


def test_extended_is_homogeneous():
    pts = grid_points(DA, 2, 5)
    it = Interpolator(pts, np.random.default_rng(6).normal(size=len(pts)), k=5)
    P = np.random.default_rng(7).uniform(size=(2, 3, 4))
    a, _ = it.extended(P)
    b, _ = it.extended(0.37 * P)
    np.testing.assert_allclose(b, 0.37 * a, rtol=1e-12)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("CIBGAMES_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("CIBGAMES_THREADS", "junk")
    assert worker_count() == 1


def _surrogate_setup(seed, k=5):
    rng = np.random.default_rng(seed)
    pts = grid_points(DA, 2, 4)
    it = Interpolator(pts, rng.uniform(0, 50, size=len(pts)), k=min(k, len(pts)))
    sur = StageSurrogate(DA, 1, it)
    lay1, lay2 = TeamLayout(DA, 1), TeamLayout(DA, 2)
    pi = rng.dirichlet(np.ones(4), size=1)
    return rng, sur, lay1, lay2, pi


def test_surrogate_matches_direct_formula():
    rng, sur, lay1, lay2, pi = _surrogate_setup(8)
    th1, th2 = lay1.random(rng, 1), lay2.random(rng, 1)
    w, _, _ = sur.evaluate(pi, lay1.joint(th1), lay2.joint(th2))
    full = np.zeros(DA.n_cells)
    full[DA.live_cells()] = pi[0]
    g1, g2 = from_flat(DA, 1, 1, th1[0]), from_flat(DA, 2, 1, th2[0])
    J = extended_joint(DA, 1, full, g1, g2)[:, DA.live_cells()]
    cont, _ = sur.interp.extended(J[None])
    direct = stage_cost(DA, 1, Belief(1, full), g1, g2) + cont[0]
    assert w[0] == pytest.approx(direct, abs=1e-10)


@pytest.mark.parametrize("seed", [9, 11, 12, 13])
def test_surrogate_gradients_finite_difference(seed):
    # All nodes as neighbours: kNN ties on faces make the k=5 interpolant jump.
    rng, sur, lay1, lay2, pi = _surrogate_setup(seed, k=10**6)
    th1, th2 = lay1.random(rng, 1), lay2.random(rng, 1)

    def w(a, b):
        return sur.evaluate(pi, lay1.joint(a), lay2.joint(b))[0][0]

    _, d1, d2 = sur.evaluate(pi, lay1.joint(th1), lay2.joint(th2), grad1=True, grad2=True)
    g1, g2 = lay1.backprop(th1, d1)[0], lay2.backprop(th2, d2)[0]
    eps = 1e-6
    for i in range(lay1.dim):
        e = np.zeros_like(th1)
        e[0, i] = eps
        assert (w(th1 + e, th2) - w(th1 - e, th2)) / (2 * eps) == pytest.approx(g1[i], rel=1e-5, abs=1e-5)
    for i in range(lay2.dim):
        e = np.zeros_like(th2)
        e[0, i] = eps
        assert (w(th1, th2 + e) - w(th1, th2 - e)) / (2 * eps) == pytest.approx(g2[i], rel=1e-5, abs=1e-5)


def test_dual_weights_single_function():
    lam = dual_weights(np.array([[1.0]]), np.ones((1, 1, 3)), np.array([1.0]), 10)
    np.testing.assert_array_equal(lam, [[1.0]])


def test_minimize_max_solves_matrix_game():
    # min over p of max(p, 1 - p): matching pennies, value 0.5 at p = 0.5
    m = matrix_game([[1.0, 0.0], [0.0, 1.0]])
    lay = TeamLayout(m, 1)
    A = np.array([[1.0, 0.0], [0.0, 1.0]])

    def oracle(theta, idx):
        f = theta @ A
        G = np.broadcast_to(A.T[None], (len(theta), 2, 2)).copy()
        return f, G

    th0 = np.array([[0.9, 0.1], [0.2, 0.8], [1.0, 0.0]])
    res = minimize_max(oracle, lay, th0, np.ones((3, 1), dtype=bool), SearchSettings(eps_opt=1e-8))
    np.testing.assert_allclose(res.value, 0.5, atol=1e-6)
    np.testing.assert_allclose(res.theta, 0.5, atol=1e-5)


def test_minimize_max_freezes_inactive_rows():
    lay = TeamLayout(DA, 1)
    rng = np.random.default_rng(10)
    C = rng.normal(size=(1, 2, lay.dim))

    def oracle(theta, idx):
        return theta @ C[0].T, np.broadcast_to(C, (len(theta), 2, lay.dim)).copy()

    th0 = lay.random(rng, 1)
    active = np.array([[True, False, False, True, True]])
    res = minimize_max(oracle, lay, th0, active, SearchSettings())
    for r, (_, _, o, na) in enumerate(lay.rows):
        if not active[0, r]:
            np.testing.assert_allclose(res.theta[0, o : o + na], th0[0, o : o + na], rtol=0, atol=1e-15)
    assert res.value[0] <= (th0 @ C[0].T).max() + 1e-12
