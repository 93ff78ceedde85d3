import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cibgames.model import (
    BUILTIN_NAMES,
    GameFileError,
    GameValidationError,
    builtin_example,
    check_one_sided,
    dumps,
    kernel_row,
    load_game,
    make_model,
    matrix_game,
    models_equal,
    parse_game,
    random_game,
    serialize,
    validate,
)


def da_without_u2(model):
    """Defender/attacker variant whose increments drop the attacker's action."""
    names = sorted({z.rsplit("|", 1)[0] for z in model.common_increments})
    merge = np.zeros((model.n_increments, len(names)))
    for i, z in enumerate(model.common_increments):
        merge[i, names.index(z.rsplit("|", 1)[0])] = 1.0
    K = model.kernel(1) @ merge
    return make_model(
        horizon=model.horizon,
        discount=model.discount,
        states=model.states,
        actions=model.actions,
        private_info=model.private_info,
        common_increments=names,
        kernel=K,
        cost=model.costs[0],
        initial_belief=model.initial_belief,
        cib_control="both",
    )


def test_da_dimensions(da):
    assert da.n_states == 4
    assert da.action_sizes(1) == (2, 2)
    assert da.action_sizes(2) == (3,)
    assert da.horizon == 15
    assert da.discount == 0.9
    np.testing.assert_array_equal(da.initial_belief.reshape(da.cell_shape).sum(axis=(1, 2)), [0.5, 0.5, 0, 0])


def test_da_file_round_trip(da):
    loaded = load_game(dumps(da))
    assert models_equal(loaded, da)
    assert loaded.n_states == 4 and loaded.horizon == 15


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtins_validate(name):
    assert validate(builtin_example(name)) == []


def test_unknown_builtin():
    with pytest.raises(ValueError, match="unknown builtin"):
        builtin_example("chess")


def test_da_kernel_mu_row(da):
    row = kernel_row(da, 1, 0, (0, 0), 0, (0, 0), 2)
    np.testing.assert_allclose(row.sum(axis=(1, 2, 3)), [0.7, 0.0, 0.3, 0.0])


@pytest.mark.parametrize("u1", range(4))
@pytest.mark.parametrize("u2", range(3))
def test_da_kernel_passive_row(da, u1, u2):
    row = kernel_row(da, 3, 2, 2, 0, u1, u2)
    np.testing.assert_allclose(row.sum(axis=(1, 2, 3)), [0.15, 0.15, 0.7, 0.0])


def test_da_costs(da):
    mu = 2
    alpha_defend = da.joint_action(1, (0, 0))
    beta_defend = da.joint_action(1, (0, 1))
    assert da.cost(1)[0, alpha_defend, mu] == 10
    assert da.cost(1)[0, beta_defend, mu] == 20
    assert da.cost(3)[0, alpha_defend, mu] == pytest.approx(10 * 0.81)


def test_kernel_row_is_a_copy(da):
    row = kernel_row(da, 1, 0, 0, 0, 0, 0)
    row[...] = 7.0
    assert kernel_row(da, 1, 0, 0, 0, 0, 0).max() <= 1.0


def test_kernel_row_range_errors(da):
    with pytest.raises(IndexError):
        kernel_row(da, 1, 4, 0, 0, 0, 0)
    with pytest.raises(IndexError):
        kernel_row(da, 16, 0, 0, 0, 0, 0)


def test_kernel_rows_sum_to_one(da):
    rng = np.random.default_rng(3)
    for _ in range(100):
        t = int(rng.integers(1, 16))
        x, p1, u1, u2 = (int(rng.integers(n)) for n in (4, 4, 4, 3))
        assert kernel_row(da, t, x, p1, 0, u1, u2).sum() == pytest.approx(1.0, abs=1e-12)


def test_deterministic_row_is_point_mass():
    m = matrix_game([[1.0, 0.0], [0.0, 1.0]])
    row = kernel_row(m, 1, 0, 0, 0, 1, 0)
    assert row.max() == 1.0 and np.count_nonzero(row) == 1


def test_one_sided_holds_for_da(da):
    assert check_one_sided(da).holds


def informed_team2_game():
    """One state, Team 2 privately sees a static type."""
    K = np.zeros((2, 1, 2, 2, 2))
    for q in range(2):
        for u2 in range(2):
            K[q, 0, u2, q, u2] = 1.0
    return make_model(
        horizon=1,
        discount=1.0,
        states=("s",),
        actions=((("a",),), (("b0", "b1"),)),
        private_info=((("none",),), (("q0", "q1"),)),
        common_increments=("b0", "b1"),
        kernel=K,
        cost=np.zeros((1, 1, 2)),
        initial_belief=[0.5, 0.5],
    )


def test_one_sided_fails_with_team2_private_info():
    model = informed_team2_game()
    assert validate(model) == []
    diag = check_one_sided(model)
    assert not diag.holds
    assert diag.witness == (2, 1)


def test_one_sided_fails_on_merged_u2(da):
    merged = da_without_u2(da)
    assert validate(merged) == []
    diag = check_one_sided(merged)
    assert not diag.holds
    z, pair = diag.witness
    assert z in merged.common_increments
    assert len(set(pair)) == 2


def test_declared_team1_only_must_hold(da):
    doc = serialize(da_without_u2(da))
    doc["cib_control"] = "team1_only"
    with pytest.raises(GameValidationError) as err:
        load_game(json.dumps(doc))
    assert any("one-sided" in v for v in err.value.violations)


def _tweak_first_prob(doc, factor):
    node = doc["kernel"]
    while isinstance(node, dict):
        key = next(iter(node))
        if not isinstance(node[key], dict):
            node[key] = node[key] * factor
            return
        node = node[key]


def test_row_sum_violation_names_row():
    doc = serialize(matrix_game([[0.0, 1.0], [1.0, 0.0]]))
    _tweak_first_prob(doc, 0.99)
    with pytest.raises(GameValidationError) as err:
        load_game(json.dumps(doc))
    assert len(err.value.violations) == 1
    msg = err.value.violations[0]
    assert "kernel[t=1][x=s, p1=none, p2=none, u1=a0, u2=b0]" in msg and "row sums" in msg


def test_negative_entry_reported():
    m = matrix_game([[0.0, 1.0], [1.0, 0.0]])
    K = m.kernel(1).copy()
    K[0, 0, 0, 0, 0] = -0.1
    K[0, 0, 0, 0, 1] = 1.1
    bad = make_model(
        horizon=1,
        discount=1.0,
        states=m.states,
        actions=m.actions,
        private_info=m.private_info,
        common_increments=m.common_increments,
        kernel=K,
        cost=m.costs[0],
        initial_belief=m.initial_belief,
    )
    problems = validate(bad)
    assert len(problems) == 1 and "negative probability" in problems[0]


def test_every_violation_reported():
    m = matrix_game([[0.0]])
    bad = make_model(
        horizon=1,
        discount=1.0,
        states=m.states,
        actions=m.actions,
        private_info=m.private_info,
        common_increments=m.common_increments,
        kernel=m.kernel(1) * 0.5,
        cost=m.costs[0],
        initial_belief=m.initial_belief * 2,
    )
    problems = validate(bad)
    assert len(problems) == 2
    assert any(p.startswith("kernel") for p in problems)
    assert any(p.startswith("initial_belief") for p in problems)


def test_negative_costs_allowed():
    assert validate(matrix_game([[-3.0, 1.0], [2.0, -0.5]])) == []


def test_degenerate_game_loads():
    m = load_game(dumps(matrix_game([[0.0]])))
    assert m.n_states == 1 and m.n_joint_actions(1) == 1


def test_parse_error_has_locus():
    with pytest.raises(GameFileError, match="line 2"):
        parse_game('{"horizon": 1,\n oops}')


def test_unknown_symbol_named(da):
    doc = serialize(da)
    doc["initial_belief"] = {"q": {"l_a": {"none": 1.0}}}
    with pytest.raises(GameFileError, match="unknown state 'q'"):
        parse_game(json.dumps(doc))


def test_missing_field():
    with pytest.raises(GameFileError, match="horizon"):
        parse_game("{}")


def test_serialize_preserves_key_order(da):
    doc = json.loads(dumps(da), object_pairs_hook=list)
    keys = [k for k, _ in doc]
    assert keys[:4] == ["horizon", "discount", "states", "players"]


def test_truncated(da):
    short = da.truncated(2)
    assert short.horizon == 2 and validate(short) == []
    np.testing.assert_array_equal(short.kernel(2), da.kernel(2))


@settings(max_examples=20)
@given(st.integers(0, 10**6))
def test_random_games_valid_and_round_trip(seed):
    g = random_game(np.random.default_rng(seed))
    assert validate(g) == []
    assert check_one_sided(g).holds
    assert models_equal(load_game(dumps(g)), g)
