import json

import hypothesis
import numpy as np
import pytest

from cibgames.model import coin_signal, defender_attacker, random_game, zero_game

hypothesis.settings.register_profile("default", deadline=None, max_examples=40)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=8)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def da():
    return defender_attacker()


@pytest.fixture(scope="session")
def da2():
    return defender_attacker(horizon=2)


@pytest.fixture(scope="session")
def zero():
    return zero_game()


@pytest.fixture(scope="session")
def coin():
    return coin_signal()


def random_games(seed, n, **kw):
    rng = np.random.default_rng(seed)
    return [random_game(rng, **kw) for _ in range(n)]


def declared_both(model):
    """Copy of ``model`` declared with a two-sided belief update."""
    from cibgames.model import load_game, serialize

    doc = serialize(model)
    doc["cib_control"] = "both"
    return load_game(json.dumps(doc))


# -- acceptance reporting -------------------------------------------------------

ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.skipped:
        return
    if rep.when == "call" or rep.failed:
        detail = dict(item.user_properties).get("detail", "")
        ACCEPTANCE[mark.args[0]] = (rep.passed and rep.when == "call", detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line("criterion %2d: %s  %s" % (n, "PASS" if ok else "FAIL", detail))
