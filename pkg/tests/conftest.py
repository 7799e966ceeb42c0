import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from v2rgame import game as gm
from v2rgame import linkstate, mac, traffic

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

MAC_A = mac.MacParameters(cw_min=32, m=5, M=7, T_s=40, T_o=10, T_c=6)
MAC_B = mac.MacParameters(cw_min=16, m=6, M=7, T_s=40, T_o=12, T_c=7)
CLASSES = [traffic.VehicleClass(0.003, 5, 8000, 0.1), traffic.VehicleClass(0.002, 5, 4000, 0.3)]
D = 1200.0


def region_probs():
    return linkstate.region_probabilities(linkstate.RegionModel((1200, 600), [1.0, 1.0], D))


def channels3():
    return [gm.ChannelSpec(MAC_A, [[220, 440], [200, 400]], "A"),
            gm.ChannelSpec(MAC_B, [[500, 1000], [450, 900]], "B"),
            gm.ChannelSpec(MAC_A, [[400, 800], [50, 100]], "C")]


def make_game(L=3, masked=True, masses=(6, 4), **kw):
    chans = channels3()[:L]
    if masked:
        avail = [[1, 1, 0], [0, 1, 1]] if L == 3 else [[1, 1], [0, 1]]
    else:
        avail = None
    return gm.PopulationGame.build(CLASSES, D, np.asarray(masses, float), chans,
                                   region_probs(), avail, **kw)


@pytest.fixture(scope="session")
def ref_game():
    """Two classes, three channels, classes share only channel B."""
    return make_game(3, True)


@pytest.fixture(scope="session")
def ref_game_l2():
    return make_game(2, True)


@pytest.fixture(scope="session")
def full_game():
    """Two classes on three channels with every channel available."""
    return make_game(3, False)


def interior_state(game, rng, floor=0.05):
    """Random state with every available entry at least ``floor`` of its class mass."""
    x = gm.GameState.random(game.masses, game.available, rng).x
    k = game.available.sum(axis=1, keepdims=True)
    x = game.available * (floor * game.masses[:, None] / k + (1 - floor) * x)
    return gm.GameState(x, game.masses, game.available)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, elapsed, why in sorted(mod.RESULTS, key=lambda r: r[0]):
        line = f"{'PASS' if ok else 'FAIL'} {number:>2} {title} [{elapsed:.1f} s]"
        terminalreporter.write_line(line + (f": {why}" if why else ""))
