import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from discrete_precoding.network_model import NetworkRealization, ScenarioParams, draw_channels, place_scenario

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion n")
    config._criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    item.config._criteria.append((mark.args[0], mark.args[1], rep.passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = sorted(config._criteria)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for n, text, ok, detail in rows:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


def scalar_net(h, noise=1.0, power=10.0, weights=1.0):
    """Single-antenna network; ``h[i][j]`` is the gain from BS j to user i."""
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    I = h.shape[0]
    H = h.reshape(I, 1, I, 1, 1)
    return NetworkRealization(H, np.full((I, 1), noise), np.broadcast_to(power, (I,)),
                              np.broadcast_to(weights, (I, 1)), 1)


def desk_network(seed, tx_power_dbm=21.0, **kw):
    params = ScenarioParams(tx_power_dbm=tx_power_dbm, **kw)
    rng = np.random.default_rng(seed)
    return draw_channels(place_scenario(params, rng), params, rng)


def random_network(rng, I=2, K=2, N=2, M=2, d=1, snr_db=10.0):
    """Small network with unit noise and i.i.d. complex Gaussian channels."""
    g = rng.standard_normal((I, K, I, N, M, 2))
    H = (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)
    power = 10.0 ** (snr_db / 10.0) * (0.5 + rng.random(I))
    return NetworkRealization(H, np.ones((I, K)), power, np.ones((I, K)), d)


@pytest.fixture
def siso():
    return scalar_net([[1.0]])
