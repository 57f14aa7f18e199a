import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from iabsim.channel import LinkDraws
from iabsim.network import Network
from iabsim.scenario import Layout, Scenario, realize

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_network(mode="distributed", seed=3, num_users=25, num_uavs=4, kind="multi_cluster", **kw):
    sc = Scenario(num_users=num_users, num_uavs=num_uavs, layout=Layout(kind=kind), **kw)
    sc = realize(sc, np.random.default_rng(seed))
    draws = LinkDraws.generate(seed, sc.num_users, sc.num_uavs, sc.channel.num_paths)
    return Network(sc, draws, mode)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def net_distributed():
    return make_network("distributed")


@pytest.fixture
def net_daa():
    return make_network("daa")


def random_complex(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def pytest_terminal_summary(terminalreporter):
    import sys

    report = sys.modules.get("acceptance_report")
    if report is None or not report.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(report.LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
