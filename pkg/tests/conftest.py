import time

import numpy as np
import pytest

from heatsep.lmi import max_h
from heatsep.modal import ModalSystem, PlantParams, build_modal_system
from heatsep.sim import SimConfig, lyapunov_trace, simulate_closed_loop
from heatsep.synthesis import synthesize

Q_DEMO, SIGMA_DEMO, N_DEMO, Q_LMI_DEMO = 0.1, 0.2, 3, 0.08


@pytest.fixture(scope="session")
def demo_params():
    return PlantParams(Q_DEMO, SIGMA_DEMO)


@pytest.fixture(scope="session")
def demo_system(demo_params):
    return build_modal_system(demo_params, N_DEMO)


@pytest.fixture(scope="session")
def demo_design(demo_params):
    rep = synthesize(demo_params, N_DEMO)
    assert rep.feasible
    return rep.result


@pytest.fixture(scope="session")
def demo_lmi_system():
    return ModalSystem.from_reaction(Q_LMI_DEMO, N_DEMO)


@pytest.fixture(scope="session")
def demo_sampling_bound(demo_lmi_system, demo_design):
    r = demo_design
    return max_h(demo_lmi_system, r.K, r.L, r.X, r.Y, r.gamma, SIGMA_DEMO, 0.5, 1e-3)


SIM_WALL_TIMES = {}
ACCEPTANCE_LINES = []


def _run(system, design, h):
    t0 = time.perf_counter()
    tr = simulate_closed_loop(system, design, SimConfig(h=h, snapshot_times=(0.0, 1.0, 5.0)))
    SIM_WALL_TIMES[h] = time.perf_counter() - t0
    lyapunov_trace(tr, design.X, design.Y, design.gamma)
    return tr


@pytest.fixture(scope="session")
def sim_wall_times():
    return SIM_WALL_TIMES


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def trace_continuous(demo_system, demo_design):
    return _run(demo_system, demo_design, 0.0)


@pytest.fixture(scope="session")
def trace_sampled(demo_system, demo_design):
    return _run(demo_system, demo_design, 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def cli_max_h_result():
    import json

    from heatsep import cli

    params = cli.resolve("max-h", dict(q=Q_DEMO, q_lmi=Q_LMI_DEMO, sigma=SIGMA_DEMO, N=N_DEMO,
                                       tol=1e-3), {})
    t0 = time.perf_counter()
    text = cli.execute("max-h", params, None, False)
    return json.loads(text), time.perf_counter() - t0
