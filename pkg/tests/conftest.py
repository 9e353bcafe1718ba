import functools

import pytest
from hypothesis import settings

from coordreg.scenario import SimConfig, preset
from coordreg.sim import assemble_closed_loop, integrate
from coordreg.synthesis import synthesize

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

PRESET_GRAPHS = [
    [[0, 0, 0, 0], [1, 0, 1, 0], [0, 1, 0, 0], [0, 0, 1, 0]],
    [[0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 1], [0, 0, 1, 0]],
    [[0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]],
    [[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]],
]


@functools.lru_cache(maxsize=None)
def design_for(name: str):
    sc = preset(name)
    return sc, synthesize(sc)


@functools.lru_cache(maxsize=None)
def run_preset(name: str, observer: str = "designed", horizon: float = 200.0, pinned: bool = False):
    """Cached closed-loop run of a preset at h = 1e-3."""
    from coordreg.graphs import SwitchingSchedule

    sc, design = design_for(name)
    system = assemble_closed_loop(sc, design, observer=observer)
    schedule = SwitchingSchedule(((1, 1.0),), periodic=True) if pinned else sc.schedule
    return system, integrate(system, schedule, SimConfig(h=1e-3, horizon=horizon, record_stride=10))


@pytest.fixture(scope="session")
def preset_graphs():
    return PRESET_GRAPHS


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
