import numpy as np
import pytest

from cyclonesim import dae
from cyclonesim.kinetics import load_reactions
from cyclonesim.scenario import PRESETS, build_system, preset_scenario
from cyclonesim.thermo import default_database

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def db():
    return default_database()


@pytest.fixture(scope="session")
def reactions(db):
    return load_reactions(db=db)


@pytest.fixture(scope="session")
def configs():
    return {name: preset_scenario(name) for name in PRESETS}


@pytest.fixture(scope="session")
def systems(configs):
    return {name: build_system(cfg) for name, cfg in configs.items()}


@pytest.fixture(scope="session")
def steady(systems):
    return {name: dae.steady_state(s) for name, s in systems.items()}


class _Runs(dict):
    """50 h preset simulations, run on first use and shared."""

    def __init__(self, configs, systems):
        super().__init__()
        self.configs = configs
        self.systems = systems

    def __missing__(self, name):
        cfg = self.configs[name]
        res = dae.simulate(self.systems[name], cfg.output.t_end, cfg.output.grid())
        self[name] = res
        return res


@pytest.fixture(scope="session")
def runs(configs, systems):
    return _Runs(configs, systems)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
