from __future__ import annotations

import pytest
from hypothesis import settings

from lorenz_cocycles.config import ExperimentConfig
from lorenz_cocycles.experiment import build_objects

settings.register_profile("pkg", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("pkg")


@pytest.fixture(scope="session")
def cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def built(cfg):
    return build_objects(cfg)


@pytest.fixture(scope="session")
def system(built):
    return built.system


@pytest.fixture(scope="session")
def scheme(built):
    return built.scheme


@pytest.fixture(scope="session")
def density(built):
    return built.density


@pytest.fixture(scope="session")
def induced(built):
    return built.induced


@pytest.fixture(scope="session")
def orbit_source(built):
    return built.orbit_source()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
