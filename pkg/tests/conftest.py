import pathlib

import numpy as np
import pytest

from lips.geometry import fixture_geometry

TESTS = pathlib.Path(__file__).parent
GOLDEN = TESTS / "golden"
CORPUS = TESTS / "corpus"

_acceptance = []


@pytest.fixture(scope="session")
def geom():
    return fixture_geometry()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_poses(geom, n, rng):
    (plo, phi), (tlo, thi) = geom.chi_limits
    return np.stack([rng.uniform(plo, phi, n), rng.uniform(tlo, thi, n)], axis=-1)


def grid_poses(geom, n=41):
    (plo, phi), (tlo, thi) = geom.chi_limits
    a, b = np.meshgrid(np.linspace(plo, phi, n), np.linspace(tlo, thi, n), indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=-1)


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _acceptance.append((props["criterion"], report.outcome, props.get("measured", "")))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, measured in sorted(_acceptance, key=lambda r: int(r[0].split()[0])):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {name}: {measured}")
