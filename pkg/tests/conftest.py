import json
from pathlib import Path

import pytest

from mesure.device import DeviceProfile, NoiseModel, SimulatedCard, load_profile
from mesure.suite import Suite, TestCaseSpec, load_suite
from mesure.transport import VirtualChannel

ROOT = Path(__file__).resolve().parent.parent
DEMO = ROOT / "demo"
DATA = Path(__file__).resolve().parent / "data"

_acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def demo_profile():
    return load_profile(DEMO / "profile.json")


@pytest.fixture
def demo_suite():
    return load_suite(DEMO / "suite.json")


@pytest.fixture
def small_suite():
    return Suite([
        TestCaseSpec("Emptyloop", 0x01, reference_id="Emptyloop"),
        TestCaseSpec("sspush", 0x02),
        TestCaseSpec("sadd", 0x03, auxiliaries=("sspush", "sspush")),
    ])


def make_profile(noise=None, seed=1, **latencies):
    return DeviceProfile(
        name="test",
        op_latencies=latencies or {"sspush": 3000, "sadd": 10000},
        exchange_overhead=1_000_000,
        per_iteration_overhead=500,
        noise=noise or NoiseModel(),
        rng_seed=seed,
    )


@pytest.fixture
def virtual_channel(small_suite):
    def factory(noise=None, seed=1, profile=None, suite=None):
        prof = profile or make_profile(noise, seed)
        return VirtualChannel(SimulatedCard(prof, suite or small_suite))
    return factory


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc))
    return path
