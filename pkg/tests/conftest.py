import random
import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kleptolab.curve import SECP256K1, TOY  # noqa: E402
from kleptolab.ecdsa import keygen  # noqa: E402
from kleptolab.kleptogram import make_setup  # noqa: E402


@pytest.fixture
def toy():
    return TOY


@pytest.fixture
def secp():
    return SECP256K1


@pytest.fixture(params=["toy", "secp256k1"])
def curve(request):
    return TOY if request.param == "toy" else SECP256K1


@pytest.fixture
def rng():
    return random.Random(0x5EED)


@pytest.fixture
def attack_world(curve, rng):
    """(params, victim, attacker, setup) on either curve."""
    victim = keygen(curve, rng)
    attacker = keygen(curve, rng)
    # default constants are non-degenerate unless the attacker key is tiny
    while attacker.d in (1, curve.n - 1):
        attacker = keygen(curve, rng)
    return curve, victim, attacker, make_setup(attacker.Q, curve, rng)


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """``criterion(number, ok, detail)`` records one acceptance line, then asserts."""

    def report(number, ok, detail):
        _ACCEPTANCE[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        assert ok, detail

    return report


def pytest_runtest_logreport(report):
    # a criterion that raised before reporting still gets its FAIL line
    m = re.search(r"test_criterion_(\d+)_", report.nodeid)
    if m and report.failed and int(m.group(1)) not in _ACCEPTANCE:
        _ACCEPTANCE[int(m.group(1))] = f"criterion {m.group(1)}: FAIL  error in {report.when}"


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
