import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hiphome import ChannelDomain, ProblemData, VelocityProfile, compute_correctors  # noqa: E402

# acceptance criterion number -> (title, [(part, passed, detail), ...])
ACCEPTANCE: dict = {}


def record(number: int, title: str, part: str, passed: bool, detail: str) -> None:
    """Register one measured part of an acceptance criterion for the summary."""
    ACCEPTANCE.setdefault(number, (title, []))[1].append((part, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, parts = ACCEPTANCE[number]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        details = "; ".join(f"{part}: {detail}{'' if ok else ' [fail]'}" for part, ok, detail in parts)
        terminalreporter.write_line(f"{number:>2} {verdict}  {title}  ({details})")


@pytest.fixture(scope="session")
def channel():
    return ChannelDomain(2.0, 0.2, 0.2)


@pytest.fixture(scope="session")
def poiseuille():
    return VelocityProfile.poiseuille(10.0, 0.2)


@pytest.fixture(scope="session")
def loglaw():
    return VelocityProfile.loglaw(0.2)


@pytest.fixture(scope="session")
def steady_problem():
    return ProblemData(1.0, 0.2, reaction=1.0, forcing=0.0, inlet=1.0)


@pytest.fixture(scope="session")
def poiseuille_correctors(channel, poiseuille):
    return compute_correctors(poiseuille, channel, 1.0, 9)


@pytest.fixture(scope="session")
def loglaw_correctors(channel, loglaw):
    return compute_correctors(loglaw, channel, 1.0, 11)
