from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hdtrack.bench import textured_image

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def texture255() -> np.ndarray:
    return textured_image(255, seed=7)


@pytest.fixture(scope="session")
def texture127() -> np.ndarray:
    return textured_image(127, seed=11)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance_report(capsys):
    """Record and print a one-line verdict for an acceptance criterion."""

    def report(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (ok, detail)
        with capsys.disabled():
            print(f"\n[acceptance] criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
