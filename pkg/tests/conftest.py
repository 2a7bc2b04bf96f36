import numpy as np
import pytest

from turbmit.optics import ApertureSpec, OpticalConfig
from turbmit.phase_screen import TurbulenceParams

# one line per acceptance criterion, printed at the end of the run
_CRITERIA: dict[str, tuple[bool, str]] = {}


def record_criterion(key: str, passed: bool, detail: str = "") -> None:
    _CRITERIA[key] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (len(k.split()[0]), k)):
        ok, detail = _CRITERIA[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {key}: {detail}")


@pytest.fixture(scope="session")
def desk_params():
    """Desk-scale path: 128-sample propagation grid, D/r0 = 2."""
    return TurbulenceParams(r0=0.1, crop_n=128, seed=0)


@pytest.fixture(scope="session")
def desk_optics():
    return OpticalConfig(ApertureSpec("circle", 0.2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
