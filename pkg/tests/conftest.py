from __future__ import annotations

import numpy as np
import pytest

from geosignature.landuse import Parcel


def square(pid: str, x: float, y: float, w: float, h: float | None = None, cls: int = 1, code: str = "R1") -> Parcel:
    h = w if h is None else h
    ring = [[x, y], [x + w, y], [x + w, y + h], [x, y + h], [x, y]]
    return Parcel.from_rings(pid, [ring], code, cls)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture
def record():
    def _record(criterion: int, passed: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} ({detail})"
        print(line)
        ACCEPTANCE.append((criterion, passed, detail))

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
