from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gpsdrf.dataset import Dataset  # noqa: E402

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


def make_dataset(rng: np.random.Generator, n: int, p: int, confound: float = 1.0,
                 noise: float = 1.0, slope: float = 1.5) -> Dataset:
    """Small confounded dataset: T linear in Z, Y linear in T and Z."""
    z = rng.normal(size=(n, p))
    a = rng.uniform(0.5, 1.5, size=p) * rng.choice([-1, 1], size=p)
    t = 0.3 + z @ a * confound + rng.normal(size=n)
    y = 1.0 + slope * t + z @ (0.5 * a) + noise * rng.normal(size=n)
    return Dataset(y=y, t=t, z=z)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small(rng):
    return make_dataset(rng, 60, 3)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {num}: {detail}")
