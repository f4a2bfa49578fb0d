from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ivtrans import SurvivalDataset  # noqa: E402


def random_dataset(rng: np.random.Generator, n: int, p: int = 1, q: int | None = None,
                   ties: bool = False, censor: float = 0.3) -> SurvivalDataset:
    """Small dataset with covariate effects, optional tied times."""
    q = p if q is None else q
    W = rng.exponential(2.0, size=(n, q))
    Q = rng.uniform(0.5, 1.5, size=(q, p))
    X = W @ Q + rng.normal(size=(n, p)) * 0.5
    Z = X + rng.normal(size=(n, p)) * 0.5
    times = rng.exponential(1.0, n) * np.exp(-0.3 * X.sum(axis=1))
    if ties:
        times = np.ceil(times * 4) / 4
    status = (rng.random(n) > censor).astype(int)
    status[rng.integers(n)] = 1
    return SurvivalDataset(times, status, Z, W)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
