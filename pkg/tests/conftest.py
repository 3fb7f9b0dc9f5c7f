import os
from pathlib import Path

import numpy as np
import pytest

from boostforest.data import Dataset, load_seeds

SEEDS_ENV = "BOOSTFOREST_SEEDS_PATH"
SEEDS_DEFAULT = Path(__file__).parent / "data" / "seeds_dataset.txt"


def seeds_path():
    """Location of the UCI seeds file, or None when it is not available."""
    p = os.environ.get(SEEDS_ENV)
    if p:
        return Path(p)
    return SEEDS_DEFAULT if SEEDS_DEFAULT.is_file() else None


def load_seeds_or_fail():
    p = seeds_path()
    if p is None or not p.is_file():
        pytest.fail(
            f"seeds dataset unavailable: set {SEEDS_ENV} or place seeds_dataset.txt "
            f"in tests/data (UCI 'seeds' file, 210 rows x 8 columns)"
        )
    return load_seeds(p)


def friedman(n=300, seed=0, noise=0.3, d=6):
    """Friedman #1 regression data on [0, 1]^d."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, d))
    y = (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
         + 10 * X[:, 3] + 5 * X[:, 4] + noise * rng.normal(size=n))
    y = (y - y.mean()) / y.std()
    return Dataset(X, y, "regression", tuple(f"x{i}" for i in range(d)))


def blobs(n=240, seed=0, n_classes=3, d=4):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.2, 0.8, size=(n_classes, d))
    y = np.arange(n) % n_classes
    X = np.clip(centers[y] + 0.12 * rng.normal(size=(n, d)), 0, 1)
    task = "binary" if n_classes == 2 else "multiclass"
    return Dataset(X, y, task, tuple(f"x{i}" for i in range(d)), n_classes=n_classes)


@pytest.fixture
def reg_ds():
    return friedman()


@pytest.fixture
def bin_ds():
    return blobs(n_classes=2)


@pytest.fixture
def multi_ds():
    return blobs(n_classes=3)


ACCEPTANCE_LINES = []


def record_criterion(label: str, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
