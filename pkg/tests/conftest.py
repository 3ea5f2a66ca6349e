from pathlib import Path

import numpy as np
import pytest

from drauc.data import LabeledDataset

DATA_DIR = Path(__file__).parent / "data"
HEART_CSV = DATA_DIR / "statlog_heart.csv"


def gaussian_ds(seed, n_pos=5, n_neg=5, d=3, gap=0.7):
    """Two Gaussian clouds centred at +gap and -gap on every axis."""
    rng = np.random.default_rng(seed)
    X = np.r_[rng.normal(gap, 1.0, (n_pos, d)), rng.normal(-gap, 1.0, (n_neg, d))]
    y = np.r_[np.ones(n_pos), -np.ones(n_neg)]
    return LabeledDataset(X, y)


def brute_auc(pos, neg, tie):
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else (tie if p == q else 0.0)
    return total / (len(pos) * len(neg))


@pytest.fixture
def small_ds():
    return gaussian_ds(0)


@pytest.fixture
def heart_csv():
    return HEART_CSV


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
