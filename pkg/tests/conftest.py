import numpy as np
import pandas as pd
import pytest

from treedhazards.data import CATEGORICAL, CONTINUOUS, SurvivalDataset


def make_dataset(X, kinds=None, times=None, status=None, labels=None, names=None, seed=0):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    rng = np.random.default_rng(seed)
    kinds = kinds or (CONTINUOUS,) * p
    if labels is None:
        labels = tuple(None if k == CONTINUOUS else tuple(str(i) for i in range(int(X[:, j].max()) + 1))
                       for j, k in enumerate(kinds))
    names = names or tuple(f"x{j + 1}" for j in range(p))
    times = rng.exponential(1.0, n) if times is None else times
    status = np.ones(n, dtype=int) if status is None else status
    return SurvivalDataset(times, status, X, names, kinds, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_group_data():
    """400 rows; x1 < 0.5 has rate 1, otherwise rate 5; x2 is noise."""
    r = np.random.default_rng(1)
    n = 400
    x1 = r.uniform(0, 1, n)
    x2 = r.integers(0, 2, n)
    y = np.where(x1 < 0.5, r.exponential(1.0, n), r.exponential(0.2, n))
    return SurvivalDataset(y, np.ones(n, int), np.column_stack([x1, x2]), ("x1", "x2"),
                           (CONTINUOUS, CATEGORICAL), (None, ("a", "b")))


def pbc_frame(seed=3, n=276):
    """String-typed frame with the liver-study columns: 276 complete cases, 60% censored."""
    r = np.random.default_rng(seed)
    status = np.zeros(n, int)
    status[r.choice(n, round(n * 110 / 276), replace=False)] = 1
    return pd.DataFrame({
        "time": r.uniform(40, 4500, n).round(0).astype(str), "status": status.astype(str),
        "trt": r.choice(["1", "2"], n), "age": r.uniform(26, 78, n).astype(str),
        "sex": r.choice(["m", "f"], n), "edema": r.choice(["0", "0.5", "1"], n),
        "bili": r.uniform(0.3, 28, n).astype(str), "albumin": r.uniform(2, 4.6, n).astype(str),
        "protime": r.uniform(9, 17, n).astype(str)})


# Acceptance results, printed as one line per criterion at the end of the run.
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(cid, ok, detail):
        line = f"{cid} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE[cid] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
            terminalreporter.write_line(ACCEPTANCE[cid])
