"""Simulated survival datasets with known truth.

Three designs are built in:

``tree-nonph``
    Six covariate branches with different Weibull (or piecewise-linear)
    event distributions, 5% censoring.
``cox-ph``
    Exponential proportional hazards ``h = exp(x beta) / 2`` with two
    covariates that do not enter the hazard, 8% censoring.
``biomarker``
    ``Weibull(1 + 2ab, 1 + 5b)`` with treatment ``a`` and biomarker ``b``,
    7.8% censoring.

``custom`` draws a homogeneous ``Weibull(scale, shape)`` sample with one
uninformative covariate.  Censoring is independent and exponential, with
its rate calibrated on a fixed pilot sample so the expected censored
fraction equals the target.  All weibulls use (scale, shape) order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import pandas as pd

from .data import CATEGORICAL, CONTINUOUS, SurvivalDataset
from .errors import ConfigError

SCENARIOS = ("tree-nonph", "cox-ph", "biomarker", "custom")
DEFAULT_CENSORING = {"tree-nonph": 0.05, "cox-ph": 0.08, "biomarker": 0.078, "custom": 0.05}

PILOT_DRAWS = 1_000_000
PILOT_SEED = 20_240_601

# Survival function of G: linear between these knots.
G_TIMES = (0.0, 1.0, 2.0, 5.0, 8.0)
G_SURV = (1.0, 0.7, 0.6, 0.1, 0.0)

# Branch table of the tree-nonph design: (scale, shape), None for G.
TREE_BRANCHES = {
    0: (5.0, 2.0),   # x1 > 5, x2 in {A, B}
    1: (1.0, 5.0),   # x1 <= 5, x2 = A
    2: (0.5, 0.9),   # x1 <= 5, x2 = B
    3: (5.0, 5.0),   # x1 <= 3, x2 in {C, D}
    4: (0.5, 0.5),   # 3 < x1 <= 7, x2 in {C, D}
    5: None,         # x1 > 7, x2 in {C, D}
}

COX_BETA = np.array([-1.0, 1.0, 2.0, 0.0, 0.0, -2.0])


@dataclass(frozen=True)
class SimSpec:
    scenario: str
    n: int
    censoring: float | None = None
    seed: int = 0
    params: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("n must be a positive integer")
        if not 0.0 <= self.target_censoring < 1.0:
            raise ConfigError("censoring proportion must lie in [0, 1)")

    @property
    def target_censoring(self) -> float:
        return DEFAULT_CENSORING[self.scenario] if self.censoring is None else float(self.censoring)


@dataclass(frozen=True, eq=False)
class Simulation:
    """A simulated dataset and its per-row truth table."""

    data: SurvivalDataset
    truth: pd.DataFrame
    spec: SimSpec
    censor_rate: float

    def true_survival(self, rows, t) -> np.ndarray:
        """Average true survival of ``rows`` at raw times ``t``."""
        tr = self.truth.iloc[np.asarray(rows)]
        t = np.asarray(t, dtype=float)
        return np.mean([_row_survival(r, t) for r in tr.itertuples(index=False)], axis=0)

    def write(self, data_path, truth_path) -> None:
        from .data import write_csv
        write_csv(self.data, data_path)
        self.truth.to_csv(truth_path, index=False, float_format="%.17g")


# -- primitive draws -----------------------------------------------------------

def _check_weibull(scale, shape):
    if np.any(np.asarray(scale) <= 0) or np.any(np.asarray(shape) <= 0):
        raise ValueError("Weibull scale and shape must be positive")


def weibull_from_uniform(u, scale, shape):
    """Inverse transform ``scale * (-log u)^(1/shape)``."""
    _check_weibull(scale, shape)
    return scale * (-np.log(u)) ** (1.0 / shape)


def weibull_sample(scale, shape, rng: np.random.Generator, size=None):
    """Weibull draws with the given scale and shape by inverse transform."""
    _check_weibull(scale, shape)
    u = rng.random(size if size is not None else np.broadcast(scale, shape).shape)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)  # log(0) guard
    out = weibull_from_uniform(u, scale, shape)
    return float(out) if np.ndim(out) == 0 else out


def weibull_survival(t, scale, shape):
    return np.exp(-(np.asarray(t, dtype=float) / scale) ** shape)


def g_survival(t):
    return np.interp(np.asarray(t, dtype=float), G_TIMES, G_SURV, right=0.0)


def g_sample(rng: np.random.Generator, size):
    u = rng.random(size)
    return np.interp(u, G_SURV[::-1], G_TIMES[::-1])


def _row_survival(r, t):
    if r.dist == "weibull":
        return weibull_survival(t, r.scale, r.shape)
    if r.dist == "exponential":
        return np.exp(-r.rate * t)
    if r.dist == "G":
        return g_survival(t)
    raise ValueError(f"unknown truth distribution {r.dist!r}")


# -- scenario event generators ---------------------------------------------------

def _tree_nonph_events(n, rng):
    x1 = rng.uniform(0.0, 10.0, n)
    x2 = rng.integers(0, 4, n)
    ab = x2 <= 1
    branch = np.where(ab, np.where(x1 > 5, 0, np.where(x2 == 0, 1, 2)),
                      np.where(x1 <= 3, 3, np.where(x1 <= 7, 4, 5)))
    scale = np.array([TREE_BRANCHES[b][0] if TREE_BRANCHES[b] else np.nan for b in range(6)])
    shape = np.array([TREE_BRANCHES[b][1] if TREE_BRANCHES[b] else np.nan for b in range(6)])
    u = rng.random(n)
    y = np.empty(n)
    w = branch != 5
    y[w] = weibull_from_uniform(np.maximum(u[w], np.nextafter(0.0, 1.0)), scale[branch[w]],
                                shape[branch[w]])
    y[~w] = np.interp(u[~w], G_SURV[::-1], G_TIMES[::-1])
    truth = pd.DataFrame({
        "branch": branch,
        "dist": np.where(w, "weibull", "G"),
        "scale": scale[branch], "shape": shape[branch], "rate": np.nan})
    X = np.column_stack([x1, x2])
    meta = (("x1", "x2"), (CONTINUOUS, CATEGORICAL), (None, ("A", "B", "C", "D")))
    return y, X, meta, truth


def _cox_events(n, rng):
    X = np.column_stack([rng.uniform(0.0, 1.0, (n, 5)), rng.integers(0, 2, n).astype(float)])
    rate = 0.5 * np.exp(X @ COX_BETA)
    y = rng.exponential(1.0, n) / rate
    truth = pd.DataFrame({"branch": -1, "dist": "exponential", "scale": np.nan,
                          "shape": np.nan, "rate": rate})
    meta = (tuple(f"x{j}" for j in range(1, 7)), (CONTINUOUS,) * 6, (None,) * 6)
    return y, X, meta, truth


def _biomarker_events(n, rng):
    a = rng.integers(0, 2, n).astype(float)
    b = rng.uniform(0.0, 1.0, n)
    scale = 1.0 + 2.0 * a * b
    shape = 1.0 + 5.0 * b
    y = weibull_sample(scale, shape, rng)
    truth = pd.DataFrame({"branch": a.astype(int), "dist": "weibull", "scale": scale,
                          "shape": shape, "rate": np.nan})
    meta = (("a", "b"), (CONTINUOUS, CONTINUOUS), (None, None))
    return y, np.column_stack([a, b]), meta, truth


def _custom_events(n, rng, scale=1.0, shape=1.0):
    x = rng.uniform(0.0, 1.0, n)
    y = weibull_sample(float(scale), float(shape), rng, size=n)
    truth = pd.DataFrame({"branch": 0, "dist": "weibull", "scale": float(scale),
                          "shape": float(shape), "rate": np.nan}, index=range(n))
    return y, x[:, None], (("x1",), (CONTINUOUS,), (None,)), truth


GENERATORS = {"tree-nonph": _tree_nonph_events, "cox-ph": _cox_events,
              "biomarker": _biomarker_events, "custom": _custom_events}


# -- censoring calibration ---------------------------------------------------------

def expected_censoring(rate: float, y) -> float:
    """Mean of P(C < y) = 1 - exp(-rate y) over the event times ``y``."""
    return float(np.mean(-np.expm1(-rate * np.asarray(y))))


@lru_cache(maxsize=32)
def calibrate_censor_rate(scenario: str, target: float, params: tuple = ()) -> float:
    """Exponential censoring rate whose expected censored fraction equals ``target``.

    Bisection on a fixed pilot of event times from the scenario.
    """
    if target == 0.0:
        return 0.0
    idx = SCENARIOS.index(scenario)
    rng = np.random.default_rng(np.random.SeedSequence([PILOT_SEED, idx]))
    y = GENERATORS[scenario](PILOT_DRAWS, rng, **dict(params))[0]
    lo, hi = 0.0, 1.0 / float(np.mean(y))
    while expected_censoring(hi, y) < target:
        hi *= 2.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if expected_censoring(mid, y) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


def simulate(spec: SimSpec) -> Simulation:
    """Generate the dataset described by ``spec``; a pure function of the spec."""
    seeds = np.random.SeedSequence(spec.seed).spawn(2)
    ev_rng, cens_rng = (np.random.default_rng(s) for s in seeds)
    params = dict(spec.params)
    if spec.scenario != "custom" and params:
        raise ConfigError(f"scenario {spec.scenario!r} takes no parameters")
    y, X, (names, kinds, labels), truth = GENERATORS[spec.scenario](spec.n, ev_rng, **params)
    rate = calibrate_censor_rate(spec.scenario, spec.target_censoring,
                                 tuple(sorted(params.items())))
    if rate > 0:
        c = cens_rng.exponential(1.0 / rate, spec.n)
    else:
        c = np.full(spec.n, np.inf)
    status = (y <= c).astype(np.int64)
    times = np.minimum(y, c)
    truth = truth.copy()
    truth.insert(0, "row", np.arange(spec.n))
    truth["event_time"] = y
    data = SurvivalDataset(times, status, X, names, kinds, labels)
    return Simulation(data, truth.reset_index(drop=True), spec, rate)


def gen_tree_nonph(n: int, seed: int = 0, censoring: float | None = None) -> Simulation:
    return simulate(SimSpec("tree-nonph", n, censoring, seed))


def gen_cox_ph(n: int, seed: int = 0, censoring: float | None = None) -> Simulation:
    return simulate(SimSpec("cox-ph", n, censoring, seed))


def gen_biomarker(n: int, seed: int = 0, censoring: float | None = None) -> Simulation:
    return simulate(SimSpec("biomarker", n, censoring, seed))
