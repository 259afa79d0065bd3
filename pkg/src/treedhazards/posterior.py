"""Summaries of a sample stream: MAP tree, leaf survival curves, prediction, Kaplan-Meier."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import _kernels as kern
from .data import BinGrid
from .errors import NumericalError, TreedHazardsError
from .node_model import LeafFit, posterior_precision
from .tree import Tree

DEFAULT_DRAWS = 4000
DEFAULT_LEVEL = 0.95
BRACKET_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """Pointwise posterior summary of S on the bin endpoints ``s_0 = 0, ..., s_kmax``.

    ``times`` are normalized; :attr:`raw_times` multiplies by ``time_scale``.
    """

    times: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_draws: int
    level: float
    time_scale: float = 1.0

    def __post_init__(self):
        self.check()

    @property
    def raw_times(self) -> np.ndarray:
        return self.times * self.time_scale

    def check(self):
        m, lo, hi = self.mean, self.lower, self.upper
        tol = BRACKET_TOL
        if not (m.shape == lo.shape == hi.shape == self.times.shape):
            raise NumericalError("curve arrays have inconsistent shapes")
        if abs(m[0] - 1.0) > tol:
            raise NumericalError("survival curve must start at 1", start=float(m[0]))
        if np.any(np.diff(m) > tol) or np.any(np.diff(lo) > tol) or np.any(np.diff(hi) > tol):
            raise NumericalError("survival curve is not nonincreasing")
        if np.any(lo > m + tol) or np.any(hi < m - tol):
            raise NumericalError("bands do not bracket the mean")
        if np.any(lo < -tol) or np.any(hi > 1 + tol):
            raise NumericalError("survival values outside [0, 1]")

    def with_scale(self, time_scale: float) -> "SurvivalCurve":
        return SurvivalCurve(self.times, self.mean, self.lower, self.upper, self.n_draws,
                             self.level, float(time_scale))


def sample_log_hazard(fit: LeafFit, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """Draws of f from the Laplace Gaussian ``N(f_hat, (D + Q)^{-1})``, shape (n_draws, k)."""
    ad, ao = posterior_precision(fit)
    piv = kern.ldl_pivots(ad, ao)
    if np.any(piv <= 0):
        raise NumericalError("posterior precision is not positive definite",
                             min_pivot=float(piv.min()))
    z = rng.standard_normal((n_draws, fit.k_active))
    return fit.f_hat + kern.bidiag_sample(ad, ao, z)


def survival_from_log_hazard(f: np.ndarray, width: float) -> np.ndarray:
    """S at the bin endpoints for each row of ``f``, with a leading column S(0) = 1."""
    f = np.atleast_2d(f)
    cum = np.cumsum(np.exp(f) * width, axis=1)
    out = np.ones((f.shape[0], f.shape[1] + 1))
    out[:, 1:] = np.exp(-cum)
    return out


def leaf_survival(fit: LeafFit, grid: BinGrid, n_draws: int = DEFAULT_DRAWS,
                  level: float = DEFAULT_LEVEL, rng: np.random.Generator | None = None) -> SurvivalCurve:
    """Posterior survival curve of one leaf over its active bins."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    rng = np.random.default_rng(0) if rng is None else rng
    draws = survival_from_log_hazard(sample_log_hazard(fit, n_draws, rng), grid.width)
    a = 1.0 - level
    lo, hi = np.quantile(draws, [a / 2, 1 - a / 2], axis=0)
    mean = draws.mean(axis=0)
    # Equal draws can put the mean a rounding error outside its own quantiles.
    lo = np.minimum(lo, mean)
    hi = np.maximum(hi, mean)
    return SurvivalCurve(grid.endpoints[: fit.k_active + 1].copy(), mean, lo, hi, n_draws, level)


def curve_rng(seed: int, leaf_id: int) -> np.random.Generator:
    """Draw stream for one leaf: a fixed function of the seed and the leaf index."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(leaf_id)]))


def map_sample(samples):
    """Sample with the highest log posterior; the earliest one on ties."""
    best = None
    for s in samples:
        if best is None or s.log_posterior > best.log_posterior:
            best = s
    if best is None:
        raise TreedHazardsError("empty sample stream")
    return best


def map_tree(samples) -> tuple[Tree, float]:
    s = map_sample(samples)
    return s.tree, s.log_posterior


def leaf_curves(fits, grid: BinGrid, time_scale: float = 1.0, n_draws: int = DEFAULT_DRAWS,
                level: float = DEFAULT_LEVEL, seed: int = 0) -> list:
    return [leaf_survival(f, grid, n_draws, level, curve_rng(seed, i)).with_scale(time_scale)
            for i, f in enumerate(fits)]


def predict(tree: Tree, fits, row, grid: BinGrid, time_scale: float = 1.0,
            n_draws: int = DEFAULT_DRAWS, level: float = DEFAULT_LEVEL, seed: int = 0) -> SurvivalCurve:
    """Survival curve of the leaf that ``row`` (encoded covariates) falls in, in raw time."""
    leaf = tree.route(row)
    curve = leaf_survival(fits[leaf], grid, n_draws, level, curve_rng(seed, leaf))
    return curve.with_scale(time_scale)


# -- Kaplan-Meier ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KMEstimate:
    """Product-limit estimate at the distinct event times, with log-scale Greenwood bands."""

    times: np.ndarray
    survival: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_risk: np.ndarray
    n_events: np.ndarray
    level: float

    def at(self, t) -> np.ndarray:
        """Right-continuous step function evaluated at ``t``."""
        i = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        return np.concatenate([[1.0], self.survival])[i]


def kaplan_meier(times, status, level: float = DEFAULT_LEVEL) -> KMEstimate:
    times = np.asarray(times, dtype=float)
    status = np.asarray(status)
    if times.size < 1:
        raise ValueError("Kaplan-Meier needs at least one observation")
    ev_times = np.unique(times[status == 1])
    n_risk = np.array([np.sum(times >= t) for t in ev_times], dtype=np.int64)
    n_ev = np.array([np.sum((times == t) & (status == 1)) for t in ev_times], dtype=np.int64)
    # Factors (r - d) / r telescope across event times with no censoring in
    # between, so each such run is one ratio; uncensored data gives count / n.
    new_run = np.r_[True, n_risk[1:] != n_risk[:-1] - n_ev[:-1]]
    run_id = np.cumsum(new_run) - 1
    ratio = (n_risk - n_ev) / n_risk[new_run][run_id]
    ends = np.r_[np.flatnonzero(new_run)[1:] - 1, len(ratio) - 1]
    base = np.r_[1.0, np.cumprod(ratio[ends])[:-1]]
    surv = base[run_id] * ratio
    with np.errstate(divide="ignore", invalid="ignore"):
        gw = np.cumsum(n_ev / (n_risk * (n_risk - n_ev)))
        z = norm.ppf(0.5 + level / 2)
        se = np.sqrt(gw)
        lower = np.clip(surv * np.exp(-z * se), 0.0, 1.0)
        upper = np.clip(surv * np.exp(z * se), 0.0, 1.0)
    dead = surv == 0
    lower[dead] = 0.0
    upper[dead] = 0.0
    return KMEstimate(ev_times, surv, lower, upper, n_risk, n_ev, level)


# -- tables --------------------------------------------------------------------

def write_curves(curves, path) -> None:
    """CSV with columns leaf_id, time_raw, mean, lower, upper."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["leaf_id", "time_raw", "mean", "lower", "upper"])
        for leaf_id, c in curves:
            for t, m, lo, hi in zip(c.raw_times, c.mean, c.lower, c.upper):
                w.writerow([leaf_id, repr(float(t)), repr(float(m)), repr(float(lo)), repr(float(hi))])


def leaf_table(fits) -> list[dict]:
    return [{"leaf_id": i, "n": f.n_obs, "events": f.n_events, "tau_hat": f.tau_hat,
             "length_hat": f.length_hat, "log_marginal": f.log_marginal}
            for i, f in enumerate(fits)]


def format_leaf_table(fits) -> str:
    rows = leaf_table(fits)
    head = "leaf_id\tn\tevents\ttau_hat\tlength_hat\tlog_marginal"
    lines = [head] + [f"{r['leaf_id']}\t{r['n']}\t{r['events']}\t{r['tau_hat']:.6g}\t"
                      f"{r['length_hat']:.6g}\t{r['log_marginal']:.6f}" for r in rows]
    return "\n".join(lines)


def band_coverage(curve: SurvivalCurve, truth) -> float:
    """Fraction of grid points where ``truth`` (values at ``curve.times``) lies in the band."""
    truth = np.asarray(truth, dtype=float)
    inside = (truth >= curve.lower - BRACKET_TOL) & (truth <= curve.upper + BRACKET_TOL)
    return float(np.mean(inside))


def rand_index(a, b) -> float:
    """Fraction of row pairs on which two labelings agree about co-membership."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = a.shape[0]
    if n < 2:
        return 1.0
    # Pair counts from the contingency table avoid an O(n^2) loop.
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    c2 = lambda x: (x * (x - 1) // 2).sum()
    same_both = c2(table)
    same_a = c2(table.sum(axis=1))
    same_b = c2(table.sum(axis=0))
    total = n * (n - 1) // 2
    agree = total + 2 * same_both - same_a - same_b
    return float(agree / total)


__all__ = ["SurvivalCurve", "KMEstimate", "leaf_survival", "leaf_curves", "predict",
           "map_tree", "map_sample", "kaplan_meier", "write_curves", "leaf_table",
           "format_leaf_table", "band_coverage", "rand_index", "sample_log_hazard",
           "survival_from_log_hazard", "curve_rng"]
