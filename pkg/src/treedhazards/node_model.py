"""Leaf hazard model: piecewise-exponential likelihood, exponentiated OU prior.

The log hazard at the active bin midpoints of a leaf is a zero-mean Gaussian
vector with covariance ``tau^2 exp(-|z_i - z_j| / length)``.  On a regular
grid its precision is tridiagonal, so mode finding and the Laplace evidence
cost O(K') per Newton step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .data import NodeStats
from .errors import NumericalError

TAU_SCALE = 10.0
LENGTH_SCALE = 1.0
START_TAU = 1.0
START_LENGTH = 0.1
NM_STEP = 1.0
NM_FTOL = 1e-6
NM_MAXFEV = 200


@dataclass(frozen=True)
class OUKernel:
    tau: float
    length: float
    dz: float

    def __post_init__(self):
        if not (self.tau > 0 and self.length > 0 and self.dz > 0):
            raise ValueError("tau, length and dz must be positive")

    @property
    def rho(self) -> float:
        return math.exp(-self.dz / self.length)

    @property
    def one_minus_rho2(self) -> float:
        return kern.one_minus_rho2(self.dz, self.length)

    def dense_cov(self, k: int) -> np.ndarray:
        i = np.arange(k)
        return self.tau ** 2 * self.rho ** np.abs(i[:, None] - i[None, :])

    def log_det_cov(self, k: int) -> float:
        if k == 1:
            return 2.0 * math.log(self.tau)
        return kern.logdet_cov(k, self.tau, self.one_minus_rho2)


@dataclass(frozen=True, eq=False)
class TridiagonalPrecision:
    """Inverse of the OU covariance on ``k`` consecutive grid midpoints."""

    diag: np.ndarray
    off: np.ndarray

    @classmethod
    def from_kernel(cls, kernel: OUKernel, k: int) -> "TridiagonalPrecision":
        qd, qo = kern.precision_bands(k, kernel.tau, kernel.rho, kernel.one_minus_rho2)
        return cls(qd, qo)

    @property
    def dim(self) -> int:
        return self.diag.shape[0]

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def matvec(self, f) -> np.ndarray:
        return kern.tridiag_matvec(self.diag, self.off, np.asarray(f, dtype=float))


@dataclass(frozen=True, eq=False)
class LeafFit:
    """Empirical-Bayes Laplace fit of one leaf.

    ``f_hat`` is the posterior mode of the log hazard on the active bins and
    ``d_diag`` the likelihood curvature ``exp(f_hat) * e`` there.
    """

    f_hat: np.ndarray
    d_diag: np.ndarray
    tau_hat: float
    length_hat: float
    log_marginal: float
    objective: float
    newton_iters: int
    n_obs: int
    n_events: int
    dz: float
    evaluations: int = field(default=0)

    @property
    def kernel(self) -> OUKernel:
        return OUKernel(self.tau_hat, self.length_hat, self.dz)

    @property
    def k_active(self) -> int:
        return self.f_hat.shape[0]


def _active(stats: NodeStats):
    n = np.ascontiguousarray(stats.active_counts, dtype=float)
    e = np.ascontiguousarray(stats.active_exposures, dtype=float)
    return n, e


def _check_dims(f, stats: NodeStats, prec: TridiagonalPrecision):
    if not (len(f) == stats.k_max == prec.dim):
        raise ValueError(f"dimension mismatch: f has {len(f)}, stats {stats.k_max}, "
                         f"precision {prec.dim}")


def g0(f, stats: NodeStats, prec: TridiagonalPrecision) -> float:
    """Log of likelihood times the unnormalized Gaussian prior kernel."""
    f = np.ascontiguousarray(f, dtype=float)
    _check_dims(f, stats, prec)
    n, e = _active(stats)
    return kern.g0_value(f, n, e, prec.diag, prec.off)


def g0_gradient(f, stats: NodeStats, prec: TridiagonalPrecision) -> np.ndarray:
    f = np.ascontiguousarray(f, dtype=float)
    _check_dims(f, stats, prec)
    n, e = _active(stats)
    return kern.g0_grad(f, n, e, prec.diag, prec.off)


def newton_mode(stats: NodeStats, kernel: OUKernel, f0=None):
    """Posterior mode of the log hazard and the diagonal likelihood curvature.

    Returns
    -------
    f_hat, d_diag : ndarray
    iters : int
    """
    n, e = _active(stats)
    prec = TridiagonalPrecision.from_kernel(kernel, stats.k_max)
    start = np.zeros(stats.k_max) if f0 is None else np.ascontiguousarray(f0, dtype=float)
    f, d, _, iters, code = kern.newton(n, e, prec.diag, prec.off, start)
    if code != kern.CONVERGED:
        grad = kern.g0_grad(f, n, e, prec.diag, prec.off)
        raise NumericalError("Newton iterations did not converge", iterations=iters,
                             code=code, grad_norm=float(np.abs(grad).max()),
                             tau=kernel.tau, length=kernel.length)
    return f, d, iters


def laplace_log_marginal(stats: NodeStats, kernel: OUKernel) -> float:
    """Laplace approximation to log of the integral of likelihood times GP prior.

    Computed as ``g0(f_hat) - log|D + Q| / 2 - log|Sigma| / 2`` with
    ``Q = Sigma^{-1}``.
    """
    n, e = _active(stats)
    lm, f, _, iters, code = kern.laplace(n, e, kernel.tau, kernel.length, kernel.dz,
                                         np.zeros(stats.k_max))
    if code != kern.CONVERGED or not np.isfinite(lm):
        raise NumericalError("Laplace approximation failed", iterations=iters, code=code,
                             tau=kernel.tau, length=kernel.length)
    return lm


def log_hyperprior(tau: float, length: float, tau_scale: float = TAU_SCALE,
                   length_scale: float = LENGTH_SCALE) -> float:
    """Half-Cauchy (half-t with one degree of freedom) log densities of tau and length."""
    return kern.log_half_cauchy(tau, tau_scale) + kern.log_half_cauchy(length, length_scale)


def eb_objective(stats: NodeStats, tau: float, length: float, dz: float,
                 tau_scale: float = TAU_SCALE, length_scale: float = LENGTH_SCALE) -> float:
    """Objective maximized by :func:`empirical_bayes` at one (tau, length)."""
    return laplace_log_marginal(stats, OUKernel(tau, length, dz)) + log_hyperprior(
        tau, length, tau_scale, length_scale)


def empirical_bayes(stats: NodeStats, dz: float, tau_scale: float = TAU_SCALE,
                    length_scale: float = LENGTH_SCALE) -> LeafFit:
    """Fit the leaf by maximizing Laplace evidence plus hyperpriors over (tau, length).

    Nelder-Mead runs in (log tau, log length) from (log 1, log 0.1) and stops
    once the simplex objective spread drops below 1e-6 or after 200
    evaluations.  The search is confined to [1e-4, 1e4] in both parameters.

    Parameters
    ----------
    stats : NodeStats
        Binned statistics of the leaf.
    dz : float
        Grid spacing, ``1 / K``.
    """
    if stats.n_obs < 1:
        raise NumericalError("empty leaf")
    n, e = _active(stats)
    lt, ll, obj, nfev = kern.nelder_mead_eb(n, e, dz, tau_scale, length_scale,
                                            math.log(START_TAU), math.log(START_LENGTH),
                                            NM_STEP, NM_FTOL, NM_MAXFEV)
    if not np.isfinite(obj):
        raise NumericalError("empirical Bayes optimization failed", evaluations=nfev,
                             log_tau=lt, log_length=ll)
    tau, length = math.exp(lt), math.exp(ll)
    lm, f, d, iters, code = kern.laplace(n, e, tau, length, dz, np.zeros(stats.k_max))
    if code != kern.CONVERGED:
        raise NumericalError("Newton failed at the empirical-Bayes optimum", tau=tau,
                             length=length, iterations=iters)
    return LeafFit(f_hat=f, d_diag=d, tau_hat=tau, length_hat=length, log_marginal=lm,
                   objective=lm + log_hyperprior(tau, length, tau_scale, length_scale),
                   newton_iters=iters, n_obs=stats.n_obs, n_events=stats.n_events, dz=dz,
                   evaluations=nfev)


def posterior_precision(fit: LeafFit) -> tuple[np.ndarray, np.ndarray]:
    """Bands of ``D + Q``, the negated Hessian of g0 at the mode."""
    prec = TridiagonalPrecision.from_kernel(fit.kernel, fit.k_active)
    return prec.diag + fit.d_diag, prec.off


def hessian_pivots(fit: LeafFit) -> np.ndarray:
    """LDL' pivots of the Hessian ``-(D + Q)``; all negative at a proper mode."""
    ad, ao = posterior_precision(fit)
    return -kern.ldl_pivots(ad, ao)
