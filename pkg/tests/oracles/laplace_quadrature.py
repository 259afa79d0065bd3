"""Regenerate the frozen quadrature log-evidences used by the Laplace tests.

Independent of the package: plain numpy/scipy integration of
log of the integral of exp(sum(n w - e exp(w))) against N(0, Sigma) with
Sigma_ij = tau^2 rho^|i-j|, rho = exp(-dz / length).

Run:  python tests/oracles/laplace_quadrature.py
"""

import itertools
import math

import numpy as np
from scipy import integrate

DZ = 0.01
NS = (1, 5)
ES = (1.0, 2.0)
TAUS = (0.5, 1.0, 2.0)
LENGTHS = (0.01, 0.1)


def cov(k, tau, length):
    i = np.arange(k)
    return tau ** 2 * np.exp(-DZ / length) ** np.abs(i[:, None] - i[None, :])


def log_evidence_1d(n, e, tau):
    # Shift by the integrand's peak to keep quad well scaled.
    h = lambda w: n * w - e * math.exp(w) - 0.5 * w * w / tau ** 2
    w0 = max(-30.0, min(30.0, math.log(n / e)))
    peak = max(h(w0), h(0.0))
    val, _ = integrate.quad(lambda w: math.exp(h(w) - peak), -40, 40, points=[w0, 0.0],
                            epsabs=0, epsrel=1e-13, limit=500)
    return peak + math.log(val) - 0.5 * math.log(2 * math.pi * tau ** 2)


def log_evidence_gh(n, e, tau, length, k, m=80):
    """Tensor Gauss-Hermite rule in whitened coordinates w = L z."""
    z, wts = np.polynomial.hermite_e.hermegauss(m)
    wts = wts / math.sqrt(2 * math.pi)
    L = np.linalg.cholesky(cov(k, tau, length))
    grids = np.meshgrid(*([z] * k), indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.meshgrid(*([wts] * k), indexing="ij"), axis=0).ravel()
    F = Z @ L.T
    ll = (n * F - e * np.exp(F)).sum(axis=1)
    top = ll.max()
    return top + math.log(np.sum(W * np.exp(ll - top)))


def log_evidence_centered(n, e, tau, length, k, m=40):
    """Tensor Gauss-Hermite rule centered at the integrand's mode.

    With w = w* + C z and C C' the inverse negated Hessian (dense, from
    numpy), the integrand times exp(|z|^2 / 2) is smooth and nearly flat,
    so the rule converges quickly.
    """
    from scipy.optimize import minimize
    S = cov(k, tau, length)
    P = np.linalg.inv(S)
    const = -0.5 * np.linalg.slogdet(2 * math.pi * S)[1]

    def h(w):
        return float(np.sum(n * w - e * np.exp(w)) - 0.5 * w @ P @ w)

    res = minimize(lambda w: -h(w), np.zeros(k), jac=lambda w: -(n - e * np.exp(w) - P @ w),
                   method="BFGS", options={"gtol": 1e-12})
    w0 = res.x
    H = np.diag(e * np.exp(w0)) + P
    C = np.linalg.cholesky(np.linalg.inv(H))
    z, wts = np.polynomial.hermite_e.hermegauss(m)
    grids = np.meshgrid(*([z] * k), indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.meshgrid(*([wts] * k), indexing="ij"), axis=0).ravel()
    F = w0 + Z @ C.T
    val = (n * F - e * np.exp(F)).sum(axis=1) - 0.5 * np.einsum("ij,jk,ik->i", F, P, F)
    val += 0.5 * np.sum(Z * Z, axis=1)
    top = val.max()
    logint = top + math.log(np.sum(W * np.exp(val - top)))
    return logint + np.linalg.slogdet(C)[1] + const


def log_evidence_2d(n, e, tau, length):
    S = cov(2, tau, length)
    P = np.linalg.inv(S)
    c = -0.5 * math.log((2 * math.pi) ** 2 * np.linalg.det(S))
    f = lambda a, b: n * (a + b) - e * (math.exp(a) + math.exp(b))
    g = lambda a, b: f(a, b) - 0.5 * (P[0, 0] * a * a + 2 * P[0, 1] * a * b + P[1, 1] * b * b)
    peak = g(0.0, 0.0)
    for w in np.linspace(-3, 3, 61):
        peak = max(peak, g(w, w))
    val, _ = integrate.dblquad(lambda b, a: math.exp(g(a, b) - peak), -15, 15, -15, 15,
                               epsabs=0, epsrel=1e-11)
    return peak + math.log(val) + c


def table():
    rows = []
    for n, e, tau in itertools.product(NS, ES, TAUS):
        rows.append((1, n, e, tau, None, log_evidence_1d(n, e, tau)))
    for k in (2, 3):
        for n, e, tau, length in itertools.product(NS, ES, TAUS, LENGTHS):
            v = float(log_evidence_centered(n, e, tau, length, k))
            rows.append((k, n, e, tau, length, v))
    return rows


if __name__ == "__main__":
    for n, e, tau in [(1, 1.0, 1.0), (5, 2.0, 2.0)]:
        print("1d quad vs GH:", log_evidence_1d(n, e, tau), log_evidence_gh(n, e, tau, 1.0, 1, 200))
    for n, e, tau, length in [(1, 1.0, 1.0, 0.01), (5, 2.0, 2.0, 0.1)]:
        print("2d quad vs GH:", log_evidence_2d(n, e, tau, length),
              log_evidence_gh(n, e, tau, length, 2), log_evidence_gh(n, e, tau, length, 2, 120))
    print("2d centered:", log_evidence_centered(5, 2.0, 2.0, 0.1, 2, 40),
          log_evidence_centered(5, 2.0, 2.0, 0.1, 2, 80))
    print("1d centered:", log_evidence_centered(5, 2.0, 2.0, 0.1, 1, 40))
    print("3d centered 30/40/60:", [log_evidence_centered(5, 2.0, 2.0, x, 3, m)
                                     for x in (0.01, 0.1) for m in (30, 40, 60)])
    for r in table():
        print(f"    ({r[0]}, {r[1]}, {r[2]!r}, {r[3]!r}, {r[4]!r}, {r[5]!r}),")
