"""Compiled inner loops for the leaf model.

Everything here works on the active prefix of a node's bins: ``n`` holds the
event counts, ``e`` the exposures.  The OU precision on a regular grid is a
symmetric tridiagonal matrix described by its main diagonal ``qd`` and its
off-diagonal ``qo``.
"""

import math

import numpy as np
from numba import njit

LOG_MIN = math.log(1e-4)
LOG_MAX = math.log(1e4)

GRAD_TOL = 1e-8
MAX_NEWTON = 100
MAX_HALVINGS = 60
ROUND_SLACK = 1e-14
STEP_TOL = 1e-10

# Newton exit codes
CONVERGED = 0
STALLED = 1  # line search exhausted away from the optimum
MAX_ITER = 2


@njit(cache=True, nogil=True)
def one_minus_rho2(dz, length):
    return -math.expm1(-2.0 * dz / length)


@njit(cache=True, nogil=True)
def precision_bands(k, tau, rho, omr2):
    qd = np.empty(k)
    qo = np.empty(max(k - 1, 0))
    if k == 1:
        qd[0] = 1.0 / (tau * tau)
        return qd, qo
    c = 1.0 / (tau * tau * omr2)
    for i in range(k):
        qd[i] = c * (1.0 + rho * rho)
    qd[0] = c
    qd[k - 1] = c
    for i in range(k - 1):
        qo[i] = -c * rho
    return qd, qo


@njit(cache=True, nogil=True)
def logdet_cov(k, tau, omr2):
    return 2.0 * k * math.log(tau) + (k - 1) * math.log(omr2)


@njit(cache=True, nogil=True)
def ldl_pivots(ad, ao):
    """Pivots of the LDL' factorization of a symmetric tridiagonal matrix."""
    k = ad.shape[0]
    piv = np.empty(k)
    piv[0] = ad[0]
    for i in range(1, k):
        piv[i] = ad[i] - ao[i - 1] * ao[i - 1] / piv[i - 1]
    return piv


@njit(cache=True, nogil=True)
def tridiag_solve(ad, ao, rhs):
    """Solve ``A x = rhs`` for symmetric tridiagonal ``A`` (Thomas algorithm)."""
    k = ad.shape[0]
    cp = np.empty(k)
    x = np.empty(k)
    denom = ad[0]
    x[0] = rhs[0] / denom
    for i in range(1, k):
        cp[i - 1] = ao[i - 1] / denom
        denom = ad[i] - ao[i - 1] * cp[i - 1]
        x[i] = (rhs[i] - ao[i - 1] * x[i - 1]) / denom
    for i in range(k - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


@njit(cache=True, nogil=True)
def tridiag_matvec(qd, qo, f):
    k = f.shape[0]
    out = np.empty(k)
    for i in range(k):
        out[i] = qd[i] * f[i]
    for i in range(k - 1):
        out[i] += qo[i] * f[i + 1]
        out[i + 1] += qo[i] * f[i]
    return out


@njit(cache=True, nogil=True)
def g0_value(f, n, e, qd, qo):
    k = f.shape[0]
    s = 0.0
    for i in range(k):
        s += n[i] * f[i] - e[i] * math.exp(f[i])
    quad = 0.0
    for i in range(k):
        quad += qd[i] * f[i] * f[i]
    for i in range(k - 1):
        quad += 2.0 * qo[i] * f[i] * f[i + 1]
    return s - 0.5 * quad


@njit(cache=True, nogil=True)
def g0_grad(f, n, e, qd, qo):
    qf = tridiag_matvec(qd, qo, f)
    k = f.shape[0]
    g = np.empty(k)
    for i in range(k):
        g[i] = n[i] - e[i] * math.exp(f[i]) - qf[i]
    return g


@njit(cache=True, nogil=True)
def newton(n, e, qd, qo, f0):
    """Maximize g0 by damped Newton.

    Returns ``(f, d, g0, iters, code)`` where ``d`` holds the likelihood
    curvature ``e * exp(f)``.
    """
    k = n.shape[0]
    f = f0.copy()
    g = g0_value(f, n, e, qd, qo)
    ad = np.empty(k)
    for it in range(MAX_NEWTON + 1):
        grad = g0_grad(f, n, e, qd, qo)
        gmax = 0.0
        for i in range(k):
            if abs(grad[i]) > gmax:
                gmax = abs(grad[i])
        if gmax <= GRAD_TOL:
            return f, e * np.exp(f), g, it, CONVERGED
        if it == MAX_NEWTON:
            break
        for i in range(k):
            ad[i] = qd[i] + e[i] * math.exp(f[i])
        step = tridiag_solve(ad, qo, grad)
        dec = 0.0
        for i in range(k):
            dec += grad[i] * step[i]
        # Decrement at the rounding floor of g0: a line search cannot see the
        # gain, but the quadratic model is exact here, so take the full step.
        if dec <= 1e-15 * (1.0 + abs(g)):
            smax = 0.0
            fmax = 0.0
            for i in range(k):
                smax = max(smax, abs(step[i]))
                fmax = max(fmax, abs(f[i]))
            f = f + step
            g = g0_value(f, n, e, qd, qo)
            if smax <= STEP_TOL * (1.0 + fmax):
                return f, e * np.exp(f), g, it + 1, CONVERGED
            continue
        t = 1.0
        moved = False
        # Non-decrease up to rounding in g0 itself.
        slack = ROUND_SLACK * (1.0 + abs(g))
        for _ in range(MAX_HALVINGS):
            fn = f + t * step
            gn = g0_value(fn, n, e, qd, qo)
            if gn >= g - slack:
                moved = True
                break
            t *= 0.5
        if not moved:
            return f, e * np.exp(f), g, it, STALLED
        smax = 0.0
        fmax = 0.0
        for i in range(k):
            smax = max(smax, abs(t * step[i]))
            fmax = max(fmax, abs(f[i]))
        f = fn
        g = gn
        # Accepted step below resolution: further iterations only shuffle rounding.
        if smax <= STEP_TOL * (1.0 + fmax):
            return f, e * np.exp(f), g, it + 1, CONVERGED
    return f, e * np.exp(f), g, MAX_NEWTON, MAX_ITER


@njit(cache=True, nogil=True)
def laplace(n, e, tau, length, dz, f0):
    """Laplace log evidence at fixed kernel parameters.

    Returns ``(log_marginal, f, d, iters, code)``.
    """
    k = n.shape[0]
    omr2 = one_minus_rho2(dz, length)
    rho = math.sqrt(1.0 - omr2)
    qd, qo = precision_bands(k, tau, rho, omr2)
    f, d, g, iters, code = newton(n, e, qd, qo, f0)
    ad = qd + d
    piv = ldl_pivots(ad, qo)
    logdet_h = 0.0
    for i in range(k):
        if piv[i] <= 0.0:
            return -np.inf, f, d, iters, STALLED
        logdet_h += math.log(piv[i])
    if k == 1:
        ldc = 2.0 * math.log(tau)
    else:
        ldc = logdet_cov(k, tau, omr2)
    return g - 0.5 * logdet_h - 0.5 * ldc, f, d, iters, code


@njit(cache=True, nogil=True)
def log_half_cauchy(x, scale):
    z = x / scale
    return math.log(2.0 / (math.pi * scale)) - math.log1p(z * z)


@njit(cache=True, nogil=True)
def eb_objective(n, e, log_tau, log_len, dz, tau_scale, len_scale, f0):
    """Laplace evidence plus log hyperpriors, ``-inf`` outside the search box."""
    if log_tau < LOG_MIN or log_tau > LOG_MAX or log_len < LOG_MIN or log_len > LOG_MAX:
        return -np.inf, np.inf, f0, 0, STALLED
    tau = math.exp(log_tau)
    length = math.exp(log_len)
    lm, f, d, iters, code = laplace(n, e, tau, length, dz, f0)
    if code != CONVERGED:
        # A poor warm start can stall far from the mode; retry cold.
        lm, f, d, it2, code = laplace(n, e, tau, length, dz, np.zeros(n.shape[0]))
        iters += it2
    if code != CONVERGED:
        return -np.inf, lm, f0, iters, code
    obj = lm + log_half_cauchy(tau, tau_scale) + log_half_cauchy(length, len_scale)
    return obj, lm, f, iters, code


@njit(cache=True, nogil=True)
def nelder_mead_eb(n, e, dz, tau_scale, len_scale, x0_tau, x0_len, step, ftol, maxfev):
    """Maximize the empirical-Bayes objective over (log tau, log length).

    Returns ``(log_tau, log_len, objective, nfev)``; ``f`` is warm-started from
    the most recent successful Newton solve, which keeps the result a
    deterministic function of the inputs.
    """
    k = n.shape[0]
    sim = np.empty((3, 2))
    fs = np.empty(3)  # negated objective, minimized
    sim[0, 0] = x0_tau
    sim[0, 1] = x0_len
    sim[1, 0] = x0_tau + step
    sim[1, 1] = x0_len
    sim[2, 0] = x0_tau
    sim[2, 1] = x0_len + step
    warm = np.zeros(k)
    for i in range(3):
        obj, lm, f, it, code = eb_objective(n, e, sim[i, 0], sim[i, 1], dz, tau_scale, len_scale, warm)
        fs[i] = -obj
        if code == CONVERGED:
            warm = f
    nfev = 3
    xr = np.empty(2)
    xe = np.empty(2)
    xc = np.empty(2)
    while nfev < maxfev:
        order = np.argsort(fs)
        sim = sim[order]
        fs = fs[order]
        if fs[2] - fs[0] < ftol:
            break
        xbar0 = 0.5 * (sim[0, 0] + sim[1, 0])
        xbar1 = 0.5 * (sim[0, 1] + sim[1, 1])
        xr[0] = 2.0 * xbar0 - sim[2, 0]
        xr[1] = 2.0 * xbar1 - sim[2, 1]
        obj, lm, f, it, code = eb_objective(n, e, xr[0], xr[1], dz, tau_scale, len_scale, warm)
        nfev += 1
        if code == CONVERGED:
            warm = f
        fr = -obj
        if fr < fs[0]:
            xe[0] = 3.0 * xbar0 - 2.0 * sim[2, 0]
            xe[1] = 3.0 * xbar1 - 2.0 * sim[2, 1]
            obj, lm, f, it, code = eb_objective(n, e, xe[0], xe[1], dz, tau_scale, len_scale, warm)
            nfev += 1
            if code == CONVERGED:
                warm = f
            fe = -obj
            if fe < fr:
                sim[2, 0] = xe[0]
                sim[2, 1] = xe[1]
                fs[2] = fe
            else:
                sim[2, 0] = xr[0]
                sim[2, 1] = xr[1]
                fs[2] = fr
            continue
        if fr < fs[1]:
            sim[2, 0] = xr[0]
            sim[2, 1] = xr[1]
            fs[2] = fr
            continue
        if fr < fs[2]:
            xc[0] = xbar0 + 0.5 * (xr[0] - xbar0)
            xc[1] = xbar1 + 0.5 * (xr[1] - xbar1)
        else:
            xc[0] = xbar0 + 0.5 * (sim[2, 0] - xbar0)
            xc[1] = xbar1 + 0.5 * (sim[2, 1] - xbar1)
        obj, lm, f, it, code = eb_objective(n, e, xc[0], xc[1], dz, tau_scale, len_scale, warm)
        nfev += 1
        if code == CONVERGED:
            warm = f
        fc = -obj
        if fc < min(fr, fs[2]):
            sim[2, 0] = xc[0]
            sim[2, 1] = xc[1]
            fs[2] = fc
            continue
        for i in range(1, 3):
            sim[i, 0] = sim[0, 0] + 0.5 * (sim[i, 0] - sim[0, 0])
            sim[i, 1] = sim[0, 1] + 0.5 * (sim[i, 1] - sim[0, 1])
            obj, lm, f, it, code = eb_objective(n, e, sim[i, 0], sim[i, 1], dz, tau_scale, len_scale, warm)
            nfev += 1
            if code == CONVERGED:
                warm = f
            fs[i] = -obj
    best = np.argmin(fs)
    return sim[best, 0], sim[best, 1], -fs[best], nfev


@njit(cache=True, nogil=True)
def bidiag_sample(ad, ao, z):
    """Map standard normals ``z`` (draws x k) to draws from N(0, A^{-1}).

    Uses the Cholesky factor ``A = L L'`` of the tridiagonal ``A`` and solves
    ``L' x = z`` by back substitution.
    """
    k = ad.shape[0]
    ld = np.empty(k)
    lo = np.empty(max(k - 1, 0))
    ld[0] = math.sqrt(ad[0])
    for i in range(1, k):
        lo[i - 1] = ao[i - 1] / ld[i - 1]
        ld[i] = math.sqrt(ad[i] - lo[i - 1] * lo[i - 1])
    out = np.empty_like(z)
    for r in range(z.shape[0]):
        out[r, k - 1] = z[r, k - 1] / ld[k - 1]
        for i in range(k - 2, -1, -1):
            out[r, i] = (z[r, i] - lo[i] * out[r, i + 1]) / ld[i]
    return out
