"""Compiled recursions for the quasi-likelihood contributions and the window optimizer.

All kernels share one indexing convention: ``x`` is a 0-based
float array, time indices ``t``, ``lo``, ``hi`` are 1-based and inclusive, and
observations with index < 1 are treated as zero.

Family codes understood by :func:`newton` and :func:`objective`:

0  AR(p); ``aux = (p, has_intercept, l1_radius)``
1  GARCH(1,1); ``aux = (cap,)`` with ``alpha1 + beta1 <= cap``
2  mean over GARCH(1,1) noise; ``aux = (alpha0, alpha1, beta1)`` of the noise
"""

import math

import numpy as np
from numba import njit

AR, GARCH, MEAN_GARCH = 0, 1, 2

_LOOKBACK_BASE = 50


@njit(cache=True)
def lookback_start(lo, beta):
    """First index from which a geometric recursion with ratio ``beta`` must run.

    Terms older than ``beta**L`` with ``L >= 60 / -log(beta)`` are below 1e-26
    relative to the leading term and are dropped.
    """
    if beta <= 0.0:
        extra = _LOOKBACK_BASE
    else:
        extra = _LOOKBACK_BASE + int(math.ceil(60.0 / -math.log(beta)))
    start = lo - extra
    return start if start > 1 else 1


# ---------------------------------------------------------------------------
# AR(p)


@njit(cache=True)
def _ar_regressor(x, t, p, icpt, z):
    off = 0
    if icpt:
        z[0] = 1.0
        off = 1
    for j in range(1, p + 1):
        s = t - j
        z[off + j - 1] = x[s - 1] if s >= 1 else 0.0


@njit(cache=True)
def ar_objective(theta, x, lo, hi, p, icpt, level):
    d = theta.shape[0]
    z = np.empty(d)
    f = 0.0
    g = np.zeros(d)
    H = np.zeros((d, d))
    for t in range(lo, hi + 1):
        _ar_regressor(x, t, p, icpt, z)
        r = x[t - 1]
        for i in range(d):
            r -= theta[i] * z[i]
        f += r * r
        if level >= 1:
            for i in range(d):
                g[i] -= 2.0 * r * z[i]
        if level >= 2:
            for i in range(d):
                for j in range(d):
                    H[i, j] += 2.0 * z[i] * z[j]
    return f, g, H, H.copy()


# ---------------------------------------------------------------------------
# GARCH(1,1) in its ARCH(infinity) form


@njit(cache=True)
def garch_terms(theta, x, lo, hi, start):
    """Per-time values, gradients and Hessians of q_t for t in [lo, hi]."""
    a0, a1, b = theta[0], theta[1], theta[2]
    m = hi - lo + 1
    q = np.empty(m)
    grad = np.empty((m, 3))
    hess = np.empty((m, 3, 3))
    ib = 1.0 / (1.0 - b)
    S = 0.0
    S1 = 0.0
    S2 = 0.0
    dh = np.empty(3)
    for t in range(start, hi + 1):
        x2 = x[t - 1] * x[t - 1]
        if t >= lo:
            i = t - lo
            h = a0 * ib + a1 * S
            dh[0] = ib
            dh[1] = S
            dh[2] = a0 * ib * ib + a1 * S1
            r = x2 / h
            q[i] = r + math.log(h)
            w1 = (1.0 - r) / h
            w2 = (2.0 * r - 1.0) / (h * h)
            for a in range(3):
                grad[i, a] = w1 * dh[a]
                for c in range(3):
                    hess[i, a, c] = w2 * dh[a] * dh[c]
            # second derivatives of h: only the beta-row is nonzero
            hess[i, 0, 2] += w1 * ib * ib
            hess[i, 2, 0] += w1 * ib * ib
            hess[i, 1, 2] += w1 * S1
            hess[i, 2, 1] += w1 * S1
            hess[i, 2, 2] += w1 * (2.0 * a0 * ib * ib * ib + a1 * S2)
        S2 = 2.0 * S1 + b * S2
        S1 = S + b * S1
        S = x2 + b * S
    return q, grad, hess


@njit(cache=True)
def garch_objective(theta, x, lo, hi, level):
    a0, a1, b = theta[0], theta[1], theta[2]
    start = lookback_start(lo, b)
    ib = 1.0 / (1.0 - b)
    S = 0.0
    S1 = 0.0
    S2 = 0.0
    f = 0.0
    g = np.zeros(3)
    H = np.zeros((3, 3))
    Fi = np.zeros((3, 3))
    dh = np.empty(3)
    for t in range(start, hi + 1):
        x2 = x[t - 1] * x[t - 1]
        if t >= lo:
            h = a0 * ib + a1 * S
            r = x2 / h
            f += r + math.log(h)
            if level >= 1:
                dh[0] = ib
                dh[1] = S
                dh[2] = a0 * ib * ib + a1 * S1
                w1 = (1.0 - r) / h
                for a in range(3):
                    g[a] += w1 * dh[a]
                if level >= 2:
                    w2 = (2.0 * r - 1.0) / (h * h)
                    for a in range(3):
                        for c in range(3):
                            H[a, c] += w2 * dh[a] * dh[c]
                            Fi[a, c] += dh[a] * dh[c] / (h * h)
                    H[0, 2] += w1 * ib * ib
                    H[2, 0] += w1 * ib * ib
                    H[1, 2] += w1 * S1
                    H[2, 1] += w1 * S1
                    H[2, 2] += w1 * (2.0 * a0 * ib * ib * ib + a1 * S2)
        if level >= 2:
            S2 = 2.0 * S1 + b * S2
        if level >= 1:
            S1 = S + b * S1
        S = x2 + b * S
    return f, g, H, Fi


# ---------------------------------------------------------------------------
# constant mean over GARCH(1,1) noise, noise parameters held fixed


@njit(cache=True)
def mean_garch_terms(mu, x, lo, hi, start, a0, a1, b):
    m = hi - lo + 1
    q = np.empty(m)
    grad = np.empty(m)
    hess = np.empty(m)
    base = a0 / (1.0 - b)
    S = 0.0
    E = 0.0
    B = 0.0
    for t in range(start, hi + 1):
        e = x[t - 1] - mu
        if t >= lo:
            i = t - lo
            h = base + a1 * S
            dh = -2.0 * a1 * E
            d2h = 2.0 * a1 * B
            r = e * e / h
            q[i] = r + math.log(h)
            grad[i] = -2.0 * e / h + (1.0 - r) / h * dh
            hess[i] = (2.0 / h + 4.0 * e * dh / (h * h)
                       + dh * dh / (h * h) * (2.0 * r - 1.0)
                       + (1.0 - r) / h * d2h)
        S = e * e + b * S
        E = e + b * E
        B = 1.0 + b * B
    return q, grad, hess


@njit(cache=True)
def mean_garch_objective(theta, x, lo, hi, a0, a1, b, level):
    start = lookback_start(lo, b)
    q, gr, he = mean_garch_terms(theta[0], x, lo, hi, start, a0, a1, b)
    g = np.zeros(1)
    H = np.zeros((1, 1))
    Fi = np.zeros((1, 1))
    base = a0 / (1.0 - b)
    f = q.sum()
    if level >= 1:
        g[0] = gr.sum()
    if level >= 2:
        H[0, 0] = he.sum()
        # expected curvature 2/h + (h')^2/h^2 > 0, recomputed cheaply
        S = 0.0
        E = 0.0
        acc = 0.0
        for t in range(start, hi + 1):
            e = x[t - 1] - theta[0]
            if t >= lo:
                h = base + a1 * S
                dh = -2.0 * a1 * E
                acc += 2.0 / h + dh * dh / (h * h)
            S = e * e + b * S
            E = e + b * E
        Fi[0, 0] = acc
    return f, g, H, Fi


# ---------------------------------------------------------------------------
# feasible-set projections and the window optimizer


@njit(cache=True)
def _project_l1(v, r):
    n = v.shape[0]
    tot = 0.0
    for i in range(n):
        tot += abs(v[i])
    if tot <= r:
        return v.copy()
    u = np.sort(np.abs(v))[::-1]
    css = 0.0
    tau = 0.0
    for j in range(n):
        css += u[j]
        cand = (css - r) / (j + 1)
        if u[j] - cand > 0.0:
            tau = cand
    out = np.empty(n)
    for i in range(n):
        mag = abs(v[i]) - tau
        out[i] = math.copysign(mag, v[i]) if mag > 0.0 else 0.0
    return out


@njit(cache=True)
def project(code, theta, lower, upper, aux):
    out = np.minimum(np.maximum(theta, lower), upper)
    if code == AR:
        off = int(aux[1])
        if out.shape[0] > off:
            out[off:] = _project_l1(out[off:], aux[2])
    elif code == GARCH:
        cap = aux[0]
        a, b = out[1], out[2]
        if a + b > cap:
            s = 0.5 * (a + b - cap)
            a -= s
            b -= s
            if a < lower[1]:
                a = lower[1]
                b = cap - a
            elif b < lower[2]:
                b = lower[2]
                a = cap - b
            out[1] = min(a, upper[1])
            out[2] = min(b, upper[2])
    return out


@njit(cache=True)
def objective(code, theta, x, lo, hi, aux, level):
    if code == AR:
        return ar_objective(theta, x, lo, hi, int(aux[0]), aux[1] > 0.5, level)
    elif code == GARCH:
        return garch_objective(theta, x, lo, hi, level)
    return mean_garch_objective(theta, x, lo, hi, aux[0], aux[1], aux[2], level)


@njit(cache=True)
def _tangent_gradient(code, theta, g, lower, upper, aux):
    # (theta - P(theta - s g)) / s for a step s small enough that P is linear
    gmax = np.max(np.abs(g))
    if gmax == 0.0:
        return g.copy()
    s = 1e-7 * (1.0 + np.max(np.abs(theta))) / gmax
    return (theta - project(code, theta - s * g, lower, upper, aux)) / s


@njit(cache=True)
def _direction(M, g, free):
    d = g.shape[0]
    idx = np.empty(d, dtype=np.int64)
    k = 0
    for i in range(d):
        if free[i]:
            idx[k] = i
            k += 1
    out = np.zeros(d)
    if k == 0:
        return out, True
    Mf = np.empty((k, k))
    gf = np.empty(k)
    for a in range(k):
        gf[a] = g[idx[a]]
        for c in range(k):
            Mf[a, c] = 0.5 * (M[idx[a], idx[c]] + M[idx[c], idx[a]])
    lam, V = np.linalg.eigh(Mf)
    top = np.max(np.abs(lam))
    pd = lam[0] > 1e-10 * top and top > 0.0
    floor = max(1e-10 * top, 1e-300)
    step = V.T @ gf
    for a in range(k):
        step[a] /= max(lam[a], floor) if lam[a] > 0.0 else max(abs(lam[a]), floor)
    sf = V @ step
    for a in range(k):
        out[idx[a]] = -sf[a]
    return out, pd


@njit(cache=True)
def newton(code, x, lo, hi, theta0, lower, upper, aux, maxiter, gtol_rel, xtol):
    """Projected Newton descent on sum(q_t) over the window [lo, hi].

    Uses the analytic Hessian when positive definite and the expected-curvature
    matrix otherwise, an Armijo search along the projection arc, and a
    diagonally scaled projected-gradient step when the Newton step stalls.

    Returns ``(theta, converged, iterations, value)``; ``value`` is sum(q_t).
    """
    d = theta0.shape[0]
    theta = project(code, theta0, lower, upper, aux)
    f, g, H, Fi = objective(code, theta, x, lo, hi, aux, 2)
    converged = False
    it = 0
    free = np.ones(d, dtype=np.bool_)
    while it < maxiter:
        it += 1
        if not np.isfinite(f):
            break
        pg = _tangent_gradient(code, theta, g, lower, upper, aux)
        small = 0.5 * np.max(np.abs(pg)) <= gtol_rel * (1.0 + 0.5 * abs(f))
        for i in range(d):
            tol = 1e-12 * (1.0 + abs(lower[i]) + abs(upper[i]))
            at_lo = theta[i] <= lower[i] + tol and g[i] > 0.0
            at_hi = theta[i] >= upper[i] - tol and g[i] < 0.0
            free[i] = not (at_lo or at_hi)
        direction, pd = _direction(H, g, free)
        if not pd:
            direction, _ = _direction(Fi, g, free)
        accepted = False
        cand = theta
        fc = f
        for attempt in range(2):
            if attempt == 1:
                # scaled projected gradient
                for i in range(d):
                    sc = abs(Fi[i, i]) if abs(Fi[i, i]) > 0.0 else 1.0
                    direction[i] = -g[i] / sc
            alpha = 1.0
            for _ in range(50):
                cand = project(code, theta + alpha * direction, lower, upper, aux)
                fc = objective(code, cand, x, lo, hi, aux, 0)[0]
                if np.isfinite(fc) and fc <= f + 1e-4 * np.dot(g, cand - theta):
                    accepted = True
                    break
                alpha *= 0.5
            if accepted:
                break
        if not accepted:
            converged = small
            break
        step = np.max(np.abs(cand - theta))
        theta = cand
        f, g, H, Fi = objective(code, theta, x, lo, hi, aux, 2)
        if step <= xtol * (1.0 + np.max(np.abs(theta))):
            pg = _tangent_gradient(code, theta, g, lower, upper, aux)
            converged = 0.5 * np.max(np.abs(pg)) <= gtol_rel * (1.0 + 0.5 * abs(f))
            break
    return theta, converged, it, f


@njit(cache=True)
def newton_many(code, x, los, hi, inits, lower, upper, aux, maxiter, gtol_rel, xtol):
    m = los.shape[0]
    d = inits.shape[1]
    out = np.empty((m, d))
    conv = np.empty(m, dtype=np.bool_)
    iters = np.empty(m, dtype=np.int64)
    for i in range(m):
        th, c, k, _ = newton(code, x, los[i], hi, inits[i], lower, upper, aux,
                             maxiter, gtol_rel, xtol)
        out[i] = th
        conv[i] = c
        iters[i] = k
    return out, conv, iters


# ---------------------------------------------------------------------------
# path simulation


@njit(cache=True)
def simulate_ar(phi0, phi1, z, switch, start_level):
    """AR recursion; rows of phi* hold (intercept, phi_1..phi_p), regime 1 after ``switch``."""
    n = z.shape[0]
    p = phi0.shape[0] - 1
    out = np.empty(n)
    for t in range(n):
        par = phi0 if t < switch else phi1
        v = par[0] + z[t]
        for j in range(1, p + 1):
            v += par[j] * (out[t - j] if t - j >= 0 else start_level)
        out[t] = v
    return out


@njit(cache=True)
def simulate_garch(th0, th1, z, switch):
    n = z.shape[0]
    out = np.empty(n)
    denom = 1.0 - th0[1] - th0[2]
    sig2 = th0[0] / denom if denom > 0.0 else th0[0]
    prev = 0.0
    for t in range(n):
        par = th0 if t < switch else th1
        if t > 0:
            sig2 = par[0] + par[1] * prev * prev + par[2] * sig2
        prev = math.sqrt(sig2) * z[t]
        out[t] = prev
    return out


@njit(cache=True)
def score_gram(code, theta, x, lo, hi, aux):
    """Average outer product of the per-time scores over [lo, hi]."""
    d = theta.shape[0]
    G = np.zeros((d, d))
    m = hi - lo + 1
    if code == AR:
        p = int(aux[0])
        icpt = aux[1] > 0.5
        z = np.empty(d)
        for t in range(lo, hi + 1):
            _ar_regressor(x, t, p, icpt, z)
            r = x[t - 1]
            for i in range(d):
                r -= theta[i] * z[i]
            for i in range(d):
                for j in range(d):
                    G[i, j] += 4.0 * r * r * z[i] * z[j]
    elif code == GARCH:
        _, g, _ = garch_terms(theta, x, lo, hi, lookback_start(lo, theta[2]))
        for t in range(m):
            for i in range(d):
                for j in range(d):
                    G[i, j] += g[t, i] * g[t, j]
    else:
        _, g, _ = mean_garch_terms(theta[0], x, lo, hi, lookback_start(lo, aux[2]),
                                   aux[0], aux[1], aux[2])
        for t in range(m):
            G[0, 0] += g[t] * g[t]
    return G / m


@njit(cache=True)
def score_gram_many(code, thetas, x, los, hi, aux):
    m = los.shape[0]
    d = thetas.shape[1]
    out = np.empty((m, d, d))
    for i in range(m):
        out[i] = score_gram(code, thetas[i], x, los[i], hi, aux)
    return out


@njit(cache=True)
def sandwich(code, theta, x, lo, hi, aux):
    """Window averages (G, F) of score outer products and Hessians of q_t."""
    d = theta.shape[0]
    m = hi - lo + 1
    G = np.zeros((d, d))
    F = np.zeros((d, d))
    if code == AR:
        p = int(aux[0])
        icpt = aux[1] > 0.5
        z = np.empty(d)
        for t in range(lo, hi + 1):
            _ar_regressor(x, t, p, icpt, z)
            r = x[t - 1]
            for i in range(d):
                r -= theta[i] * z[i]
            for i in range(d):
                for j in range(d):
                    G[i, j] += 4.0 * r * r * z[i] * z[j]
                    F[i, j] += 2.0 * z[i] * z[j]
    elif code == GARCH:
        _, g, h = garch_terms(theta, x, lo, hi, lookback_start(lo, theta[2]))
        for t in range(m):
            for i in range(d):
                for j in range(d):
                    G[i, j] += g[t, i] * g[t, j]
                    F[i, j] += h[t, i, j]
    else:
        _, g, h = mean_garch_terms(theta[0], x, lo, hi, lookback_start(lo, aux[2]),
                                   aux[0], aux[1], aux[2])
        for t in range(m):
            G[0, 0] += g[t] * g[t]
            F[0, 0] += h[t]
    return G / m, F / m
