"""Compiled inner loops: map excursions, counter-based RNG and the renewal
scoring passes.

Every Monte Carlo sample ``i`` draws from its own splitmix64 stream keyed by
``(seed, i)``, so any partition of the index range into shards reproduces the
single-run numbers exactly.

Driver parameter vector ``P`` (float64):

    P[0] mode (0 = intermittent map, 1 = i.i.d. Pareto roof)
    P[1] gamma1   P[2] c1   P[3] x_star   P[4] a0   P[5] a1
    P[6] beta     P[7] c0   (i.i.d. mode: tau = max(P[9], (c0/U)**(1/beta)))
    P[8] max_iter P[9] floor of the i.i.d. roof
"""

import math

import numpy as np
from numba import njit

DD_THRESHOLD = 1e-8
U_SMALL = 1e-6
RESYNC = 256

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM = np.uint64(0xD1B54A32D192ED03)


@njit(cache=True, nogil=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def stream_init(seed, index):
    st = np.empty(1, dtype=np.uint64)
    st[0] = _mix(np.uint64(seed) * _GOLDEN + np.uint64(index + 1) * _STREAM)
    return st


@njit(cache=True, nogil=True)
def uniform(st):
    """Uniform on the open interval (0, 1)."""
    st[0] += _GOLDEN
    z = _mix(st[0])
    return ((z >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------------------
# the map
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def g_map(x, gamma, c1, xstar):
    y = x + c1 * x ** (1.0 + gamma)
    if x >= xstar:
        y -= 1.0
    return y


@njit(cache=True, nogil=True)
def excursion(y, gamma, c1, xstar, a0, a1, max_iter, horizon):
    """First return of ``y`` to ``[xstar, 1]``.

    Returns ``(sigma, F_y, sx, flag)`` where the induced roof is
    ``a0 * sigma + a1 * sx``.  ``flag`` is 0 on return, 1 when ``max_iter``
    was exhausted and 2 once the partial roof exceeds ``horizon`` (the
    returned state is then partial).

    Near 0 the factor ``u = c1 x^gamma`` is carried along by
    ``u <- u (1 + u)^gamma`` to second order and recomputed exactly every
    ``RESYNC`` steps; below ``DD_THRESHOLD`` the orbit is kept in
    double-double.
    """
    q = 0.5 * gamma * (gamma - 1.0)
    sx = y
    x = g_map(y, gamma, c1, xstar)
    n = 1
    while x < xstar:
        if a0 * n + a1 * sx > horizon:
            return n, x, sx, 2
        if n >= max_iter:
            return n, x, sx, 1
        u = c1 * x**gamma
        if u >= U_SMALL:
            sx += x
            x = x + u * x
            n += 1
            continue
        # a block of RESYNC steps moves the roof by at most RESYNC * (a0 + a1 xstar)
        safe = (n + RESYNC <= max_iter
                and a0 * (n + RESYNC) + a1 * (sx + RESYNC * xstar) <= horizon)
        if x >= DD_THRESHOLD:
            if safe:
                for _ in range(RESYNC):
                    sx += x
                    x = x + u * x
                    u = u * (1.0 + u * (gamma + q * u))
                n += RESYNC
                continue
            for _ in range(RESYNC):
                if a0 * n + a1 * sx > horizon:
                    return n, x, sx, 2
                if n >= max_iter:
                    return n, x, sx, 1
                sx += x
                x = x + u * x
                u = u * (1.0 + u * (gamma + q * u))
                n += 1
            continue
        # double-double creep away from the neutral fixed point
        hi = x
        lo = 0.0
        while hi < DD_THRESHOLD:
            safe = (n + RESYNC <= max_iter
                    and a0 * (n + RESYNC) + a1 * (sx + RESYNC * xstar) <= horizon)
            for _ in range(RESYNC):
                if not safe:
                    if a0 * n + a1 * sx > horizon:
                        return n, hi + lo, sx, 2
                    if n >= max_iter:
                        return n, hi + lo, sx, 1
                sx += hi
                inc = u * hi + lo
                s = hi + inc
                bb = s - hi
                err = (hi - (s - bb)) + (inc - bb)
                hi = s + err
                lo = err - (hi - s)
                u = u * (1.0 + u * (gamma + q * u))
                n += 1
            u = c1 * hi**gamma
        x = hi + lo
    return n, x, sx, 0


@njit(cache=True, nogil=True)
def induced_step(P, y, st, horizon):
    """One step of the orbit driver: ``(y_next, tau, flag)``."""
    if P[0] == 0.0:
        n, x, sx, flag = excursion(y, P[1], P[2], P[3], P[4], P[5], P[8], horizon)
        return x, P[4] * n + P[5] * sx, flag
    u = uniform(st)
    return 0.5, max(P[9], (P[7] / u) ** (1.0 / P[6])), 0


@njit(cache=True, nogil=True)
def excursion_batch(P, ys, horizon):
    m = ys.size
    sig = np.empty(m, np.int64)
    fy = np.empty(m)
    tau = np.empty(m)
    flags = np.empty(m, np.int64)
    for i in range(m):
        n, x, sx, f = excursion(ys[i], P[1], P[2], P[3], P[4], P[5], P[8], horizon)
        sig[i] = n
        fy[i] = x
        tau[i] = P[4] * n + P[5] * sx
        flags[i] = f
    return sig, fy, tau, flags


# ---------------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def sample_start(P, edges, cdf, ulo, uhi, st):
    """``y ~ mu`` conditioned on ``[F^-1(ulo), F^-1(uhi)]`` by inverse CDF of
    the piecewise-constant density."""
    u = ulo + (uhi - ulo) * uniform(st)
    if P[0] != 0.0:
        return 0.5
    j = np.searchsorted(cdf, u, side="right") - 1
    if j < 0:
        j = 0
    if j > edges.size - 2:
        j = edges.size - 2
    w = cdf[j + 1] - cdf[j]
    frac = 0.0 if w <= 0.0 else (u - cdf[j]) / w
    return edges[j] + (edges[j + 1] - edges[j]) * frac


# ---------------------------------------------------------------------------
# renewal passes; each processes sample indices [start, stop)
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def window_pass(P, edges, cdf, ulo, uhi, blo, bhi, tgrid, h, seed, start, stop):
    """Counts of ``tau_n in [t_i, t_i + h)`` with ``F^n y in B``."""
    nt = tgrid.size
    tot = np.zeros(nt, np.int64)
    sq = np.zeros(nt, np.int64)
    local = np.zeros(nt, np.int64)
    touched = np.empty(nt, np.int64)
    horizon = tgrid[nt - 1] + h
    discards = 0
    for i in range(start, stop):
        st = stream_init(seed, i)
        y = sample_start(P, edges, cdf, ulo, uhi, st)
        s = 0.0
        ntouch = 0
        bad = False
        while True:
            if blo <= y <= bhi:
                lo = np.searchsorted(tgrid, s - h, side="right")
                hi = np.searchsorted(tgrid, s, side="right")
                for k in range(lo, hi):
                    if local[k] == 0:
                        touched[ntouch] = k
                        ntouch += 1
                    local[k] += 1
            y, tau, flag = induced_step(P, y, st, horizon - s)
            if flag == 1:
                bad = True
                break
            if flag == 2:
                break
            s += tau
            if s >= horizon:
                break
        for q in range(ntouch):
            k = touched[q]
            if not bad:
                tot[k] += local[k]
                sq[k] += local[k] * local[k]
            local[k] = 0
        if bad:
            discards += 1
    return tot, sq, discards


@njit(cache=True, nogil=True)
def cumulative_pass(P, edges, cdf, ulo, uhi, blo, bhi, tgrid, seed, start, stop):
    """Counts of ``n >= 0`` with ``tau_n <= t_i`` and ``F^n y in B``."""
    nt = tgrid.size
    tot = np.zeros(nt, np.int64)
    sq = np.zeros(nt, np.int64)
    diff = np.zeros(nt + 1, np.int64)
    horizon = tgrid[nt - 1]
    discards = 0
    for i in range(start, stop):
        st = stream_init(seed, i)
        y = sample_start(P, edges, cdf, ulo, uhi, st)
        s = 0.0
        bad = False
        while True:
            if blo <= y <= bhi:
                diff[np.searchsorted(tgrid, s, side="left")] += 1
            y, tau, flag = induced_step(P, y, st, horizon - s)
            if flag == 1:
                bad = True
                break
            if flag == 2:
                break
            s += tau
            if s > horizon:
                break
        c = 0
        for k in range(nt):
            c += diff[k]
            diff[k] = 0
            if not bad:
                tot[k] += c
                sq[k] += c * c
        diff[nt] = 0
        if bad:
            discards += 1
    return tot, sq, discards


@njit(cache=True, nogil=True)
def rectangle_pass(P, edges, cdf, ulo, uhi, blo, bhi, a1, a2, b1, b2, t, seed, start, stop):
    """Hits of ``F_t(y, u) in B x [b1, b2]`` for ``(y, u)`` uniform on ``A x [a1, a2]``."""
    hits = 0
    discards = 0
    for i in range(start, stop):
        st = stream_init(seed, i)
        y = sample_start(P, edges, cdf, ulo, uhi, st)
        u = a1 + (a2 - a1) * uniform(st)
        T = t + u
        s = 0.0
        bad = False
        while True:
            yn, tau, flag = induced_step(P, y, st, T - s)
            if flag == 1:
                bad = True
                break
            if flag == 2 or s + tau > T:
                break
            s += tau
            y = yn
        if bad:
            discards += 1
        elif blo <= y <= bhi and b1 <= T - s <= b2:
            hits += 1
    return hits, discards


@njit(cache=True, nogil=True)
def occupation_pass(P, edges, cdf, ulo, uhi, blo, bhi, a1, a2, b1, b2, t, seed, start, stop, out):
    """Lebesgue time in ``B x [b1, b2]`` during ``[0, t]`` per sample; NaN marks a discard."""
    for i in range(start, stop):
        st = stream_init(seed, i)
        y = sample_start(P, edges, cdf, ulo, uhi, st)
        u = a1 + (a2 - a1) * uniform(st)
        s = 0.0
        occ = 0.0
        bad = False
        while True:
            if blo <= y <= bhi:
                lo = max(s - u + b1, 0.0)
                hi = min(s - u + b2, t)
                if hi > lo:
                    occ += hi - lo
            horizon = t + u - b1
            yn, tau, flag = induced_step(P, y, st, horizon - s)
            if flag == 1:
                bad = True
                break
            if flag == 2:
                break
            s += tau
            y = yn
            if s > horizon:
                break
        out[i - start] = np.nan if bad else occ


@njit(cache=True, nogil=True)
def window_integral_pass(P, edges, cdf, ulo, uhi, blo, bhi, a1, a2, b1, h, t, seed, start, stop, out):
    """Per sample ``int_{a1}^{a2} 1{tau_n in [t+u-b1-h, t+u-b1), F^n y in B} du``."""
    horizon = t + a2 - b1
    for i in range(start, stop):
        st = stream_init(seed, i)
        y = sample_start(P, edges, cdf, ulo, uhi, st)
        s = 0.0
        acc = 0.0
        bad = False
        while True:
            if blo <= y <= bhi:
                lo = max(s - t + b1, a1)
                hi = min(s - t + b1 + h, a2)
                if hi > lo:
                    acc += hi - lo
            yn, tau, flag = induced_step(P, y, st, horizon - s)
            if flag == 1:
                bad = True
                break
            if flag == 2:
                break
            s += tau
            y = yn
            if s > horizon:
                break
        out[i - start] = np.nan if bad else acc


@njit(cache=True, nogil=True)
def llt_pass(P, edges, cdf, ulo, uhi, blo, bhi, nlist, tgrids, hs, seed, start, stop):
    """Window counts of ``tau_n`` at fixed ``n`` for each ``n`` in ``nlist``."""
    nl, nt = tgrids.shape
    tot = np.zeros((nl, nt), np.int64)
    horizon = 0.0
    for k in range(nl):
        horizon = max(horizon, tgrids[k, nt - 1] + hs[k])
    discards = 0
    hitn = np.empty(nl, np.int64)
    for i in range(start, stop):
        st = stream_init(seed, i)
        y = sample_start(P, edges, cdf, ulo, uhi, st)
        s = 0.0
        n = 0
        lev = 0
        bad = False
        nh = 0
        while lev < nl:
            if n == nlist[lev]:
                if blo <= y <= bhi:
                    tg = tgrids[lev]
                    lo = np.searchsorted(tg, s - hs[lev], side="right")
                    hi = np.searchsorted(tg, s, side="right")
                    for j in range(lo, hi):
                        hitn[nh] = lev * nt + j
                        nh += 1
                lev += 1
                if lev == nl:
                    break
            y, tau, flag = induced_step(P, y, st, horizon - s)
            if flag == 1:
                bad = True
                break
            if flag == 2:
                break
            s += tau
            n += 1
            if s > horizon:
                break
        if bad:
            discards += 1
        else:
            for q in range(nh):
                tot[hitn[q] // nt, hitn[q] % nt] += 1
    return tot, discards


@njit(cache=True, nogil=True)
def laplace_pass(P, edges, cdf, ulo, uhi, blo, bhi, sigmas, seed, start, stop, out):
    """Per sample ``sum_n 1_B(F^n y) exp(-sigma tau_n)`` for each sigma."""
    ns = sigmas.size
    smin = sigmas.min()
    horizon = 40.0 / smin
    for i in range(start, stop):
        st = stream_init(seed, i)
        y = sample_start(P, edges, cdf, ulo, uhi, st)
        s = 0.0
        bad = False
        for k in range(ns):
            out[i - start, k] = 0.0
        while True:
            if blo <= y <= bhi:
                for k in range(ns):
                    out[i - start, k] += math.exp(-sigmas[k] * s)
            y, tau, flag = induced_step(P, y, st, horizon - s)
            if flag == 1:
                bad = True
                break
            if flag == 2:
                break
            s += tau
            if s > horizon:
                break
        if bad:
            for k in range(ns):
                out[i - start, k] = np.nan


@njit(cache=True, nogil=True)
def tau_pass(P, edges, cdf, seed, start, stop, horizon, out_tau, out_flag):
    """Induced roof of ``y ~ mu`` with censoring at ``horizon``."""
    for i in range(start, stop):
        st = stream_init(seed, i)
        y = sample_start(P, edges, cdf, 0.0, 1.0, st)
        n, x, sx, flag = excursion(y, P[1], P[2], P[3], P[4], P[5], P[8], horizon)
        out_tau[i - start] = P[4] * n + P[5] * sx
        out_flag[i - start] = flag


@njit(cache=True, nogil=True)
def birkhoff_orbit(P, y0, n_steps, out_y, out_tau, out_sigma):
    """Consecutive induced steps from ``y0``; returns the number completed."""
    y = y0
    st = stream_init(0, 0)
    for k in range(n_steps):
        out_y[k] = y
        n, x, sx, flag = excursion(y, P[1], P[2], P[3], P[4], P[5], P[8], np.inf)
        if flag != 0:
            return k
        out_tau[k] = P[4] * n + P[5] * sx
        out_sigma[k] = n
        y = x
    return n_steps


@njit(cache=True, nogil=True)
def histogram_orbit(P, y0, n_steps, burn, edges, seed):
    """Histogram of an F-orbit; a truncated excursion restarts the orbit
    from a fresh uniform point (followed by a new burn-in)."""
    counts = np.zeros(edges.size - 1, np.int64)
    y = y0
    lo = edges[0]
    span = edges[-1] - edges[0]
    m = edges.size - 1
    st = stream_init(seed, 0)
    restarts = 0
    k = 0
    b = burn
    while k < n_steps:
        n, x, sx, flag = excursion(y, P[1], P[2], P[3], P[4], P[5], P[8], np.inf)
        if flag != 0:
            restarts += 1
            y = lo + span * uniform(st)
            b = burn
            continue
        y = x
        if b > 0:
            b -= 1
            continue
        j = int((y - lo) / span * m)
        if j >= m:
            j = m - 1
        counts[j] += 1
        k += 1
    return counts, restarts
