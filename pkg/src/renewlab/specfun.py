"""Closed-form constants, tail normalizations, one-sided stable laws and
Fourier kernel pairs.

Conventions
-----------
The one-sided stable law has characteristic function

    E exp(i b X) = exp(-conj(c_beta) b**beta)   for b > 0

(and the complex conjugate for b < 0), where
``c_beta = Gamma(1 - beta) exp(i pi beta / 2)``.  Equivalently its Laplace
transform is ``exp(-Gamma(1 - beta) s**beta)``, so that ``P(X > t) ~ t**-beta``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericalAccuracyError

__all__ = [
    "TailModel",
    "RenewalConstants",
    "StableGrid",
    "StableLaw",
    "KernelValues",
    "renewal_constants",
    "c_beta_closed_form",
    "c_beta_quadrature",
    "m_of_t",
    "q_beta",
    "stable_density",
    "stable_sampler",
    "kernel_pair",
    "gamma_a",
    "g_a",
    "K_a",
    "k_a",
]


# ---------------------------------------------------------------------------
# tail model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailModel:
    """Regularly varying tail ``P(tau > t) = ell(t) t**-beta``.

    ``ell_kind="constant"`` gives ``ell(t) = c0``; ``"logarithmic"`` gives
    ``ell(t) = c0 (1 + log(t / t_min))``, which is slowly varying and stays
    positive on ``[t_min, inf)``.
    """

    beta: float
    c0: float = 1.0
    ell_kind: str = "constant"
    t_min: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise DomainError(f"beta must lie in (0, 1], got {self.beta}")
        if not self.c0 > 0:
            raise DomainError(f"c0 must be positive, got {self.c0}")
        if self.ell_kind not in ("constant", "logarithmic"):
            raise DomainError(f"unknown ell_kind {self.ell_kind!r}")
        if not self.t_min > 0:
            raise DomainError(f"t_min must be positive, got {self.t_min}")

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t_min):
            raise DomainError(f"t must be >= t_min={self.t_min}")
        return t

    def ell(self, t):
        t = self._check(t)
        if self.ell_kind == "constant":
            return self.c0 * np.ones_like(t)
        return self.c0 * (1.0 + np.log(t / self.t_min))

    def ell_tilde(self, t):
        """``int_{t_min}^t ell(s) / s ds`` in closed form."""
        t = self._check(t)
        L = np.log(t / self.t_min)
        if self.ell_kind == "constant":
            return self.c0 * L
        return self.c0 * (L + 0.5 * L * L)

    def survival(self, t):
        t = self._check(t)
        return self.ell(t) * t ** (-self.beta)

    def m(self, t):
        return m_of_t(self, t)


def m_of_t(tail: TailModel, t):
    """Renewal normalization: ``ell(t) t**(1-beta)`` for beta < 1, else
    ``ell_tilde(t)``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < tail.t_min):
        raise DomainError(f"t must be >= t_min={tail.t_min}")
    if tail.beta < 1.0:
        out = tail.ell(t_arr) * t_arr ** (1.0 - tail.beta)
    else:
        out = tail.ell_tilde(t_arr)
    return float(out) if np.ndim(t) == 0 else out


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RenewalConstants:
    beta: float
    d_beta: float
    D_beta: float
    D_beta_prime: float
    c_beta: complex | None  # None at beta in {0, 1}


def c_beta_closed_form(beta: float) -> complex:
    return complex(special.gamma(1.0 - beta) * np.exp(0.5j * np.pi * beta))


def c_beta_quadrature(beta: float) -> complex:
    """``i * int_0^inf exp(-i s) s**-beta ds`` by oscillatory quadrature.

    The integral is split at 1: an algebraic-singularity rule on ``[0, 1]``
    and QAWF (Fourier-weighted, infinite range) on ``[1, inf)``.
    """
    if not (0.0 < beta < 1.0):
        raise DomainError("c_beta is defined for beta in (0, 1)")
    opts = dict(limit=400, epsabs=1e-13, epsrel=1e-13)
    cos0, _ = integrate.quad(np.cos, 0.0, 1.0, weight="alg", wvar=(-beta, 0.0), **opts)
    sin0, _ = integrate.quad(np.sin, 0.0, 1.0, weight="alg", wvar=(-beta, 0.0), **opts)
    power = lambda s: s ** (-beta)  # noqa: E731
    with warnings.catch_warnings():
        # QAWF flags slow cycles near its 1e-13 target; the sum still converges
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        cos1, _ = integrate.quad(power, 1.0, np.inf, weight="cos", wvar=1.0, limlst=200,
                                 epsabs=1e-13)
        sin1, _ = integrate.quad(power, 1.0, np.inf, weight="sin", wvar=1.0, limlst=200,
                                 epsabs=1e-13)
    C = cos0 + cos1
    S = sin0 + sin1
    # i * (C - i S) = S + i C
    return complex(S, C)


def renewal_constants(beta: float, check: bool = True) -> RenewalConstants:
    """``d_beta``, ``D_beta``, ``D'_beta`` and ``c_beta`` for ``beta`` in [0, 1].

    With ``check=True`` the closed form of ``c_beta`` is compared against
    oscillatory quadrature of its defining integral (relative error 1e-8).
    """
    beta = float(beta)
    if not (0.0 <= beta <= 1.0) or math.isnan(beta):
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    if beta in (0.0, 1.0):
        d = 1.0 if beta == 1.0 else 0.0
        return RenewalConstants(beta, d, 1.0, 1.0, None)
    d = math.sin(beta * math.pi) / math.pi
    D = 1.0 / (special.gamma(1.0 - beta) * special.gamma(1.0 + beta))
    Dp = 1.0 / special.gamma(1.0 - beta)
    c = c_beta_closed_form(beta)
    if check:
        cq = c_beta_quadrature(beta)
        rel = abs(cq - c) / abs(c)
        if rel > 1e-8:
            raise NumericalAccuracyError(
                f"c_beta quadrature disagrees with closed form (rel err {rel:.2e})", achieved=cq
            )
    return RenewalConstants(beta, d, float(D), float(Dp), c)


# ---------------------------------------------------------------------------
# one-sided stable density
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _panel_nodes(edges):
    """Gauss-Legendre nodes and weights on consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    x = (a + b) * 0.5 + half * _GL_NODES[None, :]
    w = half * _GL_WEIGHTS[None, :]
    return x.ravel(), w.ravel()


def _bandwidth(beta: float, eps: float = 1e-10) -> float:
    re_c = special.gamma(1.0 - beta) * math.cos(0.5 * math.pi * beta)
    return (-math.log(eps) / re_c) ** (1.0 / beta)


def _fourier_nodes(beta: float, t_max: float):
    B = _bandwidth(beta)
    width = min(0.25, 2.0 / max(t_max, 1.0))
    graded = 0.25 * 2.0 ** -np.arange(48, -1, -1.0)
    uniform = np.arange(0.25 + width, B + width, width)
    edges = np.concatenate([[0.0], graded, uniform])
    return _panel_nodes(edges), B


def _q_fourier(beta, t, chunk=256):
    """Real-part inversion ``(1/pi) Re int_0^B exp(-i b t - conj(c) b**beta) db``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    (b, w), _ = _fourier_nodes(beta, np.max(np.abs(t)) if t.size else 1.0)
    phi = np.exp(-np.conj(c_beta_closed_form(beta)) * b**beta) * w
    out = np.empty(t.size)
    for s in range(0, t.size, chunk):
        tt = t[s : s + chunk, None]
        out[s : s + chunk] = (np.exp(-1j * tt * b[None, :]) @ phi).real / np.pi
    return out


# rotated contour b = -i u / t; valid for t > 0
_LAPLACE_EDGES = np.concatenate([[0.0], 10.0 ** np.arange(-24.0, 0.0, 0.1), np.arange(1.0, 240.5, 0.5)])
_LAPLACE_V, _LAPLACE_W = _panel_nodes(_LAPLACE_EDGES)


def _q_laplace(beta, t, chunk=2048):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    kappa = special.gamma(1.0 - beta)
    cb, sb = math.cos(math.pi * beta), math.sin(math.pi * beta)
    v, w = _LAPLACE_V, _LAPLACE_W * np.exp(-_LAPLACE_V)
    out = np.empty(t.size)
    for s in range(0, t.size, chunk):
        tt = t[s : s + chunk, None]
        z = kappa * (v[None, :] / tt) ** beta
        out[s : s + chunk] = (np.exp(-z * cb) * np.sin(z * sb)) @ w / (np.pi * t[s : s + chunk])
    return out


def _laplace_switch(beta: float) -> float:
    """Smallest t from which the rotated-contour integrand stays O(1)."""
    if beta < 0.5:
        return 0.0
    a = special.gamma(1.0 - beta) * abs(math.cos(math.pi * beta))
    v_end = _LAPLACE_EDGES[-1]
    for t in np.arange(1.0, 200.0, 0.5):
        u = (a * beta / t) ** (1.0 / (1.0 - beta))
        peak = t * u * (1.0 - beta) / beta
        if peak <= 0.05 and a * (v_end / t) ** beta - v_end < -40.0:
            return float(t)
    return 200.0


def q_beta(beta: float, t):
    """Density of the one-sided stable law at ``t`` by numerical inversion.

    The direct Fourier integral is used up to a switch point; beyond it the
    contour is rotated onto the negative imaginary axis, where the integrand
    no longer oscillates in ``t``.
    """
    if not (0.0 < beta < 1.0):
        raise DomainError("q_beta needs beta in (0, 1)")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros(t_arr.size)
    ts = _laplace_switch(beta)
    lap = t_arr > max(ts, 0.0)
    if ts > 0:
        four = ~lap
        if np.any(four):
            out[four] = _q_fourier(beta, t_arr[four])
    if np.any(lap):
        out[lap] = _q_laplace(beta, t_arr[lap])
    return float(out[0]) if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class StableGrid:
    """Tabulation grid: uniform core with spacing ``dt`` on ``[-t_neg, t_switch]``
    followed by a log-spaced tail with ``per_decade`` points per decade,
    extended until the asymptotic mass ``t**-beta`` beyond it is below
    ``tail_tol``."""

    dt: float = 0.005
    t_neg: float = 2.0
    per_decade: int = 1000
    tail_tol: float = 1e-7


@dataclass
class StableLaw:
    beta: float
    c_beta: complex
    t: np.ndarray
    q: np.ndarray
    inversion_bandwidth: float
    t_switch: float
    raw_min: float = 0.0
    _cdf: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        dt = np.diff(self.t)
        self._cdf = np.concatenate([[0.0], np.cumsum(0.5 * dt * (self.q[1:] + self.q[:-1]))])

    @property
    def total_mass(self) -> float:
        return float(self._cdf[-1])

    @property
    def negative_mass(self) -> float:
        neg = self.t <= 0
        if neg.sum() < 2:
            return 0.0
        return float(np.trapezoid(self.q[neg], self.t[neg]))

    @property
    def max_density(self) -> float:
        return float(self.q.max())

    def pdf(self, t):
        """Exact evaluation (not interpolated)."""
        return q_beta(self.beta, t)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.interp(t, self.t, self._cdf, left=0.0, right=self._cdf[-1])

    def window_average(self, lo, hi):
        """Mean of ``q`` over ``[lo, hi]`` using the tabulated CDF."""
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        return (self.cdf(hi) - self.cdf(lo)) / (hi - lo)

    def moment_identity(self) -> float:
        """``int_0^inf x**(-1/beta) q(x**(-1/beta)) dx`` (equals ``d_beta``)."""
        b = self.beta
        f = lambda x: x ** (-1.0 / b) * q_beta(b, x ** (-1.0 / b)) if x > 0 else 0.0  # noqa: E731
        # the integrand is ~ beta*x near 0 and vanishes rapidly beyond x ~ 10
        pieces = [0.0, 0.05, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0]
        return float(sum(integrate.quad(f, a, c, limit=200, epsabs=1e-12, epsrel=1e-10)[0]
                         for a, c in zip(pieces[:-1], pieces[1:])))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "q_beta"])
            for ti, qi in zip(self.t, self.q):
                w.writerow([repr(float(ti)), repr(float(qi))])


def stable_density(beta: float, grid_spec: StableGrid | None = None) -> StableLaw:
    """Tabulate the one-sided stable density and validate the table.

    Raises
    ------
    NumericalAccuracyError
        If the trapezoidal integral over the grid is not within 1e-6 of 1.
    """
    if not (0.0 < beta < 1.0):
        raise DomainError("stable_density needs beta in (0, 1)")
    gs = grid_spec or StableGrid()
    # the uniform core must cover the bulk, which sits near Gamma(1-beta)**(1/beta)
    ts = max(_laplace_switch(beta), 20.0, 3.0 * special.gamma(1.0 - beta) ** (1.0 / beta))
    core = np.arange(-gs.t_neg, ts + 0.5 * gs.dt, gs.dt)
    core = core[(core <= 0) | (core >= gs.dt)]
    if beta < 0.5:
        # mass of small-beta laws is spread on a log scale even inside the core
        n = int(math.ceil(math.log10(ts / gs.dt) * gs.per_decade))
        core = np.concatenate([core[core <= 0], gs.dt * (ts / gs.dt) ** (np.arange(n + 1) / n)])
    # small-beta laws carry mass many decades below dt; walk down until negligible
    left = []
    hi = gs.dt
    while hi > 1e-300:
        dec = hi * 10.0 ** (-np.arange(1, gs.per_decade + 1) / gs.per_decade)
        qd = q_beta(beta, dec)
        left.append(dec)
        if np.max(qd * dec) < 1e-13:
            break
        hi = dec[-1]
    left = np.sort(np.concatenate(left))
    core = np.concatenate([core[core <= 0], left, core[core > 0]])
    t_end = gs.tail_tol ** (-1.0 / beta)
    n_dec = math.log10(t_end / ts)
    tail = ts * 10.0 ** (np.arange(1, int(math.ceil(n_dec * gs.per_decade)) + 1) / gs.per_decade)
    t = np.concatenate([core, tail])
    q = np.zeros_like(t)
    pos = t > 0
    q[pos] = q_beta(beta, t[pos])
    if _laplace_switch(beta) > 0:
        neg = ~pos
        q[neg] = _q_fourier(beta, t[neg])
    raw_min = float(q.min())
    if raw_min < -1e-8:
        raise NumericalAccuracyError(f"inverted density has negative values {raw_min:.2e}", achieved=raw_min)
    law = StableLaw(beta, c_beta_closed_form(beta), t, np.clip(q, 0.0, None),
                    _bandwidth(beta), ts, raw_min)
    if abs(law.total_mass - 1.0) > 1e-6:
        raise NumericalAccuracyError(
            f"stable density integrates to {law.total_mass:.9f}", achieved=law.total_mass
        )
    return law


def stable_sampler(beta: float, size: int, seed=None) -> np.ndarray:
    """i.i.d. draws from the one-sided stable law (Chambers-Mallows-Stuck).

    Kanter's form: ``S = sin(beta U) / sin(U)**(1/beta) *
    (sin((1-beta) U) / W)**((1-beta)/beta)`` has Laplace transform
    ``exp(-s**beta)``; scaling by ``Gamma(1-beta)**(1/beta)`` gives
    characteristic function ``exp(-c_beta |b|**beta)`` in the convention above.
    """
    if not (0.0 < beta < 1.0):
        raise DomainError("stable_sampler needs beta in (0, 1)")
    rng = np.random.default_rng(seed)
    U = rng.uniform(0.0, np.pi, size)
    W = rng.standard_exponential(size)
    S = (np.sin(beta * U) / np.sin(U) ** (1.0 / beta)) * (np.sin((1.0 - beta) * U) / W) ** (
        (1.0 - beta) / beta
    )
    return special.gamma(1.0 - beta) ** (1.0 / beta) * S


# ---------------------------------------------------------------------------
# kernel pairs
# ---------------------------------------------------------------------------


class KernelValues(NamedTuple):
    gamma_a: float
    g_a: float
    K_a: float
    k_a: float


def gamma_a(x, a):
    """``2 (1 - cos a x) / (a x)**2`` with value 1 at 0."""
    x = np.asarray(x, dtype=float)
    ax = a * x
    small = np.abs(ax) < 1e-4
    safe = np.where(small, 1.0, ax)
    out = np.where(small, 1.0 - ax * ax / 12.0, 2.0 * (1.0 - np.cos(safe)) / safe**2)
    return out if out.ndim else float(out)


def g_a(b, a):
    """Triangle ``a**-1 (1 - |b|/a)`` on ``|b| <= a``; Fourier pair of ``gamma_a``."""
    b = np.asarray(b, dtype=float)
    out = np.where(np.abs(b) <= a, (1.0 - np.abs(b) / a) / a, 0.0)
    return out if out.ndim else float(out)


def K_a(x, a):
    """Fejer kernel ``a**-1 K(x/a)``, ``K(x) = 2 sin(x/2)**2 / (pi x**2)``."""
    x = np.asarray(x, dtype=float) / a
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    K = np.where(small, (1.0 - x * x / 12.0) / (2.0 * np.pi), 2.0 * np.sin(0.5 * safe) ** 2 / (np.pi * safe**2))
    out = K / a
    return out if out.ndim else float(out)


def k_a(b, a):
    """``k(a b)`` with ``k(b) = (1 - |b|)_+``."""
    ab = np.abs(a * np.asarray(b, dtype=float))
    out = np.where(ab < 1.0, 1.0 - ab, 0.0)
    return out if out.ndim else float(out)


def kernel_pair(a: float, x_or_b: float) -> KernelValues:
    if not a > 0:
        raise DomainError("kernel scale a must be positive")
    return KernelValues(gamma_a(x_or_b, a), g_a(x_or_b, a), K_a(x_or_b, a), k_a(x_or_b, a))
