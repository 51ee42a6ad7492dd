"""Intermittent map ``g(x) = x(1 + c1 x^gamma1) mod 1``, its first-return
system on ``Y = [x_star, 1]``, roofs, Birkhoff sums and the suspension
semiflow."""

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator

from . import _kernels
from .errors import DomainError, FitError, TruncationError
from .specfun import TailModel

log = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 10**9


def _bisect_root(fun, lo, hi, tol=1e-15):
    """Plain bisection; ``fun`` increasing with ``fun(lo) <= 0 <= fun(hi)``."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo <= tol:
            break
        if fun(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class IntermittentMapSpec:
    """Parameters of the map; ``x_star`` solves ``x(1 + c1 x^gamma1) = 1``."""

    gamma1: float = 4.0 / 3.0
    c1: float = 1.0
    x_star: float = field(init=False)

    def __post_init__(self):
        if not self.gamma1 >= 1.0:
            raise DomainError(f"gamma1 must be >= 1, got {self.gamma1}")
        if not 0.0 < self.c1 <= 1.0:
            raise DomainError(f"c1 must lie in (0, 1], got {self.c1}")
        g, c = self.gamma1, self.c1
        xs = _bisect_root(lambda x: x * (1.0 + c * x**g) - 1.0, 0.0, 1.0)
        object.__setattr__(self, "x_star", xs)

    @property
    def beta_predicted(self):
        return 1.0 / self.gamma1

    @property
    def Y(self):
        return (self.x_star, 1.0)

    def __call__(self, x):
        return map_apply(self, x)

    def inverse_left(self, z):
        """Preimage of ``z in [0, 1]`` under the left branch."""
        g, c = self.gamma1, self.c1
        return _bisect_root(lambda x: x + c * x ** (1.0 + g) - z, 0.0, self.x_star)

    def inverse_right(self, z):
        """Preimage of ``z in [0, c1]`` under the right branch."""
        g, c = self.gamma1, self.c1
        return _bisect_root(lambda x: x + c * x ** (1.0 + g) - 1.0 - z, self.x_star, 1.0)


@dataclass(frozen=True)
class RoofSpec:
    """Roof ``tau0(x) = a0 + a1 x``; the constant roof is ``a1 = 0``."""

    a0: float = 1.0
    a1: float = 0.5
    kind: str = "affine"

    def __post_init__(self):
        if self.kind not in ("affine", "constant"):
            raise DomainError(f"unknown roof kind {self.kind!r}")
        if self.a0 < 1.0 or self.a1 < 0.0:
            raise DomainError("roof needs a0 >= 1 and a1 >= 0 so that tau0 >= 1")
        if self.kind == "constant" and self.a1 != 0.0:
            raise DomainError("constant roof has a1 = 0")

    @classmethod
    def affine(cls, a0=1.0, a1=0.5):
        return cls(float(a0), float(a1), "affine")

    @classmethod
    def constant(cls, c):
        return cls(float(c), 0.0, "constant")

    @classmethod
    def parse(cls, text):
        """``"affine:1,0.5"`` or ``"constant:1.5"``."""
        kind, _, args = text.partition(":")
        vals = [float(v) for v in args.split(",") if v.strip()]
        if kind == "constant" and len(vals) == 1:
            return cls.constant(vals[0])
        if kind == "affine" and len(vals) == 2:
            return cls.affine(*vals)
        raise DomainError(f"cannot parse roof {text!r}")

    def __call__(self, x):
        return self.a0 + self.a1 * np.asarray(x, dtype=float)

    def __str__(self):
        if self.kind == "constant":
            return f"constant:{self.a0:g}"
        return f"affine:{self.a0:g},{self.a1:g}"


class InducedStep(NamedTuple):
    y: float
    sigma: int
    F_y: float
    tau: float


class SemiflowPoint(NamedTuple):
    y: float
    u: float


def map_apply(spec, x):
    """``g(x)``; vectorized over arrays."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise DomainError("map_apply needs x in [0, 1]")
    y = x + spec.c1 * x ** (1.0 + spec.gamma1)
    y = np.where(x >= spec.x_star, y - 1.0, y)
    return float(y) if y.ndim == 0 else y


class InducedSystem:
    """First-return system ``(Y, F, tau)`` of the map under a roof."""

    iid = False

    def __init__(self, spec=None, roof=None, max_iter=DEFAULT_MAX_ITER):
        self.spec = spec if spec is not None else IntermittentMapSpec()
        self.roof = roof if roof is not None else RoofSpec()
        self.max_iter = int(max_iter)

    def __repr__(self):
        return (f"InducedSystem(gamma1={self.spec.gamma1:g}, c1={self.spec.c1:g}, "
                f"roof={self.roof})")

    @property
    def beta(self):
        return self.spec.beta_predicted

    @property
    def Y(self):
        return self.spec.Y

    @property
    def essinf_tau(self):
        """Lower bound of ``tau`` on ``Y`` (``sigma >= 1`` and ``tau0`` increasing)."""
        return float(self.roof(self.spec.x_star))

    @property
    def params(self):
        s, r = self.spec, self.roof
        return np.array([0.0, s.gamma1, s.c1, s.x_star, r.a0, r.a1, 0.0, 0.0,
                         float(self.max_iter), 0.0])

    def step(self, y):
        y = float(y)
        lo, hi = self.Y
        if not lo <= y <= hi:
            raise DomainError(f"y={y} is outside Y=[{lo}, {hi}]")
        sig, fy, tau, flag = _kernels.excursion_batch(self.params, np.array([y]), np.inf)
        if flag[0] != 0:
            raise TruncationError(f"excursion from y={y} exceeded max_iter={self.max_iter}",
                                  x=float(fy[0]), sigma=int(sig[0]), tau=float(tau[0]))
        return InducedStep(y, int(sig[0]), float(fy[0]), float(tau[0]))

    def step_many(self, ys, horizon=np.inf):
        """Vectorized steps: ``(sigma, F_y, tau, flag)`` with kernel flags."""
        ys = np.ascontiguousarray(ys, dtype=float)
        return _kernels.excursion_batch(self.params, ys, float(horizon))


class IIDSystem:
    """Orbit driver with i.i.d. roofs and a one-point base space.

    The roof is ``tau = max(t_floor, (c0/U)^(1/beta))`` so that
    ``P(tau > t) = c0 t^-beta`` exactly for ``t >= t_floor``.
    ``body="pareto"`` takes ``t_floor = c0^(1/beta)`` (pure Pareto).
    ``body="balanced"`` takes ``t_floor = (c0/(1 - beta))^(1/beta)``, the
    unique floor with ``int_0^inf (P(tau > t) - c0 t^-beta) dt = 0``; this
    cancels the ``t^(beta - 1)`` second-order term of the renewal function.
    """

    iid = True
    Y = (0.0, 1.0)

    def __init__(self, tail=None, body="balanced", max_iter=DEFAULT_MAX_ITER):
        tail = tail if tail is not None else TailModel(0.75, c0=1.0)
        if tail.ell_kind != "constant":
            raise DomainError("the i.i.d. driver supports constant ell only")
        if not 0.0 < tail.beta < 1.0:
            raise DomainError("i.i.d. driver needs beta in (0, 1)")
        if body not in ("balanced", "pareto"):
            raise DomainError(f"unknown body {body!r}")
        self.tail = tail
        self.body = body
        self.max_iter = int(max_iter)
        if self.essinf_tau <= 1.0:
            raise DomainError(f"essinf tau = {self.essinf_tau:g} must exceed 1; raise c0")

    def __repr__(self):
        return f"IIDSystem(beta={self.tail.beta:g}, c0={self.tail.c0:g}, body={self.body})"

    @property
    def beta(self):
        return self.tail.beta

    @property
    def essinf_tau(self):
        b, c0 = self.tail.beta, self.tail.c0
        if self.body == "pareto":
            return c0 ** (1.0 / b)
        return (c0 / (1.0 - b)) ** (1.0 / b)

    @property
    def params(self):
        return np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, self.tail.beta, self.tail.c0,
                         float(self.max_iter), self.essinf_tau])

    def sample(self, size, seed=0):
        u = np.random.default_rng(seed).random(size)
        return np.maximum(self.essinf_tau, (self.tail.c0 / u) ** (1.0 / self.tail.beta))

    def laplace(self, sigma):
        """``E exp(-sigma tau) = e^-z - c0 sigma^beta Gamma(1 - beta, z)``, ``z = sigma t_floor``."""
        from scipy.special import gamma, gammaincc

        b, c0 = self.tail.beta, self.tail.c0
        z = sigma * self.essinf_tau
        return math.exp(-z) - c0 * sigma**b * gamma(1.0 - b) * gammaincc(1.0 - b, z)


def first_return(spec, roof, y, max_iter=DEFAULT_MAX_ITER):
    return InducedSystem(spec, roof, max_iter).step(y)


def birkhoff_tau(steps):
    """Running sums ``tau_0 = 0, tau_1, ...`` of a consistent orbit."""
    steps = list(steps)
    for a, b in zip(steps, steps[1:]):
        if a.F_y != b.y:
            raise DomainError("inconsistent orbit: F_y does not feed the next step")
    out = np.zeros(len(steps) + 1)
    np.cumsum([s.tau for s in steps], out=out[1:])
    return out


def orbit(system, y0, n_steps):
    """``n_steps`` consecutive induced steps from ``y0``."""
    ys = np.empty(n_steps)
    taus = np.empty(n_steps)
    sig = np.empty(n_steps, np.int64)
    done = _kernels.birkhoff_orbit(system.params, float(y0), n_steps, ys, taus, sig)
    if done < n_steps:
        raise TruncationError(f"orbit truncated after {done} steps", x=float(ys[done]))
    fy = np.append(ys[1:], np.nan)
    if n_steps:
        fy[-1] = system.step(ys[-1]).F_y
    return [InducedStep(float(a), int(s), float(b), float(t))
            for a, s, b, t in zip(ys, sig, fy, taus)]


@dataclass(frozen=True, eq=False)
class InvariantDensity:
    """Piecewise-constant probability density on ``Y``."""

    edges: np.ndarray
    masses: np.ndarray
    method: str = "ulam"

    @property
    def density(self):
        return self.masses / np.diff(self.edges)

    @property
    def cdf_table(self):
        c = np.concatenate([[0.0], np.cumsum(self.masses)])
        return c / c[-1]

    def cdf(self, x):
        return np.interp(x, self.edges, self.cdf_table)

    def mu(self, interval):
        lo, hi = interval
        return float(self.cdf(hi) - self.cdf(lo))

    def l1_distance(self, other):
        if not np.array_equal(self.edges, other.edges):
            raise DomainError("densities live on different grids")
        return float(np.abs(self.masses - other.masses).sum())

    def sample(self, size, seed=0):
        """Inverse-CDF samples of ``y ~ mu``."""
        u = np.random.default_rng(seed).random(size)
        return np.interp(u, self.cdf_table, self.edges)


def invariant_measure_Y(spec, grid_size, method="ulam", roof=None, n_steps=10**7,
                        burn=10**3, seed=0, samples_per_cell=None):
    """Invariant density of ``F`` on ``Y``: Ulam eigenvector or orbit histogram."""
    if grid_size < 2:
        raise DomainError("grid_size must be >= 2")
    system = InducedSystem(spec, roof)
    if method == "ulam":
        from .transfer import UlamTransferOperator

        op = UlamTransferOperator(grid_size=grid_size, random_state=seed,
                                  **({} if samples_per_cell is None
                                     else {"samples_per_cell": samples_per_cell}))
        return op.fit(system).invariant_density_
    if method == "birkhoff":
        edges = np.linspace(spec.x_star, 1.0, grid_size + 1)
        counts, _ = _kernels.histogram_orbit(system.params, 0.5 * (spec.x_star + 1.0),
                                             int(n_steps), int(burn), edges, int(seed))
        return InvariantDensity(edges, counts / counts.sum(), "birkhoff")
    raise DomainError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# tail estimation
# ---------------------------------------------------------------------------


class TailIndexEstimator(BaseEstimator):
    """Fit ``P(tau > t) ~ c0 t^-beta`` from right-censored samples.

    ``beta_`` is the least-squares slope of log survival on log-spaced points
    of ``[t_lo, t_hi]``; ``hill_beta_`` is the censored Hill estimate above
    ``t_lo``. ``c0_`` is the geometric mean of ``S(t) t^beta`` over
    ``[c0_lo, t_hi]`` (default: the top decade, where the pre-asymptotic
    excess has died out) with beta set to ``beta_ref`` when given, else to
    ``beta_``.
    """

    def __init__(self, t_lo=1e2, t_hi=1e4, n_points=41, beta_ref=None, c0_lo=None):
        self.t_lo = t_lo
        self.t_hi = t_hi
        self.n_points = n_points
        self.beta_ref = beta_ref
        self.c0_lo = c0_lo

    def fit(self, tau, censored=None, censor_level=np.inf):
        tau = np.asarray(tau, dtype=float)
        cens = np.zeros(tau.size, bool) if censored is None else np.asarray(censored, bool)
        order = np.argsort(tau, kind="stable")
        tau, cens = tau[order], cens[order]
        n = tau.size
        if self.t_hi > censor_level:
            raise FitError("fitting range extends past the censoring level")
        ts = np.geomspace(self.t_lo, self.t_hi, self.n_points)
        surv = (n - np.searchsorted(tau, ts, side="right")) / n
        if np.count_nonzero(surv > 0) < 3 or surv[0] * n < 10:
            raise FitError("too few samples above the fitting range")
        ok = surv > 0
        slope, icpt = np.polyfit(np.log(ts[ok]), np.log(surv[ok]), 1)
        self.beta_ = -float(slope)
        tail = tau > self.t_lo
        k = int(np.count_nonzero(tail & ~cens))
        logs = np.log(np.minimum(tau[tail], censor_level) / self.t_lo).sum()
        if k == 0 or logs <= 0:
            raise FitError("no uncensored exceedances for the Hill estimate")
        self.hill_beta_ = k / float(logs)
        b = self.beta_ if self.beta_ref is None else self.beta_ref
        c0_lo = self.t_hi / 10.0 if self.c0_lo is None else self.c0_lo
        top = ok & (ts >= c0_lo * (1 - 1e-12))
        if not top.any():
            raise FitError("no positive survival in the c0 range")
        self.c0_ = float(np.exp(np.mean(np.log(surv[top] * ts[top] ** b))))
        self.table_ = {"t": ts, "survival": surv,
                       "ratio": surv * ts**b / self.c0_}
        self.n_samples_ = n
        self.n_censored_ = int(cens.sum())
        return self

    def survival(self, t):
        return self.c0_ * np.asarray(t, dtype=float) ** (-self.beta_)


class TailFit(NamedTuple):
    c0_hat: float
    beta_hat: float
    diagnostics: dict


def sample_tau(system, density, size, seed=0, horizon=1e7):
    """Induced roofs of ``y ~ mu`` censored at ``horizon``."""
    tau = np.empty(size)
    flag = np.empty(size, np.int64)
    _kernels.tau_pass(system.params, density.edges, density.cdf_table, int(seed), 0,
                      int(size), float(horizon), tau, flag)
    return tau, flag


def tail_fit(spec, roof=None, sample_size=2 * 10**6, seed=0, density=None, grid_size=2**12,
             t_lo=1e2, t_hi=1e4, horizon=None):
    """Sample ``y ~ mu``, fit the tail of ``tau`` and report diagnostics.

    Roofs are censored at ``horizon`` (default ``10 t_hi``).
    """
    horizon = 10.0 * t_hi if horizon is None else horizon
    if sample_size < 10**4:
        raise DomainError("sample_size must be >= 1e4")
    system = InducedSystem(spec, roof)
    if density is None:
        density = invariant_measure_Y(spec, grid_size, "ulam", roof=roof, seed=seed)
    tau, flag = sample_tau(system, density, sample_size, seed, horizon)
    est = TailIndexEstimator(t_lo, t_hi, beta_ref=spec.beta_predicted)
    est.fit(tau, censored=flag != 0, censor_level=horizon)
    diag = {"hill_beta": est.hill_beta_, "n_censored": est.n_censored_,
            "table": est.table_, "estimator": est}
    return TailFit(est.c0_, est.beta_, diag)


# ---------------------------------------------------------------------------
# periodic orbits
# ---------------------------------------------------------------------------


class PeriodicOrbit(NamedTuple):
    k: int
    itinerary: tuple
    y: float
    period: float


class PeriodicReport(NamedTuple):
    orbits: list
    ratios: list
    skipped: list

    def irrational_pairs(self, tol=1e-6, max_den=100):
        return [r for r in self.ratios if r[3] > tol]


def _inverse_branch(spec, n, z):
    """Point of ``{sigma = n}`` mapped to ``z`` by ``F = g^n``."""
    for _ in range(n - 1):
        z = spec.inverse_left(z)
    if z > spec.c1:
        return None
    return spec.inverse_right(z)


def _primitive_itineraries(k, n_max):
    seen = set()
    for it in itertools.product(range(1, n_max + 1), repeat=k):
        rots = {it[i:] + it[:i] for i in range(k)}
        if len(rots) < k or min(rots) in seen:
            continue
        seen.add(min(rots))
        yield min(rots)


def periodic_orbit_periods(spec, roof=None, k_max=3, n_max=4, max_den=100):
    """Periodic points of ``F`` of period ``k <= k_max`` with excursion lengths
    ``<= n_max``; flow periods ``q = tau_k(y)`` and their pairwise ratios."""
    if k_max < 2:
        raise DomainError("k_max must be >= 2")
    roof = roof if roof is not None else RoofSpec()
    system = InducedSystem(spec, roof)
    lo, hi = spec.Y
    orbits, skipped = [], []
    for k in range(1, k_max + 1):
        for it in _primitive_itineraries(k, n_max):
            y = 0.5 * (lo + hi)
            ok = True
            for _ in range(400):
                z = y
                for n in reversed(it):
                    z = _inverse_branch(spec, n, z)
                    if z is None:
                        break
                if z is None:
                    ok = False
                    break
                if abs(z - y) <= 1e-15:
                    y = z
                    break
                y = z
            if not ok or min(y - lo, hi - y) < 1e-12:
                skipped.append(it)
                log.info("no interior periodic point for itinerary %s", it)
                continue
            q, x = 0.0, y
            for n in it:
                st = system.step(x)
                if st.sigma != n:
                    ok = False
                    break
                q += st.tau
                x = st.F_y
            if not ok or abs(x - y) > 1e-9:
                skipped.append(it)
                log.info("itinerary %s failed the forward check", it)
                continue
            orbits.append(PeriodicOrbit(k, it, y, q))
    ratios = []
    for a, b in itertools.combinations(orbits, 2):
        r = a.period / b.period
        frac = Fraction(r).limit_denominator(max_den)
        ratios.append((a.itinerary, b.itinerary, r, abs(r - float(frac)), frac))
    return PeriodicReport(orbits, ratios, skipped)


# ---------------------------------------------------------------------------
# semiflow
# ---------------------------------------------------------------------------


def semiflow_evolve(point, t, system):
    """Flow ``(y, u)`` for time ``t``; returns the final point and the
    crossings ``(n, tau_n)`` measured from the start of the current block."""
    y, u = float(point.y), float(point.u)
    if t < 0:
        raise DomainError("t must be nonnegative")
    st = system.step(y)
    if not 0.0 <= u < st.tau:
        raise DomainError("u must lie in [0, tau(y))")
    target = u + t
    s = 0.0
    n = 0
    crossings = []
    while s + st.tau <= target:
        s += st.tau
        n += 1
        crossings.append((n, s))
        y = st.F_y
        st = system.step(y)
    return SemiflowPoint(y, target - s), crossings
