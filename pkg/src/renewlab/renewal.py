"""Monte Carlo estimators of the renewal measure

    U_{A,B}(I) = sum_n mu(y in A, F^n y in B, tau_n(y) in I)

and of the semiflow quantities built from it. Orbits run through the compiled
driver, so the deterministic system and the i.i.d. baseline share one code
path. Sample ``i`` always uses stream ``(seed, i)``; shards only split the
index range and merge exactly.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .dynamics import IIDSystem, InducedSystem
from .errors import DomainError
from .specfun import TailModel, renewal_constants

MAX_DISCARD_FRACTION = 1e-4


@dataclass(frozen=True)
class TargetSets:
    """``A, B`` are subintervals of ``Y`` (``None`` means all of ``Y``);
    rectangles are ``A1 = A x [a1, a2]`` and ``B1 = B x [b1, b2]``."""

    A: tuple = None
    B: tuple = None
    a: tuple = (0.0, 1.0)
    b: tuple = (0.0, 0.5)

    def resolve(self, Y):
        lo, hi = Y
        A = tuple(self.A) if self.A is not None else (lo, hi)
        B = tuple(self.B) if self.B is not None else (lo, hi)
        for name, (p, q) in (("A", A), ("B", B)):
            if not lo <= p < q <= hi:
                raise DomainError(f"{name}={p, q} is not a subinterval of Y={Y}")
        for name, (p, q) in (("a", self.a), ("b", self.b)):
            if not 0.0 <= p < q:
                raise DomainError(f"rectangle heights {name}={p, q} need 0 <= lo < hi")
        return TargetSets(A, B, tuple(self.a), tuple(self.b))

    def check_heights(self, essinf_A, essinf_B):
        if self.a[1] > essinf_A:
            raise DomainError(f"a2={self.a[1]} exceeds essinf_A tau={essinf_A}")
        if self.b[1] > essinf_B:
            raise DomainError(f"b2={self.b[1]} exceeds essinf_B tau={essinf_B}")


@dataclass
class RenewalEstimate:
    kind: str
    t: float
    h: float
    raw_mean: float
    stderr: float
    n_samples: int
    normalized: float
    target: float
    ratio: float
    discards: int = 0

    def as_row(self):
        return asdict(self)


CSV_COLUMNS = ("t", "h", "raw_mean", "stderr", "normalized", "target", "ratio",
               "n_samples", "discards")


def _shard_bounds(n, shards):
    edges = np.linspace(0, n, max(int(shards), 1) + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


class RenewalSampler:
    """Estimators of ``U_{A,B}`` for a system and its invariant density.

    ``tail`` supplies the normalization ``m(t)``; for the i.i.d. driver it
    defaults to the driver's own tail.
    """

    def __init__(self, system, density=None, tail=None, sets=None, shards=1, n_jobs=1):
        self.system = system
        if system.iid:
            self.edges = np.array([0.0, 1.0])
            self.cdf = np.array([0.0, 1.0])
            tail = tail if tail is not None else system.tail
            self.mu = lambda iv: 1.0
        else:
            if density is None:
                raise DomainError("the deterministic driver needs an invariant density")
            self.edges = np.ascontiguousarray(density.edges)
            self.cdf = np.ascontiguousarray(density.cdf_table)
            self.mu = density.mu
        if tail is None:
            raise DomainError("a TailModel is needed for the m(t) normalization")
        self.tail = tail
        self.sets = (sets or TargetSets()).resolve(system.Y)
        self.shards = int(shards)
        self.n_jobs = int(n_jobs)
        self.P = system.params
        A, B = self.sets.A, self.sets.B
        self.mu_A = self.mu(A)
        self.mu_B = self.mu(B)
        if system.iid:
            self.ulo, self.uhi = 0.0, 1.0
        else:
            self.ulo, self.uhi = float(density.cdf(A[0])), float(density.cdf(A[1]))
        self.consts = renewal_constants(tail.beta, check=False)

    # -- plumbing -----------------------------------------------------------

    def _run(self, fn, n, *args):
        bounds = _shard_bounds(n, self.shards)
        if self.n_jobs > 1 and len(bounds) > 1:
            with ThreadPoolExecutor(self.n_jobs) as ex:
                return list(ex.map(lambda ab: fn(*args, *ab), bounds))
        return [fn(*args, a, b) for a, b in bounds]

    def _run_float(self, fn, n, *args, width=None):
        shape = (n,) if width is None else (n, width)
        out = np.empty(shape)
        bounds = _shard_bounds(n, self.shards)

        def work(ab):
            a, b = ab
            fn(*args, a, b, out[a:b])

        if self.n_jobs > 1 and len(bounds) > 1:
            with ThreadPoolExecutor(self.n_jobs) as ex:
                list(ex.map(work, bounds))
        else:
            for ab in bounds:
                work(ab)
        return out

    def _common(self):
        B = self.sets.B
        return (self.P, self.edges, self.cdf, self.ulo, self.uhi, B[0], B[1])

    def m(self, t):
        return float(self.tail.m(t)) if t >= self.tail.t_min else float("nan")

    @staticmethod
    def _moments(tot, sq, n):
        mean = tot / n
        var = np.maximum(sq / n - mean**2, 0.0) * n / max(n - 1, 1)
        return mean, np.sqrt(var / n)

    def _check_discards(self, discards, n):
        self.last_discards = int(discards)
        self.last_discard_fraction = discards / n

    # -- estimators ---------------------------------------------------------

    def window_counts(self, t_grid, h, N, seed):
        """Raw window means ``U(t + h) - U(t)`` over a sorted ``t_grid``."""
        t_grid = np.ascontiguousarray(t_grid, dtype=float)
        if h <= 0 or np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
            raise DomainError("need h > 0 and a sorted nonnegative t grid")
        parts = self._run(_kernels.window_pass, N, *self._common(), t_grid, float(h), int(seed))
        tot = sum(p[0] for p in parts)
        sq = sum(p[1] for p in parts)
        disc = sum(p[2] for p in parts)
        kept = N - disc
        self._check_discards(disc, N)
        mean, se = self._moments(tot, sq, kept)
        return self.mu_A * mean, self.mu_A * se, kept, disc

    def window(self, t_grid, h, N, seed=0):
        t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
        raw, se, kept, disc = self.window_counts(t_grid, h, N, seed)
        target = self.consts.d_beta * self.mu_A * self.mu_B * h
        out = []
        for t, r, s in zip(t_grid, raw, se):
            norm = self.m(t) * r
            out.append(RenewalEstimate("window", float(t), float(h), float(r), float(s), kept,
                                       norm, target, norm / target, disc))
        return out

    def cumulative(self, t_grid, N, seed=0):
        t_grid = np.atleast_1d(np.ascontiguousarray(t_grid, dtype=float))
        if np.any(t_grid <= 0) or np.any(np.diff(t_grid) < 0):
            raise DomainError("need a sorted positive t grid")
        parts = self._run(_kernels.cumulative_pass, N, *self._common(), t_grid, int(seed))
        tot = sum(p[0] for p in parts)
        sq = sum(p[1] for p in parts)
        disc = sum(p[2] for p in parts)
        kept = N - disc
        self._check_discards(disc, N)
        mean, se = self._moments(tot, sq, kept)
        target = self.consts.D_beta * self.mu_A * self.mu_B
        out = []
        for t, r, s in zip(t_grid, self.mu_A * mean, self.mu_A * se):
            norm = self.m(t) / t * r
            out.append(RenewalEstimate("cumulative", float(t), 0.0, float(r), float(s), kept,
                                       norm, target, norm / target, disc))
        return out

    def _rect_measures(self):
        a1, a2 = self.sets.a
        b1, b2 = self.sets.b
        return self.mu_A * (a2 - a1), self.mu_B * (b2 - b1)

    def rectangle(self, t, N, seed=0):
        """``mu^tau(A1 and F_t^-1 B1)`` by flowing uniform points of ``A1``."""
        if t < 0:
            raise DomainError("t must be nonnegative")
        (a1, a2), (b1, b2) = self.sets.a, self.sets.b
        parts = self._run(_kernels.rectangle_pass, N, *self._common(), a1, a2, b1, b2,
                          float(t), int(seed))
        hits = sum(p[0] for p in parts)
        disc = sum(p[1] for p in parts)
        kept = N - disc
        self._check_discards(disc, N)
        p = hits / kept
        mA1, mB1 = self._rect_measures()
        raw = mA1 * p
        se = mA1 * math.sqrt(p * (1 - p) / max(kept - 1, 1))
        target = self.consts.d_beta * mA1 * mB1
        norm = self.m(t) * raw if t > 0 else float("nan")
        return RenewalEstimate("rectangle", float(t), b2 - b1, raw, se, kept, norm, target,
                               norm / target, disc)

    def window_integral(self, t, N, seed=0):
        """``int_{a1}^{a2} [U(t + u - b1) - U(t + u - b2)] du``, the window form
        of the rectangle measure when ``b2 - b1 < essinf tau``."""
        (a1, a2), (b1, b2) = self.sets.a, self.sets.b
        vals = self._run_float(_kernels.window_integral_pass, N, *self._common(), a1, a2, b1,
                               b2 - b1, float(t), int(seed))
        ok = np.isfinite(vals)
        kept = int(ok.sum())
        self._check_discards(N - kept, N)
        v = vals[ok]
        raw = self.mu_A * float(np.mean(v))
        se = self.mu_A * float(np.std(v, ddof=1)) / math.sqrt(kept)
        mA1, mB1 = self._rect_measures()
        target = self.consts.d_beta * mA1 * mB1
        norm = self.m(t) * raw if t > 0 else float("nan")
        return RenewalEstimate("window_integral", float(t), b2 - b1, raw, se, kept, norm,
                               target, norm / target, N - kept)

    def occupation(self, t, N, seed=0):
        """``int_0^t mu^tau(A1 and F_x^-1 B1) dx``."""
        if t <= 0:
            raise DomainError("t must be positive")
        (a1, a2), (b1, b2) = self.sets.a, self.sets.b
        vals = self._run_float(_kernels.occupation_pass, N, *self._common(), a1, a2, b1, b2,
                               float(t), int(seed))
        ok = np.isfinite(vals)
        kept = int(ok.sum())
        self._check_discards(N - kept, N)
        mA1, mB1 = self._rect_measures()
        v = vals[ok]
        raw = mA1 * float(np.mean(v))
        se = mA1 * float(np.std(v, ddof=1)) / math.sqrt(kept)
        norm = self.m(t) / t * raw
        target = self.consts.D_beta * mA1 * mB1
        return RenewalEstimate("occupation", float(t), 0.0, raw, se, kept, norm, target,
                               norm / target, N - kept)

    def occupation_samples(self, t, N, seed=0):
        (a1, a2), (b1, b2) = self.sets.a, self.sets.b
        return self._run_float(_kernels.occupation_pass, N, *self._common(), a1, a2, b1, b2,
                               float(t), int(seed))

    def llt(self, n_list, t_grids, h_list, N, seed=0):
        """Window means ``mu(A and F^-n B, tau_n in [t, t + h))`` per ``n``.

        Returns ``(raw, stderr, kept, discards)`` with arrays shaped like
        ``t_grids``.
        """
        n_list = np.ascontiguousarray(n_list, dtype=np.int64)
        t_grids = np.ascontiguousarray(np.atleast_2d(t_grids), dtype=float)
        h_list = np.ascontiguousarray(h_list, dtype=float)
        if np.any(np.diff(n_list) <= 0) or n_list[0] < 0:
            raise DomainError("n_list must be strictly increasing and nonnegative")
        if t_grids.shape[0] != n_list.size or h_list.size != n_list.size:
            raise DomainError("one t grid and one h per n")
        parts = self._run(_kernels.llt_pass, N, *self._common(), n_list, t_grids, h_list,
                          int(seed))
        tot = sum(p[0] for p in parts)
        disc = sum(p[1] for p in parts)
        kept = N - disc
        self._check_discards(disc, N)
        p = tot / kept
        return (self.mu_A * p, self.mu_A * np.sqrt(p * (1 - p) / max(kept - 1, 1)), kept,
                disc)

    def laplace(self, sigmas, N, seed=0):
        """Monte Carlo ``int exp(-sigma t) dU_{A,B}(t)``; returns ``(values, stderr)``."""
        sigmas = np.ascontiguousarray(np.atleast_1d(sigmas), dtype=float)
        if np.any(sigmas <= 0):
            raise DomainError("sigma must be positive")
        vals = self._run_float(_kernels.laplace_pass, N, *self._common(), sigmas, int(seed),
                               width=sigmas.size)
        ok = np.all(np.isfinite(vals), axis=1)
        v = vals[ok]
        self._check_discards(N - int(ok.sum()), N)
        return (self.mu_A * v.mean(axis=0),
                self.mu_A * v.std(axis=0, ddof=1) / math.sqrt(v.shape[0]))


def _sampler(system, density, tail, sets, **kw):
    return RenewalSampler(system, density, tail, sets, **kw)


def estimate_renewal_window(sampler, t, h, N, seed=0):
    return sampler.window([t], h, N, seed)[0]


def estimate_renewal_cumulative(sampler, t, N, seed=0):
    return sampler.cumulative([t], N, seed)[0]


def estimate_rectangle_mixing(sampler, t, N, seed=0):
    return sampler.rectangle(t, N, seed)


def estimate_occupation_average(sampler, t, N, seed=0):
    return sampler.occupation(t, N, seed)


def d_n(tail, n):
    """Canonical scaling ``d_n = (c0 n)^(1/beta)`` for constant ``ell``."""
    return (tail.c0 * n) ** (1.0 / tail.beta)


def estimate_llt_window(sampler, n, t, h, N, seed=0, stable=None):
    """Fixed-``n`` window with its LLT target ``q_beta(t/d_n) mu(A) mu(B)``."""
    raw, se, kept, disc = sampler.llt([n], [[t]], [h], N, seed)
    dn = d_n(sampler.tail, n) if n > 0 else 1.0
    scaled = dn * raw[0, 0] / h
    if n == 0:
        target = sampler.mu(
            (max(sampler.sets.A[0], sampler.sets.B[0]), min(sampler.sets.A[1], sampler.sets.B[1]))
        ) * (t <= 0.0 < t + h) * dn / h
    else:
        if stable is None:
            from .specfun import stable_density

            stable = stable_density(sampler.tail.beta)
        target = float(stable.pdf(t / dn)) * sampler.mu_A * sampler.mu_B
    return {"n": n, "t": t, "h": h, "d_n": dn, "raw_mean": float(raw[0, 0]),
            "stderr": float(se[0, 0]), "scaled": scaled, "target": target,
            "n_samples": kept, "discards": disc}


def iid_baseline(tail=None, sets=None, body="balanced", **kw):
    """Sampler over the i.i.d. driver with ``P(tau > t) = c0 t^-beta`` in the tail."""
    system = IIDSystem(tail, body, max_iter=kw.pop("max_iter", 10**9))
    return RenewalSampler(system, None, system.tail, sets, **kw)


def deterministic_sampler(system=None, density=None, c0=None, sets=None, **kw):
    """Sampler over the induced map with ``m(t) = c0 t^(1 - beta)``."""
    system = system if system is not None else InducedSystem()
    if density is None:
        from .transfer import UlamTransferOperator

        density = UlamTransferOperator().fit(system).invariant_density_
    if c0 is None:
        raise DomainError("c0 (tail constant) is required")
    tail = TailModel(system.beta, c0=c0)
    return RenewalSampler(system, density, tail, sets, **kw)
