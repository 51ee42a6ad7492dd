"""Ulam discretization of the induced transfer operator and its twisted
family ``R(s) v = R(exp(-s tau) v)``.

Matrices act on cell mass vectors from the right: ``nu -> nu @ P(s)``.
Cell functions ``f`` correspond to measures ``nu_j = pi_j f_j``.
"""

import math
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator

from . import _kernels
from .dynamics import InvariantDensity
from .errors import DomainError, NumericalAccuracyError, ResolventError, SpectralError
from .specfun import renewal_constants

LAMBDA_TOL = 1e-12
LONG_EXCURSION = 100


class ExplicitSystem:
    """Induced system given by vectorized callables ``F`` and ``tau`` on ``Y``."""

    iid = False

    def __init__(self, F, tau, Y=(0.0, 1.0)):
        self.F = F
        self.tau = tau
        self.Y = tuple(Y)

    def step_many(self, ys, horizon=np.inf):
        ys = np.asarray(ys, dtype=float)
        one = np.ones(ys.size, np.int64)
        return one, np.asarray(self.F(ys), float), np.asarray(self.tau(ys), float), 0 * one


class SpectralProbe(NamedTuple):
    s: complex
    lam: complex
    gap: float
    residual: float
    spectral_radius: float
    iterations: int

    @property
    def b(self):
        return -self.s.imag if self.s.real == 0 else float("nan")


class UlamTransferOperator(BaseEstimator):
    """Monte Carlo Ulam matrix of the induced map on ``grid_size`` equal cells.

    Each cell gets ``samples_per_cell`` jittered stratified points. With
    ``twist="pointwise"`` every sample carries its own ``exp(-s tau)``; with
    ``twist="cell_mean"`` the source cell's mean roof is used instead.

    Samples whose excursion outlasts ``max_iter`` keep their share of the row:
    in ``P(0)`` it is spread over the entrance law, in twisted matrices it is
    dropped, which is accurate for ``|s| >= frequency_floor_``.
    """

    def __init__(self, grid_size=2**12, samples_per_cell=256, max_iter=10**7,
                 twist="pointwise", random_state=0):
        self.grid_size = grid_size
        self.samples_per_cell = samples_per_cell
        self.max_iter = max_iter
        self.twist = twist
        self.random_state = random_state

    # -- construction -------------------------------------------------------

    def fit(self, system):
        n, m = int(self.grid_size), int(self.samples_per_cell)
        if n < 2:
            raise DomainError("grid_size must be >= 2")
        if m < 10:
            raise DomainError("samples_per_cell must be >= 10")
        if self.twist not in ("pointwise", "cell_mean"):
            raise DomainError(f"unknown twist {self.twist!r}")
        lo, hi = system.Y
        edges = np.linspace(lo, hi, n + 1)
        width = (hi - lo) / n
        # one jittered point per stratum of [lo, hi]; grids with equal n * m
        # share the sample set, so refinement compares like with like
        rng = np.random.default_rng(self.random_state)
        M = n * m
        ys = np.minimum(lo + (hi - lo) * (np.arange(M) + rng.random(M)) / M, hi)
        src = np.repeat(np.arange(n), m)

        if hasattr(system, "params"):
            params = system.params.copy()
            params[8] = float(self.max_iter)
            sig, fy, tau, flag = _kernels.excursion_batch(params, ys, np.inf)
        else:
            sig, fy, tau, flag = system.step_many(ys)
            sig = np.ones(ys.size, np.int64)
        keep = flag == 0
        self.n_truncated_ = int((~keep).sum())
        total = np.full(n, m, dtype=np.int64)
        trunc = np.bincount(src[~keep], minlength=n)
        dst_all = np.clip(((fy - lo) / width).astype(np.int64), 0, n - 1)
        # Excursions that outlast max_iter leave through the entrance law: the
        # exit distribution of long completed excursions, which no longer
        # depends on the length (checked empirically down to sigma = 10).
        long = keep & (sig >= LONG_EXCURSION)
        if self.n_truncated_ and np.count_nonzero(long) < 100:
            raise NumericalAccuracyError("too few long excursions for the entrance law",
                                         achieved=int(np.count_nonzero(long)))
        entrance = np.bincount(dst_all[long], minlength=n) / max(np.count_nonzero(long), 1)
        src, fy, tau, dst = src[keep], fy[keep], tau[keep], dst_all[keep]
        counts = np.bincount(src, minlength=n)

        pair = src * n + dst
        keys, inv = np.unique(pair, return_inverse=True)
        self.rows_ = (keys // n).astype(np.int32)
        self.cols_ = (keys % n).astype(np.int32)
        self.inverse_ = inv
        self.weights_ = 1.0 / total[src]
        self.tau_ = tau
        self.src_ = src
        self.edges_ = edges
        self.tau_bar_ = np.divide(np.bincount(src, weights=tau, minlength=n), counts,
                                  out=np.full(n, np.inf), where=counts > 0)
        self.tau_min_ = np.full(n, np.inf)
        np.minimum.at(self.tau_min_, src, tau)
        self.counts_ = counts
        self.truncated_counts_ = trunc
        self.entrance_law_ = entrance
        self.frequency_floor_ = 10.0 / float(self.max_iter) if self.n_truncated_ else 0.0
        tr = np.flatnonzero(trunc)
        ec = np.flatnonzero(entrance)
        self._trunc_part = sp.csr_matrix(
            (np.outer(trunc[tr] / total[tr], entrance[ec]).ravel(),
             (np.repeat(tr, ec.size), np.tile(ec, tr.size))), shape=(n, n))
        self._cache = {}

        P = self.matrix(0.0)
        rs = np.asarray(P.sum(axis=1)).ravel()
        if np.max(np.abs(rs - 1.0)) > 1e-10:
            raise NumericalAccuracyError("Ulam rows are not stochastic", achieved=rs)
        self.P_ = P.real.tocsr()
        pi, res, it = self._leading(self.P_, np.full(n, 1.0 / n), tol=1e-14, max_iter=20000)
        pi = np.abs(pi.real)
        pi /= pi.sum()
        self.pi_ = pi
        self.stationary_residual_ = float(np.abs(pi @ self.P_ - pi).sum())
        self.invariant_density_ = InvariantDensity(edges, pi, "ulam")
        return self

    def _twisted_values(self, s):
        if s == 0:
            vals = self.weights_
        elif self.twist == "pointwise":
            vals = self.weights_ * np.exp(-s * self.tau_)
        else:
            vals = self.weights_ * np.exp(-s * self.tau_bar_[self.src_])
        if np.iscomplexobj(vals):
            return (np.bincount(self.inverse_, weights=vals.real, minlength=self.rows_.size)
                    + 1j * np.bincount(self.inverse_, weights=vals.imag,
                                       minlength=self.rows_.size))
        return np.bincount(self.inverse_, weights=vals, minlength=self.rows_.size)

    def matrix(self, s):
        """Twisted matrix ``P(s)``; ``s = 1j * b`` for frequencies."""
        s = complex(s)
        if s.imag == 0:
            s = s.real
        key = s
        if key not in self._cache:
            n = self.grid_size
            data = self._twisted_values(s)
            M = sp.csr_matrix((data, (self.rows_, self.cols_)), shape=(n, n))
            if s == 0:
                M = (M + self._trunc_part).tocsr()
            if len(self._cache) > 8:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = M
        return self._cache[key]

    # -- spectral routines --------------------------------------------------

    @staticmethod
    def _leading(M, v0, tol=1e-12, max_iter=5000):
        """Power iteration on ``nu -> nu @ M`` with Rayleigh quotients."""
        MT = M.T.tocsr()
        v = np.asarray(v0, dtype=np.result_type(M.dtype, np.asarray(v0).dtype))
        v = v / np.abs(v).sum()
        lam = 0.0
        res = np.inf
        for it in range(1, max_iter + 1):
            w = MT @ v
            lam_new = np.vdot(v, w) / np.vdot(v, v)
            res = np.abs(w - lam_new * v).sum() / np.abs(v).sum()
            nrm = np.abs(w).sum()
            if nrm == 0:
                raise SpectralError("power iteration collapsed to zero", residual=res)
            # fix the phase so that the iterate converges
            v = w / nrm * (abs(lam_new) / lam_new if lam_new != 0 else 1.0)
            lam = lam_new
            if res < tol:
                break
        return v, res, it

    def leading_eigenvalue(self, b=None, sigma=None, tol=1e-10, max_iter=20000):
        s = self._frequency(b, sigma)
        M = self.matrix(s)
        v, res, it = self._leading(M, self.pi_.astype(complex), tol=tol * 1e-2,
                                   max_iter=max_iter)
        lam = np.vdot(v, M.T @ v) / np.vdot(v, v)
        res = float(np.abs(M.T @ v - lam * v).sum() / np.abs(v).sum())
        if res > tol:
            raise SpectralError(f"power iteration did not converge at s={s}", residual=res)
        # right eigenvector for the deflation of the subdominant modulus
        w, _, _ = self._leading(M.T.tocsr(), np.ones(self.grid_size, complex),
                                tol=tol * 1e-2, max_iter=max_iter)
        sub = self._deflated_radius(M, v, w)
        return SpectralProbe(s, complex(lam), sub / abs(lam), res,
                             max(abs(lam), sub), it)

    def _deflated_radius(self, M, v, w, n_iter=64):
        MT = M.T.tocsr()
        denom = np.dot(w, v)
        rng = np.random.default_rng(12345)
        x = rng.standard_normal(self.grid_size) + 1j * rng.standard_normal(self.grid_size)
        norms = []
        for _ in range(n_iter):
            x = x - np.dot(w, x) / denom * v
            x = MT @ x
            nrm = np.abs(x).sum()
            if nrm == 0:
                return 0.0
            norms.append(nrm)
            x = x / nrm
        half = n_iter // 2
        return float(np.exp(np.mean(np.log(norms[half:]))))

    def spectral_radius(self, b=None, sigma=None, n_iter=64, n_seeds=4):
        """``max`` over seeds of ``(|A^n v| / |A^(n/2) v|)^(2/n)``."""
        s = self._frequency(b, sigma)
        MT = self.matrix(s).T.tocsr()
        half = n_iter // 2
        best = 0.0
        for seed in range(n_seeds):
            rng = np.random.default_rng(seed)
            x = rng.random(self.grid_size) + 1j * rng.random(self.grid_size)
            logn = 0.0
            log_half = 0.0
            for k in range(1, n_iter + 1):
                x = MT @ x
                nrm = np.abs(x).sum()
                if nrm == 0:
                    break
                logn += math.log(nrm)
                x /= nrm
                if k == half:
                    log_half = logn
            best = max(best, math.exp((logn - log_half) / (n_iter - half)))
        return best

    def _frequency(self, b, sigma):
        if (b is None) == (sigma is None):
            raise DomainError("give exactly one of b or sigma")
        if sigma is not None:
            if sigma < 0:
                raise DomainError("sigma must be nonnegative")
            return float(sigma)
        return 1j * float(b)

    # -- resolvent ----------------------------------------------------------

    def cell_fraction(self, interval):
        """``1_A`` as a cell function (covered fraction of each cell)."""
        lo, hi = interval
        e = self.edges_
        return np.clip((np.minimum(e[1:], hi) - np.maximum(e[:-1], lo)) / np.diff(e), 0, 1)

    def resolvent(self, probe, b=None, sigma=None, rtol=1e-12):
        """Solve ``(I - R(s)) x = probe`` for a cell function ``probe``.

        Returns ``(x, residual)``; ``x`` is a cell function.
        """
        s = self._frequency(b, sigma)
        if s == 0:
            raise ResolventError("resolvent is singular at s = 0")
        M = self.matrix(s)
        pi = self.pi_
        nu0 = pi * np.asarray(probe, dtype=complex)
        A = (sp.identity(self.grid_size, dtype=complex, format="csr") - M).T.tocsc()
        nu = spla.spsolve(A, nu0)
        res = float(np.abs(A @ nu - nu0).sum() / max(np.abs(nu0).sum(), 1e-300))
        if not np.all(np.isfinite(nu)) or res > 1e-8:
            raise ResolventError(f"resolvent solve failed at s={s} (residual {res:.2e})")
        x = nu / pi
        if isinstance(s, float):
            x = x.real
        return x, res

    def laplace_pairing(self, sigma, A=None, B=None):
        """``int_B T(sigma) 1_A dmu``."""
        lo, hi = self.edges_[0], self.edges_[-1]
        fa = self.cell_fraction(A or (lo, hi))
        fb = self.cell_fraction(B or (lo, hi))
        x, _ = self.resolvent(fa, sigma=sigma)
        return float(np.real(np.sum(self.pi_ * x * fb)))


def build_ulam(system, grid_size=2**12, samples_per_cell=256, seed=0, **kw):
    return UlamTransferOperator(grid_size, samples_per_cell, random_state=seed, **kw).fit(system)


def leading_eigenvalue(op, b=None, sigma=None):
    return op.leading_eigenvalue(b=b, sigma=sigma)


class AsymptoticsFit(NamedTuple):
    beta_fit: float
    c_beta_fit: complex
    table: dict
    rms_residual: float
    poor_fit: bool


def eigen_asymptotics_fit(op, b_grid, tail, max_rms=0.05):
    """Fit ``1 - lambda(b) ~ c ell(1/b) b^beta`` over ``b_grid``."""
    b_grid = np.asarray(b_grid, dtype=float)
    if b_grid.max() > 0.1 or b_grid.min() <= 0:
        raise DomainError("b_grid must lie in (0, 0.1]")
    lam = np.array([op.leading_eigenvalue(b=b).lam for b in b_grid])
    one = 1.0 - lam
    y = np.log(np.abs(one))
    x = np.log(b_grid)
    slope, icpt = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    ell = np.array([float(tail.ell(1.0 / b)) for b in b_grid])
    c_fit = complex(np.mean(one / (ell * b_grid**slope)))
    table = {"b": b_grid, "lambda": lam, "one_minus_lambda": one,
             "arg": np.angle(one)}
    return AsymptoticsFit(float(slope), c_fit, table, rms, rms > max_rms)


class ScanResult(NamedTuple):
    b: np.ndarray
    spectral_radius: np.ndarray
    sup: float
    margin: float
    verdict: str


def aperiodicity_scan(op, b_grid, margin=1e-3):
    b_grid = np.asarray(b_grid, dtype=float)
    if np.any(b_grid == 0):
        raise DomainError("b_grid must avoid 0")
    rad = np.array([op.spectral_radius(b=b) for b in b_grid])
    sup = float(rad.max())
    return ScanResult(b_grid, rad, sup, margin, "PASS" if sup <= 1 - margin else "FAIL")


class ResolventProbe(NamedTuple):
    T_hat_applied: np.ndarray
    norm_L1: float
    residual: float


def resolvent_probe(op, probe_vector, b=None, sigma=None):
    """``T(s) probe``; for frequencies the returned norm is ``|Re T(ib) probe|_1``."""
    x, res = op.resolvent(probe_vector, b=b, sigma=sigma)
    if b is not None:
        norm = float(np.sum(op.pi_ * np.abs(np.real(x))))
        return ResolventProbe(x, norm, res)
    return ResolventProbe(np.real(x), float(np.sum(op.pi_ * np.abs(np.real(x)))), res)


def resolvent_slope(op, b_grid):
    one = np.ones(op.grid_size)
    norms = np.array([resolvent_probe(op, one, b=b).norm_L1 for b in b_grid])
    slope, _ = np.polyfit(np.log(b_grid), np.log(norms), 1)
    return float(slope), norms


def karamata_ratio(op, sigma, beta, c0, A=None, B=None):
    """``c0 sigma^beta int_B T(sigma) 1_A dmu / (D'_beta mu(A) mu(B))``; tends to 1."""
    mu = op.invariant_density_
    lo, hi = op.edges_[0], op.edges_[-1]
    A, B = A or (lo, hi), B or (lo, hi)
    val = op.laplace_pairing(sigma, A, B)
    target = renewal_constants(beta).D_beta_prime * mu.mu(A) * mu.mu(B)
    return c0 * sigma**beta * val / target
