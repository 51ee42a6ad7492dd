import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renewlab import dynamics as dyn
from renewlab.errors import DomainError, FitError, TruncationError

GOLDEN = (math.sqrt(5) - 1) / 2
X_STAR_DEFAULT = 0.6430630061755855  # root of x (1 + x^(4/3)) = 1


def exact_first_return(y):
    """gamma1 = c1 = 1 at 50 digits: g(x) = x (1 + x) mod 1."""
    with mpmath.workdps(50):
        y = mpmath.mpf(y.numerator) / y.denominator if isinstance(y, Fraction) else mpmath.mpf(y)
        gold = (mpmath.sqrt(5) - 1) / 2
        x, sx, n = y * (1 + y) - 1, y, 1
        while x < gold:
            sx += x
            x = x * (1 + x)
            n += 1
        return n, x, sx


def test_x_star():
    assert abs(dyn.IntermittentMapSpec(1.0, 1.0).x_star - GOLDEN) < 1e-15
    xs = dyn.IntermittentMapSpec().x_star
    assert abs(xs - X_STAR_DEFAULT) < 1e-15
    assert abs(xs * (1 + xs ** (4 / 3)) - 1) < 1e-15


def test_map_apply():
    spec = dyn.IntermittentMapSpec(1.0, 1.0)
    assert dyn.map_apply(spec, 0.75) == 0.3125
    assert dyn.map_apply(spec, 0.25) == 0.3125
    assert np.allclose(dyn.map_apply(spec, np.array([0.0, 0.5])), [0.0, 0.75])
    with pytest.raises(DomainError):
        dyn.map_apply(spec, 1.5)


def test_first_return_gamma_one():
    spec = dyn.IntermittentMapSpec(1.0, 1.0)
    st_ = dyn.first_return(spec, dyn.RoofSpec(), 0.75)
    n, x, sx = exact_first_return(Fraction(3, 4))
    assert st_.sigma == n == 4
    assert abs(st_.F_y - float(x)) < 1e-15
    assert abs(st_.tau - (n + 0.5 * float(sx))) < 1e-14
    const = dyn.first_return(spec, dyn.RoofSpec.constant(1.0), 0.75)
    assert const.tau == 4.0


@given(st.floats(0.62, 0.995))
@settings(max_examples=30, deadline=None)
def test_first_return_matches_high_precision(y):
    spec = dyn.IntermittentMapSpec(1.0, 1.0)
    step = dyn.first_return(spec, dyn.RoofSpec(1.0, 0.25), y)
    n, x, sx = exact_first_return(y)
    assert step.sigma == n
    assert abs(step.F_y - float(x)) < 1e-12 * n
    assert abs(step.tau - (n + 0.25 * float(sx))) < 1e-10 * n


def test_deep_creep_escapes():
    # start a hair above the neutral point: the double-double creep must escape
    system = dyn.InducedSystem(dyn.IntermittentMapSpec(1.0, 1.0))
    x0 = 5e-9
    step = system.step(system.spec.inverse_right(x0))
    assert system.Y[0] <= step.F_y <= 1.0
    # 1/x_{n+1} = 1/x_n - 1 + O(x_n): n = 1/x0 up to a log correction
    assert abs(step.sigma - 1 / x0) < 100


def test_truncation():
    system = dyn.InducedSystem(dyn.IntermittentMapSpec(), max_iter=100)
    y = system.spec.inverse_right(1e-6)
    with pytest.raises(TruncationError) as err:
        system.step(y)
    assert err.value.sigma == 100


def test_roof_parse():
    assert dyn.RoofSpec.parse("affine:1,0.5") == dyn.RoofSpec()
    assert str(dyn.RoofSpec.parse("constant:1.5")) == "constant:1.5"
    for bad in ("affine:1", "cubic:1,2", "constant:0.5"):
        with pytest.raises(DomainError):
            dyn.RoofSpec.parse(bad)


def test_bad_spec():
    with pytest.raises(DomainError):
        dyn.IntermittentMapSpec(0.5)
    with pytest.raises(DomainError):
        dyn.IntermittentMapSpec(4 / 3, 1.5)


def test_orbit_and_birkhoff():
    system = dyn.InducedSystem()
    steps = dyn.orbit(system, 0.8, 50)
    assert all(a.F_y == b.y for a, b in zip(steps, steps[1:]))
    sums = dyn.birkhoff_tau(steps)
    assert sums[0] == 0.0 and np.all(np.diff(sums) >= system.essinf_tau)
    bad = list(steps)
    bad[1] = bad[1]._replace(y=0.9)
    with pytest.raises(DomainError):
        dyn.birkhoff_tau(bad)


def test_semiflow():
    system = dyn.InducedSystem()
    p0 = dyn.SemiflowPoint(0.8, 0.0)
    p1, cross = dyn.semiflow_evolve(p0, 25.0, system)
    steps = dyn.orbit(system, 0.8, len(cross) + 1)
    sums = dyn.birkhoff_tau(steps)
    assert [c[1] for c in cross] == pytest.approx(list(sums[1:len(cross) + 1]))
    assert p1.y == steps[len(cross)].y
    assert 0 <= p1.u < steps[len(cross)].tau
    assert abs(sums[len(cross)] + p1.u - 25.0) < 1e-12
    # flow property
    pa, _ = dyn.semiflow_evolve(p0, 10.0, system)
    pb, _ = dyn.semiflow_evolve(pa, 15.0, system)
    assert pb.y == p1.y and abs(pb.u - p1.u) < 1e-12


def test_iid_system():
    s = dyn.IIDSystem()
    assert abs(s.essinf_tau - 4 ** (4 / 3)) < 1e-12
    x = s.sample(400000, seed=1)
    t = 50.0
    assert abs(np.mean(x > t) * t**0.75 - 1.0) < 0.02
    for sig in (0.01, 0.1, 1.0):
        assert abs(np.exp(-sig * x).mean() - s.laplace(sig)) < 3e-3
    with pytest.raises(DomainError):
        dyn.IIDSystem(body="pareto")  # essinf = 1
    assert dyn.IIDSystem(dyn.TailModel(0.75, c0=1.5), body="pareto").essinf_tau > 1


def test_balanced_law_mean_identity():
    # int_0^T (S - c0 t^-beta) dt vanishes for T above the floor
    s = dyn.IIDSystem()
    b, c0, ta = 0.75, 1.0, s.essinf_tau
    T = 10 * ta
    integral = ta + c0 * (T ** (1 - b) - ta ** (1 - b)) / (1 - b) - c0 * T ** (1 - b) / (1 - b)
    assert abs(integral) < 1e-12


@pytest.fixture(scope="module")
def density():
    return dyn.invariant_measure_Y(dyn.IntermittentMapSpec(), 1024, samples_per_cell=64)


def test_invariant_density(density):
    assert abs(density.masses.sum() - 1) < 1e-12
    assert np.all(density.density > 0)
    assert density.mu(dyn.IntermittentMapSpec().Y) == pytest.approx(1.0)
    ys = density.sample(1000, seed=0)
    assert ys.min() >= density.edges[0] and ys.max() <= density.edges[-1]


def test_birkhoff_density_agrees():
    spec = dyn.IntermittentMapSpec()
    ulam = dyn.invariant_measure_Y(spec, 256, samples_per_cell=256)
    other = dyn.invariant_measure_Y(spec, 256, method="birkhoff", n_steps=2 * 10**6, seed=1)
    assert ulam.l1_distance(other) < 0.03


def test_tail_fit(density):
    fit = dyn.tail_fit(dyn.IntermittentMapSpec(), sample_size=10**6, density=density)
    assert abs(fit.beta_hat - 0.75) < 0.03
    tab = fit.diagnostics["table"]
    top = tab["t"] >= 1e3
    assert np.all(np.abs(tab["ratio"][top] - 1) < 0.1)
    with pytest.raises(DomainError):
        dyn.tail_fit(dyn.IntermittentMapSpec(), sample_size=100, density=density)


def test_tail_estimator_on_pareto():
    rng = np.random.default_rng(0)
    tau = (2.0 / rng.random(10**6)) ** (1 / 0.6)
    est = dyn.TailIndexEstimator(1e2, 1e4).fit(tau)
    assert abs(est.beta_ - 0.6) < 0.02 and abs(est.hill_beta_ - 0.6) < 0.01
    assert abs(est.c0_ - 2.0) < 0.1
    with pytest.raises(FitError):
        dyn.TailIndexEstimator(1e2, 1e4).fit(np.ones(1000))


def test_constant_roof_tail_is_integer():
    system = dyn.InducedSystem(dyn.IntermittentMapSpec(), dyn.RoofSpec.constant(1.0))
    sig, _, tau, _ = system.step_many(np.linspace(0.65, 0.99, 200))
    assert np.array_equal(tau, sig.astype(float))


def test_periodic_orbits():
    spec = dyn.IntermittentMapSpec()
    const = dyn.periodic_orbit_periods(spec, dyn.RoofSpec.constant(1.5), k_max=3, n_max=3)
    assert (1,) in const.skipped  # fixed point sits on the boundary of Y
    assert not const.irrational_pairs()
    for o in const.orbits:
        assert o.period == 1.5 * sum(o.itinerary)
    aff = dyn.periodic_orbit_periods(spec, dyn.RoofSpec(), k_max=2, n_max=3)
    assert len(aff.irrational_pairs()) >= 1
    o = {x.itinerary: x for x in aff.orbits}[(2,)]
    system = dyn.InducedSystem(spec)
    st_ = system.step(o.y)
    assert st_.sigma == 2 and abs(st_.F_y - o.y) < 1e-9 and abs(st_.tau - o.period) < 1e-9
    with pytest.raises(DomainError):
        dyn.periodic_orbit_periods(spec, k_max=1)
