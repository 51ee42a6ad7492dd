import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from renewlab.errors import DomainError
from renewlab.specfun import (K_a, TailModel, c_beta_closed_form, c_beta_quadrature, g_a,
                              gamma_a, k_a, kernel_pair, m_of_t, q_beta, renewal_constants,
                              stable_density, stable_sampler)

# frozen oracles
LEVY_T = (0.5, 1.0, 2.0, 5.0)  # beta = 1/2: q(t) = t^-1.5 exp(-pi/(4t)) / 2
Q075 = {2.0: 0.10828024676593406, 5.0: 0.10069027429006536}  # mpmath quadosc, 30 digits
D075 = math.sqrt(2.0) / (2.0 * math.pi)


def levy(t):
    return 0.5 * t**-1.5 * math.exp(-math.pi / (4.0 * t))


def test_closed_form_constants():
    k = renewal_constants(0.75)
    assert abs(k.d_beta - D075) < 1e-15
    assert abs(renewal_constants(0.5).D_beta - 2.0 / math.pi) < 1e-15
    assert renewal_constants(1.0).D_beta == 1.0
    assert renewal_constants(0.0).D_beta == 1.0
    assert abs(k.D_beta_prime - 1.0 / special.gamma(0.25)) < 1e-15


@pytest.mark.parametrize("beta", [0.4, 0.6, 0.75, 0.9])
def test_c_beta_quadrature_matches_closed_form(beta):
    c, cq = c_beta_closed_form(beta), c_beta_quadrature(beta)
    assert abs(abs(cq) / special.gamma(1 - beta) - 1) < 1e-8
    assert abs(np.angle(cq) - math.pi * beta / 2) < 1e-8
    assert abs(cq - c) / abs(c) < 1e-8


def test_constants_domain():
    with pytest.raises(DomainError):
        renewal_constants(1.2)
    with pytest.raises(DomainError):
        renewal_constants(float("nan"))


@given(st.floats(0.05, 0.95))
@settings(max_examples=25, deadline=None)
def test_constant_relations(beta):
    k = renewal_constants(beta, check=False)
    # Gamma(1-b)Gamma(1+b) = pi b / sin(pi b)
    assert math.isclose(k.D_beta, k.d_beta / beta, rel_tol=1e-12)
    assert math.isclose(abs(k.c_beta), special.gamma(1 - beta), rel_tol=1e-12)


@pytest.mark.parametrize("t", LEVY_T)
def test_q_half_is_levy(t):
    assert math.isclose(float(q_beta(0.5, t)), levy(t), rel_tol=1e-9)


@pytest.mark.parametrize("t", sorted(Q075))
def test_q_three_quarters_oracle(t):
    assert abs(float(q_beta(0.75, t)) - Q075[t]) < 1e-8


def test_q_vanishes_on_negative_axis():
    assert np.all(np.abs(q_beta(0.75, np.array([-2.0, -0.5]))) < 1e-9)


@pytest.fixture(scope="module")
def law075():
    return stable_density(0.75)


def test_density_table(law075):
    assert abs(law075.total_mass - 1) < 1e-6
    assert abs(law075.moment_identity() - D075) < 1e-3
    assert law075.negative_mass < 1e-8
    assert abs(law075.cdf(law075.t[-1]) - law075.total_mass) < 1e-12


def test_density_csv(law075, tmp_path):
    p = tmp_path / "q.csv"
    law075.to_csv(p)
    head = p.read_text().splitlines()
    assert head[0] == "t,q_beta"
    assert len(head) == law075.t.size + 1


def test_sampler_laplace_transform():
    # E exp(-s X) = exp(-Gamma(1 - beta) s^beta)
    x = stable_sampler(0.75, 200000, seed=1)
    for s in (0.5, 1.0, 2.0):
        emp = np.exp(-s * x).mean()
        assert abs(emp - math.exp(-special.gamma(0.25) * s**0.75)) < 5e-3


def test_sampler_ks(law075):
    x = stable_sampler(0.75, 100000, seed=2)
    assert stats.kstest(x, law075.cdf).statistic < 0.01


def test_sampler_is_seeded():
    assert np.array_equal(stable_sampler(0.6, 10, seed=3), stable_sampler(0.6, 10, seed=3))


@pytest.mark.parametrize("a", [0.3, 1.0, 2.5])
def test_kernel_fourier_pairs(a):
    # both pairs inverted from the compactly supported side
    bs = np.linspace(-1.0 / a, 1.0 / a, 20001)
    for x in (0.0, 0.4, 3.0, 11.0):
        K = np.trapezoid(k_a(bs, a) * np.cos(bs * x), bs) / (2 * np.pi)
        assert abs(K - K_a(x, a)) < 1e-7
    bs = np.linspace(-a, a, 20001)
    for x in (0.0, 0.4, 3.0, 11.0):
        gam = np.trapezoid(g_a(bs, a) * np.cos(bs * x), bs)
        assert abs(gam - gamma_a(x, a)) < 1e-7


def test_kernel_pair_values():
    kv = kernel_pair(0.5, 0.0)
    assert kv.gamma_a == 1.0 and kv.k_a == 1.0
    assert math.isclose(kv.K_a, 1.0 / (2 * np.pi * 0.5))
    with pytest.raises(DomainError):
        kernel_pair(0.0, 1.0)


def test_tail_model():
    tm = TailModel(0.75, c0=2.0)
    assert math.isclose(float(tm.survival(16.0)), 2.0 / 8.0)
    assert math.isclose(float(tm.m(16.0)), 2.0 * 2.0)
    assert math.isclose(float(m_of_t(tm, 16.0)), 4.0)
    log = TailModel(0.75, ell_kind="logarithmic")
    assert float(log.ell(math.e)) > float(log.ell(1.0))
    with pytest.raises(DomainError):
        TailModel(1.5)
