import math

import numpy as np
import pytest

from renewlab import dynamics as dyn
from renewlab import renewal, transfer, verify
from renewlab.errors import DomainError, ResolventError


def doubling(roof):
    return transfer.ExplicitSystem(lambda y: (2 * y) % 1.0, roof)


@pytest.fixture(scope="module")
def map_op():
    return transfer.build_ulam(dyn.InducedSystem(), grid_size=1024, samples_per_cell=64)


def test_doubling_two_cells():
    op = transfer.build_ulam(doubling(lambda y: np.ones_like(y)), grid_size=2,
                             samples_per_cell=64)
    assert np.array_equal(op.P_.toarray(), np.full((2, 2), 0.5))
    assert np.allclose(op.pi_, 0.5)


def test_constant_roof_is_lattice():
    # P(ib) = exp(-ibc) P: the leading eigenvalue stays on the unit circle
    c = 1.5
    op = transfer.build_ulam(doubling(lambda y: np.full_like(y, c)), grid_size=64,
                             samples_per_cell=32)
    for b in (0.3, 2 * math.pi / c):
        probe = op.leading_eigenvalue(b=b)
        assert abs(probe.lam - np.exp(-1j * b * c)) < 1e-9
        assert abs(op.spectral_radius(b=b) - 1) < 1e-9


def test_nonlattice_roof_contracts():
    # 1 + y would be cohomologous to the integer roof 1 + floor(2y)
    op = transfer.build_ulam(doubling(lambda y: 1 + y * y), grid_size=256, samples_per_cell=32)
    scan = transfer.aperiodicity_scan(op, [0.5, 2.0, 2 * math.pi])
    assert scan.verdict == "PASS" and scan.sup < 0.99


def test_constant_roof_laplace_pairing():
    # sum_n exp(-sigma c n) = 1 / (1 - exp(-sigma c))
    op = transfer.build_ulam(doubling(lambda y: np.ones_like(y)), grid_size=64,
                             samples_per_cell=32)
    for sigma in (0.05, 0.5):
        assert abs(op.laplace_pairing(sigma) - 1 / (1 - math.exp(-sigma))) < 1e-9
    with pytest.raises(ResolventError):
        op.resolvent(np.ones(64), sigma=0.0)


def test_map_operator(map_op):
    rs = np.asarray(map_op.P_.sum(axis=1)).ravel()
    assert np.max(np.abs(rs - 1)) < 1e-12
    assert map_op.stationary_residual_ < 1e-10
    probe = map_op.leading_eigenvalue(sigma=0.0)
    assert abs(probe.lam - 1) < 1e-10 and probe.gap < 0.9
    assert map_op.n_truncated_ == 0 and map_op.frequency_floor_ == 0.0


def test_frequency_arguments(map_op):
    with pytest.raises(DomainError):
        map_op.leading_eigenvalue()
    with pytest.raises(DomainError):
        map_op.leading_eigenvalue(b=0.1, sigma=0.1)
    with pytest.raises(DomainError):
        transfer.eigen_asymptotics_fit(map_op, [0.5], dyn.TailModel(0.75))


def test_entrance_law():
    op = transfer.UlamTransferOperator(512, 64, max_iter=1000).fit(dyn.InducedSystem())
    assert op.n_truncated_ > 0
    assert op.truncated_counts_.sum() == op.n_truncated_
    assert abs(op.entrance_law_.sum() - 1) < 1e-12
    assert op.frequency_floor_ == 1e-2
    rs = np.asarray(op.P_.sum(axis=1)).ravel()
    assert np.max(np.abs(rs - 1)) < 1e-12
    full = transfer.UlamTransferOperator(512, 64).fit(dyn.InducedSystem())
    assert full.invariant_density_.l1_distance(op.invariant_density_) < 0.02


def test_lattice_control():
    assert abs(verify.lattice_control(4 / 3, 1.0, grid_size=256, samples_per_cell=32) - 1) < 1e-6


def test_laplace_pairing_matches_monte_carlo(map_op):
    system = dyn.InducedSystem()
    sampler = renewal.RenewalSampler(system, map_op.invariant_density_, dyn.TailModel(0.75))
    sig = 0.05
    mc, se = sampler.laplace([sig], 20000, seed=3)
    assert abs(mc[0] - map_op.laplace_pairing(sig)) < 4 * se[0] + 0.01 * mc[0]


def test_eigen_fit_shape(map_op):
    b = np.geomspace(1e-2, 1e-1, 4)
    fit = transfer.eigen_asymptotics_fit(map_op, b, dyn.TailModel(0.75))
    assert np.all(np.abs(fit.table["lambda"]) < 1)
    assert 0.5 < fit.beta_fit < 1.0
