"""Acceptance runs at their stated sample sizes and tolerances.

Each test carries a ``criterion`` mark; the terminal summary prints one line per
criterion. Parts that are out of reach at these scales are strict xfails, with the
analysis in the project notes.
"""

import json
import math

import numpy as np
import pytest

from renewlab import dynamics, transfer, verify
from renewlab.config import ExperimentConfig
from renewlab.specfun import TailModel

pytestmark = pytest.mark.slow

MAP = ExperimentConfig()
IID = ExperimentConfig(mode="iid")
MAP25 = ExperimentConfig(gamma1=2.5)


def passed(rep, *names):
    bad = [v for v in rep.verdicts if v.criterion in names and v.status != verify.PASS]
    seen = {v.criterion for v in rep.verdicts}
    missing = [n for n in names if n not in seen]
    lines = "\n".join(rep.summary_lines())
    assert not bad and not missing, f"{rep.experiment_id}:\n{lines}\nmissing={missing}"


# -- shared runs --------------------------------------------------------------

@pytest.fixture(scope="module")
def spectral():
    return verify.run_spectral(MAP)


@pytest.fixture(scope="module")
def fine_ops():
    fine, coarse = verify.refinement_pair(MAP.replace(grid_size=2**14), 2**13)
    return coarse, fine


@pytest.fixture(scope="module")
def wre25():
    return verify.run_wre(MAP25)


# -- 1 ------------------------------------------------------------------------

@pytest.mark.criterion(1, "closed-form constants and c_beta quadrature")
def test_constants():
    rep = verify.run_constants(MAP, (0.4, 0.6, 0.75, 0.9))
    assert len(rep.verdicts) == 12
    passed(rep, *[v.criterion for v in rep.verdicts])


# -- 2 ------------------------------------------------------------------------

@pytest.mark.criterion(2, "stable density mass, moment identity, sampler KS")
def test_stable_density():
    rep = verify.run_density(MAP, (0.6, 0.75, 0.9), ks_size=10**6)
    assert len(rep.verdicts) == 9
    passed(rep, *[v.criterion for v in rep.verdicts])


# -- 3 ------------------------------------------------------------------------

def _eigen_fit(op):
    tail = TailModel(0.75, c0=1.25)
    return transfer.eigen_asymptotics_fit(op, np.geomspace(1e-3, 1e-1, 21), tail)


@pytest.mark.criterion(3, "eigenvalue asymptotics on grid 2^14, grid drift")
@pytest.mark.xfail(strict=True, reason="pre-asymptotic on b in [1e-3, 1e-1]; slope ~0.67")
def test_eigen_slope(fine_ops):
    fit = _eigen_fit(fine_ops[1])
    assert abs(fit.beta_fit - 0.75) <= 0.03, fit.beta_fit


@pytest.mark.criterion(3, "eigenvalue asymptotics on grid 2^14, grid drift")
@pytest.mark.xfail(strict=True, reason="pre-asymptotic on b in [1e-3, 1e-1]; arg ~1.01")
def test_eigen_arg(fine_ops):
    fit = _eigen_fit(fine_ops[1])
    arg = float(np.angle(fit.c_beta_fit))
    assert abs(arg - 3 * math.pi / 8) <= 0.05, arg


@pytest.mark.criterion(3, "eigenvalue asymptotics on grid 2^14, grid drift")
def test_grid_drift(fine_ops):
    coarse, fine = fine_ops
    bs = np.geomspace(1e-3, 1e-1, 21)
    drift = max(abs(coarse.leading_eigenvalue(b=b).lam - fine.leading_eigenvalue(b=b).lam)
                for b in bs)
    assert drift < 1e-3, drift


# -- 4 ------------------------------------------------------------------------

@pytest.mark.criterion(4, "aperiodicity scan and lattice control")
def test_aperiodicity(spectral):
    scan = spectral.tables["aperiodicity"]
    assert len(scan) == 200
    assert min(r["b"] for r in scan) == pytest.approx(0.05)
    assert max(r["b"] for r in scan) == pytest.approx(20.0)
    passed(spectral, "aperiodicity")


@pytest.mark.criterion(4, "aperiodicity scan and lattice control")
def test_lattice_control_fails_by_design():
    r = verify.lattice_control(c=1.5, grid_size=MAP.grid_size)
    assert abs(r - 1) < 1e-8
    assert r > 1 - MAP.margin  # the scan verdict would be FAIL


# -- 5 ------------------------------------------------------------------------

@pytest.mark.criterion(5, "resolvent growth slope -beta")
def test_resolvent_slope(spectral):
    passed(spectral, "resolvent_slope", "eigenvalue_one", "spectral_gap")


# -- 6 ------------------------------------------------------------------------

@pytest.mark.criterion(6, "Laplace transform cross-validation")
def test_xval_map():
    rep = verify.cross_validate(MAP)
    passed(rep, "laplace_sigma_0.05", "laplace_sigma_0.1", "laplace_sigma_0.2")
    assert all(v.tolerance == "< 0.02" for v in rep.verdicts if "0.0" in v.criterion
               or "0.1" in v.criterion)


@pytest.mark.criterion(6, "Laplace transform cross-validation")
def test_xval_iid():
    rep = verify.cross_validate(IID.replace(N_xval=10**6))
    passed(rep, *[v.criterion for v in rep.verdicts])
    assert all(v.tolerance == "< 0.005" for v in rep.verdicts if v.criterion.startswith("lap"))


# -- 7 ------------------------------------------------------------------------

@pytest.mark.criterion(7, "weak rational ergodicity")
def test_wre_iid():
    rep = verify.run_wre(IID.replace(N=10**6, wre_t=(1e3, 1e5, 3.0)))
    assert rep.grids["t_ladder"][-1] == pytest.approx(1e5)
    passed(rep, "cumulative_final_ratio", "occupation_final_ratio", "karamata_sigma_route")
    assert rep.verdict("cumulative_final_ratio").tolerance == "[0.97, 1.03]"


@pytest.mark.criterion(7, "weak rational ergodicity")
def test_wre_map():
    rep = verify.run_wre(MAP.replace(N=10**5))
    assert rep.grids["t_ladder"][-1] == pytest.approx(1e4)
    passed(rep, "cumulative_final_ratio", "occupation_final_ratio", "karamata_sigma_route",
           "discard_fraction")
    assert rep.verdict("cumulative_final_ratio").tolerance == "[0.85, 1.15]"
    assert rep.verdict("karamata_sigma_route").tolerance == "|ratio - 1| <= 0.05"


@pytest.mark.criterion(7, "weak rational ergodicity")
def test_wre_gamma_2_5(wre25):
    passed(wre25, "cumulative_final_ratio", "occupation_final_ratio", "discard_fraction")


# -- 8 ------------------------------------------------------------------------

@pytest.mark.criterion(8, "strong renewal theorem")
def test_srt_iid():
    rep = verify.run_srt(IID.replace(N=10**7, t_ladder=(100.0, 1e4, 5.0)))
    assert rep.grids["t_ladder"][-1] == pytest.approx(1e4) and rep.grids["h"] == 0.5
    passed(rep, "final_ratio", "error_trend", "discard_fraction")
    assert rep.verdict("final_ratio").tolerance == "[0.95, 1.05]"


@pytest.mark.criterion(8, "strong renewal theorem")
def test_srt_map():
    rep = verify.run_srt(MAP.replace(N=10**6))
    assert rep.grids["t_ladder"][-1] == pytest.approx(3e3)
    passed(rep, "final_ratio", "error_trend", "rectangle_vs_window", "discard_fraction")
    assert rep.verdict("final_ratio").tolerance == "[0.8, 1.2]"


# -- 9 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def llt_map():
    return verify.run_llt(MAP.replace(N_llt=10**7))


@pytest.fixture(scope="module")
def llt_iid():
    return verify.run_llt(IID.replace(N_llt=10**7))


@pytest.mark.criterion(9, "local limit theorem sup error")
def test_llt_iid_trend(llt_iid):
    assert list(llt_iid.grids["n_list"]) == [25, 50, 100, 200]
    passed(llt_iid, "sup_error_trend", "discard_fraction")


@pytest.mark.criterion(9, "local limit theorem sup error")
@pytest.mark.xfail(strict=True, reason="left-flank body term n K2 s^2 of the default law; ~0.06 at n=200")
def test_llt_iid_sup(llt_iid):
    passed(llt_iid, "final_sup_error")


@pytest.mark.criterion(9, "local limit theorem sup error")
def test_llt_map_trend(llt_map):
    passed(llt_map, "sup_error_trend", "discard_fraction")


@pytest.mark.criterion(9, "local limit theorem sup error")
@pytest.mark.xfail(strict=True, reason="finite-n shift n K of tau_n; decays like n^(-1/3)")
def test_llt_map_sup(llt_map):
    passed(llt_map, "final_sup_error")


# -- 10 -----------------------------------------------------------------------

@pytest.mark.criterion(10, "liminf regime at beta = 0.4")
def test_liminf(wre25):
    rep = verify.run_liminf(MAP25, wre_report=wre25)
    names = ["final_decade_p5", "cesaro"] + [f"exceptional_density_q{q}" for q in MAP25.q_list]
    passed(rep, *names)


# -- 11 -----------------------------------------------------------------------

@pytest.mark.criterion(11, "determinism and sharding")
def test_same_seed_same_artifacts(tmp_path):
    cfg = MAP.replace(N=20000, t_ladder=(100.0, 1000.0, 3.0), c0_map=1.25)
    a, b = verify.run_srt(cfg), verify.run_srt(cfg)
    assert a.to_json(with_timings=False) == b.to_json(with_timings=False)
    a.write(tmp_path / "a"), b.write(tmp_path / "b")
    for name in ("srt.json", "srt_window.csv", "srt_rectangle.csv"):
        ja, jb = (tmp_path / "a" / name).read_text(), (tmp_path / "b" / name).read_text()
        if name.endswith(".json"):
            ja, jb = json.loads(ja), json.loads(jb)
            ja.pop("timings"), jb.pop("timings")
        assert ja == jb


@pytest.mark.criterion(11, "determinism and sharding")
def test_shards_merge_exactly():
    for base in (MAP.replace(c0_map=1.25), IID):
        one = verify.Context(base.replace(shards=1)).sampler
        eight = verify.Context(base.replace(shards=8)).sampler
        grid = np.geomspace(100, 1000, 4)
        assert np.array_equal(one.window_counts(grid, 0.5, 20000, 3)[0],
                              eight.window_counts(grid, 0.5, 20000, 3)[0])
        c1 = [e.raw_mean for e in one.cumulative(grid, 20000, 4)]
        c8 = [e.raw_mean for e in eight.cumulative(grid, 20000, 4)]
        assert c1 == c8
        assert np.array_equal(one.occupation_samples(500.0, 5000, 5),
                              eight.occupation_samples(500.0, 5000, 5))
        r1, r8 = one.llt([5, 10], [[10, 20], [30, 60]], [1.0, 2.0], 20000, 6), \
            eight.llt([5, 10], [[10, 20], [30, 60]], [1.0, 2.0], 20000, 6)
        assert np.array_equal(r1[0], r8[0])

