"""End-to-end acceptance checks, one test per numbered criterion.

Each test records its outcome through the ``criterion`` fixture so the
terminal summary prints a single pass/fail line per criterion.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from fsastab.arrivals import ArrivalModel
from fsastab.chain import FramePolicy, build_truncated_chain, drift_profile, stationary_distribution
from fsastab.occupancy import (
    SuccessLaw,
    brute_force_xi,
    expected_successes,
    expected_successes_exact,
    xi_mpr,
    xi_spr,
)
from fsastab.sim import SimConfig, empirical_xi, replicate
from fsastab.stability import alpha_star, mpr_gain_at_unit_alpha, phi, transience_sequence_test

SPR = SuccessLaw.spr()
DESK = [(h, L) for h in range(1, 7) for L in range(1, 7)]
FRAMES = 10**5
SEEDS = 20
CAP = 10**4


@pytest.fixture(scope="module")
def stable_spr_runs():
    cfg = SimConfig(FramePolicy.proportional(1.0), ArrivalModel.poisson(0.25), SPR, FRAMES, seed=0, abort_backlog=CAP)
    t0 = time.perf_counter()
    res = replicate(cfg, SEEDS, keep_traces=True)
    return res, time.perf_counter() - t0


def stable_signature(res):
    return (
        res.aborted == 0
        and all(s.status == "Completed" for s in res.stats)
        and all(abs(s.slope) < 0.001 for s in res.stats)
        and all(s.returns_to_zero >= 1 for s in res.stats)
    )


def unstable_signature(res):
    return res.aborted >= 19 and float(res.slopes.mean()) > 0


def test_c01_oracle_equivalence(criterion):
    criterion("1", "exact success laws match brute-force enumeration")
    t0 = time.perf_counter()
    worst = 0.0
    for h, L in DESK:
        for M in (1, 2, 3):
            law = SuccessLaw.mpr(M)
            ref = brute_force_xi(h, L, law).xi
            got = xi_mpr(h, L, M).xi
            worst = max(worst, float(np.max(np.abs(got - ref))))
        worst = max(worst, float(np.max(np.abs(xi_spr(h, L).xi - brute_force_xi(h, L, SPR).xi))))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-12, worst
    assert elapsed < 30, elapsed


def test_c02_mean_identities(criterion):
    criterion("2", "sum k xi_hk equals r_h; SPR r_h closed form exact")
    for h, L in DESK:
        for law in (SPR, SuccessLaw.mpr(2), SuccessLaw.mpr(3)):
            d = xi_mpr(h, L, law.M)
            assert abs(d.mean() - expected_successes(h, L, law)) <= 1e-10
        exact = xi_spr(h, L).exact
        closed = h * (1 - Fraction(1, L)) ** (h - 1)
        assert sum(k * p for k, p in enumerate(exact)) == closed
        assert expected_successes_exact(h, L, SPR) == closed


def test_c03_stability_maximisers(criterion):
    criterion("3", "alpha* = 1 with Phi* = 1/e for SPR; alpha* in [(M-1)/e, M] for M = 2..10")
    t0 = time.perf_counter()
    r = alpha_star(1)
    assert abs(r.alpha - 1.0) <= 1e-8
    assert abs(r.phi - math.exp(-1)) <= 1e-10
    for M in range(2, 11):
        a = alpha_star(M).alpha
        assert (M - 1) / math.e <= a <= M, (M, a)
    assert time.perf_counter() - t0 < 1.0


def test_c04_mpr_gain_band(criterion):
    criterion("4", "Phi(1, M) / e^-1 lies in [2.5, 3 - 1/M] for M = 3..12")
    t0 = time.perf_counter()
    for M in range(3, 13):
        g = phi(1.0, M) / math.exp(-1)
        assert 2.5 <= g <= 3 - 1 / M, (M, g)
        assert g == pytest.approx(mpr_gain_at_unit_alpha(M), rel=1e-13)
    assert mpr_gain_at_unit_alpha(3) == 2.5
    assert time.perf_counter() - t0 < 1.0


def test_c05_drift_sign_windows(criterion):
    criterion("5", "drift < 0 on [20, 2000] at rate 0.25; drift > 0 there at rate 0.45")
    t0 = time.perf_counter()
    pol = FramePolicy.proportional(1.0)
    below = drift_profile(pol, ArrivalModel.poisson(0.25), SPR, range(20, 2001))
    above = drift_profile(pol, ArrivalModel.poisson(0.45), SPR, range(20, 2001))
    assert np.all(below.D < 0), below.h[below.D >= 0]
    assert np.all(above.D > 0), above.h[above.D <= 0]
    assert time.perf_counter() - t0 < 10.0


def test_c06_simulation_spr(criterion, stable_spr_runs):
    criterion("6", "SPR simulation: stable signature at 0.25, unstable signature at 0.45")
    stable, t_stable = stable_spr_runs
    t0 = time.perf_counter()
    cfg = SimConfig(FramePolicy.proportional(1.0), ArrivalModel.poisson(0.45), SPR, FRAMES, seed=0, abort_backlog=CAP)
    unstable = replicate(cfg, SEEDS)
    elapsed = t_stable + time.perf_counter() - t0
    assert stable_signature(stable), [(s.status, s.slope, s.returns_to_zero) for s in stable.stats]
    assert unstable_signature(unstable), (unstable.aborted, unstable.slopes.mean())
    assert elapsed < 120, elapsed


def test_c07_simulation_mpr(criterion):
    criterion("7", "MPR M=3 at alpha*: stable at 0.9 Phi*, unstable at 1.1 Phi*")
    t0 = time.perf_counter()
    star = alpha_star(3)
    pol, law = FramePolicy.proportional(star.alpha), SuccessLaw.mpr(3)
    runs = {}
    for factor in (0.9, 1.1):
        cfg = SimConfig(pol, ArrivalModel.poisson(factor * star.phi), law, FRAMES, seed=0, abort_backlog=CAP)
        runs[factor] = replicate(cfg, SEEDS)
    elapsed = time.perf_counter() - t0
    assert stable_signature(runs[0.9]), [(s.status, s.slope, s.returns_to_zero) for s in runs[0.9].stats]
    assert unstable_signature(runs[1.1]), (runs[1.1].aborted, runs[1.1].slopes.mean())
    assert elapsed < 120, elapsed


def test_c08_chain_vs_simulation(criterion, stable_spr_runs):
    criterion("8", "truncated-chain stationary law vs pooled simulated backlog: TV < 0.05")
    res, _ = stable_spr_runs
    chain = build_truncated_chain(FramePolicy.proportional(1.0), ArrivalModel.poisson(0.25), SPR, 200)
    st = stationary_distribution(chain)
    assert st.converged
    tail = np.concatenate([t.backlog[-50_000:] for t in res.traces])
    assert tail.max() <= 200
    emp = np.bincount(tail, minlength=201) / len(tail)
    tv = 0.5 * float(np.abs(emp - st.pi).sum())
    assert tv < 0.05, tv


def test_c09_transience_evidence(criterion):
    criterion("9", "transience sequence test reports an onset holding through h = 400")
    chain = build_truncated_chain(FramePolicy.proportional(1.0), ArrivalModel.poisson(0.45), SPR, 400)
    rep = transience_sequence_test(chain, theta=0.5, h_range=range(1, 401))
    assert rep.holds_from is not None
    assert rep.largest_tested == 400
    onset = int(np.searchsorted(rep.h, rep.holds_from))
    assert all(s == "holds" for s in rep.status[onset:])
    assert np.all(rep.slack[onset:] + rep.tail_allowance[onset:] <= 0)


@pytest.mark.parametrize("h,L,law", [(3, 2, SuccessLaw.mpr(2)), (4, 4, SPR)], ids=["h3-L2-M2", "h4-L4-spr"])
def test_c10_empirical_xi(criterion, h, L, law):
    criterion("10", "empirical success law within TV 0.01 of exact at 1e5 trials")
    r = empirical_xi(h, L, law, 10**5, seed=0)
    assert r.trials == 10**5
    assert r.tv_distance < 0.01, r.tv_distance
