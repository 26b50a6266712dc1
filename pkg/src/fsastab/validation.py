"""Self-checks run by ``fsastab validate``: oracle agreement and structural invariants."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.stats import poisson

from .arrivals import ArrivalModel, poisson_tail_bound
from .chain import FramePolicy, drift, drift_from_row, downward_drift, transition_row
from .occupancy import (
    SuccessLaw,
    brute_force_xi,
    expected_successes,
    expected_successes_exact,
    xi,
    xi_upper_bound,
)
from .stability import alpha_star, mpr_gain_at_unit_alpha, phi

__all__ = ["CheckResult", "CHECKS", "run_checks"]

ORACLE_RANGE = range(1, 7)
ORACLE_M = (1, 2, 3)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _laws():
    yield SuccessLaw.spr()
    for M in ORACLE_M:
        yield SuccessLaw.mpr(M)


def _oracle_equivalence() -> tuple[bool, str]:
    worst = 0.0
    for h in ORACLE_RANGE:
        for L in ORACLE_RANGE:
            for law in _laws():
                got = xi(h, L, law)
                ref = brute_force_xi(h, L, law)
                if len(got) != len(ref):
                    return False, f"length mismatch at h={h} L={L} {law}"
                worst = max(worst, float(np.max(np.abs(got.xi - ref.xi))))
    return worst <= 1e-12, f"max |xi - oracle| = {worst:.3e}"


def _normalization() -> tuple[bool, str]:
    worst = 0.0
    for h in range(0, 41, 4):
        for L in (1, 3, 10, 40):
            for law in _laws():
                worst = max(worst, abs(xi(h, L, law).total() - 1.0))
    return worst <= 1e-12, f"max |sum xi - 1| = {worst:.3e}"


def _mean_identity() -> tuple[bool, str]:
    worst = 0.0
    closed = True
    for h in ORACLE_RANGE:
        for L in ORACLE_RANGE:
            for law in _laws():
                worst = max(worst, abs(xi(h, L, law).mean() - expected_successes(h, L, law)))
            exact = expected_successes_exact(h, L, SuccessLaw.spr())
            closed &= exact == h * (1 - Fraction(1, L)) ** (h - 1)
    return worst <= 1e-10 and closed, f"max |mean - r_h| = {worst:.3e}; closed form exact: {closed}"


def _degeneracy() -> tuple[bool, str]:
    worst = 0.0
    for h in ORACLE_RANGE:
        for L in ORACLE_RANGE:
            a = xi(h, L, SuccessLaw.spr()).xi
            b = xi(h, L, SuccessLaw.mpr(1)).xi
            worst = max(worst, float(np.max(np.abs(a - b))))
    return worst <= 1e-12, f"max |SPR - MPR(1)| = {worst:.3e}"


def _monotone_capacity() -> tuple[bool, str]:
    for h in range(0, 30):
        for L in (1, 2, 5, 11):
            r = [expected_successes(h, L, SuccessLaw.mpr(M)) for M in range(1, 8)]
            if any(b < a - 1e-12 for a, b in zip(r, r[1:])):
                return False, f"decrease at h={h} L={L}"
    return True, "r_h nondecreasing in M"


def _bound_validity() -> tuple[bool, str]:
    for h in ORACLE_RANGE:
        for L in ORACLE_RANGE:
            ref = brute_force_xi(h, L, SuccessLaw.spr())
            for k in range(min(h, L) + 1):
                if xi_upper_bound(h, L, k) < ref(k) - 1e-15:
                    return False, f"bound below exact value at h={h} L={L} k={k}"
    return True, "bound >= exact on the oracle range"


def _maximisers() -> tuple[bool, str]:
    a1 = alpha_star(1)
    ok = abs(a1.alpha - 1.0) <= 1e-8 and abs(a1.phi - math.exp(-1)) <= 1e-10
    for M in range(2, 13):
        a = alpha_star(M)
        ok &= (M - 1) / math.e <= a.alpha <= M
    return ok, f"alpha*(1) = {a1.alpha:.12g}, Phi* = {a1.phi:.12g}"


def _phi_properties() -> tuple[bool, str]:
    grid = np.linspace(0.01, 20.0, 400)
    ok = all(abs(phi(a, 1) - a * math.exp(-a)) <= 1e-12 for a in grid)
    ok &= all(phi(a, M) <= a + 1e-15 for a in grid for M in range(1, 13))
    for a in grid:
        for M in range(1, 12):
            lo, hi = phi(a, M), phi(a, M + 1)
            # the increment e^-a a^(M+1)/M! can fall below one ulp of Phi
            step = math.exp(-a) * a ** (M + 1) / math.factorial(M)
            ok &= hi > lo if step > 4 * math.ulp(lo) else hi >= lo
    return ok, "Phi(.,1) = alpha e^-alpha; Phi <= alpha; increasing in M"


def _gain_band() -> tuple[bool, str]:
    vals = [mpr_gain_at_unit_alpha(M) for M in range(3, 13)]
    ok = all(2.5 <= v <= 3 - 1 / M for v, M in zip(vals, range(3, 13)))
    return ok, f"gain(3) = {vals[0]:.12g}, gain(12) = {vals[-1]:.12g}"


def _tail_bound() -> tuple[bool, str]:
    for mu in range(1, 51):
        for frac in np.linspace(0.1, 0.9, 9):
            x = frac * mu
            if poisson_tail_bound(mu, x) < poisson.cdf(math.floor(x), mu):
                return False, f"bound violated at mu={mu} x={x}"
    return True, "bound dominates the exact lower tail"


def _chain_rows() -> tuple[bool, str]:
    worst_norm = 0.0
    worst_drift = 0.0
    models = (ArrivalModel.poisson(0.3), ArrivalModel.bernoulli(0.4), ArrivalModel.none())
    for model in models:
        for law in _laws():
            for L in range(1, 7):
                pol = FramePolicy.fixed(L)
                for h in range(0, 7):
                    row = transition_row(h, pol, model, law)
                    worst_norm = max(worst_norm, abs(row.probs.sum() + row.tail_mass - 1.0))
                    worst_drift = max(worst_drift, abs(drift_from_row(row) - drift(h, pol, model, law)))
                    if downward_drift(h, pol, model, law, row) < -law.M * min(h, L) - 1e-12:
                        return False, f"downward drift below bound at h={h} L={L}"
    ok = worst_norm <= 1e-10 and worst_drift <= 1e-8
    return ok, f"max normalization error {worst_norm:.3e}; max drift mismatch {worst_drift:.3e}"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "oracle-equivalence": _oracle_equivalence,
    "normalization": _normalization,
    "mean-identity": _mean_identity,
    "spr-mpr1-degeneracy": _degeneracy,
    "monotone-capacity": _monotone_capacity,
    "xi-upper-bound": _bound_validity,
    "alpha-star-bracket": _maximisers,
    "phi-properties": _phi_properties,
    "mpr-gain-band": _gain_band,
    "poisson-tail-bound": _tail_bound,
    "chain-rows": _chain_rows,
}


def run_checks(names=None) -> list[CheckResult]:
    out = []
    for name in names or CHECKS:
        t0 = time.perf_counter()
        try:
            passed, detail = CHECKS[name]()
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(passed), detail, time.perf_counter() - t0))
    return out
