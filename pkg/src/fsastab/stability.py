"""Stability boundaries, the MPR throughput function and transience diagnostics.

Throughout, ``alpha = h / L`` is the backlog per slot.  With a frame length
proportional to the backlog the per-slot arrival rate Lambda is sustainable
iff it lies below ``Phi(alpha, M) = alpha * e^{-alpha} * sum_{i<M} alpha^i / i!``
(for SPR, M = 1, this is ``alpha e^{-alpha}``).  Frame lengths that grow
strictly slower (relation "o") or strictly faster (relation "O", meaning
L/h -> infinity) than the backlog are never stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc
from scipy.stats import poisson

from .chain import FramePolicy, TransitionRow, TruncatedChain, transition_row
from .errors import StateSpaceTooLarge
from .occupancy import SuccessLaw, poisson_occupancy, xi

__all__ = [
    "spr_boundary",
    "phi",
    "phi_prime",
    "AlphaStar",
    "alpha_star",
    "mpr_gain_at_unit_alpha",
    "RegimeSpec",
    "StabilityVerdict",
    "classify",
    "transience_constant",
    "TransienceReport",
    "transience_sequence_test",
    "K2SupCurve",
    "k2_sup_xi_test",
    "region_table",
]

BOUNDARY_TOL = 1e-9
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_TINY = 1e-12


def spr_boundary(alpha: float) -> float:
    """Largest sustainable per-slot arrival rate under SPR: alpha * e^{-alpha}."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    return alpha * math.exp(-alpha)


def _check_alpha_M(alpha: float, M: int) -> None:
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M!r}")


def phi(alpha: float, M: int) -> float:
    """Per-slot decoded-packet rate sum_{x=1..M} e^{-alpha} alpha^x / (x-1)!."""
    _check_alpha_M(alpha, M)
    # e^{-a} sum_{i<M} a^i/i! is the regularized upper incomplete gamma Q(M, a)
    return float(alpha * gammaincc(M, alpha))


def phi_prime(alpha: float, M: int) -> float:
    """Derivative e^{-alpha} [sum_{i<M} alpha^i/i! - alpha^M/(M-1)!]."""
    _check_alpha_M(alpha, M)
    if M > 100:
        return float(gammaincc(M, alpha) - alpha * poisson.pmf(M - 1, alpha))
    # direct sum keeps the root exact where it is representable (alpha = 1 at M = 1)
    terms = [alpha**i / math.factorial(i) for i in range(M)]
    return math.exp(-alpha) * (math.fsum(terms) - alpha**M / math.factorial(M - 1))


@dataclass(frozen=True)
class AlphaStar:
    M: int
    alpha: float
    phi: float
    bracket: tuple[float, float]
    iterations: int


def alpha_star(M: int, tol: float = 1e-10) -> AlphaStar:
    """Maximiser of Phi(., M) over the bracket [(M-1)/e, M].

    Golden-section search narrows the bracket to ``tol``; the estimate is
    then polished by bisection on the sign of the analytic derivative, which
    pins the stationary point to machine precision.  The derivative must be
    nonnegative at the left end of the bracket and nonpositive at the right.
    """
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M!r}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    lo0 = max((M - 1) / math.e, _TINY)
    hi0 = float(M)
    if phi_prime(lo0, M) < 0 or phi_prime(hi0, M) > 0:
        raise ArithmeticError(f"derivative of Phi does not change sign on [{lo0}, {hi0}] for M={M}")

    a, b = lo0, hi0
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = phi(c, M), phi(d, M)
    it = 0
    while b - a > tol:
        it += 1
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = phi(c, M)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = phi(d, M)

    # widen by one tolerance so the stationary point is inside, then bisect
    lo, hi = max(lo0, a - tol), min(hi0, b + tol)
    if phi_prime(lo, M) < 0:
        lo = lo0
    if phi_prime(hi, M) > 0:
        hi = hi0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        it += 1
        if phi_prime(mid, M) > 0:
            lo = mid
        else:
            hi = mid
    best = hi if phi(hi, M) >= phi(lo, M) else lo
    if not lo0 <= best <= hi0:
        raise ArithmeticError(f"maximiser {best} left the bracket [{lo0}, {hi0}]")
    return AlphaStar(int(M), best, phi(best, M), (lo0, hi0), it)


def mpr_gain_at_unit_alpha(M: int) -> float:
    """Phi(1, M) / Phi(1, 1) = sum_{x=1..M} 1/(x-1)!.

    For M >= 3 the value is checked to lie in [2.5, 3 - 1/M).
    """
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M!r}")
    value = math.fsum(1.0 / math.factorial(x - 1) for x in range(1, M + 1))
    if M >= 3 and not 2.5 <= value < 3.0 - 1.0 / M:
        raise ArithmeticError(f"gain {value} outside [2.5, {3.0 - 1.0 / M})")
    return value


_RELATIONS = {"o": "o", "theta": "Theta", "Theta": "Theta", "O": "O"}


@dataclass(frozen=True)
class RegimeSpec:
    """Declared asymptotic relation between frame length and backlog.

    ``relation`` is "o" (L/h -> 0), "Theta" (L/h bounded away from 0 and
    infinity, with h/L -> alpha) or "O" (L/h -> infinity).  Note that "O"
    here means strictly faster growth, not the usual upper bound.
    """

    relation: str
    Lambda: float
    law: SuccessLaw = SuccessLaw.spr()
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.relation not in _RELATIONS:
            raise ValueError(f"relation must be 'o', 'Theta' or 'O', got {self.relation!r}")
        object.__setattr__(self, "relation", _RELATIONS[self.relation])
        if self.Lambda < 0:
            raise ValueError("Lambda must be nonnegative")
        if self.relation == "Theta" and (self.alpha is None or not self.alpha > 0):
            raise ValueError("a proportional regime needs alpha > 0")


@dataclass(frozen=True)
class StabilityVerdict:
    verdict: str
    binding_condition: str
    margin: float
    boundary: float
    transience: str


def classify(spec: RegimeSpec) -> StabilityVerdict:
    """Stable / Unstable / Boundary verdict from the declared regime.

    ``margin`` is Lambda minus the largest sustainable rate (zero for the
    "o" and "O" regimes, whose stability region is empty).  Margins within
    1e-9 of zero are reported as Boundary.
    """
    M = spec.law.M
    spr = spec.law.variant == "SPR"
    if spec.relation == "o":
        boundary = 0.0
        condition = "frame length grows slower than the backlog (L/h -> 0): never stable"
        transience = "transient under Poisson arrivals when L = o(h^(1-eps)) for some eps in (0, 1)"
    elif spec.relation == "O":
        boundary = 0.0
        condition = "frame length grows faster than the backlog (L/h -> infinity): never stable"
        transience = "transient under Poisson arrivals"
    else:
        alpha = float(spec.alpha)
        boundary = phi(alpha, M)
        name = "alpha e^-alpha" if spr else f"Phi(alpha, M={M})"
        condition = f"proportional frame length: Lambda compared with {name} = {boundary:.12g}"
        if spec.Lambda <= boundary:
            transience = "not applicable"
        elif spr or spec.Lambda > alpha:
            transience = "transient under Poisson arrivals"
        else:
            transience = "unstable, transience not established"
    margin = spec.Lambda - boundary
    if abs(margin) < BOUNDARY_TOL:
        verdict = "Boundary"
        transience = "not established"
    elif margin < 0:
        verdict = "Stable"
    else:
        verdict = "Unstable"
    return StabilityVerdict(verdict, condition, margin, boundary, transience)


def transience_constant(x: float) -> float:
    """e^{x-1} / x, which exceeds 1 for every positive x other than 1.

    With x = Lambda / (alpha e^{-alpha}) it gives the geometric rate at which
    P[N <= backlog successes] vanishes under Poisson arrivals; with
    x = Lambda / alpha it plays the same role for P[N <= h].
    """
    if not x > 0:
        raise ValueError("x must be positive")
    return math.exp(x - 1.0 - math.log(x))


@dataclass(frozen=True, eq=False)
class TransienceReport:
    """Evaluation of sum_k y_k P_hk - y_h with y_i = (i+1)^(-theta).

    ``slack[i]`` is the value computed from the stored row for ``h[i]``;
    ``status[i]`` is "holds" when even the worst case for the unstored tail
    keeps it <= 0, "fails" when it is > 0, and "inconclusive" otherwise.
    ``holds_from`` is the smallest tested h from which every tested state
    holds, or None.
    """

    theta: float
    h: np.ndarray
    slack: np.ndarray
    tail_allowance: np.ndarray
    status: tuple[str, ...]
    holds_from: int | None
    constants: dict

    @property
    def largest_tested(self) -> int:
        return int(self.h[-1])

    @property
    def conclusion(self) -> str:
        if self.holds_from is None:
            return "no transience evidence"
        return (
            f"inequality holds for every tested h in [{self.holds_from}, {self.largest_tested}]"
            " (numeric evidence, not a proof)"
        )


def _y(k: np.ndarray, theta: float) -> np.ndarray:
    return (k + 1.0) ** (-theta)


def transience_sequence_test(
    chain: TruncatedChain,
    theta: float = 0.5,
    h_range=None,
) -> TransienceReport:
    """Test sum_k y_k P_hk <= y_h for y_i = (i+1)^(-theta) over ``h_range``.

    Rows come from the unlumped transition rows of ``chain``; states beyond
    the chain window are computed on demand.  Mass in the unstored tail is
    bounded using the largest value y can take there.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta!r}")
    if h_range is None:
        h_range = range(1, chain.N_max + 1)
    hs = np.asarray(list(h_range), dtype=np.int64)
    if len(hs) == 0:
        raise ValueError("empty h_range")
    slack = np.empty(len(hs))
    allowance = np.empty(len(hs))
    status = []
    for i, h in enumerate(hs):
        h = int(h)
        row: TransitionRow
        if h < len(chain.rows):
            row = chain.rows[h]
        else:
            row = transition_row(h, chain.policy, chain.model, chain.law)
        s = float(np.dot(_y(row.states(), theta), row.probs)) - float(_y(np.array(h), theta))
        extra = row.tail_mass * float(_y(np.array(row.k_max + 1), theta))
        slack[i] = s
        allowance[i] = extra
        if s + extra <= 0:
            status.append("holds")
        elif s > 0:
            status.append("fails")
        else:
            status.append("inconclusive")
    holds = np.array([st == "holds" for st in status])
    if holds[-1]:
        bad = np.nonzero(~holds)[0]
        holds_from = int(hs[0] if len(bad) == 0 else hs[bad[-1] + 1])
    else:
        holds_from = None
    return TransienceReport(theta, hs, slack, allowance, tuple(status), holds_from, _constants(chain))


def _constants(chain: TruncatedChain) -> dict:
    """Geometric-rate constants from the Poisson lower-tail bound, where defined."""
    out: dict = {}
    lam = chain.model.mean
    if lam <= 0:
        return out
    pol = chain.policy
    if pol.kind == "proportional":
        alpha = pol.params[0]
        ratio = lam / (alpha * math.exp(-alpha))
        if ratio > 1:
            out["a"] = transience_constant(ratio)
        if lam / alpha > 1:
            out["a2"] = transience_constant(lam / alpha)
    elif pol.kind == "fixed" and chain.N_max > 0:
        # L fixed and large against the tested backlog mimics L/h -> infinity
        ratio = pol.params[0] * lam / chain.N_max
        if ratio > 1:
            out["a1"] = transience_constant(ratio)
    return out


@dataclass(frozen=True, eq=False)
class K2SupCurve:
    """k^2 * max_{h in grid, h >= k} xi_hk over a grid of k.

    ``decreasing_from`` is the smallest grid k from which the curve never
    increases (None if it rises at the last step); ``peak_k`` is where it
    is largest, beyond which its running envelope only falls.
    """

    k: np.ndarray
    tau: np.ndarray
    curve: np.ndarray
    decreasing_from: int | None
    peak_k: int
    vanishing: bool
    method: str


def k2_sup_xi_test(
    law: SuccessLaw,
    policy: FramePolicy,
    k_grid,
    h_grid,
    method: str = "exact",
    vanish_tol: float = 1e-3,
) -> K2SupCurve:
    """Evaluate k^2 tau_k with tau_k the largest success probability xi_hk over h >= k.

    ``method="exact"`` uses the exact distribution, falling back to the
    Poisson singleton approximation (SPR only) for inputs beyond the work
    cap; ``method="poisson"`` uses the approximation throughout.  The curve
    counts as vanishing when its last value is below ``vanish_tol``.
    """
    if method not in ("exact", "poisson"):
        raise ValueError("method must be 'exact' or 'poisson'")
    ks = np.asarray(sorted(set(int(k) for k in k_grid)), dtype=np.int64)
    hs = sorted(set(int(h) for h in h_grid))
    tau = np.zeros(len(ks))
    used = set()
    for h in hs:
        L = policy(h)
        if method == "exact":
            try:
                dist = xi(h, L, law).xi
                used.add("exact")
                vals = np.array([dist[k] if k < len(dist) and k <= h else 0.0 for k in ks])
            except StateSpaceTooLarge:
                if law.variant != "SPR":
                    raise
                used.add("poisson")
                approx = poisson_occupancy(h, L, 1)
                vals = np.array([approx.xi_spr(int(k)) if k <= h else 0.0 for k in ks])
        else:
            used.add("poisson")
            approx = poisson_occupancy(h, L, 1)
            vals = np.array([approx.xi_spr(int(k)) if k <= h else 0.0 for k in ks])
        tau = np.maximum(tau, vals)
    curve = ks.astype(float) ** 2 * tau
    # smallest index from which the curve never increases
    inc = np.nonzero(np.diff(curve) > 0)[0]
    start = 0 if len(inc) == 0 else int(inc[-1]) + 1
    decreasing_from = int(ks[start]) if start < len(ks) - 1 or len(ks) == 1 else None
    vanishing = bool(curve[-1] < vanish_tol)
    peak = int(ks[int(np.argmax(curve))])
    return K2SupCurve(ks, tau, curve, decreasing_from, peak, vanishing, "+".join(sorted(used)))


def region_table(alphas, Ms) -> tuple[list[str], list[list[float]]]:
    """Rows (alpha, alpha e^-alpha, Phi(alpha, M) for each M)."""
    Ms = [int(M) for M in Ms]
    header = ["alpha", "spr_boundary"] + [f"phi_M{M}" for M in Ms]
    rows = []
    for a in alphas:
        a = float(a)
        rows.append([a, spr_boundary(a)] + [phi(a, M) for M in Ms])
    return header, rows
