"""Backlog Markov chain of frame slotted Aloha.

With backlog h the next frame has L(h) slots; the backlog moves to
h + N - C where N ~ frame arrivals and C ~ successes among the h backlogged
packets.  New arrivals never transmit in the frame they arrive in, so the
row for h = 0 is the frame-arrival pmf itself.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .arrivals import ArrivalModel, default_n_max, frame_arrival_pmf
from .errors import TruncationError
from .occupancy import SuccessLaw, expected_successes, xi

__all__ = [
    "FramePolicy",
    "TransitionRow",
    "TruncatedChain",
    "DriftProfile",
    "StationaryResult",
    "transition_row",
    "drift",
    "drift_from_row",
    "downward_drift",
    "drift_profile",
    "drift_sign_threshold",
    "build_truncated_chain",
    "stationary_distribution",
    "chain_to_csv",
    "chain_to_json",
]

ROW_WARN_TAIL = 1e-6
DRIFT_ROW_MAX_TAIL = 1e-8
_SUPERLINEAR = ("quadratic", "hlogh")


@dataclass(frozen=True)
class FramePolicy:
    """Rule giving the frame length L(h) for backlog h.

    ``fixed(L)``: constant.  ``proportional(alpha)``: round-half-up of
    h/alpha.  ``sublinear(eps, scale)``: ceil(scale * h**(1-eps)).
    ``superlinear("quadratic" | "hlogh")``: h**2 or ceil(h ln(h+1)).
    Every kind is clamped below at one slot so an empty backlog still has
    a frame.
    """

    kind: str
    params: tuple = ()

    @classmethod
    def fixed(cls, L: int) -> "FramePolicy":
        if int(L) != L or L < 1:
            raise ValueError(f"fixed frame length must be a positive integer, got {L!r}")
        return cls("fixed", (int(L),))

    @classmethod
    def proportional(cls, alpha: float) -> "FramePolicy":
        if not alpha > 0 or not math.isfinite(alpha):
            raise ValueError(f"alpha must be positive and finite, got {alpha!r}")
        return cls("proportional", (float(alpha),))

    @classmethod
    def sublinear(cls, eps: float, scale: float = 1.0) -> "FramePolicy":
        if not 0.0 < eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {eps!r}")
        if not scale > 0:
            raise ValueError(f"scale must be positive, got {scale!r}")
        return cls("sublinear", (float(eps), float(scale)))

    @classmethod
    def superlinear(cls, growth: str = "quadratic") -> "FramePolicy":
        if growth not in _SUPERLINEAR:
            raise ValueError(f"growth must be one of {_SUPERLINEAR}, got {growth!r}")
        return cls("superlinear", (growth,))

    def __call__(self, h: int) -> int:
        return self.evaluate(h)

    def evaluate(self, h: int) -> int:
        if h < 0:
            raise ValueError("backlog must be nonnegative")
        if self.kind == "fixed":
            return self.params[0]
        if self.kind == "proportional":
            return max(1, math.floor(h / self.params[0] + 0.5))
        if self.kind == "sublinear":
            eps, scale = self.params
            return max(1, math.ceil(scale * h ** (1.0 - eps)))
        if self.params[0] == "quadratic":
            return max(1, h * h)
        return max(1, math.ceil(h * math.log(h + 1)))

    @property
    def relation(self) -> str:
        """Asymptotic relation of L to h: "o" (L/h -> 0), "Theta", or "O" (L/h -> infinity)."""
        return {"fixed": "o", "sublinear": "o", "proportional": "Theta", "superlinear": "O"}[self.kind]

    def describe(self) -> str:
        return f"{self.kind}({', '.join(f'{p:.12g}' if isinstance(p, float) else str(p) for p in self.params)})"


@dataclass(frozen=True, eq=False)
class TransitionRow:
    """P[X_{i+1} = k | X_i = h] for k = k_min..k_min+len(probs)-1.

    ``tail_mass`` is the probability of landing above the last stored k;
    ``warning`` is set when it exceeds 1e-6.
    """

    h: int
    L: int
    k_min: int
    probs: np.ndarray
    tail_mass: float

    @property
    def k_max(self) -> int:
        return self.k_min + len(self.probs) - 1

    @property
    def warning(self) -> bool:
        return self.tail_mass > ROW_WARN_TAIL

    def __call__(self, k: int) -> float:
        i = k - self.k_min
        if 0 <= i < len(self.probs):
            return float(self.probs[i])
        return 0.0

    def states(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_max + 1)


def transition_row(
    h: int,
    policy: FramePolicy,
    model: ArrivalModel,
    law: SuccessLaw,
    k_cap: int | None = None,
) -> TransitionRow:
    """One-step transition probabilities out of backlog ``h``, stored up to ``k_cap``.

    The default ``k_cap`` keeps every arrival count up to the frame-arrival
    truncation point, so the tail mass is below 1e-12 for light-tailed
    traffic.
    """
    if int(h) != h or h < 0:
        raise ValueError(f"backlog must be a nonnegative integer, got {h!r}")
    L = policy(h)
    dist = xi(h, L, law).xi
    c_max = len(dist) - 1
    if k_cap is None:
        k_cap = h + default_n_max(model, L)
    elif k_cap < h + 1:
        raise ValueError(f"k_cap must be at least h + 1 = {h + 1}, got {k_cap}")
    n_max = k_cap - h + c_max
    lam = frame_arrival_pmf(model, L, n_max)
    # next = h + N - C; index j of the convolution is (c_max - C) + N
    conv = np.convolve(dist[::-1], lam.pmf)
    k_min = h - c_max
    keep = k_cap - k_min + 1
    probs = conv[:keep]
    tail = lam.tail_mass + float(conv[keep:].sum())
    return TransitionRow(h, L, k_min, probs, tail)


def drift(h: int, policy: FramePolicy, model: ArrivalModel, law: SuccessLaw) -> float:
    """Expected one-frame backlog change L(h) * Lambda - r_h."""
    L = policy(h)
    return L * model.mean - expected_successes(h, L, law)


def drift_from_row(row: TransitionRow) -> float:
    """Expected displacement sum_k (k - h) P_hk computed from a stored row."""
    if row.tail_mass >= DRIFT_ROW_MAX_TAIL:
        raise TruncationError(f"row tail mass {row.tail_mass:.3e} too large for a drift estimate")
    return float(np.dot(row.states() - row.h, row.probs))


def downward_drift(
    h: int, policy: FramePolicy, model: ArrivalModel, law: SuccessLaw, row: TransitionRow | None = None
) -> float:
    """Expectation of the displacement restricted to backlog-decreasing moves."""
    if h == 0:
        return 0.0
    if row is None:
        row = transition_row(h, policy, model, law, k_cap=h + 1)
    k = row.states()
    down = k < h
    return float(np.dot(k[down] - h, row.probs[down]))


@dataclass(frozen=True, eq=False)
class DriftProfile:
    """Per-backlog drift records.  ``alpha`` is the realized ratio h / L(h)."""

    h: np.ndarray
    L: np.ndarray
    alpha: np.ndarray
    arrivals_mean: np.ndarray
    r: np.ndarray
    D: np.ndarray
    d_minus: np.ndarray | None = None


def drift_profile(
    policy: FramePolicy,
    model: ArrivalModel,
    law: SuccessLaw,
    hs,
    downward: bool = False,
) -> DriftProfile:
    hs = np.asarray(list(hs), dtype=np.int64)
    Ls = np.array([policy(int(h)) for h in hs], dtype=np.int64)
    r = np.array([expected_successes(int(h), int(L), law) for h, L in zip(hs, Ls)])
    lam = Ls * model.mean
    dm = None
    if downward:
        dm = np.array([downward_drift(int(h), policy, model, law) for h in hs])
    return DriftProfile(hs, Ls, hs / Ls, lam, r, lam - r, dm)


def drift_sign_threshold(profile: DriftProfile) -> tuple[int | None, int]:
    """Smallest h0 in the profile from which the drift keeps one strict sign.

    Returns ``(h0, sign)`` with sign -1 or +1, or ``(None, 0)`` if the last
    profile entry has zero drift.
    """
    s = np.sign(profile.D)
    last = s[-1]
    if last == 0:
        return None, 0
    differ = np.nonzero(s != last)[0]
    start = 0 if len(differ) == 0 else differ[-1] + 1
    return int(profile.h[start]), int(last)


@dataclass(frozen=True, eq=False)
class TruncatedChain:
    """Transition matrix on 0..N_max with mass above N_max lumped into N_max.

    ``rows`` keeps the unlumped rows (with their own tail mass) for
    diagnostics that need the chain beyond the window.
    """

    N_max: int
    policy: FramePolicy
    model: ArrivalModel
    law: SuccessLaw
    rows: tuple[TransitionRow, ...]
    P: np.ndarray
    lumped_mass: np.ndarray = field(repr=False)


def _lump(row: TransitionRow, N_max: int) -> tuple[np.ndarray, float]:
    out = np.zeros(N_max + 1)
    k = row.states()
    inside = k < N_max
    out[k[inside]] = row.probs[inside]
    lumped = float(row.probs[~inside].sum()) + row.tail_mass
    out[N_max] += lumped
    return out, lumped


def build_truncated_chain(
    policy: FramePolicy,
    model: ArrivalModel,
    law: SuccessLaw,
    N_max: int,
    threads: int = 1,
) -> TruncatedChain:
    """Rows for h = 0..N_max; probability of reaching N_max or beyond goes to N_max."""
    if int(N_max) != N_max or N_max < 0:
        raise ValueError(f"N_max must be a nonnegative integer, got {N_max!r}")

    def make(h: int) -> TransitionRow:
        return transition_row(h, policy, model, law)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = tuple(pool.map(make, range(N_max + 1)))
    else:
        rows = tuple(make(h) for h in range(N_max + 1))
    P = np.zeros((N_max + 1, N_max + 1))
    lumped = np.zeros(N_max + 1)
    for row in rows:
        P[row.h], lumped[row.h] = _lump(row, N_max)
    return TruncatedChain(N_max, policy, model, law, rows, P, lumped)


@dataclass(frozen=True, eq=False)
class StationaryResult:
    """Outcome of power iteration.

    ``boundary_flag`` is raised when more than 1e-6 of the mass sits in the
    upper half of the window, the signature of a backlog that keeps growing.
    """

    pi: np.ndarray
    converged: bool
    iterations: int
    residual: float
    boundary_mass: float
    upper_half_mass: float

    @property
    def boundary_flag(self) -> bool:
        return self.upper_half_mass > 1e-6


def stationary_distribution(
    chain: TruncatedChain, tol: float = 1e-13, max_iter: int = 200_000
) -> StationaryResult:
    """Power iteration pi <- pi P from the uniform start, stopping at L1 residual < tol."""
    P = chain.P
    n = P.shape[0]
    pi = np.full(n, 1.0 / n)
    residual = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        nxt = pi @ P
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt
        if residual < tol:
            break
    half = (chain.N_max + 1) // 2 if chain.N_max > 0 else 1
    return StationaryResult(
        pi,
        residual < tol,
        it,
        residual,
        float(pi[-1]),
        float(pi[half:].sum()),
    )


def chain_to_csv(chain: TruncatedChain) -> str:
    """Nonzero entries of the lumped matrix as ``h,k,P_hk`` lines with a header."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "k", "P_hk"])
    for h, k in zip(*np.nonzero(chain.P)):
        w.writerow([int(h), int(k), f"{chain.P[h, k]:.12g}"])
    return buf.getvalue()


def chain_to_json(chain: TruncatedChain) -> str:
    """Row objects with frame length, stored probabilities, tail and lumped mass."""
    rows = []
    for row in chain.rows:
        rows.append(
            {
                "h": row.h,
                "L": row.L,
                "k_min": row.k_min,
                "probs": [f"{p:.12g}" for p in row.probs],
                "tail_mass": f"{row.tail_mass:.12g}",
                "lumped_mass": f"{chain.lumped_mass[row.h]:.12g}",
            }
        )
    doc = {
        "N_max": chain.N_max,
        "policy": chain.policy.describe(),
        "arrivals": chain.model.describe(),
        "law": str(chain.law),
        "rows": rows,
    }
    return json.dumps(doc, indent=2)
