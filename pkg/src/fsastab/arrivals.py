"""Arrival traffic: per-slot pmf, per-frame pmf by L-fold convolution, samplers.

Arrivals in the L slots of a frame are iid; the frame total N is their sum.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.stats import poisson

__all__ = [
    "ArrivalModel",
    "FrameArrivalPmf",
    "frame_arrival_pmf",
    "default_n_max",
    "poisson_tail_bound",
    "sample_frame_arrivals",
    "load_custom_pmf",
]

TAIL_TARGET = 1e-12
CSV_NORMALIZATION_TOL = 1e-9
_NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class ArrivalModel:
    """Distribution of the number of new packets arriving in one slot.

    Build instances with the family constructors.  ``params`` holds the
    family parameter (rate, probability or mean) or, for ``custom``, the
    pmf values themselves.
    """

    family: str
    params: tuple[float, ...]

    @classmethod
    def poisson(cls, rate: float) -> "ArrivalModel":
        if not rate >= 0 or not math.isfinite(rate):
            raise ValueError(f"Poisson rate must be finite and nonnegative, got {rate!r}")
        return cls("poisson", (float(rate),))

    @classmethod
    def bernoulli(cls, p: float) -> "ArrivalModel":
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"Bernoulli probability must lie in [0, 1], got {p!r}")
        return cls("bernoulli", (float(p),))

    @classmethod
    def geometric(cls, mean: float) -> "ArrivalModel":
        """Geometric on {0, 1, ...}: P(k) = q (1-q)^k with mean (1-q)/q."""
        if not mean >= 0 or not math.isfinite(mean):
            raise ValueError(f"geometric mean must be finite and nonnegative, got {mean!r}")
        return cls("geometric", (float(mean),))

    @classmethod
    def custom(cls, pmf) -> "ArrivalModel":
        values = tuple(float(v) for v in pmf)
        if not values:
            raise ValueError("custom pmf is empty")
        if any(v < 0 or not math.isfinite(v) for v in values):
            raise ValueError("custom pmf entries must be finite and nonnegative")
        if abs(math.fsum(values) - 1.0) > _NORMALIZATION_TOL:
            raise ValueError(f"custom pmf sums to {math.fsum(values)!r}, not 1")
        while len(values) > 1 and values[-1] == 0.0:
            values = values[:-1]
        return cls("custom", values)

    @classmethod
    def none(cls) -> "ArrivalModel":
        """No arrivals ever (point mass at zero)."""
        return cls.custom([1.0])

    @property
    def mean(self) -> float:
        """Expected arrivals per slot."""
        if self.family == "custom":
            return math.fsum(k * p for k, p in enumerate(self.params))
        return self.params[0]

    @property
    def support_max(self) -> int | None:
        """Largest possible per-slot count, or None if unbounded."""
        if self.family == "custom":
            return len(self.params) - 1
        if self.family == "bernoulli":
            return 1 if self.params[0] > 0 else 0
        return None if self.params[0] > 0 else 0

    @property
    def irreducible(self) -> bool:
        """True when every frame-arrival probability lies strictly in (0, 1).

        That needs unbounded support and a positive chance of no arrival,
        which the Poisson and geometric families with positive mean satisfy
        and any bounded-support model violates.
        """
        return self.support_max is None

    def per_slot_pmf(self, k_max: int) -> np.ndarray:
        """Probabilities of 0..k_max arrivals in one slot (truncated, not renormalized)."""
        k = np.arange(k_max + 1)
        if self.family == "poisson":
            return poisson.pmf(k, self.params[0])
        if self.family == "bernoulli":
            p = self.params[0]
            out = np.zeros(k_max + 1)
            out[0] = 1.0 - p
            if k_max >= 1:
                out[1] = p
            return out
        if self.family == "geometric":
            m = self.params[0]
            q = 1.0 / (1.0 + m)
            return q * (1.0 - q) ** k
        out = np.zeros(k_max + 1)
        n = min(k_max + 1, len(self.params))
        out[:n] = self.params[:n]
        return out

    def describe(self) -> str:
        if self.family == "custom":
            return f"custom(mean={self.mean:.12g})"
        return f"{self.family}({self.params[0]:.12g})"


@dataclass(frozen=True, eq=False)
class FrameArrivalPmf:
    """Distribution of the total arrivals N in a frame of ``L`` slots, truncated at n_max."""

    L: int
    pmf: np.ndarray
    tail_mass: float
    mean: float
    method: str
    crosscheck: float | None = None

    @property
    def n_max(self) -> int:
        return len(self.pmf) - 1

    @property
    def mean_truncated(self) -> float:
        return float(np.dot(np.arange(len(self.pmf)), self.pmf))

    def __call__(self, n: int) -> float:
        if 0 <= n < len(self.pmf):
            return float(self.pmf[n])
        return 0.0


def _convolution_power(p: np.ndarray, L: int, n_max: int) -> np.ndarray:
    """L-fold self-convolution of ``p`` truncated to indices 0..n_max."""
    result = np.zeros(n_max + 1)
    result[0] = 1.0
    base = p[: n_max + 1].copy()
    while L:
        if L & 1:
            result = np.convolve(result, base)[: n_max + 1]
        L >>= 1
        if L:
            base = np.convolve(base, base)[: n_max + 1]
    return result


def _n_max_cap(model: ArrivalModel, L: int) -> int:
    return int(10 * L * model.mean + 50)


def default_n_max(model: ArrivalModel, L: int) -> int:
    """Smallest n whose frame-arrival tail mass is below 1e-12, capped at 10*lambda + 50."""
    cap = _n_max_cap(model, L)
    if model.support_max is not None:
        return min(cap, L * model.support_max)
    lam = L * model.mean
    if model.family == "poisson":
        n = int(poisson.isf(TAIL_TARGET, lam)) if lam > 0 else 0
        while n > 0 and poisson.sf(n - 1, lam) < TAIL_TARGET:
            n -= 1
        while poisson.sf(n, lam) >= TAIL_TARGET and n < cap:
            n += 1
        return min(n, cap)
    pmf = _convolution_power(model.per_slot_pmf(cap), L, cap)
    tail = 1.0 - np.cumsum(pmf)
    below = np.nonzero(tail < TAIL_TARGET)[0]
    return int(below[0]) if len(below) else cap


@lru_cache(maxsize=4096)
def _frame_pmf_cached(model: ArrivalModel, L: int, n_max: int, crosscheck: bool) -> FrameArrivalPmf:
    lam = L * model.mean
    if model.family == "poisson":
        pmf = poisson.pmf(np.arange(n_max + 1), lam)
        tail = float(poisson.sf(n_max, lam))
        diff = None
        if crosscheck:
            conv = _convolution_power(model.per_slot_pmf(n_max), L, n_max)
            diff = float(np.max(np.abs(conv - pmf)))
            if diff > 1e-10:
                raise ArithmeticError(
                    f"Poisson closed form and convolution disagree by {diff:.3e} (L={L}, n_max={n_max})"
                )
        return FrameArrivalPmf(L, pmf, tail, lam, "poisson-closed-form", diff)
    pmf = _convolution_power(model.per_slot_pmf(n_max), L, n_max)
    tail = max(0.0, 1.0 - math.fsum(pmf))
    return FrameArrivalPmf(L, pmf, tail, lam, "convolution")


def frame_arrival_pmf(
    model: ArrivalModel, L: int, n_max: int | None = None, crosscheck: bool = True
) -> FrameArrivalPmf:
    """Per-frame arrival pmf lambda_n for n = 0..n_max.

    Poisson uses the closed form (a sum of iid Poisson variables is Poisson)
    and, when ``crosscheck`` is set, verifies it against the convolution.
    """
    if int(L) != L or L < 1:
        raise ValueError(f"frame length must be a positive integer, got {L!r}")
    if n_max is None:
        n_max = default_n_max(model, L)
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    return _frame_pmf_cached(model, int(L), int(n_max), crosscheck)


def poisson_tail_bound(mu: float, x: float) -> float:
    """Chernoff-type bound P[X <= x] <= e^{-mu} (e mu)^x / x^x for X ~ Poisson(mu), x < mu."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    if x >= mu:
        raise ValueError(f"bound only holds for x < mu (got x={x}, mu={mu})")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return math.exp(-mu)
    return math.exp(-mu + x * (1.0 + math.log(mu)) - x * math.log(x))


def sample_frame_arrivals(model: ArrivalModel, L: int, rng: np.random.Generator) -> int:
    """Draw the frame total N of L iid per-slot arrival counts.

    Poisson and Bernoulli totals are drawn directly as Poisson(L * Lambda)
    and Binomial(L, p), which have the same law as the sum of L draws.
    """
    fam = model.family
    if fam == "poisson":
        return int(rng.poisson(L * model.params[0]))
    if fam == "bernoulli":
        return int(rng.binomial(L, model.params[0]))
    if fam == "geometric":
        m = model.params[0]
        if m == 0:
            return 0
        return int((rng.geometric(1.0 / (1.0 + m), size=L) - 1).sum())
    p = np.asarray(model.params)
    if len(p) == 1:
        return 0
    return int(rng.choice(len(p), size=L, p=p / p.sum()).sum())


def load_custom_pmf(path: str | Path) -> ArrivalModel:
    """Read a two-column CSV of (k, probability) into a custom arrival model.

    A header row is allowed.  Missing k values get probability zero.  Input
    whose total differs from 1 by more than 1e-9 is rejected; smaller
    deviations are divided out.
    """
    entries: dict[int, float] = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                k = float(row[0])
                prob = float(row[1])
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: non-numeric entry {row!r}") from None
            if k != int(k) or k < 0:
                raise ValueError(f"{path}:{lineno}: k must be a nonnegative integer, got {row[0]!r}")
            if int(k) in entries:
                raise ValueError(f"{path}:{lineno}: duplicate k={int(k)}")
            entries[int(k)] = prob
    if not entries:
        raise ValueError(f"{path}: no pmf rows")
    pmf = [0.0] * (max(entries) + 1)
    for k, prob in entries.items():
        if prob < 0:
            raise ValueError(f"{path}: negative probability at k={k}")
        pmf[k] = prob
    total = math.fsum(pmf)
    if abs(total - 1.0) > CSV_NORMALIZATION_TOL:
        raise ValueError(f"{path}: probabilities sum to {total!r}, not 1")
    return ArrivalModel.custom([p / total for p in pmf])
