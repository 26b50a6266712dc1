"""Occupancy combinatorics for h packets thrown uniformly into L slots.

The number of successful packets in a frame is computed by splitting the
slots into "good" slots (occupancy 1..M, every packet decoded) and "bad"
slots (empty, or more than M packets).  Counting labelled assignments for
each side reduces to associated Stirling numbers, which obey recurrences
with nonnegative terms only.  The same decomposition runs either in exact
integer arithmetic or in the log domain, so neither path suffers from the
cancellation of an inclusion-exclusion sum.

For SPR the classical inclusion-exclusion form (count of assignments with
no singleton slot) is also available; it is evaluated in Python integers,
which makes the alternating sum exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import binom

from .errors import NumericalOverflowError, StateSpaceTooLarge

__all__ = [
    "EXACT_LIMIT",
    "BRUTE_FORCE_CAP",
    "SuccessLaw",
    "OccupancyPmf",
    "SuccessDistribution",
    "PoissonOccupancyApprox",
    "occupancy_pmf",
    "xi",
    "xi_spr",
    "xi_mpr",
    "expected_successes",
    "poisson_occupancy",
    "xi_upper_bound",
    "brute_force_xi",
]

# Exact rational arithmetic is used when both h and L are at most this.
EXACT_LIMIT = 64
BRUTE_FORCE_CAP = 10**7
# Upper bound on (pair, term) evaluations in the log-domain MPR path.
MPR_WORK_CAP = 5 * 10**8

_CHUNK_ELEMS = 1 << 22


@dataclass(frozen=True)
class SuccessLaw:
    """Reception model.

    ``SPR`` decodes a slot only if it holds exactly one packet.  ``MPR``
    decodes every packet of a slot holding between 1 and ``M`` packets.
    SPR is MPR with ``M = 1``.
    """

    variant: str = "SPR"
    M: int = 1

    def __post_init__(self) -> None:
        if self.variant not in ("SPR", "MPR"):
            raise ValueError(f"unknown reception variant {self.variant!r}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"reception capacity must be a positive integer, got {self.M!r}")
        if self.variant == "SPR" and self.M != 1:
            raise ValueError("SPR has capacity M = 1 by definition")

    @classmethod
    def spr(cls) -> "SuccessLaw":
        return cls("SPR", 1)

    @classmethod
    def mpr(cls, M: int) -> "SuccessLaw":
        return cls("MPR", int(M))

    @property
    def capacity(self) -> int:
        return self.M

    def __str__(self) -> str:
        return "SPR" if self.variant == "SPR" else f"MPR(M={self.M})"


@dataclass(frozen=True, eq=False)
class OccupancyPmf:
    """Distribution of the number of packets landing in one given slot."""

    h: int
    L: int
    pmf: np.ndarray

    def __call__(self, x: int) -> float:
        if 0 <= x <= self.h:
            return float(self.pmf[x])
        return 0.0

    def b(self, x: int) -> float:
        """Expected number of slots holding exactly ``x`` packets."""
        return self.L * self(x)


@dataclass(frozen=True, eq=False)
class SuccessDistribution:
    """Probability of exactly k successful packets, k = 0..len(xi)-1.

    ``method`` records which computation produced the vector.  ``exact``
    holds the rational values when an exact path ran.
    """

    h: int
    L: int
    law: SuccessLaw
    xi: np.ndarray
    method: str
    exact: tuple[Fraction, ...] | None = None

    def __call__(self, k: int) -> float:
        if 0 <= k < len(self.xi):
            return float(self.xi[k])
        return 0.0

    def __len__(self) -> int:
        return len(self.xi)

    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.xi)), self.xi))

    def total(self) -> float:
        return float(self.xi.sum())


@dataclass(frozen=True, eq=False)
class PoissonOccupancyApprox:
    """Poisson approximation for the number of slots holding j packets.

    Only meaningful asymptotically, when h and L grow with every rho_j of
    interest bounded; no error certificate is attached.
    """

    h: int
    L: int
    rho: np.ndarray

    def pmf(self, j: int, m: int) -> float:
        """Approximate probability that exactly ``m`` slots hold ``j`` packets."""
        r = float(self.rho[j])
        if m < 0:
            return 0.0
        if r == 0.0:
            return 1.0 if m == 0 else 0.0
        return math.exp(-r + m * math.log(r) - math.lgamma(m + 1))

    def xi_spr(self, k: int) -> float:
        """SPR success-count approximation: singleton slots are Poisson(rho_1)."""
        return self.pmf(1, k)


def _check_frame(h: int, L: int) -> None:
    if int(h) != h or h < 0:
        raise ValueError(f"packet count must be a nonnegative integer, got {h!r}")
    if int(L) != L or L < 1:
        raise ValueError(f"frame length must be a positive integer, got {L!r}")


def occupancy_pmf(h: int, L: int) -> OccupancyPmf:
    """Binomial(h, 1/L) pmf of the occupancy of a single slot."""
    _check_frame(h, L)
    x = np.arange(h + 1)
    return OccupancyPmf(h, L, binom.pmf(x, h, 1.0 / L))


def _max_successes(h: int, L: int, M: int) -> int:
    return min(h, L * M)


# ---------------------------------------------------------------------------
# exact integer counts


def _no_singleton_count(V: int, u: int) -> int:
    """Assignments of u labelled packets to V slots with no slot holding exactly one."""
    total = V**u
    falling_u = 1
    falling_v = 1
    for t in range(1, min(u, V) + 1):
        falling_u *= u - t + 1
        falling_v *= V - t + 1
        term = falling_u * falling_v // math.factorial(t) * (V - t) ** (u - t)
        total += -term if t % 2 else term
    return total


def _spr_counts(h: int, L: int) -> list[int]:
    kmax = min(h, L)
    counts = []
    for k in range(kmax + 1):
        if k == L and L < h:
            counts.append(0)
            continue
        counts.append(
            math.comb(L, k) * math.comb(h, k) * math.factorial(k) * _no_singleton_count(L - k, h - k)
        )
    return counts


@lru_cache(maxsize=64)
def _small_blocks_int(n: int, M: int) -> tuple[tuple[int, ...], ...]:
    """Set partitions of k items into j blocks of size 1..M, for k <= n."""
    table = [[0] * (n + 1) for _ in range(n + 1)]
    table[0][0] = 1
    for k in range(1, n + 1):
        row = table[k]
        for x in range(1, min(M, k) + 1):
            c = math.comb(k - 1, x - 1)
            prev = table[k - x]
            for j in range(1, k + 1):
                if prev[j - 1]:
                    row[j] += c * prev[j - 1]
    return tuple(tuple(r) for r in table)


@lru_cache(maxsize=64)
def _large_blocks_int(n: int, r: int) -> tuple[tuple[int, ...], ...]:
    """Set partitions of u items into i blocks of size >= r, for u <= n."""
    imax = n // r
    table = [[0] * (imax + 1) for _ in range(n + 1)]
    table[0][0] = 1
    for u in range(1, n + 1):
        c = math.comb(u - 1, r - 1)
        for i in range(1, min(imax, u // r) + 1):
            v = i * table[u - 1][i]
            if u >= r:
                v += c * table[u - r][i - 1]
            table[u][i] = v
    return tuple(tuple(row) for row in table)


def _mpr_counts(h: int, L: int, M: int) -> list[int]:
    small = _small_blocks_int(h, M)
    large = _large_blocks_int(h, M + 1)
    bad_cache: dict[tuple[int, int], int] = {}

    def bad(m: int, u: int) -> int:
        # slots that are empty or overloaded
        key = (m, u)
        if key not in bad_cache:
            row = large[u]
            bad_cache[key] = sum(
                math.comb(m, i) * math.factorial(i) * row[i]
                for i in range(min(m, len(row) - 1) + 1)
                if row[i]
            )
        return bad_cache[key]

    counts = []
    for k in range(_max_successes(h, L, M) + 1):
        acc = 0
        for j in range(-(-k // M), min(k, L) + 1):
            g = small[k][j]
            if g:
                acc += math.comb(L, j) * math.factorial(j) * g * bad(L - j, h - k)
        counts.append(math.comb(h, k) * acc)
    return counts


def _from_counts(h: int, L: int, law: SuccessLaw, counts: list[int]) -> SuccessDistribution:
    total = L**h
    if sum(counts) != total:
        raise ArithmeticError(f"exact success counts for h={h}, L={L} do not sum to L**h")
    exact = tuple(Fraction(c, total) for c in counts)
    xi = np.array([float(f) for f in exact])
    return SuccessDistribution(h, L, law, xi, "exact-rational", exact)


# ---------------------------------------------------------------------------
# log-domain tables

_LOG_TABLES: dict[tuple[str, int], np.ndarray] = {}


def _log_small_blocks(n: int, jmax: int, M: int) -> np.ndarray:
    key = ("small", M)
    tab = _LOG_TABLES.get(key)
    if tab is None or tab.shape[0] <= n or tab.shape[1] <= jmax:
        n_new = max(n, 2 * (tab.shape[0] - 1) if tab is not None else 0)
        j_new = min(n_new, max(jmax, 2 * (tab.shape[1] - 1) if tab is not None else 0))
        tab = np.full((n_new + 1, j_new + 1), -np.inf)
        tab[0, 0] = 0.0
        for k in range(1, n_new + 1):
            parts = []
            for x in range(1, min(M, k) + 1):
                c = gammaln(k) - gammaln(x) - gammaln(k - x + 1)
                shifted = np.full(j_new + 1, -np.inf)
                shifted[1:] = tab[k - x, :-1] + c
                parts.append(shifted)
            with np.errstate(invalid="ignore"):
                tab[k] = logsumexp(np.vstack(parts), axis=0)
        _LOG_TABLES[key] = tab
    return tab


def _log_large_blocks(n: int, imax: int, r: int) -> np.ndarray:
    key = ("large", r)
    tab = _LOG_TABLES.get(key)
    if tab is None or tab.shape[0] <= n or tab.shape[1] <= imax:
        n_new = max(n, 2 * (tab.shape[0] - 1) if tab is not None else 0)
        i_new = min(n_new // r, max(imax, 2 * (tab.shape[1] - 1) if tab is not None else 0))
        tab = np.full((n_new + 1, i_new + 1), -np.inf)
        tab[0, 0] = 0.0
        log_i = np.log(np.arange(1, i_new + 1))
        for u in range(1, n_new + 1):
            grow = np.full(i_new + 1, -np.inf)
            grow[1:] = log_i + tab[u - 1, 1:]
            if u >= r:
                c = gammaln(u) - gammaln(r) - gammaln(u - r + 1)
                fresh = np.full(i_new + 1, -np.inf)
                fresh[1:] = tab[u - r, :-1] + c
                tab[u] = np.logaddexp(grow, fresh)
            else:
                tab[u] = grow
        _LOG_TABLES[key] = tab
    return tab


def _log_comb(n, k):
    return gammaln(np.asarray(n) + 1.0) - gammaln(np.asarray(k) + 1.0) - gammaln(np.asarray(n) - np.asarray(k) + 1.0)


def _log_bad(m: np.ndarray, u: np.ndarray, large: np.ndarray, r: int) -> np.ndarray:
    """log of the number of ways u packets fill m slots with each slot empty or overloaded."""
    imax = min(int(m.max(initial=0)), int(u.max(initial=0)) // r, large.shape[1] - 1)
    out = np.empty(len(m))
    i = np.arange(imax + 1)
    step = max(1, _CHUNK_ELEMS // (imax + 1))
    for s in range(0, len(m), step):
        mm = m[s : s + step, None]
        uu = u[s : s + step, None]
        valid = (i[None, :] <= mm) & (i[None, :] * r <= uu)
        with np.errstate(invalid="ignore"):
            terms = np.where(
                valid,
                _log_comb(np.maximum(mm, i), np.minimum(i, mm)) + gammaln(i + 1.0) + large[uu, i[None, :]],
                -np.inf,
            )
            out[s : s + step] = logsumexp(terms, axis=1)
    return out


def _xi_log(h: int, L: int, M: int) -> np.ndarray:
    kmax = _max_successes(h, L, M)
    r = M + 1
    jmax = min(kmax, L)
    if M == 1:
        ks = np.arange(kmax + 1)
        js = ks.copy()
    else:
        kk, jj = np.meshgrid(np.arange(kmax + 1), np.arange(jmax + 1), indexing="ij")
        ok = (jj <= kk) & (kk <= jj * M)
        ks, js = kk[ok], jj[ok]
    imax = min(L, h // r)
    work = len(ks) * (imax + 1)
    if work > MPR_WORK_CAP:
        raise StateSpaceTooLarge(
            f"success distribution for h={h}, L={L}, M={M} needs ~{work:.2e} terms; "
            "use the Poisson occupancy approximation instead"
        )
    large = _log_large_blocks(h, imax, r)
    log_bad = _log_bad(L - js, h - ks, large, r)
    if M == 1:
        log_good = gammaln(ks + 1.0)
    else:
        small = _log_small_blocks(kmax, jmax, M)
        log_good = gammaln(js + 1.0) + small[ks, js]
    terms = _log_comb(L, js) + _log_comb(h, ks) + log_good + log_bad - h * math.log(L)
    if M == 1:
        log_xi = terms
    else:
        grid = np.full((kmax + 1, jmax + 1), -np.inf)
        grid[ks, js] = terms
        with np.errstate(invalid="ignore"):
            log_xi = logsumexp(grid, axis=1)
    if not np.all(np.isfinite(log_xi) | (log_xi == -np.inf)) or np.max(log_xi) > 1.0:
        raise NumericalOverflowError(f"non-finite success probability for h={h}, L={L}, M={M}")
    # Log magnitudes reach ~h log h, so each term carries ~h*eps relative
    # error; the total is known to be exactly 1 and is divided out.
    xi = np.exp(log_xi - log_xi.max())
    return xi / xi.sum()


# ---------------------------------------------------------------------------
# public operations


def _use_exact(h: int, L: int, method: str) -> bool:
    if method == "auto":
        return h <= EXACT_LIMIT and L <= EXACT_LIMIT
    if method == "exact":
        return True
    if method == "float":
        return False
    raise ValueError(f"unknown method {method!r}; expected 'auto', 'exact' or 'float'")


@lru_cache(maxsize=8192)
def _xi_cached(h: int, L: int, M: int, variant: str, exact: bool) -> SuccessDistribution:
    law = SuccessLaw(variant, M)
    if h == 0:
        return SuccessDistribution(0, L, law, np.ones(1), "trivial", (Fraction(1),))
    if exact:
        counts = _spr_counts(h, L) if variant == "SPR" else _mpr_counts(h, L, M)
        return _from_counts(h, L, law, counts)
    return SuccessDistribution(h, L, law, _xi_log(h, L, M), "log-recurrence")


def xi_spr(h: int, L: int, method: str = "auto") -> SuccessDistribution:
    """Distribution of the number of singleton slots when h packets pick among L slots.

    With ``method="auto"`` the exact rational path runs for h, L <= 64 and
    the log-domain recurrence otherwise.  For ``h = 0`` the distribution is
    the point mass at zero.
    """
    _check_frame(h, L)
    return _xi_cached(int(h), int(L), 1, "SPR", _use_exact(h, L, method))


def xi_mpr(h: int, L: int, M: int, method: str = "auto") -> SuccessDistribution:
    """Distribution of the number of decoded packets under MPR with capacity ``M``.

    A packet is decoded iff its slot holds between 1 and ``M`` packets.
    Raises :class:`StateSpaceTooLarge` when the log-domain path would exceed
    ``MPR_WORK_CAP`` term evaluations.
    """
    _check_frame(h, L)
    law = SuccessLaw.mpr(M)
    return _xi_cached(int(h), int(L), law.M, "MPR", _use_exact(h, L, method))


def xi(h: int, L: int, law: SuccessLaw, method: str = "auto") -> SuccessDistribution:
    if law.variant == "SPR":
        return xi_spr(h, L, method)
    return xi_mpr(h, L, law.M, method)


def expected_successes(h: int, L: int, law: SuccessLaw) -> float:
    """Mean number of decoded packets in a frame, in closed form.

    SPR: ``h (1 - 1/L)**(h-1)``.  MPR: ``L * sum_{x=1..M} x * Binom(h, 1/L)(x)``.
    """
    _check_frame(h, L)
    if h == 0:
        return 0.0
    if law.variant == "SPR":
        return h * (1.0 - 1.0 / L) ** (h - 1)
    x = np.arange(1, min(law.M, h) + 1)
    return float(L * np.dot(x, binom.pmf(x, h, 1.0 / L)))


def expected_successes_exact(h: int, L: int, law: SuccessLaw) -> Fraction:
    """Rational value of :func:`expected_successes`."""
    _check_frame(h, L)
    q = Fraction(L - 1, L)
    p = Fraction(1, L)
    return L * sum(
        (x * math.comb(h, x) * p**x * q ** (h - x) for x in range(1, min(law.M, h) + 1)),
        Fraction(0),
    )


def poisson_occupancy(h: int, L: int, j_max: int) -> PoissonOccupancyApprox:
    """rho_j = L e^{-h/L} (h/L)^j / j! for j = 0..j_max."""
    _check_frame(h, L)
    if j_max < 1:
        raise ValueError("j_max must be at least 1")
    a = h / L
    j = np.arange(j_max + 1)
    if a == 0:
        rho = np.where(j == 0, float(L), 0.0)
    else:
        rho = np.exp(math.log(L) - a + j * math.log(a) - gammaln(j + 1.0))
    return PoissonOccupancyApprox(h, L, rho)


def xi_upper_bound(h: int, L: int, k: int) -> float:
    """Upper bound on the SPR probability of exactly k successes.

    ``(1 - (k/2)/L)**(k/2)`` for k below min(h, L) and ``(1 - (h/2)/L)**(h/2)``
    for k = h <= L.  The k = L < h case has zero probability; the first form
    is returned there too.  A single packet always succeeds, so h = k = 1
    returns 1 (the second form would fall below the exact value there).
    """
    _check_frame(h, L)
    if k < 0 or k > min(h, L):
        raise ValueError(f"k={k} outside 0..min(h, L)={min(h, L)}")
    if h == 1 and k == 1:
        return 1.0
    if k == h and h <= L:
        return (1.0 - (h / 2) / L) ** (h / 2)
    return (1.0 - (k / 2) / L) ** (k / 2)


def brute_force_xi(h: int, L: int, law: SuccessLaw, cap: int = BRUTE_FORCE_CAP) -> SuccessDistribution:
    """Enumerate all L**h equiprobable slot assignments and count successes.

    Assignments are decoded from their base-L index in contiguous chunks;
    the result does not depend on chunking.
    """
    _check_frame(h, L)
    total = L**h
    if total > cap:
        raise StateSpaceTooLarge(f"brute force needs L**h = {total} assignments, cap is {cap}")
    M = law.M
    kmax = _max_successes(h, L, M)
    counts = np.zeros(kmax + 1, dtype=np.int64)
    chunk = max(1, _CHUNK_ELEMS // max(L, 1) // 4)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        rows = np.arange(len(idx))
        occ = np.zeros((len(idx), L), dtype=np.int32)
        for _ in range(h):
            occ[rows, idx % L] += 1
            idx //= L
        succ = np.where(occ <= M, occ, 0).sum(axis=1)
        counts += np.bincount(succ, minlength=kmax + 1)
    exact = tuple(Fraction(int(c), total) for c in counts)
    xi_vec = np.array([float(f) for f in exact])
    return SuccessDistribution(h, L, law, xi_vec, "brute-force", exact)
