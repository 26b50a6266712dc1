"""Seeded Monte Carlo simulation of frame slotted Aloha backlog dynamics.

Each frame, every backlogged packet picks a slot uniformly at random; a
packet is decoded iff its slot holds at most M backlogged packets (M = 1
for SPR).  Packets arriving during the frame join the backlog for the next
one.  Runs use numpy's Philox counter-based generator keyed by the seed,
and replicate r of a batch uses key ``seed + r``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .arrivals import ArrivalModel, sample_frame_arrivals
from .chain import FramePolicy
from .occupancy import SuccessDistribution, SuccessLaw, expected_successes, xi

__all__ = [
    "GENERATOR",
    "SimConfig",
    "SimulationTrace",
    "TraceStats",
    "EmpiricalXi",
    "ReplicateResult",
    "make_rng",
    "simulate",
    "trace_stats",
    "empirical_xi",
    "replicate",
    "trace_to_csv",
    "summary_to_json",
]

GENERATOR = "numpy.random.Philox"


def make_rng(seed: int) -> np.random.Generator:
    """Philox generator keyed by a 64-bit seed."""
    if int(seed) != seed or seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SimConfig:
    policy: FramePolicy
    model: ArrivalModel
    law: SuccessLaw
    frames: int
    seed: int = 0
    initial_backlog: int = 0
    abort_backlog: int = 10**6

    def __post_init__(self) -> None:
        if int(self.frames) != self.frames or self.frames < 1:
            raise ValueError("frames must be a positive integer")
        if self.initial_backlog < 0:
            raise ValueError("initial_backlog must be nonnegative")
        if self.abort_backlog <= self.initial_backlog:
            raise ValueError("abort_backlog must exceed initial_backlog")

    def with_seed(self, seed: int) -> "SimConfig":
        return SimConfig(
            self.policy, self.model, self.law, self.frames, seed, self.initial_backlog, self.abort_backlog
        )


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    """Per-frame records; frame i starts with ``backlog[i]`` packets.

    ``backlog`` has one more entry than the other arrays: the state after
    the last simulated frame.
    """

    config: SimConfig
    backlog: np.ndarray
    frame_length: np.ndarray
    arrivals: np.ndarray
    successes: np.ndarray
    status: str
    generator: str = GENERATOR

    @property
    def frames_run(self) -> int:
        return len(self.successes)

    @property
    def aborted(self) -> bool:
        return self.status == "AbortedAtCap"


def simulate(cfg: SimConfig) -> SimulationTrace:
    """Run the frame recursion X_{i+1} = X_i + N_i - C_i."""
    rng = make_rng(cfg.seed)
    n = cfg.frames
    X = np.empty(n + 1, dtype=np.int64)
    Ls = np.empty(n, dtype=np.int64)
    N = np.empty(n, dtype=np.int64)
    C = np.empty(n, dtype=np.int64)
    M = cfg.law.M
    policy, model, cap = cfg.policy, cfg.model, cfg.abort_backlog
    x = cfg.initial_backlog
    X[0] = x
    status = "Completed"
    for i in range(n):
        L = policy(x)
        if x:
            occ = np.bincount(rng.integers(0, L, size=x), minlength=L)
            c = int(occ[occ <= M].sum())
        else:
            c = 0
        arr = sample_frame_arrivals(model, L, rng)
        Ls[i], N[i], C[i] = L, arr, c
        x = x + arr - c
        X[i + 1] = x
        if x >= cap:
            status = "AbortedAtCap"
            n = i + 1
            break
    return SimulationTrace(cfg, X[: n + 1], Ls[:n], N[:n], C[:n], status)


@dataclass(frozen=True, eq=False)
class TraceStats:
    """Summary of a trace; slope and quantiles use the second half of the frames."""

    frames_run: int
    status: str
    slope: float
    returns_to_zero: int
    max_backlog: int
    quantiles: dict
    success_h: np.ndarray = field(repr=False)
    success_count: np.ndarray = field(repr=False)
    success_mean: np.ndarray = field(repr=False)
    success_expected: np.ndarray = field(repr=False)


QUANTILES = (0.5, 0.9, 0.99)


def _ols_slope(y: np.ndarray) -> float:
    n = len(y)
    if n < 2:
        return 0.0
    t = np.arange(n, dtype=float)
    t -= t.mean()
    return float(np.dot(t, y - y.mean()) / np.dot(t, t))


def trace_stats(trace: SimulationTrace, window: float = 0.5, min_visits: int = 1) -> TraceStats:
    """Growth slope, recurrence counts, backlog quantiles and per-h success rates.

    ``window`` is the fraction of frames, counted from the end, used for
    the slope and quantiles.  Per-h success rates are reported for backlog
    values visited at least ``min_visits`` times next to the exact mean.
    """
    if trace.frames_run == 0:
        raise ValueError("empty trace")
    if not 0.0 < window <= 1.0:
        raise ValueError("window must lie in (0, 1]")
    X = trace.backlog[:-1]
    start = len(X) - max(1, int(round(window * len(X))))
    tail = X[start:].astype(float)
    slope = _ols_slope(tail)
    rtz = int(np.count_nonzero(X[1:] == 0))
    q = {p: float(v) for p, v in zip(QUANTILES, np.quantile(tail, QUANTILES))}

    hs, inverse, counts = np.unique(X, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=trace.successes, minlength=len(hs))
    keep = counts >= min_visits
    hs, counts, means = hs[keep], counts[keep], sums[keep] / counts[keep]
    policy, law = trace.config.policy, trace.config.law
    expected = np.array([expected_successes(int(h), policy(int(h)), law) for h in hs])
    return TraceStats(
        trace.frames_run,
        trace.status,
        slope,
        rtz,
        int(trace.backlog.max()),
        q,
        hs,
        counts,
        means,
        expected,
    )


@dataclass(frozen=True, eq=False)
class EmpiricalXi:
    distribution: SuccessDistribution
    exact: SuccessDistribution
    tv_distance: float
    trials: int


def empirical_xi(h: int, L: int, law: SuccessLaw, trials: int, seed: int = 0) -> EmpiricalXi:
    """Success-count histogram over independent single frames, with TV distance to the exact law."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    exact = xi(h, L, law)
    kmax = len(exact) - 1
    counts = np.zeros(kmax + 1, dtype=np.int64)
    if h == 0:
        counts[0] = trials
    else:
        rng = make_rng(seed)
        M = law.M
        batch = max(1, (1 << 22) // max(h, L))
        done = 0
        while done < trials:
            b = min(batch, trials - done)
            slots = rng.integers(0, L, size=(b, h))
            flat = (slots + L * np.arange(b)[:, None]).ravel()
            occ = np.bincount(flat, minlength=b * L).reshape(b, L)
            succ = np.where(occ <= M, occ, 0).sum(axis=1)
            counts += np.bincount(succ, minlength=kmax + 1)
            done += b
    emp = counts / trials
    tv = 0.5 * float(np.abs(emp - exact.xi).sum())
    dist = SuccessDistribution(h, L, law, emp, "empirical")
    return EmpiricalXi(dist, exact, tv, trials)


@dataclass(frozen=True, eq=False)
class ReplicateResult:
    """Ordered per-run stats for seeds seed+0 .. seed+n_runs-1."""

    config: SimConfig
    stats: tuple[TraceStats, ...]
    traces: tuple[SimulationTrace, ...] | None

    @property
    def n_runs(self) -> int:
        return len(self.stats)

    @property
    def aborted(self) -> int:
        return sum(s.status == "AbortedAtCap" for s in self.stats)

    @property
    def slopes(self) -> np.ndarray:
        return np.array([s.slope for s in self.stats])

    def mean_ci(self, attr: str = "slope", z: float = 1.96) -> tuple[float, float, float]:
        """Mean of a TraceStats attribute with a normal-approximation confidence interval."""
        v = np.array([float(getattr(s, attr)) for s in self.stats])
        m = float(v.mean())
        if len(v) < 2:
            return m, m, m
        half = z * float(v.std(ddof=1)) / math.sqrt(len(v))
        return m, m - half, m + half


def replicate(
    cfg: SimConfig, n_runs: int, threads: int = 1, keep_traces: bool = False
) -> ReplicateResult:
    """Run ``n_runs`` independent simulations; results do not depend on ``threads``."""
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")

    def one(r: int):
        trace = simulate(cfg.with_seed(cfg.seed + r))
        return trace, trace_stats(trace)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, range(n_runs)))
    else:
        out = [one(r) for r in range(n_runs)]
    traces = tuple(t for t, _ in out) if keep_traces else None
    return ReplicateResult(cfg, tuple(s for _, s in out), traces)


def trace_to_csv(trace: SimulationTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame", "backlog", "L", "arrivals", "successes"])
    for i in range(trace.frames_run):
        w.writerow([i, int(trace.backlog[i]), int(trace.frame_length[i]), int(trace.arrivals[i]), int(trace.successes[i])])
    return buf.getvalue()


def _config_echo(cfg: SimConfig) -> dict:
    return {
        "policy": cfg.policy.describe(),
        "arrivals": cfg.model.describe(),
        "law": str(cfg.law),
        "frames": cfg.frames,
        "seed": cfg.seed,
        "initial_backlog": cfg.initial_backlog,
        "abort_backlog": cfg.abort_backlog,
        "generator": GENERATOR,
    }


def _stats_dict(s: TraceStats) -> dict:
    return {
        "frames_run": s.frames_run,
        "status": s.status,
        "slope": float(f"{s.slope:.12g}"),
        "returns_to_zero": s.returns_to_zero,
        "max_backlog": s.max_backlog,
        "quantiles": {f"{p:g}": float(f"{v:.12g}") for p, v in s.quantiles.items()},
    }


def summary_to_json(result: ReplicateResult) -> str:
    """Config echo plus per-run and aggregate statistics."""
    m, lo, hi = result.mean_ci("slope")
    doc = {
        "config": _config_echo(result.config),
        "runs": [dict(run=r, seed=result.config.seed + r, **_stats_dict(s)) for r, s in enumerate(result.stats)],
        "aggregate": {
            "n_runs": result.n_runs,
            "aborted": result.aborted,
            "slope_mean": float(f"{m:.12g}"),
            "slope_ci95": [float(f"{lo:.12g}"), float(f"{hi:.12g}")],
        },
    }
    return json.dumps(doc, indent=2)
