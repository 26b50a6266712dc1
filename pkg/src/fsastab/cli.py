"""Command-line front end.

Every subcommand writes one table (CSV) or document (JSON) to standard
output, to ``--output``, or to ``$FSASTAB_OUTPUT_DIR/<subcommand>.<ext>``
when that variable is set and no ``--output`` is given.  Floats use 12
significant digits so identical invocations produce identical bytes.

Exit codes: 0 success, 1 computation error, 2 usage error.  Error lines on
standard error start with ``fsastab: error[usage]:`` or
``fsastab: error[computation]:``.

Usage:
    fsastab xi --law spr --h 3 --L 2
    fsastab alpha-star --law mpr --M 3
    fsastab region --law mpr --M 3 --alpha-grid 0.1:5:0.1
    fsastab simulate --alpha 1 --lambda 0.25 --frames 100000 --runs 20
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .arrivals import ArrivalModel, load_custom_pmf
from .chain import (
    FramePolicy,
    build_truncated_chain,
    chain_to_csv,
    chain_to_json,
    drift_profile,
    drift_sign_threshold,
    stationary_distribution,
)
from .errors import FsaError
from .occupancy import SuccessLaw, brute_force_xi, xi
from .sim import SimConfig, replicate, simulate, summary_to_json, trace_to_csv
from .stability import RegimeSpec, alpha_star, classify, region_table, transience_sequence_test
from .validation import CHECKS, run_checks

__all__ = ["main", "run", "build_parser"]

OUTPUT_DIR_ENV = "FSASTAB_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def jnum(x):
    """JSON-ready value: floats rounded to 12 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.12g}")
    return x


def csv_table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def json_doc(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:step`` inclusive of stop, or a comma-separated list."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return np.round(start + step * np.arange(n), 12)
        return np.array([float(p) for p in text.split(",")])
    except ValueError:
        raise UsageError(f"bad grid {text!r}; expected start:stop:step or a comma list") from None


def parse_int_range(text: str) -> range:
    """``a:b`` or ``a:b:step``, inclusive of b."""
    try:
        parts = [int(p) for p in text.split(":")]
    except ValueError:
        raise UsageError(f"bad range {text!r}") from None
    if len(parts) == 2:
        parts.append(1)
    if len(parts) != 3 or parts[2] < 1 or parts[1] < parts[0] or parts[0] < 0:
        raise UsageError(f"bad range {text!r}; expected a:b or a:b:step with 0 <= a <= b")
    return range(parts[0], parts[1] + 1, parts[2])


def parse_policy(text: str) -> FramePolicy:
    kind, _, rest = text.partition(":")
    args = [a for a in rest.split(":") if a] if rest else []
    try:
        if kind == "fixed" and len(args) == 1:
            return FramePolicy.fixed(int(args[0]))
        if kind == "proportional" and len(args) == 1:
            return FramePolicy.proportional(float(args[0]))
        if kind == "sublinear" and len(args) in (1, 2):
            return FramePolicy.sublinear(*(float(a) for a in args))
        if kind == "superlinear" and len(args) <= 1:
            return FramePolicy.superlinear(*args)
    except ValueError as exc:
        raise UsageError(f"bad policy {text!r}: {exc}") from None
    raise UsageError(
        f"bad policy {text!r}; expected fixed:L, proportional:alpha, "
        "sublinear:eps[:scale] or superlinear:quadratic|hlogh"
    )


# ---------------------------------------------------------------------------
# argument resolution


def law_from(args) -> SuccessLaw:
    if args.law == "spr":
        if args.M not in (None, 1):
            raise UsageError("--M applies to --law mpr only")
        return SuccessLaw.spr()
    if args.M is None:
        raise UsageError("--law mpr needs --M")
    if args.M < 1:
        raise UsageError("--M must be at least 1")
    return SuccessLaw.mpr(args.M)


def policy_from(args, required: bool = True) -> FramePolicy | None:
    try:
        if args.L is not None:
            return FramePolicy.fixed(args.L)
        if args.alpha is not None:
            return FramePolicy.proportional(args.alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.policy is not None:
        return parse_policy(args.policy)
    if required:
        raise UsageError("one of --L, --alpha or --policy is required")
    return None


def model_from(args) -> ArrivalModel:
    spec = args.arrivals
    lam = args.rate
    try:
        if spec.startswith("custom:"):
            if lam is not None:
                raise UsageError("--lambda is implied by a custom pmf and must not be given")
            return load_custom_pmf(spec[len("custom:"):])
        if lam is None:
            lam = 0.0
        if spec == "poisson":
            return ArrivalModel.poisson(lam)
        if spec == "bernoulli":
            return ArrivalModel.bernoulli(lam)
        if spec == "geometric":
            return ArrivalModel.geometric(lam)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    raise UsageError(f"unknown arrival model {spec!r}")


# ---------------------------------------------------------------------------
# subcommands; each returns the output text, or (text, exit code)


def cmd_xi(args):
    law = law_from(args)
    L = args.L
    if L is None:
        pol = policy_from(args)
        L = pol(args.h)
    if args.method == "brute":
        dist = brute_force_xi(args.h, L, law)
    else:
        dist = xi(args.h, L, law, args.method)
    if args.out == "json":
        doc = {
            "h": args.h,
            "L": L,
            "law": str(law),
            "method": dist.method,
            "xi": [
                {"k": k, "probability": jnum(p), **({"exact": str(dist.exact[k])} if dist.exact else {})}
                for k, p in enumerate(dist.xi)
            ],
            "mean": jnum(dist.mean()),
        }
        return json_doc(doc)
    return csv_table(["k", "probability"], [(k, p) for k, p in enumerate(dist.xi)])


def cmd_drift(args):
    law, pol, model = law_from(args), policy_from(args), model_from(args)
    hs = parse_int_range(args.h_range)
    prof = drift_profile(pol, model, law, hs, downward=args.downward)
    header = ["h", "L", "alpha", "frame_arrivals_mean", "r_h", "D_h"]
    cols = [prof.h, prof.L, prof.alpha, prof.arrivals_mean, prof.r, prof.D]
    if prof.d_minus is not None:
        header.append("d_minus")
        cols.append(prof.d_minus)
    rows = list(zip(*cols))
    if args.out == "csv":
        return csv_table(header, rows)
    h0, sign = drift_sign_threshold(prof)
    doc = {
        "policy": pol.describe(),
        "arrivals": model.describe(),
        "law": str(law),
        "rows": [dict(zip(header, (jnum(v) for v in r))) for r in rows],
        "sign_threshold": {"h0": h0, "sign": sign},
    }
    spec = RegimeSpec(pol.relation, model.mean, law, pol.params[0] if pol.kind == "proportional" else None)
    v = classify(spec)
    doc["verdict"] = {
        "verdict": v.verdict,
        "condition": v.binding_condition,
        "margin": jnum(v.margin),
        "transience": v.transience,
    }
    return json_doc(doc)


def cmd_region(args):
    law = law_from(args)
    alphas = parse_grid(args.alpha_grid)
    if np.any(alphas <= 0):
        raise UsageError("alpha grid must be positive")
    Ms = [] if law.variant == "SPR" else [law.M]
    header, rows = region_table(alphas, Ms)
    if args.out == "csv":
        return csv_table(header, rows)
    return json_doc({"law": str(law), "rows": [dict(zip(header, map(jnum, r))) for r in rows]})


def cmd_alpha_star(args):
    law = law_from(args)
    a = alpha_star(law.M, args.tol)
    header = ["M", "alpha_star", "phi_star", "bracket_lo", "bracket_hi"]
    row = [a.M, a.alpha, a.phi, a.bracket[0], a.bracket[1]]
    if args.out == "csv":
        return csv_table(header, [row])
    return json_doc(dict(zip(header, map(jnum, row))))


def cmd_chain(args):
    law, pol, model = law_from(args), policy_from(args), model_from(args)
    chain = build_truncated_chain(pol, model, law, args.N_max, threads=args.threads)
    if args.stationary:
        res = stationary_distribution(chain, args.tol, args.max_iter)
        if args.out == "csv":
            return csv_table(["h", "pi"], list(enumerate(res.pi)))
        doc = {
            "converged": res.converged,
            "iterations": res.iterations,
            "residual": jnum(res.residual),
            "boundary_mass": jnum(res.boundary_mass),
            "upper_half_mass": jnum(res.upper_half_mass),
            "boundary_flag": res.boundary_flag,
            "pi": [jnum(p) for p in res.pi],
        }
        return json_doc(doc)
    if args.out == "csv":
        return chain_to_csv(chain)
    return chain_to_json(chain) + "\n"


def cmd_transience(args):
    law, pol, model = law_from(args), policy_from(args), model_from(args)
    hs = parse_int_range(args.h_range) if args.h_range else range(1, args.N_max + 1)
    chain = build_truncated_chain(pol, model, law, args.N_max, threads=args.threads)
    rep = transience_sequence_test(chain, args.theta, hs)
    header = ["h", "slack", "tail_allowance", "status"]
    rows = list(zip(rep.h, rep.slack, rep.tail_allowance, rep.status))
    if args.out == "csv":
        return csv_table(header, rows)
    doc = {
        "theta": rep.theta,
        "holds_from": rep.holds_from,
        "largest_tested": rep.largest_tested,
        "conclusion": rep.conclusion,
        "constants": {k: jnum(v) for k, v in rep.constants.items()},
        "rows": [dict(zip(header, map(jnum, r))) for r in rows],
    }
    return json_doc(doc)


def cmd_simulate(args):
    law, pol, model = law_from(args), policy_from(args), model_from(args)
    try:
        cfg = SimConfig(pol, model, law, args.frames, args.seed, args.initial_backlog, args.abort_backlog)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.trace:
        Path(args.trace).write_text(trace_to_csv(simulate(cfg)))
    res = replicate(cfg, args.runs, threads=args.threads)
    if args.out == "json":
        return summary_to_json(res) + "\n"
    header = ["run", "seed", "status", "frames_run", "slope", "returns_to_zero", "max_backlog", "q50", "q90", "q99"]
    rows = [
        [r, cfg.seed + r, s.status, s.frames_run, s.slope, s.returns_to_zero, s.max_backlog, *s.quantiles.values()]
        for r, s in enumerate(res.stats)
    ]
    return csv_table(header, rows)


def cmd_validate(args):
    results = run_checks(args.check or None)
    failed = [r for r in results if not r.passed]
    if args.out == "json":
        text = json_doc(
            {"passed": not failed, "checks": [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results]}
        )
    else:
        text = csv_table(["check", "result", "detail"], [(r.name, "PASS" if r.passed else "FAIL", r.detail) for r in results])
    return text, (1 if failed else 0)


# ---------------------------------------------------------------------------
# parser


def _common(sub: argparse.ArgumentParser, policy: bool = True, traffic: bool = True) -> None:
    sub.add_argument("--law", choices=("spr", "mpr"), default="spr", help="reception model (default spr)")
    sub.add_argument("--M", type=int, help="MPR capacity: packets decodable in one slot")
    if policy:
        g = sub.add_mutually_exclusive_group()
        g.add_argument("--L", type=int, help="fixed frame length in slots")
        g.add_argument("--alpha", type=float, help="frame length round(h / alpha), i.e. backlog per slot alpha")
        g.add_argument(
            "--policy",
            help="fixed:L, proportional:alpha, sublinear:eps[:scale] or superlinear:quadratic|hlogh",
        )
    if traffic:
        sub.add_argument("--lambda", dest="rate", type=float, help="per-slot arrival mean (default 0)")
        sub.add_argument(
            "--arrivals",
            default="poisson",
            help="poisson | bernoulli | geometric | custom:<csv of k,probability> (default poisson)",
        )
    sub.add_argument("--out", choices=("csv", "json"), default="csv", help="output format (default csv)")
    sub.add_argument("--output", help=f"output file (default: stdout, or ${OUTPUT_DIR_ENV}/<subcommand>.<ext>)")
    sub.add_argument("--threads", type=int, default=1, help="worker threads for sweeps; output does not depend on it")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fsastab", description="Stability analysis of frame slotted Aloha under SPR and MPR.")
    subs = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = subs.add_parser(
        "xi",
        help="distribution of the number of successful packets in one frame",
        description="Probability of exactly k decoded packets when h backlogged packets pick "
        "uniformly among L slots: exact rationals for h, L <= 64, log-domain recurrence above; "
        "'brute' enumerates all L^h assignments.",
    )
    _common(s, traffic=False)
    s.add_argument("--h", type=int, required=True, help="number of transmitting packets")
    s.add_argument("--method", choices=("auto", "exact", "float", "brute"), default="auto")
    s.set_defaults(func=cmd_xi)

    s = subs.add_parser(
        "drift",
        help="expected one-frame backlog change over a range of backlogs",
        description="Drift D_h = L(h) Lambda - r_h, with r_h the mean number of decoded packets; "
        "--downward adds the expectation over backlog-decreasing moves only.  JSON output adds the "
        "backlog beyond which the drift keeps one sign and the stability verdict for the policy.",
    )
    _common(s)
    s.add_argument("--h-range", default="0:100", help="a:b[:step], inclusive (default 0:100)")
    s.add_argument("--downward", action="store_true", help="also compute the downward drift")
    s.set_defaults(func=cmd_drift)

    s = subs.add_parser(
        "region",
        help="stability boundary as a function of alpha",
        description="Largest sustainable per-slot arrival rate for frame length h / alpha: "
        "alpha e^-alpha under SPR and Phi(alpha, M) = sum_{x=1..M} e^-alpha alpha^x / (x-1)! under MPR.",
    )
    _common(s, policy=False, traffic=False)
    s.add_argument("--alpha-grid", default="0.1:5:0.1", help="start:stop:step (inclusive) or comma list")
    s.set_defaults(func=cmd_region)

    s = subs.add_parser(
        "alpha-star",
        help="alpha maximising the stability boundary",
        description="Maximiser of Phi(., M) by golden-section search over [(M-1)/e, M], polished by "
        "bisection on the derivative.  M = 1 (SPR) gives alpha* = 1.",
    )
    _common(s, policy=False, traffic=False)
    s.add_argument("--tol", type=float, default=1e-10, help="golden-section tolerance (default 1e-10)")
    s.set_defaults(func=cmd_alpha_star)

    s = subs.add_parser(
        "chain",
        help="truncated backlog transition matrix or its stationary distribution",
        description="One-step transition probabilities of the backlog chain on 0..N_max; mass beyond "
        "N_max is lumped into N_max.  --stationary runs power iteration instead.",
    )
    _common(s)
    s.add_argument("--N-max", dest="N_max", type=int, default=200)
    s.add_argument("--stationary", action="store_true")
    s.add_argument("--tol", type=float, default=1e-13)
    s.add_argument("--max-iter", type=int, default=200_000)
    s.set_defaults(func=cmd_chain)

    s = subs.add_parser(
        "transience",
        help="numeric transience evidence from a decreasing test sequence",
        description="Evaluates sum_k y_k P_hk - y_h with y_i = (i+1)^-theta for each tested h; a "
        "nonpositive value on every large tested h is numeric evidence of transience, not a proof.",
    )
    _common(s)
    s.add_argument("--N-max", dest="N_max", type=int, default=400)
    s.add_argument("--theta", type=float, default=0.5)
    s.add_argument("--h-range", help="a:b[:step]; default 1:N_max")
    s.set_defaults(func=cmd_transience)

    s = subs.add_parser(
        "simulate",
        help="seeded Monte Carlo runs of the backlog",
        description="Frame-by-frame simulation with a Philox generator; run r uses seed + r.  Reports "
        "second-half growth slope, returns to zero, maximum backlog and backlog quantiles.",
    )
    _common(s)
    s.add_argument("--frames", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--runs", type=int, default=1)
    s.add_argument("--initial-backlog", type=int, default=0)
    s.add_argument("--abort-backlog", type=int, default=10**6)
    s.add_argument("--trace", help="also write the frame-by-frame CSV trace of run 0 here")
    s.set_defaults(func=cmd_simulate)

    s = subs.add_parser(
        "validate",
        help="run the oracle-agreement and invariant checks",
        description="Compares the success distributions with brute-force enumeration and checks "
        "normalization, mean identities, bounds, maximisers and chain rows.  Exit code 1 if any fails.",
    )
    s.add_argument("--check", action="append", help="run only this check (repeatable)")
    s.add_argument("--out", choices=("csv", "json"), default="csv")
    s.add_argument("--output")
    s.set_defaults(func=cmd_validate)
    return p


def _destination(args) -> Path | None:
    if args.output:
        return Path(args.output)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base:
        return Path(base) / f"{args.command}.{args.out}"
    return None


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help
            return int(exc.code or 0)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        if args.command == "validate" and args.check:
            unknown = [c for c in args.check if c not in CHECKS]
            if unknown:
                raise UsageError(f"unknown check(s): {', '.join(unknown)}")
        result = args.func(args)
    except UsageError as exc:
        print(f"fsastab: error[usage]: {exc}", file=stderr)
        return 2
    except (FsaError, ArithmeticError, ValueError, OSError) as exc:
        print(f"fsastab: error[computation]: {type(exc).__name__}: {exc}", file=stderr)
        return 1
    text, code = result if isinstance(result, tuple) else (result, 0)
    dest = _destination(args)
    if dest is None:
        stdout.write(text)
    else:
        try:
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_text(text)
        except OSError as exc:
            print(f"fsastab: error[computation]: {type(exc).__name__}: {exc}", file=stderr)
            return 1
    return code


def main() -> None:
    sys.exit(run())
