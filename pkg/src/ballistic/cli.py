"""Command line interface: ``ballistic <subcommand> ...``.

Every output starts with the configuration that produced it (a ``config``
object in JSON, a ``# config:`` line in CSV); ``ballistic rerun FILE``
replays it and reproduces the file byte for byte.

Exit codes: 0 success, 2 bad arguments, 3 resource bound exceeded,
4 expectation failed under ``--assert``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction
from typing import Optional

import numpy as np

from . import __version__
from .core import (
    L,
    R,
    S,
    LengthVector,
    ModelParams,
    PolyPR,
    Skyline,
    as_rational,
    format_rational,
    parse_distribution,
    velocities,
)

EXIT_OK, EXIT_ARGS, EXIT_BOUND, EXIT_ASSERT = 0, 2, 3, 4
CONJ_MAX_N = 30
CONJ_MAX_GRID = 10_000
MC_SUBTESTS = ("a-pmf", "skyline-indep", "gamma-indep", "gamma-fact", "counterexample", "laplace", "density")


class UsageError(Exception):
    pass


class BoundError(Exception):
    pass


# ------------------------------------------------------------------ parsing helpers


def _rational(s: str) -> Fraction:
    try:
        return as_rational(s)
    except (ValueError, ZeroDivisionError) as e:
        raise argparse.ArgumentTypeError(f"not a rational number: {s!r}") from e


def _float_list(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {s!r}") from e


def _lengths(s: str) -> LengthVector:
    try:
        vals = [as_rational(x) for x in s.split(",") if x]
        return LengthVector(vals)
    except (ValueError, ZeroDivisionError) as e:
        raise argparse.ArgumentTypeError(f"bad length vector {s!r}: {e}") from e


def parse_event(text: str, n: int):
    """``A=5``, ``A=inf``, ``delta``, ``v=RRSSL`` (``*`` wildcard), ``pi=3,2,1,0,4``,
    ``pair=0~4``, ``sky=<key>``; join with ``&``."""
    from .enumerator import (
        And,
        FirstCrosserIs,
        Paired,
        PairingEquals,
        SkylineEquals,
        VelocitiesEqual,
        delta_event,
    )

    parts = []
    for tok in (t.strip() for t in text.split("&")):
        if not tok:
            continue
        if tok == "delta":
            parts.append(delta_event(n))
            continue
        key, sep, val = tok.partition("=")
        if not sep:
            raise UsageError(f"cannot parse event {tok!r}")
        key = key.strip()
        if key == "A":
            parts.append(FirstCrosserIs(None if val in ("inf", "none") else int(val)))
        elif key == "v":
            sym = {"L": L, "S": S, "R": R, "*": None}
            try:
                parts.append(VelocitiesEqual(tuple(sym[c] for c in val)))
            except KeyError as e:
                raise UsageError(f"bad velocity pattern {val!r}") from e
        elif key == "pi":
            parts.append(PairingEquals(tuple(int(x) for x in val.split(","))))
        elif key == "pair":
            i, _, j = val.partition("~")
            parts.append(Paired(int(i), int(j)))
        elif key == "sky":
            parts.append(SkylineEquals(Skyline.from_key(val)))
        else:
            raise UsageError(f"unknown event kind {key!r}")
    if not parts:
        raise UsageError("empty event")
    return parts[0] if len(parts) == 1 else And(*parts)


# ------------------------------------------------------------------ output


def _jsonable(x):
    if isinstance(x, Fraction):
        return format_rational(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if hasattr(x, "to_json"):
        return x.to_json()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _dump_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, default=_jsonable, allow_nan=True) + "\n"


def _csv_text(config: dict, header: list, rows: list, trailer: Optional[dict] = None) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    if trailer:
        for k, v in trailer.items():
            buf.write(f"# {k}: {json.dumps(v, default=_jsonable, sort_keys=True)}\n")
    return buf.getvalue()


# ------------------------------------------------------------------ commands


def cmd_exact(args, config):
    from .exact import compute_sequences, generating_identity_residual

    if args.n < 1:
        raise UsageError("--n must be >= 1")
    seq = compute_sequences(args.n)
    residual_zero = all(c.is_zero() for c in generating_identity_residual(args.n, seq))
    names = ("p", "delta", "alpha", "beta", "gamma")
    if args.format == "csv":
        rows = []
        for name in names:
            for k in range(1, args.n + 1):
                poly = getattr(seq, name)[k]
                for d, c in enumerate(poly.coeffs):
                    rows.append([name, k, d, format_rational(c), f"{float(c):.12g}"])
        return _csv_text(config, ["sequence", "n", "power", "coefficient", "decimal"], rows,
                         {"generating_identity_zero": residual_zero}), True
    payload = {
        "config": config,
        "sequences": {name: {str(k): getattr(seq, name)[k].to_json() for k in range(1, args.n + 1)} for name in names},
        "checks": {"generating_identity_zero": residual_zero},
    }
    return _dump_json(payload), residual_zero


def _enum_call(fn, *a, **kw):
    from .enumerator import EnumerationBoundError

    try:
        return fn(*a, **kw)
    except EnumerationBoundError as e:
        raise BoundError(str(e)) from e


def _length_arg(args, name: str, n: int) -> LengthVector:
    val = getattr(args, name)
    if val is None:
        return LengthVector.ones(n) if name != "l1" else LengthVector.powers_of_two(n)
    if len(val) != n:
        raise UsageError(f"--{name} has {len(val)} entries, expected {n}")
    return val


def cmd_enumerate(args, config):
    from .enumerator import ENUM_MAX_N, asym_A5_components, enumerate_configurations, oracle_report

    n = args.n
    if n < 1:
        raise UsageError("--n must be >= 1")
    if n > ENUM_MAX_N:
        raise BoundError(f"exhaustive enumeration is limited to n <= {ENUM_MAX_N}")
    lv = args.lengths if args.lengths is not None else LengthVector.ones(n)
    if len(lv) != n:
        raise UsageError(f"--lengths has {len(lv)} entries, expected {n}")
    report = _enum_call(oracle_report, n, lv)
    if args.event:
        cd = enumerate_configurations(lv)
        report["events"] = []
        for text in args.event:
            ev = parse_event(text, n)
            poly = cd.probability(ev)
            item = {"spec": text, "poly": poly.to_json()}
            if args.r is not None:
                item["at_r"] = {"r": format_rational(args.r), "poly": poly.at_r(args.r).to_json()}
            report["events"].append(item)
    elif args.r is not None:
        for item in report["events"]:
            item["at_r"] = {"r": format_rational(args.r), "poly": PolyPR.from_json(item["poly"]).specialize_r(args.r).to_json()}
    ok = all(report["checks"].values())
    if args.a5:
        if n != 5:
            raise UsageError("--a5 needs --n 5")
        res = asym_A5_components(lv)
        report["asymmetricA5"] = {
            "z": format_rational(res["z"]),
            "components": [c.to_json() for c in res["components"]],
            "others": res["others"].to_json(),
            "displayed_all_match": all(c.match for c in res["components"]),
            "derived_all_match": all(c.match_derived for c in res["components"]),
        }
    payload = {"config": config, **report}
    return _dump_json(payload), ok


def cmd_universality(args, config):
    from .enumerator import SKYLINE_MAX_N, FirstCrosserIs, universality_diff

    n = args.n
    if n < 1:
        raise UsageError("--n must be >= 1")
    if n > SKYLINE_MAX_N:
        raise BoundError(f"skyline enumeration is limited to n <= {SKYLINE_MAX_N}")
    l1, l2 = _length_arg(args, "l1", n), _length_arg(args, "l2", n)
    r = args.r
    if not 0 < r < 1:
        raise UsageError("--r must lie in (0, 1)")
    res = _enum_call(universality_diff, n, l1, l2, r)
    first = {}
    for k in range(1, n + 1):
        d = _enum_call(universality_diff, n, l1, l2, r, FirstCrosserIs(k))
        if not d.zero:
            first[f"A={k}"] = next(iter(d.differences.values())).to_json()
    payload = {
        "config": config,
        "n": n,
        "l1": l1.to_json(),
        "l2": l2.to_json(),
        **res.to_json(),
        "firstCrosserDifferences": first,
    }
    ok = res.zero if r == Fraction(1, 2) else True
    return _dump_json(payload), ok


def cmd_conjectures(args, config):
    from .exact import CATALAN_MAX_M, catalan_report, compute_sequences, conjecture_scan, uniform_grid

    if not 1 <= args.n <= CONJ_MAX_N:
        raise UsageError(f"--n must lie in 1..{CONJ_MAX_N}")
    if not 2 <= args.grid <= CONJ_MAX_GRID:
        raise UsageError(f"--grid must lie in 2..{CONJ_MAX_GRID}")
    if not 0 <= args.catalan_m <= CATALAN_MAX_M:
        raise UsageError(f"--catalan-m must lie in 0..{CATALAN_MAX_M}")
    seq = compute_sequences(max(args.n, 2 * args.catalan_m + 1))
    scan = conjecture_scan(args.n, uniform_grid(args.grid), seq, prop51_points=args.prop51_points)
    catalan = [catalan_report(m, seq).to_json() for m in range(1, args.catalan_m + 1)]
    derivs = [
        {
            "m": c["m"],
            "fromRecurrence": c["derivAt0_fromRecurrence"],
            "closedForm": c["derivAt0_closedForm"],
            "mismatch": c["derivative_mismatch"],
        }
        for c in catalan
    ]
    log_rows = [{"n": r["n"], "residual": r["log_derivative_residual"]} for r in scan.details["per_n"]]
    ok = all(scan.flags.values()) and all(c["counts_match"] for c in catalan)
    if args.format == "csv":
        text = "# config: " + json.dumps(config, sort_keys=True) + "\n" + scan.to_csv().replace("\r\n", "\n")
        for key, val in (("flags", scan.flags), ("logDerivativeAtQuarter", log_rows), ("derivativeAtZero", derivs), ("catalan", catalan)):
            text += f"# {key}: {json.dumps(val, sort_keys=True)}\n"
        return text, ok
    payload = {
        "config": config,
        "scan": scan.to_json(),
        "logDerivativeAtQuarter": log_rows,
        "derivativeAtZero": derivs,
        "catalan": catalan,
    }
    if args.with_rows:
        payload["rows"] = [{k: (format_rational(v) if isinstance(v, Fraction) else v) for k, v in row.items()} for row in scan.rows]
    return _dump_json(payload), ok


def _params(args) -> ModelParams:
    try:
        return ModelParams(float(args.p), float(args.r))
    except ValueError as e:
        raise UsageError(str(e)) from e


def _dist(args):
    try:
        return parse_distribution(args.dist)
    except ValueError as e:
        raise UsageError(str(e)) from e


def cmd_mc(args, config):
    from . import montecarlo as mc
    from .exact import sequence_values

    t = args.subtest
    seed, threads = args.seed, args.threads
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    out: dict = {"config": config}
    ok = True
    try:
        if t == "a-pmf":
            params, dist = _params(args), _dist(args)
            A, D, ties = mc.first_crosser_samples(dist, params, args.trials, seed, threads, args.n)
            kmax = args.n
            pmf = mc.estimate_A_pmf(A, kmax)
            exact = sequence_values(float(args.p), kmax)[0] if params.symmetric else None
            rows = []
            for k in range(1, kmax + 1):
                e = pmf[k]
                row = e.to_json()
                if exact is not None:
                    row["exact"] = exact[k]
                    row["inInterval"] = e.contains(exact[k])
                    if k <= 15:
                        lo, hi = mc.wilson(e.count, args.trials, 0.999)
                        ok &= lo <= exact[k] <= hi
                rows.append(row)
            out["estimates"] = rows
            out["beyond"] = pmf[None].to_json()
            out["diagnostics"] = {"floatTies": 0 if mc._is_discrete(dist) else ties}
            if args.format == "csv":
                body = [[r["k"], r["count"], repr(r["estimate"]), repr(r["ci95"][0]), repr(r["ci95"][1]), repr(r.get("exact", ""))] for r in rows]
                return _csv_text(config, ["k", "count", "estimate", "lo", "hi", "exact"], body, {"diagnostics": out["diagnostics"]}), ok
        elif t == "skyline-indep":
            rep = mc.test_skyline_independence(args.n, _dist(args), _params(args), args.trials, seed, threads, args.alpha, args.inject)
            ok = rep.rejected if args.inject else not rep.rejected
            out["tests"] = [rep.to_json()]
            out["diagnostics"] = {"floatTies": rep.extras.get("floatTies", 0)}
        elif t == "gamma-indep":
            rep = mc.test_pairing_independence_gamma(args.n, args.shape, _params(args), args.trials, seed, threads, args.alpha)
            ok = not rep.rejected
            out["tests"] = [rep.to_json()]
            out["diagnostics"] = {"floatTies": rep.extras.get("floatTies", 0)}
        elif t == "gamma-fact":
            rep = mc.gamma_fact_test(args.shape, args.shape2, args.trials, seed, args.alpha)
            ex = rep.extras
            ok = not rep.rejected and abs(ex["mean_sum"] - ex["expected_mean"]) <= 3 * ex["mean_sum_se"]
            out["tests"] = [rep.to_json()]
            out["diagnostics"] = {"floatTies": 0}
        elif t == "counterexample":
            rep = mc.counterexample(args.trials, seed, threads, args.alpha)
            ok = rep.rejected and set(rep.extras["conditionalSupport"]) <= {8.0, 11.0}
            out["tests"] = [rep.to_json()]
            out["diagnostics"] = {"floatTies": 0}
        elif t == "laplace":
            res = mc.laplace_check(float(args.p), args.lambdas, args.trials, args.nmax, seed, threads)
            rows = res["rows"]
            ok = all(r.ok for r in rows)
            out["estimates"] = [r.to_json() for r in rows]
            out["diagnostics"] = res["diagnostics"]
            if args.format == "csv":
                keys = ["lam", "L_ell", "mc", "se", "root", "series", "truncation", "ok"]
                body = [[repr(r.to_json()[k]) if isinstance(r.to_json()[k], float) else r.to_json()[k] for k in keys] for r in rows]
                return _csv_text(config, keys, body, {"diagnostics": out["diagnostics"]}), ok
        elif t == "density":
            res = mc.c0_experiment(float(args.p), args.t, args.L, args.trials, seed, threads, _dist(args))
            ok = bool(res.ok)
            out["estimates"] = [res.to_json()]
            out["diagnostics"] = {"floatTies": res.float_ties}
    except mc.InsufficientSamples as e:
        raise BoundError(str(e)) from e
    except ValueError as e:
        raise UsageError(str(e)) from e
    if args.format == "csv":
        raise UsageError(f"mc {t} only supports --format json")
    out.setdefault("estimates", [])
    out.setdefault("tests", [])
    return _dump_json(out), ok


# ------------------------------------------------------------------ parser


def _common(parser: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
    parser.add_argument("--threads", type=int, default=d(None), help="worker threads (default: $BA_THREADS or CPU count)")
    parser.add_argument("--format", choices=("json", "csv"), default=d("json"))
    parser.add_argument("--out", default=d(None), help="output file (default stdout)")
    parser.add_argument("--assert", dest="assert_mode", action="store_true", default=d(False),
                        help="exit 4 when an expectation fails")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ballistic", description="Ballistic annihilation: exact and Monte Carlo tools.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _common(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="p_n, delta_n, alpha_n, beta_n, gamma_n polynomials")
    _common(p, True)
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("enumerate", help="exhaustive event probabilities for fixed lengths")
    _common(p, True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--lengths", type=_lengths, default=None, help="comma separated, default all ones")
    p.add_argument("--event", action="append", default=[], help="e.g. 'A=5', 'delta', 'v=RRSSL&pi=3,2,1,0,4'")
    p.add_argument("--r", type=_rational, default=None, help="also specialise at this right-mover share")
    p.add_argument("--a5", action="store_true", help="asymmetric A=5 decomposition (n=5)")

    p = sub.add_parser("universality", help="compare skyline laws of two length vectors")
    _common(p, True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--l1", type=_lengths, default=None, help="default 1,2,4,...")
    p.add_argument("--l2", type=_lengths, default=None, help="default 1,1,...,1")
    p.add_argument("--r", type=_rational, default=Fraction(1, 2))

    p = sub.add_parser("mc", help="Monte Carlo experiments")
    _common(p, True)
    p.add_argument("subtest", choices=MC_SUBTESTS)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--dist", default="exp:1")
    p.add_argument("--p", type=float, default=0.25)
    p.add_argument("--r", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--alpha", type=float, default=1e-3)
    p.add_argument("--inject", action="store_true", help="skyline-indep negative control")
    p.add_argument("--shape", type=float, default=2.0, help="gamma shape (gamma-indep, gamma-fact)")
    p.add_argument("--shape2", type=float, default=5.0, help="second gamma shape (gamma-fact)")
    p.add_argument("--lambda", dest="lambdas", type=_float_list, default=[0.5, 1.0, 2.0])
    p.add_argument("--nmax", type=int, default=200)
    p.add_argument("--t", type=float, default=2.0)
    p.add_argument("--L", type=float, default=200.0)

    p = sub.add_parser("conjectures", help="exact monotonicity scans and Catalan checks")
    _common(p, True)
    p.add_argument("--n", type=int, default=15)
    p.add_argument("--grid", type=int, default=1001)
    p.add_argument("--catalan-m", type=int, default=5)
    p.add_argument("--prop51-points", type=int, default=1000)
    p.add_argument("--with-rows", action="store_true", help="include the full scan table in JSON")

    p = sub.add_parser("rerun", help="replay the configuration stored in an output file")
    p.add_argument("file")
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    return ap


_SKIP = {"out", "threads", "command"}


def _canonical_argv(args) -> list[str]:
    """Arguments that determine the output, as a replayable argv."""
    argv = [args.command]
    if args.command == "mc":
        argv.append(args.subtest)
    for k, v in sorted(vars(args).items()):
        if k in _SKIP or k == "subtest" or v is None or v is False:
            continue
        flag = "--" + {"assert_mode": "assert", "lambdas": "lambda"}.get(k, k.replace("_", "-"))
        if v is True:
            argv.append(flag)
        elif isinstance(v, list):
            if k == "lambdas":
                argv += [flag, ",".join(repr(float(x)) for x in v)]
            else:
                for item in v:
                    argv += [flag, str(item)]
        elif isinstance(v, LengthVector):
            argv += [flag, ",".join(format_rational(x) for x in v.lengths)]
        elif isinstance(v, Fraction):
            argv += [flag, format_rational(v)]
        else:
            argv += [flag, str(v)]
    return argv


def _read_config(path: str) -> dict:
    with open(path) as fh:
        text = fh.read()
    if text.startswith("# config: "):
        return json.loads(text.splitlines()[0][len("# config: "):])
    return json.loads(text)["config"]


COMMANDS = {
    "exact": cmd_exact,
    "enumerate": cmd_enumerate,
    "universality": cmd_universality,
    "mc": cmd_mc,
    "conjectures": cmd_conjectures,
}


def run(argv: Optional[list[str]] = None) -> tuple[int, str, Optional[str]]:
    """Parse and execute; returns ``(exit code, output text, output path)``.

    The text has already been written to the output path when one is given.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0), "", None
    if args.command == "rerun":
        try:
            cfg = _read_config(args.file)
            replay = list(cfg["argv"])
        except (OSError, ValueError, KeyError) as e:
            print(f"ballistic: cannot read config from {args.file}: {e}", file=sys.stderr)
            return EXIT_ARGS, "", None
        if args.threads is not None:
            replay += ["--threads", str(args.threads)]
        if args.out is not None:
            replay += ["--out", args.out]
        return run(replay)
    return _execute(args)


def _execute(args) -> tuple[int, str, Optional[str]]:
    config = {"program": "ballistic", "version": __version__, "argv": _canonical_argv(args)}
    try:
        text, ok = COMMANDS[args.command](args, config)
    except UsageError as e:
        print(f"ballistic: error: {e}", file=sys.stderr)
        return EXIT_ARGS, "", None
    except BoundError as e:
        print(f"ballistic: resource bound: {e}", file=sys.stderr)
        return EXIT_BOUND, "", None
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    code = EXIT_ASSERT if (args.assert_mode and not ok) else EXIT_OK
    if code == EXIT_ASSERT:
        print("ballistic: assertion failed", file=sys.stderr)
    return code, text, args.out


def main(argv: Optional[list[str]] = None) -> int:
    code, text, out = run(argv)
    if text and out is None:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
