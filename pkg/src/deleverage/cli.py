"""Command-line front end: solve, generate, estimate, check.

Results go to stdout (or --out) as JSON; progress and diagnostics go to
stderr.  Exit codes: 0 success, 1 invalid input or failure, 2 time limit.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .estimate import EstimationError, bucketize, fit, read_events_csv, write_panel_csv
from .gen import GenerationError, GenSpec, generate
from .model import (InstanceFormatError, equity, leverage_gap, liability, load_instance,
                    objective, save_instance, validate)
from .reform import ReformError, reform_to_dict, reformulate
from .sco import CONVERGED, ScoError, kkt_residual, sco
from .scobb import (EPS_OPTIMAL, DegeneratePortfolioError, SolveError, certify, report_to_dict,
                    rho_max, scobb)

__all__ = ["main", "build_parser", "relative_gap"]

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_TIME = 2

log = logging.getLogger("deleverage")


def relative_gap(opt_val: float, obj_val: float) -> float:
    return (opt_val - obj_val) / max(1.0, abs(opt_val))


def _positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deleverage", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="{solve,generate,estimate,check}")

    s = sub.add_parser("solve", help="solve an instance")
    s.add_argument("instance", type=Path)
    s.add_argument("--algo", choices=("sco", "scobb"), default="scobb")
    s.add_argument("--eps", type=_positive(float), default=1e-5)
    s.add_argument("--time-limit", type=_positive(float), default=3600.0)
    s.add_argument("--out", type=Path, help="solution JSON path (default stdout)")
    s.add_argument("--parallel", action="store_true", help="solve sibling relaxations concurrently")
    s.add_argument("--dump-trace", type=Path, metavar="CSV", help="write the iteration trace as CSV")
    s.add_argument("-v", "--verbose", action="store_true")

    g = sub.add_parser("generate", help="generate random instances")
    g.add_argument("--m", type=_positive(int), required=True)
    g.add_argument("--s", type=int, required=True)
    g.add_argument("--q", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=_positive(int), default=1)
    g.add_argument("--rho1", type=_positive(float), default=18.0)
    g.add_argument("--l0-over-e0", type=_positive(float), default=25.0)
    g.add_argument("--out-dir", type=Path, default=Path("."))

    e = sub.add_parser("estimate", help="estimate impact matrices from a trades CSV")
    e.add_argument("trades", type=Path)
    e.add_argument("--bucket-s", type=_positive(float), default=10.0)
    e.add_argument("--horizon-s", type=_positive(float), default=1200.0)
    e.add_argument("--scale", type=_positive(float), default=1.0,
                   help="stored matrices are the estimates divided by this factor")
    e.add_argument("--panel-out", type=Path, help="also write the bucketed panel as CSV")
    e.add_argument("--out", type=Path)

    c = sub.add_parser("check", help="validate an instance and print diagnostics")
    c.add_argument("instance", type=Path)
    c.add_argument("--rho-max", action="store_true", help="compute rho_max (global box solve)")
    c.add_argument("--opt-val", type=float)
    c.add_argument("--obj-val", type=float)
    c.add_argument("--dump", type=Path, metavar="JSON", help="write the reformulation as JSON")
    c.add_argument("--eps", type=_positive(float), default=1e-5)

    o = sub.add_parser("oracle")
    o.add_argument("instance", type=Path)
    o.add_argument("--points", type=int, default=101)
    o.add_argument("--out", type=Path)
    return p


def _emit(doc, out: Path | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _load_valid(path: Path):
    model = load_instance(path)
    outcome = validate(model)
    if not outcome.ok:
        names = ", ".join(c.name for c in outcome.failures) or "internal-consistency"
        raise InstanceFormatError(f"{path}: invalid instance ({names})\n{outcome.summary()}")
    return model


def _write_trace(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_solve(args) -> int:
    model = _load_valid(args.instance)
    if args.algo == "sco":
        R = reformulate(model)
        start = time.perf_counter()
        res = sco(R, eps=args.eps)
        elapsed = time.perf_counter() - start
        y = R.d @ res.z
        doc = {
            "algo": "sco",
            "status": res.status,
            "y": y.tolist(),
            "equity": equity(model, y),
            "objective": objective(model, y),
            "leverage_gap": leverage_gap(model, y),
            "eps": args.eps,
            "iterations": res.iterations,
            "kkt_residual": kkt_residual(R, res),
            "elapsed_s": elapsed,
        }
        if args.dump_trace:
            rows = [(k, f, g, res.step_trace[k - 1] if k else "")
                    for k, (f, g) in enumerate(zip(res.f_hat_trace, res.g_hat_trace))]
            _write_trace(args.dump_trace, ("iteration", "f_hat", "g_hat", "step"), rows)
        code = EXIT_OK if res.status == CONVERGED else EXIT_TIME
    else:
        trace = []

        def progress(d):
            trace.append(d)
            if args.verbose and d["iteration"] % 50 == 0:
                print(f"it={d['iteration']} nodes={d['nodes']} open={d['open']} "
                      f"upper={d['upper']:.10g} lower={d['lower']:.10g} t={d['elapsed']:.1f}s",
                      file=sys.stderr)

        rep = scobb(model, args.eps, args.time_limit, parallel=args.parallel, progress=progress)
        doc = report_to_dict(rep)
        doc["certified"] = certify(rep, model, args.eps)
        if args.dump_trace:
            keys = ("iteration", "nodes", "open", "upper", "lower", "elapsed")
            _write_trace(args.dump_trace, keys, [[d[k] for k in keys] for d in trace])
        code = EXIT_OK if rep.status == EPS_OPTIMAL else EXIT_TIME
    y = np.asarray(doc["y"])
    e1 = doc["equity"]
    doc["liability"] = liability(model, y)
    doc["leverage_ratio"] = doc["liability"] / e1 if e1 > 0 else math.inf
    if args.verbose:
        print(f"{doc['algo']}: {doc['status']}, equity {e1:.10g}", file=sys.stderr)
    _emit(doc, args.out)
    return code


def cmd_generate(args) -> int:
    spec = GenSpec(args.m, args.s, args.q, l0_over_e0=args.l0_over_e0, rho1=args.rho1, seed=args.seed)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        path = args.out_dir / f"inst_{args.seed}_{k}.json"
        save_instance(generate(spec, k), path)
        print(path, file=sys.stderr)
    return EXIT_OK


def cmd_estimate(args) -> int:
    events = read_events_csv(args.trades)
    panel = bucketize(events, args.bucket_s, args.horizon_s)
    if args.panel_out:
        write_panel_csv(panel, args.panel_out)
    est = fit(panel)
    print(f"{panel.rows} rows, {panel.horizon_count} horizons x {panel.buckets_per_horizon} buckets; "
          f"R^2 = {np.array2string(est.r_squared, precision=4)}", file=sys.stderr)
    _emit(est.to_dict(args.scale), args.out)
    return EXIT_OK


def cmd_check(args) -> int:
    model = load_instance(args.instance)
    outcome = validate(model)
    print(outcome.summary())
    if not outcome.ok:
        return EXIT_FAIL
    R = reformulate(model)
    print(f"m={model.m} s={R.s} q={R.q} r={R.r}")
    print(f"cond(D)={R.cond_d:.6g}")
    if args.dump:
        args.dump.write_text(json.dumps(reform_to_dict(R), indent=2) + "\n")
    if args.rho_max:
        print(f"rho_max={rho_max(model, args.eps):.6f}")
    if (args.opt_val is None) != (args.obj_val is None):
        print("--opt-val and --obj-val must be given together", file=sys.stderr)
        return EXIT_FAIL
    if args.opt_val is not None:
        print(f"relative_gap={relative_gap(args.opt_val, args.obj_val):.6e}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import GridSpec, grid_search

    model = _load_valid(args.instance)
    y, e1 = grid_search(model, GridSpec(args.points))
    _emit({"y": y.tolist(), "equity": e1, "points_per_dim": args.points}, args.out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "generate": cmd_generate, "estimate": cmd_estimate,
            "check": cmd_check, "oracle": cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InstanceFormatError, EstimationError, GenerationError, ReformError, ScoError,
            DegeneratePortfolioError, SolveError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
