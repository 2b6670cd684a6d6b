"""Command-line entry point: ``rcphase <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 infeasible size,
64 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import report
from .applications import (RenyiRegimeWarning, chernoff_exponent, guesswork_exponent,
                           renyi_rate)
from .dmc import ChannelError, bundled_channel_path, load_channel, mutual_info, JointDistribution
from .ensemble import (CapExceededError, CodebookSpec, InvalidTypeError, enumerator_moment,
                       estimate_annealed, estimate_quenched, largest_remainder)
from .oracle import FeasibilityError, exact_annealed_atoms, exact_annealed_enum
from .phase import (DEFAULT_BETA_GRID, CurveTable, boundary_curves, branch_curves, psi_total)
from .solver import DEFAULT_CONFIG, SolverError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_FEASIBILITY = 4
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_range(text: str) -> list:
    """``a:b:step`` to the inclusive grid ``a, a+step, ..., <= b``."""
    try:
        a, b, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise UsageError(f"range {text!r} must look like start:stop:step") from None
    if not step > 0:
        raise UsageError(f"range step must be positive, got {step}")
    if b < a:
        raise UsageError(f"range {text!r} is empty")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + k * step, 12) for k in range(count)]


def _grid(args, single, ranged, default=None):
    if getattr(args, ranged, None):
        return parse_range(getattr(args, ranged))
    value = getattr(args, single, None)
    if value is not None:
        return [float(value)]
    if default is not None:
        return parse_range(default)
    raise UsageError(f"one of --{single.replace('_', '-')} or "
                     f"--{ranged.replace('_', '-')} is required")


def _channel(args):
    path = Path(args.channel) if args.channel else bundled_channel_path()
    try:
        return load_channel(path), path
    except OSError as exc:
        raise ChannelError(f"cannot read channel file {path}: {exc.strerror}") from exc


def _out_dir(args):
    if not args.out:
        raise UsageError("--out <dir> is required for this subcommand")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(args, out, path, params, started, files):
    report.write_manifest(out, {
        "subcommand": args.command,
        "channel_file": str(path),
        "parameters": params,
        "seed": getattr(args, "seed", None),
        "output_dir": str(out),
        "files": sorted(files),
        "tool_version": report.tool_version(),
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    })
    for f in sorted(files):
        print(out / f)


def _print_fields(fields: dict):
    width = max(len(k) for k in fields)
    for k, v in fields.items():
        print(f"{k:<{width}} : {report.format_value(v)}")


# -- subcommands -----------------------------------------------------------------

def cmd_boundaries(args):
    started = time.perf_counter()
    ch, path = _channel(args)
    grid = _grid(args, "beta", "beta_range", "%g:%g:%g" % DEFAULT_BETA_GRID)
    out = _out_dir(args)
    table = boundary_curves(ch, grid, DEFAULT_CONFIG, threads=args.threads)
    report.write_table(out / "boundaries.csv", table)
    mi = mutual_info(JointDistribution(ch, ch.W))
    report.write_script(out / "boundaries.gp", report.boundaries_script("boundaries.csv", mi))
    _finish(args, out, path, {"beta_grid": [grid[0], grid[-1], len(grid)]}, started,
            ["boundaries.csv", "boundaries.gp"])


def cmd_branches(args):
    started = time.perf_counter()
    ch, path = _channel(args)
    if args.rate is None:
        raise UsageError("--rate is required")
    grid = _grid(args, "beta", "beta_range", "%g:%g:%g" % DEFAULT_BETA_GRID)
    if grid[0] <= 0:
        raise UsageError("branch curves need beta > 0")
    out = _out_dir(args)
    table = branch_curves(ch, args.rate, grid, DEFAULT_CONFIG, threads=args.threads)
    report.write_table(out / "branches.csv", table)
    report.write_script(out / "branches.gp", report.branches_script("branches.csv", args.rate))
    _finish(args, out, path, {"rate": args.rate, "beta_grid": [grid[0], grid[-1], len(grid)]},
            started, ["branches.csv", "branches.gp"])


def cmd_phase(args):
    started = time.perf_counter()
    ch, path = _channel(args)
    betas = _grid(args, "beta", "beta_range")
    rates = _grid(args, "rate", "rate_range")
    if len(betas) == 1 and len(rates) == 1 and not args.out:
        p = psi_total(ch, betas[0], rates[0], DEFAULT_CONFIG)
        _print_fields({**p.as_dict(), "mutual_info": mutual_info(JointDistribution(ch, ch.W))})
        return
    out = _out_dir(args)
    points = [psi_total(ch, b, r, DEFAULT_CONFIG).as_dict() for b in betas for r in rates]
    names = [k for k in points[0] if k != "beta"]
    table = CurveTable("beta", [p["beta"] for p in points],
                       {k: [p[k] for p in points] for k in names},
                       {"channel_hash": ch.digest()})
    report.write_table(out / "phase.csv", table)
    _finish(args, out, path, {"betas": betas, "rates": rates}, started, ["phase.csv"])


def _joint_type_for(spec):
    """Integer joint type closest to ``P_X W`` with rows equal to the composition."""
    rows = [largest_remainder(spec.channel.W[x], c) for x, c in enumerate(spec.composition)]
    counts = np.array(rows, dtype=int)
    y_ref = np.repeat(np.arange(spec.channel.ny), counts.sum(axis=0))
    return counts, y_ref


def cmd_simulate(args):
    started = time.perf_counter()
    ch, path = _channel(args)
    if (args.rate is None) == (args.M is None):
        raise UsageError("give exactly one of --rate and --M")
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    out = _out_dir(args)
    rows = []
    for n in args.n:
        spec = (CodebookSpec.from_rate(ch, n, args.rate) if args.rate is not None
                else CodebookSpec.from_size(ch, n, args.M))
        if args.mode == "enumerator":
            counts, y_ref = _joint_type_for(spec)
            rows.append(enumerator_moment(spec, y_ref, counts, args.beta, args.trials,
                                          args.seed).row())
        else:
            estimate = estimate_annealed if args.mode == "annealed" else estimate_quenched
            rows.append(estimate(spec, args.beta, args.trials, args.seed,
                                 threads=args.threads).row())
    header = list(rows[0])
    name = f"simulate_{args.mode}.csv"
    table = CurveTable(header[0], [r[header[0]] for r in rows],
                       {k: [r[k] for r in rows] for k in header[1:]},
                       {"channel_hash": ch.digest(), "mode": args.mode, "seed": args.seed,
                        "trials": args.trials})
    report.write_table(out / name, table)
    _finish(args, out, path, {"mode": args.mode, "n": args.n, "rate": args.rate, "M": args.M,
                              "beta": args.beta, "trials": args.trials}, started, [name])


def cmd_oracle(args):
    ch, _ = _channel(args)
    spec = CodebookSpec.from_size(ch, args.n, args.M)
    enum = exact_annealed_enum(spec, args.beta)
    atoms = exact_annealed_atoms(spec, args.beta)
    _print_fields({"n": args.n, "M": args.M, "beta": args.beta,
                   "composition": " ".join(map(str, spec.composition)),
                   "exact_annealed_enum": enum, "exact_annealed_atoms": atoms,
                   "abs_difference": abs(enum - atoms),
                   "agree_1e-10": abs(enum - atoms) <= 1e-10})


def cmd_applications(args):
    started = time.perf_counter()
    ch, path = _channel(args)
    rates = _grid(args, "rate", "rate_range")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RenyiRegimeWarning)
        if args.kind == "chernoff":
            res = [chernoff_exponent(ch, R, DEFAULT_CONFIG) for R in rates]
            cols = {"xi": [r.xi for r in res], "beta_star": [r.beta_star for r in res]}
        elif args.kind == "guesswork":
            if args.s is None:
                raise UsageError("guesswork needs --s")
            res = [guesswork_exponent(ch, args.s, R, DEFAULT_CONFIG) for R in rates]
            cols = {"s": [r.s for r in res], "beta": [r.beta for r in res],
                    "exponent": [r.exponent for r in res]}
        else:
            if args.beta is None:
                raise UsageError("renyi needs --beta")
            try:
                res = [renyi_rate(ch, args.beta, R, DEFAULT_CONFIG) for R in rates]
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            cols = {"beta": [r.beta for r in res], "renyi_rate": [r.value for r in res],
                    "heuristic": [r.heuristic for r in res]}
    table = CurveTable("R", rates, cols, {"channel_hash": ch.digest(), "kind": args.kind})
    if args.out:
        out = _out_dir(args)
        name = f"applications_{args.kind}.csv"
        report.write_table(out / name, table)
        _finish(args, out, path, {"kind": args.kind, "rates": rates, "s": args.s,
                                  "beta": args.beta}, started, [name])
    else:
        print(",".join(table.header()))
        for row in table.rows():
            print(",".join(report.format_value(v) for v in row))


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rcphase",
                     description="Annealed free energy and phase diagram of random-code "
                                 "channel output distributions.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out=True):
        p.add_argument("--channel", help="channel spec file (default: bundled Z-channel)")
        p.add_argument("--threads", type=int, default=1, help="worker processes, 0 = auto")
        p.add_argument("--format", choices=["csv"], default="csv")
        if out:
            p.add_argument("--out", help="output directory")

    p = sub.add_parser("boundaries", help="I^b, R* and I^s along a beta grid")
    common(p)
    p.add_argument("--beta", type=float)
    p.add_argument("--beta-range", help="start:stop:step (default 1:5:0.02)")
    p.set_defaults(func=cmd_boundaries)

    p = sub.add_parser("branches", help="bulk, sparse, total and i.i.d. free energies vs beta")
    common(p)
    p.add_argument("--rate", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--beta-range", help="start:stop:step (default 1:5:0.02)")
    p.set_defaults(func=cmd_branches)

    p = sub.add_parser("phase", help="one (beta, R) point, or a grid with --out")
    common(p)
    p.add_argument("--beta", type=float)
    p.add_argument("--beta-range")
    p.add_argument("--rate", type=float)
    p.add_argument("--rate-range")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("simulate", help="Monte Carlo over random codebooks")
    common(p)
    p.add_argument("--n", type=int, nargs="+", required=True, help="block length(s)")
    p.add_argument("--rate", type=float)
    p.add_argument("--M", type=int)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["annealed", "quenched", "enumerator"], default="annealed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="exact annealed value by two independent routes")
    common(p, out=False)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("applications", help="Chernoff, guesswork and Rényi-rate exponents")
    common(p)
    p.add_argument("--kind", choices=["chernoff", "guesswork", "renyi"], required=True)
    p.add_argument("--rate", type=float)
    p.add_argument("--rate-range")
    p.add_argument("--s", type=float)
    p.add_argument("--beta", type=float)
    p.set_defaults(func=cmd_applications)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"rcphase: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"rcphase: solver error at beta={exc.beta}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (FeasibilityError, CapExceededError) as exc:
        print(f"rcphase: infeasible: {exc}", file=sys.stderr)
        return EXIT_FEASIBILITY
    except (ChannelError, InvalidTypeError, ValueError) as exc:
        print(f"rcphase: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
