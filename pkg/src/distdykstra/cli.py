"""Command-line front end: ``gen``, ``run``, ``verify`` and ``rates``.

Exit codes: 0 ok, 1 usage (bad flags or inputs an operation cannot accept),
2 invariant violation, 3 I/O (unreadable or malformed files).
"""

import argparse
import json
import os
import sys

from .analysis import (ALL_CHECKS, CHEAP, InvariantMonitor, fit_rate, gap_times_n_bounded,
                       reference)
from .core import DykstraError, PreconditionError, StructuralError
from .engine import DualState, RunHistory, StepError
from .funcs import V1, V4
from .instances import FAMILIES, Instance
from .schedule import (Schedule, cyclic_schedule, star_schedule, time_varying_schedule,
                       validate)
from .schedule import errors as schedule_errors
from .schedule import warnings as schedule_warnings
from .topology import COORDINATE, FULL, Graph

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_IO = 0, 1, 2, 3

# RunConfig keys accepted by --config; command-line flags take precedence
CONFIG_KEYS = ("instance", "schedule", "cycles", "treat", "seed", "drop_prob", "order",
               "csv", "summary")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _graph(kind, num_nodes, edge_mode):
    if num_nodes == 1:
        return Graph(1, (), edge_mode)
    return {"star": Graph.star, "path": Graph.path, "ring": Graph.ring}[kind](num_nodes,
                                                                          edge_mode=edge_mode)


def _window(text):
    try:
        lo, hi = (int(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must look like LO:HI, got {text!r}") from None
    if lo > hi:
        raise argparse.ArgumentTypeError("window needs LO <= HI")
    return lo, hi


def _apply_config(args):
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        cfg = json.load(fh)
    unknown = set(cfg) - set(CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key, value in cfg.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _load_instance(args):
    if args.instance is None:
        raise UsageError("--instance is required")
    inst = Instance.load(args.instance)
    if args.treat is not None:
        inst = inst.with_treatment(args.treat)
    return inst


def build_schedule(spec, inst, cycles, seed=0, drop_prob=0.3, order="interleaved"):
    """Named generator (``star``, ``cyclic``, ``timevary``) or a schedule JSON path."""
    classes = inst.node_classes()
    if spec == "star":
        return star_schedule(inst.graph, inst.v4_nodes())
    if spec == "cyclic":
        return cyclic_schedule(inst.graph, classes, inst.m, order)
    if spec == "timevary":
        return time_varying_schedule(inst.graph, classes, seed, drop_prob, cycles, inst.m, order)
    if os.path.exists(spec):
        return Schedule.load(spec)
    raise UsageError(f"unknown schedule {spec!r} (star, cyclic, timevary or a JSON file)")


def _prepare_run(args):
    args = _apply_config(args)
    inst = _load_instance(args)
    if args.schedule is None:
        raise UsageError("--schedule is required")
    cycles = 200 if args.cycles is None else int(args.cycles)
    if cycles < 1:
        raise UsageError("--cycles must be >= 1")
    seed = 0 if args.seed is None else int(args.seed)
    drop = 0.3 if args.drop_prob is None else float(args.drop_prob)
    sched = build_schedule(args.schedule, inst, cycles, seed, drop, args.order or "interleaved")
    findings = validate(sched, inst.graph, inst.node_classes(), inst.m)
    errs = schedule_errors(findings)
    if errs:
        raise UsageError("invalid schedule: " + "; ".join(f"cycle {f.cycle}: {f.message}"
                                                        for f in errs[:5]))
    return inst, sched, cycles, findings


def summarize_warnings(findings):
    """One line per warning kind and message tail, with the cycles it occurred in."""
    groups = {}
    for f in schedule_warnings(findings):
        tail = f.message.split("}", 1)[-1].strip() if f.message.startswith("S_{") else f.message
        groups.setdefault((f.code, tail), []).append(f.cycle)
    out = []
    for (code, tail), cycles in groups.items():
        where = f"cycle {cycles[0]}" if len(cycles) == 1 else \
            f"{len(cycles)} times in cycles {min(cycles)}..{max(cycles)}"
        out.append(f"{code}: {tail} ({where})")
    return out


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_gen(args):
    gen = FAMILIES[args.family]
    edge_mode = COORDINATE if args.edge_mode == "coordinate" else FULL
    graph = _graph(args.graph, args.nodes, edge_mode)
    node_class = V4 if args.treat == "subdiff" else V1
    inst = gen(args.seed, args.nodes, args.dim, graph=graph, node_class=node_class)
    _write_text(args.out, inst.dumps() + "\n")
    print(f"planted-optimum KKT residual: {inst.kkt_residual():.3e}",
          file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def cmd_run(args):
    inst, sched, cycles, findings = _prepare_run(args)
    state = DualState(inst, sched)
    ref = reference(inst)
    monitor = InvariantMonitor(ref, CHEAP)
    history = state.run(cycles, ref, monitor)
    if args.csv:
        history.to_csv(args.csv)
    last = history[-1]
    summary = {
        "final_gap": last.gap,
        "final_dist_sq": last.dist_sq,
        "warnings": summarize_warnings(findings),
        "max_reset_drift": monitor.max_reset_drift,
        "invariants": {f.name: f.status for f in monitor.results()},
    }
    _write_text(args.summary, json.dumps(summary, indent=1) + "\n")
    failure = monitor.first_failure()
    if failure is not None:
        n, w = failure.first_failure
        print(f"invariant {failure.name} violated at (n={n}, w={w}), "
              f"slack {failure.worst_slack:.3e}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_verify(args):
    inst, sched, cycles, findings = _prepare_run(args)
    state = DualState(inst, sched, minorant_bias=args.inject_minorant_bias)
    ref = reference(inst)
    monitor = InvariantMonitor(ref, ALL_CHECKS, seed=0 if args.seed is None else int(args.seed))
    history = state.run(cycles, ref, monitor)
    for fam in monitor.results():
        where = ""
        if fam.first_failure is not None:
            where = " first_failure=(n={}, w={})".format(*fam.first_failure)
        slack = "n/a" if fam.checks == 0 else f"{fam.worst_slack:.3e}"
        print(f"{fam.name:<20} {fam.status:<4} checks={fam.checks} worst_slack={slack}{where}")
    for line in summarize_warnings(findings):
        print(f"schedule-warning     {line}")
    if not inst.v4_nodes():
        slack = gap_times_n_bounded(history.cycle_ends("gap"))
        # O(1/n) has an unknown constant; the 2x tail rule is a heuristic flag
        print(f"{'gap_times_n':<20} {'PASS' if slack >= 0 else 'WARN':<4} worst_slack={slack:.3e}")
    return EXIT_OK if monitor.ok else EXIT_INVARIANT


def cmd_rates(args):
    with open(args.csv) as fh:
        history = RunHistory.from_csv(fh)
    series = history.cycle_ends(args.column)
    if not series:
        raise PreconditionError("history has no rows")
    ns = [n for n, _ in series]
    vals = [v for _, v in series]
    fit = fit_rate(ns, vals, args.model, args.window, floor=args.floor)
    _write_text(args.out, json.dumps(fit.to_dict(), indent=1) + "\n")
    return EXIT_OK


def _add_run_flags(p):
    p.add_argument("--config", help="JSON file with RunConfig keys")
    p.add_argument("--instance")
    p.add_argument("--schedule", help="star, cyclic, timevary or a schedule JSON file")
    p.add_argument("--cycles", type=int)
    p.add_argument("--treat", choices=("subdiff", "prox"))
    p.add_argument("--seed", type=int)
    p.add_argument("--drop-prob", dest="drop_prob", type=float,
                   help="edge drop probability for timevary (default 0.3)")
    p.add_argument("--order", choices=("interleaved", "edges-then-nodes"))


def make_parser():
    parser = _Parser(prog="distdykstra", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a seeded instance")
    p.add_argument("--family", required=True, choices=sorted(FAMILIES))
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--nodes", type=int, default=5)
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--graph", choices=("star", "path", "ring"), default="star")
    p.add_argument("--edge-mode", choices=("full", "coordinate"), default="full")
    p.add_argument("--treat", choices=("subdiff", "prox"), default="subdiff")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run the iteration and write the step history")
    _add_run_flags(p)
    p.add_argument("--csv")
    p.add_argument("--summary", help="summary JSON path (default stdout)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run with every invariant probe enabled")
    _add_run_flags(p)
    p.add_argument("--inject-minorant-bias", type=float, default=0.0,
                   help="fault injection: lift every refreshed minorant by this amount")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("rates", help="fit a convergence rate to a history CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--model", choices=("linear", "power"), default="linear")
    p.add_argument("--window", type=_window)
    p.add_argument("--column", choices=("gap", "dist_sq"), default="gap")
    p.add_argument("--floor", type=float, default=0.0,
                   help="drop values at or below this level (rounding noise)")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_rates)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) in ("gen",) and args.nodes < 1:
        parser.error("--nodes must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"distdykstra: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, KeyError, StructuralError) as exc:
        print(f"distdykstra: cannot read input: {exc}", file=sys.stderr)
        return EXIT_IO
    except StepError as exc:
        print(f"distdykstra: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except DykstraError as exc:
        print(f"distdykstra: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
