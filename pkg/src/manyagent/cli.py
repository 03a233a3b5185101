"""Command-line entry point.

    manyagent [run] --protest-n 3 --horizon 2 --mode both
    manyagent [run] --sweep 125,250,500,1000 --horizon 3 --samples 3 --out fig4.csv
    manyagent [run] --domain problem.json --mode naive
    manyagent protest --protest-n 5 --out protest5.json
    manyagent validate problem.json
"""
from __future__ import annotations

import argparse
import logging
import sys

from .bench import DELTA_TOL, HEADER, MODES, ExperimentSpec, run
from .errors import ValidationError
from .protest import ProtestParams, build_domain

log = logging.getLogger("manyagent")


def _sweep(text: str) -> tuple:
    try:
        ns = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sweep list {text!r}") from None
    if not ns or min(ns) < 1:
        raise argparse.ArgumentTypeError("sweep needs positive population sizes")
    return ns


def _run_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="manyagent", description="Timed many-agent planning runs.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--domain", help="domain JSON file")
    src.add_argument("--protest-n", type=int, help="generate the protest domain with this many protestors")
    src.add_argument("--sweep", type=_sweep, help="comma-separated protestor counts")
    p.add_argument("--horizon", type=int, default=2)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--samples", type=int, default=0, help="observation samples per node (0 = exact)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=MODES, default="structured")
    p.add_argument("--out", help="CSV destination (plot data goes next to it)")
    p.add_argument("--parallel", type=int, default=0, help="worker processes for sweep points")
    p.add_argument("--fsc", choices=("blind", "reactive"), default="blind", help="protestor controllers")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _cmd_run(argv) -> int:
    args = _run_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    sweep = args.sweep or ((args.protest_n,) if args.protest_n else (2,))
    spec = ExperimentSpec(domain=args.domain, protest=ProtestParams(controller=args.fsc), mode=args.mode,
                          horizon=args.horizon, gamma=args.gamma, samples=args.samples, seed=args.seed,
                          sweep=sweep, out=args.out, parallel=args.parallel)
    rows = run(spec)
    cols = HEADER + (("delta",) if args.mode == "both" else ())
    print(",".join(cols))
    for r in rows:
        vals = [getattr(r, c) for c in cols]
        print(",".join("" if v is None else (f"{v:.6g}" if isinstance(v, float) else str(v)) for v in vals))
        if r.error:
            log.warning("N=%s %s: %s", r.n, r.mode, r.error)
    if any(r.delta is not None and r.delta > DELTA_TOL for r in rows):
        print(f"error: structured and naive values differ by more than {DELTA_TOL}", file=sys.stderr)
        return 3
    return 0


def _cmd_protest(argv) -> int:
    p = argparse.ArgumentParser(prog="manyagent protest", description="Write the protest domain as JSON.")
    p.add_argument("--protest-n", type=int, default=2)
    p.add_argument("--fsc", choices=("blind", "reactive"), default="blind")
    p.add_argument("--out", required=True)
    args = p.parse_args(argv)
    from .io import save_domain

    save_domain(build_domain(ProtestParams(n=args.protest_n, controller=args.fsc)), args.out)
    print(args.out)
    return 0


def _cmd_validate(argv) -> int:
    p = argparse.ArgumentParser(prog="manyagent validate", description="Load and validate a domain file.")
    p.add_argument("path")
    args = p.parse_args(argv)
    from .io import load_domain

    d = load_domain(args.path)
    print(f"ok: {d.name}, N={d.N}, |S|={d.states.size}, |A0|={len(d.actions0)}, max |nu|={d.max_nu()}")
    return 0


COMMANDS = {"run": _cmd_run, "protest": _cmd_protest, "validate": _cmd_validate}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    cmd = COMMANDS.get(argv[0]) if argv else None
    try:
        return cmd(argv[1:]) if cmd else _cmd_run(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
