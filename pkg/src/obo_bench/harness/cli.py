"""Command line entry point ``obo-bench``."""

from __future__ import annotations

import argparse
import sys
import time
from typing import List, Optional

from ..core import ParameterDomainError
from .config import ConfigError, apply_overrides, load_json
from .plotdata import plot_data
from .runner import SWEEP_AXES, run_experiment, sweep_experiment
from .verify import run_verify


def _parse_values(text: str):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            out.append(int(item))
        except ValueError:
            try:
                out.append(float(item))
            except ValueError:
                raise ConfigError(f"--values: {item!r} is not a number") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="obo-bench", description="Online bilevel optimization benchmark.")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run every (algo, seed) pair of a config")
    r.add_argument("--config", required=True)
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
    r.add_argument("--out", default=None, help="output directory (default: config 'outputs')")

    s = sub.add_parser("sweep", help="repeat a config over values of one axis")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--values", required=True, help="comma separated values")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--out", default=None)

    v = sub.add_parser("verify", help="run the oracle suites")
    v.add_argument("--full", action="store_true", help="10x sample counts")
    v.add_argument("--seed", type=int, default=0)

    d = sub.add_parser("plot-data", help="extract long-format series from run CSVs")
    d.add_argument("--runs", required=True)
    d.add_argument("--series", required=True, help="COLUMN[:ID,ID,...]")
    d.add_argument("--out", default=None)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "run":
            raw = apply_overrides(load_json(args.config), args.set)
            summaries = run_experiment(raw, args.out)
            for s in summaries:
                print(f"{s['run_id']}: status={s['status']} reg_T={s.get('reg_T')} I_T={s.get('I_T')}")
            return 0 if all(s["status"] == "ok" for s in summaries) else 1
        if args.cmd == "sweep":
            raw = apply_overrides(load_json(args.config), args.set)
            table = sweep_experiment(raw, args.axis, _parse_values(args.values), args.out)
            for row in table:
                print(f"{args.axis}={row['value']} {row['algo']} seed{row['seed']}: "
                      f"reg/T={row['reg_per_step']} win_reg/T={row['win_reg_per_step']} status={row['status']}")
            return 0 if all(r["status"] == "ok" for r in table) else 1
        if args.cmd == "verify":
            t0 = time.perf_counter()
            results = run_verify("full" if args.full else "quick", seed=args.seed)
            ok = all(r.passed for r in results)
            print(f"{'PASS' if ok else 'FAIL'}: {sum(r.passed for r in results)}/{len(results)} groups "
                  f"in {time.perf_counter() - t0:.1f}s")
            return 0 if ok else 1
        path = plot_data(args.runs, args.series, args.out)
        print(path)
        return 0
    except (ConfigError, ParameterDomainError) as exc:
        print(f"obo-bench: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
