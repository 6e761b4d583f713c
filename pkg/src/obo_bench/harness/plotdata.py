"""Long-format plot data extraction from per-run CSVs."""

from __future__ import annotations

import csv
import glob
import os
from typing import Dict, List, Optional, Tuple

from .config import ConfigError
from .runner import atomic_write, fmt

# derived series: name -> (source column, transform of the row list)
DERIVED = {
    "cum_regret": "regret_inc",
    "cum_win_regret": "win_regret_inc",
    "cum_inner_iters": "inner_iters",
    "cum_grad_queries": "grad_queries",
    "cum_hvp_queries": "hvp_queries",
    "cum_v": "v_inc",
    "cum_h2": "h2_inc",
}


def parse_series(spec: str) -> Tuple[str, Optional[List[str]]]:
    """``COLUMN`` or ``COLUMN:ID,ID,...``."""
    col, _, ids = spec.partition(":")
    col = col.strip()
    if not col:
        raise ConfigError(f"--series {spec!r}: missing column name")
    ids_list = [s.strip() for s in ids.split(",") if s.strip()] if ids else None
    return col, ids_list


def scan_runs(runs_dir: str) -> Dict[str, str]:
    """Run id -> CSV path for every per-run CSV below ``runs_dir``."""
    if not os.path.isdir(runs_dir):
        raise ConfigError(f"--runs: {runs_dir!r} is not a directory")
    out = {}
    for path in sorted(glob.glob(os.path.join(runs_dir, "**", "*.csv"), recursive=True)):
        name = os.path.basename(path)[:-4]
        if "__seed" not in name:
            continue  # sweep tables and earlier plot outputs
        rel = os.path.relpath(os.path.dirname(path), runs_dir)
        out[name if rel == "." else f"{rel}/{name}"] = path
    return out


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _series(rows, col, path):
    if rows and col in rows[0]:
        return [float(r[col]) for r in rows]
    if col in DERIVED and rows and DERIVED[col] in rows[0]:
        acc, out = 0.0, []
        for r in rows:
            acc += float(r[DERIVED[col]])
            out.append(acc)
        return out
    known = sorted(set(rows[0]) | set(DERIVED)) if rows else sorted(DERIVED)
    raise ConfigError(f"--series: unknown column {col!r} in {path}; available: {known}")


def plot_data(runs_dir: str, spec: str, out_path: Optional[str] = None) -> str:
    """Write ``series,t,value`` rows and return the output path."""
    col, ids = parse_series(spec)
    runs = scan_runs(runs_dir)
    if ids is None:
        ids = list(runs)
    missing = [i for i in ids if i not in runs]
    if missing:
        raise ConfigError(f"--series: no run CSV for id(s) {missing} under {runs_dir}")
    if not ids:
        raise ConfigError(f"--runs: no run CSVs found under {runs_dir}")
    lines = ["series,t,value"]
    for rid in ids:
        rows = _read(runs[rid])
        vals = _series(rows, col, runs[rid])
        name = f"{rid}:{col}"
        for r, v in zip(rows, vals):
            lines.append(f"{name},{r['t']},{fmt(v)}")
    out_path = out_path or os.path.join(runs_dir, "plot_data.csv")
    atomic_write(out_path, "\n".join(lines) + "\n")
    return out_path
