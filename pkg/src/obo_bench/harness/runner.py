"""Run orchestration and result emission (CSV per run, JSON per experiment)."""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Sequence, Tuple

from ..metrics import summarize
from ..optimizers import run
from .config import AlgoSpec, ConfigError, ExperimentConfig, apply_overrides, build_instance, build_params, parse_config

CSV_COLUMNS = (
    "t", "algo", "seed", "regret_inc", "cum_regret", "win_regret_inc", "cum_win_regret",
    "inner_iters", "grad_queries", "hvp_queries", "v_inc", "h2_inc", "e2_inc", "p_inc",
)
SUMMARY_KEYS = (
    "experiment", "algo", "seed", "T", "reg_T", "win_reg_T", "V_T", "H2_T", "E2_T", "P_T",
    "I_T", "grad_queries", "hvp_queries", "slope_fit",
)
SWEEP_AXES = ("window_w", "horizon_T", "delta")


def fmt(value) -> str:
    """Shortest round-trip text for floats; plain text otherwise."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def ledger_csv(ledger, algo: str, seed: int) -> str:
    cum = ledger.cum_regret
    cumw = ledger.cum_win_regret
    lines = [",".join(CSV_COLUMNS)]
    for i, t in enumerate(ledger.t):
        row = (t, algo, seed, ledger.regret_inc[i], cum[i], ledger.win_regret_inc[i], cumw[i],
               ledger.inner_iters[i], ledger.grad_queries[i], ledger.hvp_queries[i],
               ledger.v_inc[i], ledger.h2_inc[i], ledger.e2_inc[i], ledger.p_inc[i])
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def run_id(experiment: str, algo: str, seed: int, index: int = 0, n_same: int = 1) -> str:
    tag = algo if n_same == 1 else f"{algo}{index}"
    return f"{experiment}__{tag}__seed{seed}"


def execute(raw: Dict, algo_index: int, seed: int) -> Tuple[str, Dict]:
    """One (algo, seed) run; returns the CSV text and its summary record."""
    cfg = parse_config(raw)
    spec: AlgoSpec = cfg.algos[algo_index]
    inst = build_instance(cfg.problem, cfg.horizon_T, seed)
    params = build_params(inst, spec, cfg.horizon_T, cfg.window)
    rec = run(inst, spec.id, params, estimator=cfg.estimator, seed=seed, keep_reports=False)
    csv_text = ledger_csv(rec.ledger, spec.id, seed)
    summary = {"experiment": cfg.experiment, "algo": spec.id, "seed": seed, "T": cfg.horizon_T}
    if len(rec.ledger):
        s = summarize(rec.ledger, cfg.horizon_T)
        summary.update({k: s[k] for k in SUMMARY_KEYS if k in s})
    else:
        summary.update({k: None for k in SUMMARY_KEYS if k not in summary})
    summary["status"] = rec.status
    if rec.error:
        summary["error"] = rec.error
    return csv_text, summary


def _workers() -> int:
    env = os.environ.get("OBO_BENCH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"OBO_BENCH_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _tasks(cfg: ExperimentConfig):
    return [(i, s) for i in range(len(cfg.algos)) for s in cfg.seeds]


def run_experiment(raw: Dict, out_dir: str = None) -> List[Dict]:
    """Run every (algo, seed) pair, write CSVs and the summary JSON; return summaries."""
    cfg = parse_config(raw)
    # build once in-process so configuration errors surface before any fan-out
    inst = build_instance(cfg.problem, cfg.horizon_T, cfg.seeds[0])
    for spec in cfg.algos:
        build_params(inst, spec, cfg.horizon_T, cfg.window)
    out_dir = out_dir or cfg.outputs
    tasks = _tasks(cfg)
    n = min(_workers(), len(tasks))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as ex:
            results = list(ex.map(execute, [raw] * len(tasks), [i for i, _ in tasks], [s for _, s in tasks]))
    else:
        results = [execute(raw, i, s) for i, s in tasks]
    ids = [a.id for a in cfg.algos]
    summaries = []
    for (i, seed), (csv_text, summary) in zip(tasks, results):
        rid = run_id(cfg.experiment, ids[i], seed, i, ids.count(ids[i]))
        atomic_write(os.path.join(out_dir, rid + ".csv"), csv_text)
        summary["run_id"] = rid
        summaries.append(summary)
    atomic_write(os.path.join(out_dir, f"{cfg.experiment}__summary.json"),
                 json.dumps(summaries, indent=2, allow_nan=True) + "\n")
    return summaries


def _axis_override(axis: str, value) -> List[str]:
    if axis == "window_w":
        return [f"window.w={int(value)}"]
    if axis == "horizon_T":
        return [f"horizon_T={int(value)}"]
    return []


def sweep_experiment(raw: Dict, axis: str, values: Sequence, out_dir: str = None) -> List[Dict]:
    """Run the base config once per axis value into ``<out>/<axis>=<value>/``."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"--axis: unknown axis {axis!r}; expected one of {SWEEP_AXES}")
    if not values:
        raise ConfigError("--values: empty list")
    cfg = parse_config(raw)
    out_dir = out_dir or cfg.outputs
    table = []
    for value in values:
        sub = apply_overrides(raw, _axis_override(axis, value))
        if axis == "delta":
            sub["algos"] = [dict(a) if isinstance(a, dict) else {"id": a} for a in sub["algos"]]
            for a in sub["algos"]:
                a["overrides"] = {**a.get("overrides", {}), "delta": float(value)}
        label = f"{axis}={fmt(value)}"
        for s in run_experiment(sub, os.path.join(out_dir, label)):
            T = s["T"]
            table.append({
                "axis": axis, "value": value, "algo": s["algo"], "seed": s["seed"], "T": T,
                "reg_T": s.get("reg_T"), "win_reg_T": s.get("win_reg_T"), "I_T": s.get("I_T"),
                "reg_per_step": None if s.get("reg_T") is None else s["reg_T"] / T,
                "win_reg_per_step": None if s.get("win_reg_T") is None else s["win_reg_T"] / T,
                "status": s["status"],
            })
    cols = list(table[0])
    text = ",".join(cols) + "\n" + "".join(",".join(fmt(r[c]) for c in cols) + "\n" for r in table)
    atomic_write(os.path.join(out_dir, f"{cfg.experiment}__sweep_{axis}.csv"), text)
    atomic_write(os.path.join(out_dir, f"{cfg.experiment}__sweep_{axis}.json"), json.dumps(table, indent=2) + "\n")
    return table
