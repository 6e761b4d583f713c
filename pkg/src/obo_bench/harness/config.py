"""Experiment configuration: loading, overrides, validation and construction."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from ..core import ALGORITHMS, HyperParams, ParameterDomainError, default_schedule
from ..geometry import ball, box, unconstrained
from ..metrics import SupEstimator
from ..problems import (
    DriftPath,
    make_block_sigmoid_adversary,
    make_drifting_quadratic,
    make_hypercleaning_synthetic,
    make_window_adversary,
)

FAMILIES = ("drifting_quadratic", "block_sigmoid", "window_adversary", "hypercleaning")
_SCHEDULE_KEYS = ("alpha", "beta", "delta")
_PARAM_KEYS = tuple(HyperParams.__dataclass_fields__)


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass
class AlgoSpec:
    id: str
    overrides: Dict[str, Any]


@dataclass
class ExperimentConfig:
    experiment: str
    problem: Dict[str, Any]
    algos: List[AlgoSpec]
    horizon_T: int
    seeds: List[int]
    window: tuple
    outputs: str
    estimator: SupEstimator
    raw: Dict[str, Any]


def load_json(path) -> Dict[str, Any]:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: Dict[str, Any], sets: List[str]) -> Dict[str, Any]:
    """Apply ``key.sub=value`` assignments; values are parsed as JSON when possible."""
    out = copy.deepcopy(raw)
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            if isinstance(node, list):
                try:
                    node = node[int(p)]
                except (ValueError, IndexError):
                    raise ConfigError(f"--set {key}: bad list index {p!r}") from None
                continue
            node = node.setdefault(p, {})
            if not isinstance(node, (dict, list)):
                raise ConfigError(f"--set {key}: {p!r} is not an object")
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = _parse_value(text)
        else:
            node[last] = _parse_value(text)
    return out


def _req(d, key, where):
    if key not in d:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return d[key]


def parse_config(raw: Dict[str, Any]) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    problem = _req(raw, "problem", "config")
    if not isinstance(problem, dict):
        raise ConfigError("problem: must be an object")
    fam = _req(problem, "family", "problem")
    if fam not in FAMILIES:
        raise ConfigError(f"problem.family: unknown family {fam!r}; expected one of {FAMILIES}")
    algos_raw = _req(raw, "algos", "config")
    if not isinstance(algos_raw, list) or not algos_raw:
        raise ConfigError("algos: must be a non-empty list")
    algos = []
    for i, a in enumerate(algos_raw):
        if isinstance(a, str):
            a = {"id": a}
        if not isinstance(a, dict):
            raise ConfigError(f"algos[{i}]: must be an id string or an object")
        aid = _req(a, "id", f"algos[{i}]")
        if aid not in ALGORITHMS:
            raise ConfigError(f"algos[{i}].id: unknown algorithm id {aid!r}; expected one of {ALGORITHMS}")
        ov = a.get("overrides", {})
        bad = [k for k in ov if k not in _PARAM_KEYS]
        if bad:
            raise ConfigError(f"algos[{i}].overrides: unknown parameter(s) {bad}")
        algos.append(AlgoSpec(aid, dict(ov)))
    T = _req(raw, "horizon_T", "config")
    if not isinstance(T, int) or isinstance(T, bool) or T < 1:
        raise ConfigError(f"horizon_T: must be an integer >= 1, got {T!r}")
    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds: must be a non-empty list of integers")
    win = raw.get("window", {"w": 1, "eta": 1.0})
    try:
        window = (int(win.get("w", 1)), float(win.get("eta", 1.0)))
    except (AttributeError, TypeError, ValueError):
        raise ConfigError("window: expected an object {\"w\": int, \"eta\": float}") from None
    if window[0] < 1 or not (0 < window[1] <= 1):
        raise ConfigError(f"window: need w >= 1 and eta in (0, 1], got {window}")
    est_raw = raw.get("estimator", {})
    try:
        estimator = SupEstimator(**est_raw) if est_raw else None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"estimator: {exc}") from None
    return ExperimentConfig(
        experiment=str(raw.get("experiment", "experiment")),
        problem=problem, algos=algos, horizon_T=T, seeds=list(seeds), window=window,
        outputs=str(raw.get("outputs", "runs")), estimator=estimator, raw=raw,
    )


def _x_set(spec, d):
    if spec is None or spec == "unconstrained":
        return unconstrained(d)
    kind = spec.get("kind", "unconstrained")
    if kind == "unconstrained":
        return unconstrained(d)
    if kind == "ball":
        return ball(spec.get("center", [0.0] * d), float(spec.get("radius", 1.0)))
    if kind == "box":
        lo = spec.get("lower", -1.0)
        hi = spec.get("upper", 1.0)
        lo = [lo] * d if np.isscalar(lo) else lo
        hi = [hi] * d if np.isscalar(hi) else hi
        return box(lo, hi)
    raise ConfigError(f"problem.params.x_set.kind: unknown set kind {kind!r}")


def _drift(spec, default_seed):
    spec = dict(spec or {})
    spec["seed"] = int(spec.get("seed", 0)) + default_seed
    try:
        return DriftPath(**spec)
    except TypeError as exc:
        raise ConfigError(f"drift path: {exc}") from None


def build_instance(problem: Dict[str, Any], T: int, seed: int):
    """Construct the problem family for horizon ``T``; ``seed`` offsets all family seeds."""
    fam = problem["family"]
    p = dict(problem.get("params", {}))
    try:
        if fam == "drifting_quadratic":
            d = int(p.get("d", 2))
            return make_drifting_quadratic(
                d, T, _drift(p.get("drift_d"), 1000 * seed + 1), _drift(p.get("drift_c"), 1000 * seed + 2),
                float(p.get("mu_g", 1.0)), _x_set(p.get("x_set"), d),
                curvature_ratio=float(p.get("curvature_ratio", 1.0)), ref_radius=p.get("ref_radius"),
            )
        if fam == "block_sigmoid":
            kw = {k: float(p[k]) for k in ("l_f0", "l_f1", "mu_g", "l_g2") if k in p}
            return make_block_sigmoid_adversary(T, float(p.get("v_budget", 0.0)), float(p.get("q", 2.0)), **kw)
        if fam == "window_adversary":
            return make_window_adversary(T, float(p.get("c_scale", 1.0)), float(p.get("mu", 4.0)),
                                         d_max=int(p.get("d_max", 4096)))
        return make_hypercleaning_synthetic(
            int(p.get("n_train", 40)), int(p.get("n_val", 40)), int(p.get("d", 5)),
            p.get("schedule", [0.1, 0.2, 0.3]), float(p.get("ridge", 0.1)), int(p.get("seed", 0)) + seed, T=T,
        )
    except ParameterDomainError as exc:
        raise ConfigError(f"problem.params: {exc}") from None


def build_params(inst, spec: AlgoSpec, T: int, window) -> HyperParams:
    ov = dict(spec.overrides)
    sched_kw = {k: float(ov.pop(k)) for k in _SCHEDULE_KEYS if k in ov}
    try:
        params = default_schedule(inst.constants, spec.id, T, window, **sched_kw)
        return params.with_overrides(**ov) if ov else params
    except (ParameterDomainError, TypeError) as exc:
        raise ConfigError(f"algos[{spec.id}].overrides: {exc}") from None

