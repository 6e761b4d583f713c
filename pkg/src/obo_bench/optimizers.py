"""Algorithm step machines and the online run loop."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .core import ALGORITHMS, CappedLoopError, HyperParams, ParameterDomainError, derive_constants
from .geometry import gradient_mapping, project, project_ball0
from .hypergrad import (
    WindowBuffer,
    aid_hypergrad,
    itd_hypergrad,
    solve_v_cg,
    solve_v_projected_gd,
    win_grad_y_g,
    win_hypergrad,
    win_phi_grad,
    window_push,
)
from .metrics import MetricsLedger, SupEstimator, regret_increment, variation_update, window_regret_increment


class RevealViolation(RuntimeError):
    """An algorithm queried a round that has not been revealed yet."""


_COUNTED = {
    "grad_y_g": "grad_y_g", "grad_x_f": "grad_f", "grad_y_f": "grad_f",
    "hvp_yy_g": "hvp", "jvp_xy_g": "jvp",
    "w_grad_y_g": "grad_y_g", "w_grad_x_f": "grad_f", "w_grad_y_f": "grad_f",
    "w_hvp_yy_g": "hvp", "w_jvp_xy_g": "jvp",
}


class RevealGuard:
    """Wraps a ProblemInstance: rejects queries beyond the current round and
    tallies oracle calls.  A weighted window primitive counts as one query."""

    def __init__(self, inst, round_=0):
        self._inst = inst
        self.round = round_
        self.counts = {"grad_y_g": 0, "grad_f": 0, "hvp": 0, "jvp": 0}

    @property
    def raw(self):
        return self._inst

    def _check(self, t):
        if t > self.round:
            raise RevealViolation(f"round {t} queried while only rounds <= {self.round} are revealed")

    def __getattr__(self, name):
        attr = getattr(self._inst, name)
        if name in _COUNTED:
            key = _COUNTED[name]
            window = name.startswith("w_")

            def wrapped(t, *args):
                self._check(max(t) if window else t)
                self.counts[key] += 1
                return attr(t, *args)

            return wrapped
        if name in ("f", "g", "w_f", "w_g"):
            window = name.startswith("w_")

            def checked(t, *args):
                self._check(max(t) if window else t)
                return attr(t, *args)

            return checked
        if name in ("inner_opt", "true_hypergrad", "variation_increments", "window_inner_opt",
                    "window_true_hypergrad"):
            raise RevealViolation(f"algorithms may not query the measurement oracle {name!r}")
        return attr

    def snapshot(self):
        return dict(self.counts)


@dataclass
class OptimizerState:
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    round: int = 1
    aux: Dict[str, object] = field(default_factory=dict)


@dataclass
class StepReport:
    x_next: np.ndarray
    y_next: np.ndarray
    v_next: np.ndarray
    inner_iters: int
    grad_y_g_queries: int
    hvp_queries: int
    jvp_queries: int
    hypergrad_used: np.ndarray
    condition_lhs: Optional[float] = None
    v_iters: int = 0
    grad_f_queries: int = 0


def _guard(inst, t):
    if isinstance(inst, RevealGuard):
        if inst.round < t:
            inst.round = t
        return inst
    return RevealGuard(inst, t)


def _report(g, before, x_next, y_next, v_next, inner, h, lhs=None, v_iters=0):
    c = g.counts
    return StepReport(
        x_next=x_next, y_next=y_next, v_next=v_next, inner_iters=int(inner),
        grad_y_g_queries=c["grad_y_g"] - before["grad_y_g"],
        hvp_queries=c["hvp"] - before["hvp"],
        jvp_queries=c["jvp"] - before["jvp"],
        hypergrad_used=h, condition_lhs=lhs, v_iters=int(v_iters),
        grad_f_queries=c["grad_f"] - before["grad_f"],
    )


def v_radius(inst) -> float:
    return inst.constants.l_f0 / inst.constants.mu_g


def aobo_step(state: OptimizerState, inst, params: HyperParams) -> StepReport:
    """Adaptive inner loop on y, M projected v-steps, AID and a prox step."""
    t = state.round
    g = _guard(inst, t)
    before = g.snapshot()
    x = state.x
    y = np.array(state.y, dtype=float)
    iters = 0
    while True:
        gy = g.grad_y_g(t, x, y)
        res = float(np.linalg.norm(gy))
        if res <= params.delta:
            break
        if iters >= params.cap_inner:
            raise CappedLoopError(f"aobo inner loop hit cap at round {t}", res, iters)
        y = y - params.alpha * gy
        iters += 1
    vs = solve_v_projected_gd(g, t, x, y, state.v, params.beta, params.m_iters, v_radius(g))
    h = aid_hypergrad(g, t, x, y, vs.v)
    x_next = gradient_mapping(g.x_set, x, h, params.gamma).x_plus
    return _report(g, before, x_next, y, vs.v, iters, h, v_iters=vs.iters)


def fsobo_step(state: OptimizerState, inst, params: HyperParams) -> StepReport:
    """One y-step, one projected v-step, AID and a prox step."""
    t = state.round
    g = _guard(inst, t)
    before = g.snapshot()
    x = state.x
    y = state.y - params.alpha * g.grad_y_g(t, x, state.y)
    vs = solve_v_projected_gd(g, t, x, y, state.v, params.beta, 1, v_radius(g))
    h = aid_hypergrad(g, t, x, y, vs.v)
    x_next = gradient_mapping(g.x_set, x, h, params.gamma).x_plus
    return _report(g, before, x_next, y, vs.v, 1, h, v_iters=1)


def wobo_condition(buf: WindowBuffer, x, y, v, derived, params: HyperParams):
    """Error-tolerance test on the averaged objects; returns (satisfied, lhs).

    The hypergradient term is the gradient mapping, which equals the plain
    hypergradient on unconstrained sets and stays attainable on constrained ones.
    """
    hg = gradient_mapping(buf.inst.x_set, x, win_hypergrad(buf, x, y, v, params.hypergrad_form), params.gamma).mapping
    gy = win_grad_y_g(buf, x, y)
    gv = win_phi_grad(buf, x, y, v)
    lhs = float(hg @ hg + derived.kappa_f * (gy @ gy) + 8 * derived.kappa_g**2 * (gv @ gv))
    return lhs <= params.delta**2 / buf.w_norm**2, lhs


def wobo_step(state: OptimizerState, inst, params: HyperParams) -> StepReport:
    """Sweeps of (y-step, unprojected v-step, prox step) on the window averages
    until the tolerance condition holds.  ``inner_iters`` counts sweeps."""
    t = state.round
    g = _guard(inst, t)
    before = g.snapshot()
    buf = state.aux.get("buf")
    if buf is None:
        buf = WindowBuffer(g, params.window_w, params.eta_weight)
    else:
        buf = WindowBuffer(g, buf.w, buf.eta, buf.entries)
    if not buf.entries or buf.entries[0] != t:
        buf = window_push(buf, t)
    state.aux["buf"] = buf
    derived = state.aux.get("derived") or derive_constants(g.constants, params.alpha, params.beta)
    x, y, v = state.x, state.y, state.v
    sweeps = 0
    while True:
        ok, lhs = wobo_condition(buf, x, y, v, derived, params)
        if ok:
            break
        if sweeps >= params.cap_inner:
            raise CappedLoopError(f"wobo loop hit cap at round {t}", lhs, sweeps)
        y = y - params.alpha * win_grad_y_g(buf, x, y)
        v = v - params.beta * win_phi_grad(buf, x, y, v)
        h = win_hypergrad(buf, x, y, v, params.hypergrad_form)
        x = gradient_mapping(g.x_set, x, h, params.gamma).x_plus
        sweeps += 1
    h = win_hypergrad(buf, x, y, v, params.hypergrad_form) if sweeps == 0 else h
    return _report(g, before, x, y, v, sweeps, h, lhs=lhs, v_iters=sweeps)


def sobow_budget(params: HyperParams, t: int) -> int:
    """CG iterations at round t: M_1 + ceil((t - 1) * growth)."""
    return int(params.m_iters + math.ceil(round((t - 1) * params.m_growth, 9)))


def sobow_step(state: OptimizerState, inst, params: HyperParams) -> StepReport:
    """One y-step, CG from the fixed zero start, projection, AID, prox step."""
    t = state.round
    g = _guard(inst, t)
    before = g.snapshot()
    x = state.x
    y = state.y - params.alpha * g.grad_y_g(t, x, state.y)
    m_t = sobow_budget(params, t)
    vs = solve_v_cg(g, t, x, y, np.zeros(g.d_y), m_t)
    state.aux["m_t"] = m_t
    state.aux["cg_breakdown"] = vs.breakdown
    v = project_ball0(vs.v, v_radius(g))
    h = aid_hypergrad(g, t, x, y, v)
    x_next = gradient_mapping(g.x_set, x, h, params.gamma).x_plus
    return _report(g, before, x_next, y, v, 1, h, v_iters=vs.iters)


def obbo_step(state: OptimizerState, inst, params: HyperParams) -> StepReport:
    """K unrolled inner steps (step alpha), ITD hypergradient, prox step."""
    t = state.round
    g = _guard(inst, t)
    before = g.snapshot()
    x = state.x
    h, y = itd_hypergrad(g, t, x, state.y, params.alpha, params.k_iters)
    x_next = gradient_mapping(g.x_set, x, h, params.gamma).x_plus
    return _report(g, before, x_next, y, state.v, params.k_iters, h)


STEPS: Dict[str, Callable] = {
    "aobo": aobo_step, "fsobo": fsobo_step, "wobo": wobo_step, "sobow": sobow_step, "obbo": obbo_step,
}


@dataclass
class RunRecord:
    algo: str
    seed: int
    horizon: int
    params: HyperParams
    ledger: MetricsLedger
    reports: List[StepReport] = field(default_factory=list)
    status: str = "ok"
    error: Optional[str] = None
    wall_time: float = 0.0
    final_state: Optional[OptimizerState] = None


def run(inst, algo: str, params: HyperParams, hooks: Sequence[Callable] = (), *,
        estimator: Optional[SupEstimator] = None, seed: int = 0, x0=None, y0=None, v0=None,
        keep_reports: bool = True, measure_window: bool = True) -> RunRecord:
    """Drive ``inst`` for rounds 1..T.

    At round t the decision x_t is fixed before f_t, g_t are revealed; regret
    and variation are measured on the raw instance at (x_t, y_t) and are not
    charged to the algorithm's query counts.  ``hooks`` are called as
    hook(t, state, report) after every round.  An algorithm error ends the
    run with status "failed" and the completed rounds preserved.
    """
    if algo not in STEPS:
        raise ParameterDomainError(f"unknown algorithm id {algo!r}; expected one of {ALGORITHMS}")
    if estimator is None:
        estimator = SupEstimator("analytic" if inst.capabilities.analytic_variation else "sampled")
    step = STEPS[algo]
    guard = RevealGuard(inst, 0)
    # deterministic start: origin projected into X unless given
    x = np.zeros(inst.d_x) if x0 is None else np.array(x0, dtype=float)
    x = project(inst.x_set, x)
    y = np.zeros(inst.d_y) if y0 is None else np.array(y0, dtype=float)
    v = np.zeros(inst.d_y) if v0 is None else np.array(v0, dtype=float)
    state = OptimizerState(x, y, v, 1)
    if algo == "wobo":
        state.aux["derived"] = derive_constants(inst.constants, params.alpha, params.beta)
    ledger = MetricsLedger(estimator_mode=estimator.mode, ref_radius=inst.ref_radius)
    rec = RunRecord(algo, seed, inst.horizon, params, ledger)
    mbuf = WindowBuffer(inst, params.window_w, params.eta_weight)
    start = time.perf_counter()
    for t in range(1, inst.horizon + 1):
        state.round = t
        guard.round = t
        try:
            report = step(state, guard, params)
        except Exception as exc:  # the partial record is the deliverable
            rec.status = "failed"
            rec.error = f"round {t}: {type(exc).__name__}: {exc}"
            break
        reg = regret_increment(inst, t, state.x, params.gamma)
        mbuf = window_push(mbuf, t)
        wreg = window_regret_increment(mbuf, inst, t, state.x, params.gamma) if measure_window else 0.0
        variation_update(ledger, inst, t, estimator, state.x, state.y)
        ledger.add_round(t, reg, wreg, inner_iters=report.inner_iters, grad_queries=report.grad_y_g_queries,
                         hvp_queries=report.hvp_queries, jvp_queries=report.jvp_queries,
                         v_iters=report.v_iters)
        if keep_reports:
            rec.reports.append(report)
        for hook in hooks:
            hook(t, state, report)
        state.x, state.y, state.v = report.x_next, report.y_next, report.v_next
    rec.wall_time = time.perf_counter() - start
    rec.final_state = state
    return rec
