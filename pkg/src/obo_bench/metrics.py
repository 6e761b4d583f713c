"""Regret ledgers, environmental-variation trackers and query counters."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .geometry import gradient_mapping, sample_points
from .hypergrad import WindowBuffer, newton_minimize, solve_linear_precise
from .problems import VariationRecord, ZERO_VARIATION

MEASURE_TOL = 1e-10
# accepted residual of the fallback solves; looser than MEASURE_TOL to absorb round-off
MEASURE_ACCEPT = 1e-8


class MeasurementError(RuntimeError):
    """The high-precision fallback solver did not converge."""


# ---- true hypergradients --------------------------------------------------------


def fallback_inner(inst, t, x, y0=None):
    """y*_t(x) by Newton-CG to MEASURE_TOL (cost-exempt)."""
    y0 = np.zeros(inst.d_y) if y0 is None else y0
    y, res = newton_minimize(
        lambda y: inst.g(t, x, y),
        lambda y: inst.grad_y_g(t, x, y),
        lambda y: (lambda u: inst.hvp_yy_g(t, x, y, u)),
        y0, tol=MEASURE_TOL,
    )
    if res > MEASURE_ACCEPT:
        raise MeasurementError(f"inner solve stalled at residual {res!r} (round {t})")
    return y


def fallback_hypergrad(inst, t, x, y0=None):
    """grad F_t(x) from precise inner and linear-system solves."""
    y = fallback_inner(inst, t, x, y0)
    v, res = solve_linear_precise(lambda u: inst.hvp_yy_g(t, x, y, u), inst.grad_y_f(t, x, y), tol=MEASURE_TOL)
    if res > MEASURE_ACCEPT:
        raise MeasurementError(f"linear solve stalled at residual {res!r} (round {t})")
    return inst.grad_x_f(t, x, y) - inst.jvp_xy_g(t, x, y, v)


def hypergrad_of(inst, t, x):
    if inst.capabilities.analytic_hypergrad:
        return inst.true_hypergrad(t, x)
    return fallback_hypergrad(inst, t, x)


def outer_value(inst, t, x):
    """F_t(x) = f_t(x, y*_t(x))."""
    y = inst.inner_opt(t, x) if inst.capabilities.analytic_inner else fallback_inner(inst, t, x)
    return inst.f(t, x, y)


def _window_inner(buf, x):
    inst = buf.inst
    ts, ws = buf._args()
    if inst.capabilities.analytic_inner:
        return inst.window_inner_opt(ts, ws, x)
    y, res = newton_minimize(
        lambda y: inst.w_g(ts, ws, x, y),
        lambda y: inst.w_grad_y_g(ts, ws, x, y),
        lambda y: (lambda u: inst.w_hvp_yy_g(ts, ws, x, y, u)),
        np.zeros(inst.d_y), tol=MEASURE_TOL,
    )
    if res > MEASURE_ACCEPT:
        raise MeasurementError(f"window inner solve stalled at residual {res!r}")
    return y


def window_inner_opt(buf: WindowBuffer, x):
    """Minimizer of the averaged inner objective (zero rounds do not move it)."""
    return _window_inner(buf, x)


def window_true_hypergrad(buf: WindowBuffer, x):
    inst = buf.inst
    ts, ws = buf._args()
    W = buf.w_norm
    if inst.capabilities.analytic_hypergrad:
        return inst.window_true_hypergrad(ts, ws, W, x)
    y = _window_inner(buf, x)
    v, res = solve_linear_precise(lambda u: inst.w_hvp_yy_g(ts, ws, x, y, u), inst.w_grad_y_f(ts, ws, x, y),
                                  tol=MEASURE_TOL)
    if res > MEASURE_ACCEPT:
        raise MeasurementError(f"window linear solve stalled at residual {res!r}")
    # the 1/W factors of f_hat and g_hat cancel inside v
    return (inst.w_grad_x_f(ts, ws, x, y) - inst.w_jvp_xy_g(ts, ws, x, y, v)) / W


def regret_increment(inst, t, x_t, gamma) -> float:
    """||G_X(x_t, grad F_t(x_t), gamma)||^2 with the true hypergradient."""
    m = gradient_mapping(inst.x_set, x_t, hypergrad_of(inst, t, x_t), gamma).mapping
    return float(m @ m)


def window_regret_increment(buf: WindowBuffer, inst, t, x_t, gamma) -> float:
    if buf.inst is not inst:
        buf = WindowBuffer(inst, buf.w, buf.eta, buf.entries)
    if not buf.entries or buf.entries[0] != t:
        raise ValueError(f"window buffer newest round {buf.entries[:1]} does not match t={t}")
    m = gradient_mapping(inst.x_set, x_t, window_true_hypergrad(buf, x_t), gamma).mapping
    return float(m @ m)


# ---- variation ------------------------------------------------------------------------


@dataclass(frozen=True)
class SupEstimator:
    """How suprema over x are taken.

    ``grid`` and ``sampled`` return lower estimates of the supremum.
    """

    mode: str = "analytic"  # analytic | grid | sampled
    n: int = 64
    resolution: int = 21
    seed: int = 0
    probes: int = 4

    def __post_init__(self):
        if self.mode not in ("analytic", "grid", "sampled"):
            raise ValueError(f"unknown estimator mode {self.mode!r}")

    @property
    def is_lower_estimate(self) -> bool:
        return self.mode != "analytic"


def _grid_points(inst, resolution):
    s = inst.x_set
    d = inst.d_x
    if resolution**d > 200_000:
        raise ValueError(f"grid of {resolution}^{d} points is too large; use sampled mode")
    if s.kind == "box":
        lo, hi = s.lower, s.upper
    else:
        c = np.zeros(d) if s.kind == "unconstrained" else s.center
        r = (inst.ref_radius or 1.0) if s.kind == "unconstrained" else s.radius
        lo, hi = c - r, c + r
    axes = [np.linspace(lo[i], hi[i], resolution) for i in range(d)]
    pts = np.array(list(itertools.product(*axes)))
    if s.kind != "box":
        c = np.zeros(d) if s.kind == "unconstrained" else s.center
        r = (inst.ref_radius or 1.0) if s.kind == "unconstrained" else s.radius
        pts = pts[np.linalg.norm(pts - c, axis=1) <= r + 1e-12]
    return pts


def _x_samples(inst, est: SupEstimator, t):
    if est.mode == "grid":
        return _grid_points(inst, est.resolution)
    rng = np.random.default_rng([est.seed, t])
    return sample_points(inst.x_set, est.n, rng, ref_radius=inst.ref_radius or 1.0)


def sampled_variation(inst, t, est: SupEstimator, x_t=None, y_t=None) -> VariationRecord:
    """Lower estimates of every per-round variation term by sampling x.

    G-terms are evaluated at the iterate (x_t, y_t); operator-norm differences
    are probed with ``est.probes`` random unit vectors.
    """
    if t <= 1:
        return ZERO_VARIATION
    xs = _x_samples(inst, est, t)
    rng = np.random.default_rng([est.seed, t, 7])
    probes = rng.standard_normal((est.probes, inst.d_y))
    probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    analytic = inst.capabilities.analytic_inner
    v = h2 = fy = dx = gyy_sup = 0.0
    for x in xs:
        y_now = inst.inner_opt(t, x) if analytic else fallback_inner(inst, t, x)
        y_prev = inst.inner_opt(t - 1, x) if analytic else fallback_inner(inst, t - 1, x, y_now)
        v = max(v, abs(inst.f(t, x, y_now) - inst.f(t - 1, x, y_prev)))
        dy = y_now - y_prev
        h2 = max(h2, float(dy @ dy))
        d = inst.grad_y_f(t, x, y_now) - inst.grad_y_f(t - 1, x, y_now)
        fy = max(fy, float(d @ d))
        d = inst.grad_x_f(t, x, y_now) - inst.grad_x_f(t - 1, x, y_now)
        dx = max(dx, float(d @ d))
        for u in probes:
            d = inst.hvp_yy_g(t, x, y_now, u) - inst.hvp_yy_g(t - 1, x, y_now, u)
            gyy_sup = max(gyy_sup, float(d @ d))
    g_y = g_yy = g_xy = 0.0
    if x_t is not None and y_t is not None:
        d = inst.grad_y_g(t, x_t, y_t) - inst.grad_y_g(t - 1, x_t, y_t)
        g_y = float(d @ d)
        for u in probes:
            d = inst.jvp_xy_g(t, x_t, y_t, u) - inst.jvp_xy_g(t - 1, x_t, y_t, u)
            g_xy = max(g_xy, float(d @ d))
            d = inst.hvp_yy_g(t, x_t, y_t, u) - inst.hvp_yy_g(t - 1, x_t, y_t, u)
            g_yy = max(g_yy, float(d @ d))
    return VariationRecord(
        v_inc=v, h2_inc=h2, e2_inc=gyy_sup + fy, p_inc=dx + g_y + g_xy,
        psi_inc=g_y + g_yy + g_xy + dx + fy,
    )


def measure_variation(inst, t, est: SupEstimator, x_t=None, y_t=None) -> VariationRecord:
    if t <= 1:
        return ZERO_VARIATION
    if est.mode == "analytic":
        if not inst.capabilities.analytic_variation:
            raise ValueError(f"{inst.family} has no analytic variation; choose grid or sampled")
        return inst.variation_increments(t, x_t, y_t)
    return sampled_variation(inst, t, est, x_t, y_t)


# ---- ledger -------------------------------------------------------------------------------

_INC_FIELDS = ("regret_inc", "win_regret_inc", "v_inc", "h2_inc", "e2_inc", "p_inc", "psi_inc")
_COUNT_FIELDS = ("inner_iters", "grad_queries", "hvp_queries", "jvp_queries", "v_iters")


@dataclass
class MetricsLedger:
    """Per-round increments and query counts; cumulative columns are prefix sums.

    Variation columns follow a fixed convention: v/h2/e2 and the D-parts of
    p/psi are suprema, the G-parts are taken at the run's iterates.
    ``ref_radius`` records the reference ball used for unconstrained sets.
    """

    t: List[int] = field(default_factory=list)
    regret_inc: List[float] = field(default_factory=list)
    win_regret_inc: List[float] = field(default_factory=list)
    v_inc: List[float] = field(default_factory=list)
    h2_inc: List[float] = field(default_factory=list)
    e2_inc: List[float] = field(default_factory=list)
    p_inc: List[float] = field(default_factory=list)
    psi_inc: List[float] = field(default_factory=list)
    inner_iters: List[int] = field(default_factory=list)
    grad_queries: List[int] = field(default_factory=list)
    hvp_queries: List[int] = field(default_factory=list)
    jvp_queries: List[int] = field(default_factory=list)
    v_iters: List[int] = field(default_factory=list)
    estimator_mode: str = "analytic"
    ref_radius: Optional[float] = None
    _pending: Optional[VariationRecord] = None

    def __len__(self):
        return len(self.t)

    def set_variation(self, rec: VariationRecord):
        self._pending = rec

    def add_round(self, t, regret_inc, win_regret_inc, inner_iters=0, grad_queries=0,
                  hvp_queries=0, jvp_queries=0, v_iters=0, variation: Optional[VariationRecord] = None):
        rec = variation or self._pending or ZERO_VARIATION
        self._pending = None
        vals = dict(regret_inc=regret_inc, win_regret_inc=win_regret_inc, v_inc=rec.v_inc,
                    h2_inc=rec.h2_inc, e2_inc=rec.e2_inc, p_inc=rec.p_inc, psi_inc=rec.psi_inc)
        for k, val in vals.items():
            val = float(val)
            if not val >= 0:
                raise ValueError(f"{k} must be a non-negative number, got {val!r}")
            getattr(self, k).append(val)
        for k, val in dict(inner_iters=inner_iters, grad_queries=grad_queries, hvp_queries=hvp_queries,
                           jvp_queries=jvp_queries, v_iters=v_iters).items():
            getattr(self, k).append(int(val))
        self.t.append(int(t))

    def cumulative(self, name) -> List[float]:
        return list(itertools.accumulate(getattr(self, name)))

    @property
    def cum_regret(self):
        return self.cumulative("regret_inc")

    @property
    def cum_win_regret(self):
        return self.cumulative("win_regret_inc")

    def concat(self, other: "MetricsLedger") -> "MetricsLedger":
        out = MetricsLedger(estimator_mode=self.estimator_mode, ref_radius=self.ref_radius)
        for k in ("t",) + _INC_FIELDS + _COUNT_FIELDS:
            setattr(out, k, list(getattr(self, k)) + list(getattr(other, k)))
        return out

    def split(self, n) -> tuple:
        a = MetricsLedger(estimator_mode=self.estimator_mode, ref_radius=self.ref_radius)
        b = MetricsLedger(estimator_mode=self.estimator_mode, ref_radius=self.ref_radius)
        for k in ("t",) + _INC_FIELDS + _COUNT_FIELDS:
            col = getattr(self, k)
            setattr(a, k, list(col[:n]))
            setattr(b, k, list(col[n:]))
        return a, b


def variation_update(ledger: MetricsLedger, inst, t, estimator: SupEstimator, x_t=None, y_t=None) -> MetricsLedger:
    """Stage the round-t variation record; round 1 stages zeros."""
    ledger.set_variation(measure_variation(inst, t, estimator, x_t, y_t))
    return ledger


def slope_fit(ts, cum) -> Optional[float]:
    """OLS slope of ln(cum) on ln(t) over t in [T/2, T]; None if undefined."""
    ts = np.asarray(ts, dtype=float)
    cum = np.asarray(cum, dtype=float)
    if ts.size < 2:
        return None
    T = ts[-1]
    sel = ts >= T / 2
    if sel.sum() < 2 or np.any(cum[sel] <= 0):
        return None
    lx = np.log(ts[sel])
    ly = np.log(cum[sel])
    lx = lx - lx.mean()
    return float(lx @ (ly - ly.mean()) / (lx @ lx))


def _total(col):
    return float(math.fsum(col)) if col and isinstance(col[0], float) else sum(col)


def summarize(ledger: MetricsLedger, horizon: int) -> dict:
    """Aggregate totals plus the late-horizon log-log slope of cumulative regret."""
    if len(ledger) == 0:
        raise ValueError("cannot summarize an empty ledger")
    cum = ledger.cum_regret
    return {
        "T": int(horizon),
        "reg_T": cum[-1],
        "win_reg_T": ledger.cum_win_regret[-1],
        "V_T": _total(ledger.v_inc),
        "H2_T": _total(ledger.h2_inc),
        "E2_T": _total(ledger.e2_inc),
        "P_T": _total(ledger.p_inc),
        "Psi_T": _total(ledger.psi_inc),
        "I_T": int(sum(ledger.inner_iters)),
        "grad_queries": int(sum(ledger.grad_queries)),
        "hvp_queries": int(sum(ledger.hvp_queries)),
        "jvp_queries": int(sum(ledger.jvp_queries)),
        "v_iters": int(sum(ledger.v_iters)),
        "slope_fit": slope_fit(ledger.t, cum),
    }
