"""Oracle verification suites run by ``obo-bench verify``."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..core import SmoothnessConstants, window_norm
from ..geometry import ball, box, gradient_mapping, project, sample_points, unconstrained
from ..hypergrad import WindowBuffer, aid_hypergrad, itd_hypergrad, solve_linear_precise, solve_v_projected_gd, window_push
from ..metrics import window_inner_opt
from ..problems import (
    DriftingQuadratic,
    DriftPath,
    make_block_sigmoid_adversary,
    make_drifting_quadratic,
    make_hypercleaning_synthetic,
    make_window_adversary,
)

FD_H = 1e-6
FD_RTOL = 1e-5


@dataclass
class GroupResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def default_instances() -> List:
    return [
        make_drifting_quadratic(4, 12, DriftPath("linear", 1, 0.5), DriftPath("sqrt-decay", 2, 0.5), 1.5,
                                ball(np.zeros(4), 2.0), curvature_ratio=3.0),
        make_block_sigmoid_adversary(12, 3.0, 2.0),
        make_window_adversary(8, 1.0, 4.0),
        make_hypercleaning_synthetic(12, 10, 3, [0.1, 0.3], 0.2, 0, T=12),
    ]


def _rand_xy(inst, rng):
    t = int(rng.integers(1, inst.horizon + 1))
    if inst.x_set.kind == "unconstrained":
        x = rng.standard_normal(inst.d_x)
    else:
        x = sample_points(inst.x_set, 1, rng, ref_radius=inst.ref_radius or 1.0)[0]
    y = rng.standard_normal(inst.d_y)
    return t, x, y


def _fd_grad(fun, z, h=FD_H):
    out = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        out[i] = (fun(z + e) - fun(z - e)) / (2 * h)
    return out


def _close(a, b, rtol=FD_RTOL):
    return float(np.linalg.norm(a - b)) <= rtol * max(1.0, float(np.linalg.norm(b)))


def check_fd_gradients(instances, n, rng):
    worst = 0.0
    for inst in instances:
        for _ in range(n):
            t, x, y = _rand_xy(inst, rng)
            v = rng.standard_normal(inst.d_y)
            pairs = [
                (inst.grad_x_f(t, x, y), _fd_grad(lambda z: inst.f(t, z, y), x)),
                (inst.grad_y_f(t, x, y), _fd_grad(lambda z: inst.f(t, x, z), y)),
                (inst.grad_y_g(t, x, y), _fd_grad(lambda z: inst.g(t, x, z), y)),
                (inst.hvp_yy_g(t, x, y, v), _fd_grad(lambda z: inst.grad_y_g(t, x, z) @ v, y)),
                (inst.jvp_xy_g(t, x, y, v), _fd_grad(lambda z: inst.grad_y_g(t, z, y) @ v, x)),
            ]
            for a, b in pairs:
                err = float(np.linalg.norm(a - b)) / max(1.0, float(np.linalg.norm(b)))
                worst = max(worst, err)
    return worst <= FD_RTOL, f"max relative error {worst:.2e}"


def check_linearity(instances, n, rng):
    worst = 0.0
    for inst in instances:
        for _ in range(n):
            t, x, y = _rand_xy(inst, rng)
            v1, v2 = rng.standard_normal((2, inst.d_y))
            a = rng.standard_normal()
            for op in (inst.hvp_yy_g, inst.jvp_xy_g):
                lhs = op(t, x, y, v1 + v2)
                rhs = op(t, x, y, v1) + op(t, x, y, v2)
                worst = max(worst, float(np.max(np.abs(lhs - rhs))))
                worst = max(worst, float(np.max(np.abs(op(t, x, y, a * v1) - a * op(t, x, y, v1)))))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def check_stationarity(instances, n, rng):
    worst = 0.0
    for inst in instances:
        if not inst.capabilities.analytic_inner:
            continue
        for _ in range(n):
            t, x, _ = _rand_xy(inst, rng)
            worst = max(worst, float(np.linalg.norm(inst.grad_y_g(t, x, inst.inner_opt(t, x)))))
    return worst <= 1e-10, f"max ||grad_y g(y*)|| {worst:.2e}"


def check_strong_convexity(instances, n, rng):
    worst = np.inf
    for inst in instances:
        mu = inst.constants.mu_g
        for _ in range(n):
            t, x, y1 = _rand_xy(inst, rng)
            y2 = rng.standard_normal(inst.d_y)
            d = y1 - y2
            gap = (inst.grad_y_g(t, x, y1) - inst.grad_y_g(t, x, y2)) @ d - mu * (d @ d)
            worst = min(worst, float(gap / (d @ d)))
    return worst >= -1e-10, f"min normalized margin {worst:.2e}"


def _sets(rng, d=3):
    return [
        unconstrained(d),
        ball(rng.standard_normal(d), 1.0 + rng.uniform()),
        box(-np.ones(d), np.ones(d) * 0.5),
    ]


def check_prox_optimality(n, rng):
    worst = np.inf
    for s in _sets(rng):
        for _ in range(max(1, n // 10)):
            x = project(s, rng.standard_normal(3))
            g = rng.standard_normal(3)
            gamma = rng.uniform(0.1, 2.0)
            xp = gradient_mapping(s, x, g, gamma).x_plus

            def obj(u):
                return g @ u + (u - x) @ (u - x) / (2 * gamma)

            cands = [project(s, x + rng.standard_normal(3) * rng.uniform(0.01, 3)) for _ in range(100)]
            best = obj(xp)
            worst = min(worst, min(obj(c) for c in cands) - best)
    return worst >= -1e-12, f"min candidate advantage {worst:.2e}"


def check_nonexpansive(n, rng):
    worst = 0.0
    for s in _sets(rng):
        for _ in range(n):
            p, q = rng.standard_normal((2, 3)) * 3
            worst = max(worst, float(np.linalg.norm(project(s, p) - project(s, q)) - np.linalg.norm(p - q)))
    return worst <= 1e-12, f"max expansion {worst:.2e}"


def check_contraction(n, rng):
    """Inner GD and projected v-GD ratios on random SPD diagonal quadratics."""
    worst = -np.inf
    for _ in range(n):
        d = 4
        mu = rng.uniform(0.2, 1.0)
        curv = np.sort(rng.uniform(mu, 3.0, d))
        curv[0] = mu
        inst = DriftingQuadratic(d, 2, DriftPath("linear", int(rng.integers(1 << 30))),
                                 DriftPath("linear", int(rng.integers(1 << 30))), mu, curvature=curv)
        L = curv.max()
        alpha = rng.uniform(0.1, 1.0) / L
        x = rng.standard_normal(d)
        y = rng.standard_normal(d)
        ys = inst.inner_opt(1, x)
        y1 = y - alpha * inst.grad_y_g(1, x, y)
        r = np.linalg.norm(y1 - ys) / np.linalg.norm(y - ys)
        worst = max(worst, r - (1 - alpha * mu))
        vstar = (y - inst.C[0]) / curv
        radius = 10 * np.linalg.norm(vstar) + 1
        v0 = rng.standard_normal(d)
        v1 = solve_v_projected_gd(inst, 1, x, y, v0, alpha, 1, radius).v
        r = np.linalg.norm(v1 - vstar) / np.linalg.norm(v0 - vstar)
        worst = max(worst, r - (1 - alpha * mu))
    return worst <= 1e-9, f"max ratio excess {worst:.2e}"


def check_aid_exactness(instances, n, rng):
    worst = 0.0
    for inst in instances:
        if not inst.capabilities.analytic_hypergrad:
            continue
        for _ in range(n):
            t, x, _ = _rand_xy(inst, rng)
            y = inst.inner_opt(t, x)
            v, _ = solve_linear_precise(lambda u: inst.hvp_yy_g(t, x, y, u), inst.grad_y_f(t, x, y), tol=1e-12)
            worst = max(worst, float(np.linalg.norm(aid_hypergrad(inst, t, x, y, v) - inst.true_hypergrad(t, x))))
    return worst <= 1e-8, f"max AID error {worst:.2e}"


def check_itd(n, rng):
    worst_rel = 0.0
    monotone = True
    for _ in range(max(1, n // 10)):
        inst = make_drifting_quadratic(3, 2, DriftPath(seed=int(rng.integers(1 << 30))),
                                       DriftPath(seed=int(rng.integers(1 << 30))), 1.0, curvature_ratio=2.0)
        x = rng.standard_normal(3)
        y0 = rng.standard_normal(3)
        true = inst.true_hypergrad(1, x)
        prev = np.inf
        for k in range(1, 51):
            est, _ = itd_hypergrad(inst, 1, x, y0, 0.5, k)
            err = float(np.linalg.norm(est - true))
            if err > prev + 1e-12:
                monotone = False
            prev = err
        worst_rel = max(worst_rel, prev / float(np.linalg.norm(true)))
    return monotone and worst_rel <= 1e-4, f"K=50 relative error {worst_rel:.2e}, monotone={monotone}"


def window_drift_bound(constants: SmoothnessConstants, w: int, eta: float) -> float:
    W = window_norm(w, eta)
    return (1 + eta**w) * constants.l_g1 * constants.d_diam / (constants.mu_g * W)


def max_window_drift(inst, w, eta, n_x, rng, t_values: Optional[Sequence[int]] = None) -> float:
    """sup over sampled x and rounds of ||y*_{t-1,w}(x) - y*_{t,w}(x)|| for t >= max(2, w)."""
    buf = WindowBuffer(inst, w, eta)
    bufs = {}
    for t in range(1, inst.horizon + 1):
        buf = window_push(buf, t)
        bufs[t] = buf
    ts = t_values or range(max(2, w), inst.horizon + 1)
    worst = 0.0
    if inst.x_set.kind == "unconstrained":
        xs = rng.standard_normal((n_x, inst.d_x)) * (inst.ref_radius or 1.0)
    else:
        xs = sample_points(inst.x_set, n_x, rng, ref_radius=inst.ref_radius or 1.0)
    for t in ts:
        for x in xs:
            d = window_inner_opt(bufs[t - 1], x) - window_inner_opt(bufs[t], x)
            worst = max(worst, float(np.linalg.norm(d)))
    return worst


def check_window_drift(n, rng):
    fams = [
        make_drifting_quadratic(3, 30, DriftPath("linear", 3, 1.0), DriftPath("static", 4), 1.0, curvature_ratio=2.0),
        make_window_adversary(16, 1.0, 4.0),
    ]
    ok = True
    details = []
    for inst in fams:
        for w, eta in ((1, 1.0), (3, 0.7), (4, 1.0)):
            m = max_window_drift(inst, w, eta, n, rng)
            b = window_drift_bound(inst.constants, w, eta)
            ok &= m <= b + 1e-12
            details.append(f"{inst.family}(w={w}): {m:.3g}<={b:.3g}")
    return ok, "; ".join(details)


def run_verify(level: str = "quick", instances=None, seed: int = 0,
               out: Callable[[str], None] = print) -> List[GroupResult]:
    """Run every invariant group; ``level='full'`` multiplies sample counts by 10."""
    full = level == "full"
    n = 100 if full else 10
    rng = np.random.default_rng(seed)
    insts = default_instances() if instances is None else instances
    groups: Dict[str, Callable] = {
        "fd_gradients": lambda: check_fd_gradients(insts, n, rng),
        "hvp_jvp_linearity": lambda: check_linearity(insts, n, rng),
        "inner_stationarity": lambda: check_stationarity(insts, n, rng),
        "strong_convexity": lambda: check_strong_convexity(insts, n, rng),
        "prox_optimality": lambda: check_prox_optimality(10 * n, rng),
        "non_expansiveness": lambda: check_nonexpansive(10 * n, rng),
        "contraction": lambda: check_contraction(10 * n, rng),
        "aid_exactness": lambda: check_aid_exactness(insts, n, rng),
        "itd_convergence": lambda: check_itd(10 * n, rng),
        "window_drift_bound": lambda: check_window_drift(10 * n, rng),
    }
    results = []
    for name, fn in groups.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing group is a failing group
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res = GroupResult(name, bool(ok), detail, time.perf_counter() - t0)
        results.append(res)
        out(f"{'PASS' if res.passed else 'FAIL'} {name}: {detail} ({res.seconds:.2f}s)")
    return results
