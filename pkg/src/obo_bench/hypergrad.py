"""Hypergradient estimation: the quadratic surrogate in v, its solvers, AID and
ITD assemblies, and the exponentially weighted window oracles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .core import ParameterDomainError, window_norm
from .geometry import project_ball0


@dataclass(frozen=True, eq=False)
class VState:
    v: np.ndarray
    iters: int = 0
    breakdown: bool = False


def phi_grad(inst, t, x, y, v):
    """grad_v Phi_t = H_yy v - grad_y f."""
    return inst.hvp_yy_g(t, x, y, v) - inst.grad_y_f(t, x, y)


def solve_v_projected_gd(inst, t, x, y, v0, beta, m_iters, radius) -> VState:
    """``m_iters`` steps of v <- P_V(v - beta grad_v Phi_t) on the ball of ``radius``."""
    v = np.array(v0, dtype=float)
    if m_iters <= 0:
        return VState(v, 0)
    # grad_y f does not depend on v: query it once
    b = inst.grad_y_f(t, x, y)
    for _ in range(int(m_iters)):
        v = project_ball0(v - beta * (inst.hvp_yy_g(t, x, y, v) - b), radius)
    return VState(v, int(m_iters))


def conjugate_gradient(matvec: Callable, b, v0, m_iters) -> VState:
    """Plain CG on matvec(v) = b for exactly ``m_iters`` products.

    Stops early only when the residual is exactly zero or a direction of
    non-positive curvature appears (flagged as breakdown).
    """
    v = np.array(v0, dtype=float)
    if np.any(v):
        r = b - matvec(v)
        used = 1
    else:
        r = np.array(b, dtype=float)
        used = 0
    p = r.copy()
    rr = float(r @ r)
    iters = 0
    breakdown = False
    while iters < m_iters:
        if rr == 0.0:
            break
        ap = matvec(p)
        iters += 1
        pap = float(p @ ap)
        if not pap > 0:
            breakdown = True
            break
        a = rr / pap
        v = v + a * p
        r = r - a * ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return VState(v, iters + used, breakdown)


def solve_v_cg(inst, t, x, y, v0, m_iters) -> VState:
    """CG on H_yy(x, y) v = grad_y f(x, y) starting from ``v0``.

    ``iters`` counts Hessian-vector products (including the initial
    residual product when ``v0`` is nonzero).
    """
    b = inst.grad_y_f(t, x, y)
    return conjugate_gradient(lambda u: inst.hvp_yy_g(t, x, y, u), b, v0, int(m_iters))


def aid_hypergrad(inst, t, x, y, v):
    """grad_x f - grad^2_xy g v."""
    return inst.grad_x_f(t, x, y) - inst.jvp_xy_g(t, x, y, v)


def itd_hypergrad(inst, t, x, y0, eta_step, k_iters) -> Tuple[np.ndarray, np.ndarray]:
    """Derivative of f_t(x, y^K(x)) through ``k_iters`` unrolled inner GD steps.

    The sum over k is accumulated right-to-left with z <- (I - eta H(y^j)) z,
    so the cost is K gradient steps, K cross products and K - 1 Hessian
    products.  Returns the estimate and y^K.
    """
    if k_iters < 1:
        raise ParameterDomainError("k_iters must be >= 1")
    traj = [np.array(y0, dtype=float)]
    y = traj[0]
    for _ in range(int(k_iters)):
        y = y - eta_step * inst.grad_y_g(t, x, y)
        traj.append(y)
    z = inst.grad_y_f(t, x, y)
    acc = inst.jvp_xy_g(t, x, traj[k_iters - 1], z)
    for k in range(k_iters - 2, -1, -1):
        z = z - eta_step * inst.hvp_yy_g(t, x, traj[k + 1], z)
        acc = acc + inst.jvp_xy_g(t, x, traj[k], z)
    return inst.grad_x_f(t, x, y) - eta_step * acc, y


# ---- window machinery ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WindowBuffer:
    """Newest-first round indices of the last ``w`` rounds.

    Missing rounds (t <= 0) count as zero functions, so ``w_norm`` always
    sums over the full window length.
    """

    inst: object
    w: int
    eta: float
    entries: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.w < 1:
            raise ParameterDomainError("window size must be >= 1")
        if not (0 < self.eta <= 1):
            raise ParameterDomainError("eta must lie in (0, 1]")

    @property
    def weights(self) -> Tuple[float, ...]:
        return tuple(self.eta**i for i in range(len(self.entries)))

    @property
    def w_norm(self) -> float:
        return window_norm(self.w, self.eta)

    @property
    def live_weight(self) -> float:
        return float(sum(self.weights))

    @property
    def newest(self) -> int:
        return self.entries[0]

    def _args(self):
        if not self.entries:
            raise ValueError("empty window buffer")
        return self.entries, self.weights


def window_push(buf: WindowBuffer, t: int) -> WindowBuffer:
    if buf.entries and t <= buf.entries[0]:
        raise ValueError(f"rounds must be pushed in increasing order ({t} after {buf.entries[0]})")
    return WindowBuffer(buf.inst, buf.w, buf.eta, ((t,) + buf.entries)[: buf.w])


def _win(buf, name, *args):
    ts, ws = buf._args()
    return getattr(buf.inst, name)(ts, ws, *args) / buf.w_norm


def win_f(buf, x, y):
    return _win(buf, "w_f", x, y)


def win_g(buf, x, y):
    return _win(buf, "w_g", x, y)


def win_grad_y_g(buf, x, y):
    return _win(buf, "w_grad_y_g", x, y)


def win_grad_x_f(buf, x, y):
    return _win(buf, "w_grad_x_f", x, y)


def win_grad_y_f(buf, x, y):
    return _win(buf, "w_grad_y_f", x, y)


def win_hvp_yy_g(buf, x, y, v):
    return _win(buf, "w_hvp_yy_g", x, y, v)


def win_jvp_xy_g(buf, x, y, v):
    return _win(buf, "w_jvp_xy_g", x, y, v)


def win_phi_grad(buf, x, y, v):
    return win_hvp_yy_g(buf, x, y, v) - win_grad_y_f(buf, x, y)


def win_hypergrad(buf, x, y, v, form: str = "xy"):
    """Window hypergradient grad_x f_hat - M v.

    ``form="xy"`` uses the cross derivative (the implicit-function form);
    ``form="yy"`` uses the y-Hessian of the averaged inner objective.
    """
    gx = win_grad_x_f(buf, x, y)
    if form == "xy":
        return gx - win_jvp_xy_g(buf, x, y, v)
    if form == "yy":
        if gx.shape != np.shape(v):
            raise ValueError("the 'yy' window hypergradient needs d_x == d_y")
        return gx - win_hvp_yy_g(buf, x, y, v)
    raise ParameterDomainError(f"unknown hypergradient form {form!r}")


# ---- high-precision subproblem solvers (measurement apparatus) ---------------------


def newton_minimize(value, grad, hvp, y0, tol=1e-10, max_iter=100):
    """Inexact Newton-CG with Armijo backtracking for a smooth strongly convex
    function.  ``hvp(y)`` returns the Hessian matvec at y."""
    y = np.array(y0, dtype=float)
    for _ in range(max_iter):
        gr = grad(y)
        gn = float(np.linalg.norm(gr))
        if gn <= tol:
            return y, gn
        step, _ = solve_linear_precise(hvp(y), -gr, tol=min(0.5, np.sqrt(gn)) * gn * 1e-2)
        f0 = value(y)
        slope = float(gr @ step)
        if not slope < 0:
            step, slope = -gr, -gn**2
        s = 1.0
        while s > 1e-12:
            y_new = y + s * step
            if value(y_new) <= f0 + 1e-4 * s * slope or s < 1e-6:
                break
            s *= 0.5
        y = y + s * step
    gn = float(np.linalg.norm(grad(y)))
    return y, gn


def solve_linear_precise(matvec, b, tol=1e-10, max_iter=None):
    """CG until ||matvec(v) - b|| <= tol; returns (v, residual)."""
    b = np.asarray(b, dtype=float)
    n = b.size
    max_iter = max_iter or 10 * n + 50
    v = np.zeros(n)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    for _ in range(max_iter):
        if np.sqrt(rr) <= tol:
            break
        ap = matvec(p)
        pap = float(p @ ap)
        if not pap > 0:
            break
        a = rr / pap
        v = v + a * p
        r = r - a * ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    res = float(np.linalg.norm(matvec(v) - b))
    return v, res
