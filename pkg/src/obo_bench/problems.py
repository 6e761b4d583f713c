"""Time-indexed bilevel oracles and the synthetic problem families.

Every family exposes f_t, g_t values plus first-order gradients, the
Hessian-vector product with grad^2_yy g_t and the cross product
grad^2_xy g_t v (a d_x vector).  Window primitives take parallel tuples of
round indices and weights and return the weighted sum (unnormalized).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .core import ParameterDomainError, SmoothnessConstants, UnsupportedCapability
from .geometry import ConstraintSet, box, sup_abs_affine, unconstrained

# stands in for an identically zero Lipschitz constant
NEGLIGIBLE = 1e-12


def sigmoid(z):
    return expit(z)


def dsigmoid(z):
    s = expit(z)
    return s * (1 - s)


def d2sigmoid(z):
    s = expit(z)
    return s * (1 - s) * (1 - 2 * s)


# max |sigma''| over the real line
D2SIG_MAX = 1 / (6 * math.sqrt(3))


@dataclass(frozen=True)
class Capabilities:
    analytic_inner: bool = False
    analytic_hypergrad: bool = False
    analytic_variation: bool = False


@dataclass(frozen=True)
class VariationRecord:
    v_inc: float = 0.0
    h2_inc: float = 0.0
    e2_inc: float = 0.0
    p_inc: float = 0.0
    psi_inc: float = 0.0


ZERO_VARIATION = VariationRecord()


class ProblemInstance:
    """Base class; families override the per-round oracles."""

    family = "abstract"

    def __init__(self, d_x: int, d_y: int, horizon: int, x_set: ConstraintSet,
                 constants: SmoothnessConstants, capabilities: Capabilities,
                 ref_radius: Optional[float] = None):
        self.d_x = int(d_x)
        self.d_y = int(d_y)
        self.horizon = int(horizon)
        self.x_set = x_set
        self.constants = constants
        self.capabilities = capabilities
        # radius of the x-region used for variation suprema on unconstrained sets
        self.ref_radius = ref_radius

    def check_round(self, t: int):
        if not (1 <= t <= self.horizon):
            raise IndexError(f"round {t} outside [1, {self.horizon}]")

    # -- scalar values (used by finite-difference checks and line searches)
    def f(self, t, x, y) -> float:
        raise NotImplementedError

    def g(self, t, x, y) -> float:
        raise NotImplementedError

    # -- first-order oracles
    def grad_x_f(self, t, x, y):
        raise NotImplementedError

    def grad_y_f(self, t, x, y):
        raise NotImplementedError

    def grad_x_g(self, t, x, y):
        raise NotImplementedError

    def grad_y_g(self, t, x, y):
        raise NotImplementedError

    # -- second-order products
    def hvp_yy_g(self, t, x, y, v):
        raise NotImplementedError

    def jvp_xy_g(self, t, x, y, v):
        raise NotImplementedError

    # -- analytic extras
    def inner_opt(self, t, x):
        raise UnsupportedCapability(f"{self.family} has no analytic inner solution")

    def true_hypergrad(self, t, x):
        raise UnsupportedCapability(f"{self.family} has no analytic hypergradient")

    def variation_increments(self, t, x=None, y=None) -> VariationRecord:
        raise UnsupportedCapability(f"{self.family} has no analytic variation")

    def window_inner_opt(self, ts, ws, x):
        raise UnsupportedCapability(f"{self.family} has no analytic window inner solution")

    def window_true_hypergrad(self, ts, ws, w_norm, x):
        raise UnsupportedCapability(f"{self.family} has no analytic window hypergradient")

    # -- weighted window primitives; families may vectorize these
    def _wsum(self, name, ts, ws, *args):
        fn = getattr(self, name)
        out = None
        for t, w in zip(ts, ws):
            term = w * fn(t, *args)
            out = term if out is None else out + term
        if out is None:
            raise ValueError("empty window")
        return out

    def w_f(self, ts, ws, x, y):
        return self._wsum("f", ts, ws, x, y)

    def w_g(self, ts, ws, x, y):
        return self._wsum("g", ts, ws, x, y)

    def w_grad_x_f(self, ts, ws, x, y):
        return self._wsum("grad_x_f", ts, ws, x, y)

    def w_grad_y_f(self, ts, ws, x, y):
        return self._wsum("grad_y_f", ts, ws, x, y)

    def w_grad_y_g(self, ts, ws, x, y):
        return self._wsum("grad_y_g", ts, ws, x, y)

    def w_hvp_yy_g(self, ts, ws, x, y, v):
        return self._wsum("hvp_yy_g", ts, ws, x, y, v)

    def w_jvp_xy_g(self, ts, ws, x, y, v):
        return self._wsum("jvp_xy_g", ts, ws, x, y, v)


# ---- module-level oracle entry points --------------------------------------

def grad_x_f(inst, t, x, y):
    return inst.grad_x_f(t, x, y)


def grad_y_f(inst, t, x, y):
    return inst.grad_y_f(t, x, y)


def grad_y_g(inst, t, x, y):
    return inst.grad_y_g(t, x, y)


def hvp_yy_g(inst, t, x, y, v):
    return inst.hvp_yy_g(t, x, y, v)


def jvp_xy_g(inst, t, x, y, v):
    return inst.jvp_xy_g(t, x, y, v)


def inner_opt(inst, t, x):
    if not inst.capabilities.analytic_inner:
        raise UnsupportedCapability(f"{inst.family} has no analytic inner solution")
    return inst.inner_opt(t, x)


def true_hypergrad(inst, t, x):
    if not inst.capabilities.analytic_hypergrad:
        raise UnsupportedCapability(f"{inst.family} has no analytic hypergradient")
    return inst.true_hypergrad(t, x)


def variation_increments(inst, t, x=None, y=None) -> VariationRecord:
    if not inst.capabilities.analytic_variation:
        raise UnsupportedCapability(f"{inst.family} has no analytic variation")
    if t <= 1:
        return ZERO_VARIATION
    return inst.variation_increments(t, x, y)


def _vec(a, n, name):
    a = np.asarray(a, dtype=float)
    if a.shape != (n,):
        raise ValueError(f"{name}: expected shape ({n},), got {a.shape}")
    return a


# ---- drift paths ------------------------------------------------------------

DRIFT_KINDS = ("static", "step-change", "sqrt-decay", "linear")


@dataclass(frozen=True)
class DriftPath:
    """Deterministic trajectory p_1..p_T in R^d.

    ``offset`` is the norm of the random starting point; ``scale`` sets the
    drift magnitude.  ``linear`` moves at constant speed around a circle of
    radius ``scale`` (bounded, so per-round variation stays constant);
    ``sqrt-decay`` alternates along a fixed direction with step
    ``scale / sqrt(t)``.
    """

    kind: str = "static"
    seed: int = 0
    scale: float = 1.0
    offset: float = 1.0
    omega: float = 0.1

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ParameterDomainError(f"unknown drift kind {self.kind!r}")
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise ParameterDomainError("drift scale must be finite and >= 0")

    def realize(self, T: int, d: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)

        def unit():
            u = rng.standard_normal(d)
            return u / np.linalg.norm(u)

        p1 = self.offset * unit()
        out = np.tile(p1, (T, 1))
        if self.kind == "static" or T == 1:
            return out
        t = np.arange(1, T + 1, dtype=float)
        if self.kind == "step-change":
            jump = self.scale * unit()
            out[t > T / 2] += jump
        elif self.kind == "sqrt-decay":
            u = unit()
            steps = np.zeros(T)
            steps[1:] = self.scale * (-1.0) ** t[1:] / np.sqrt(t[1:])
            out += np.cumsum(steps)[:, None] * u
        else:
            a = unit()
            b = unit()
            b -= (b @ a) * a
            nb = np.linalg.norm(b)
            b = b / nb if nb > 1e-12 else np.zeros(d)
            ang = self.omega * (t - 1)
            out += self.scale * ((np.cos(ang) - 1)[:, None] * a + np.sin(ang)[:, None] * b)
        return out


def _region_radius(x_set: ConstraintSet, ref_radius: Optional[float]) -> float:
    if x_set.kind == "ball":
        return float(np.linalg.norm(x_set.center) + x_set.radius)
    if x_set.kind == "box":
        return float(np.linalg.norm(np.maximum(np.abs(x_set.lower), np.abs(x_set.upper))))
    return float(ref_radius)


# ---- drifting quadratic -----------------------------------------------------

class DriftingQuadratic(ProblemInstance):
    """g_t = 1/2 (y - x - d_t)^T A (y - x - d_t), f_t = 1/2 ||y - c_t||^2.

    A = diag(curvature).  y*_t(x) = x + d_t and F_t(x) = 1/2 ||x + d_t - c_t||^2.
    """

    family = "drifting_quadratic"

    def __init__(self, d, T, drift_d, drift_c, mu_g, x_set=None, curvature=None, ref_radius=None):
        if not (mu_g > 0):
            raise ParameterDomainError(f"mu_g must be positive, got {mu_g!r}")
        if d < 1 or T < 1:
            raise ParameterDomainError("d and T must be >= 1")
        x_set = unconstrained(d) if x_set is None else x_set
        if x_set.dim is not None and x_set.dim != d:
            raise ValueError("x_set dimension does not match d")
        self.D = drift_d.realize(T, d)
        self.C = drift_c.realize(T, d)
        self.E = self.D - self.C
        if curvature is None:
            curvature = np.full(d, float(mu_g))
        self.A = np.asarray(curvature, dtype=float).reshape(d)
        if np.any(self.A <= 0):
            raise ParameterDomainError("curvature entries must be positive")
        emax = float(np.max(np.linalg.norm(self.E, axis=1)))
        if ref_radius is None and x_set.kind == "unconstrained":
            ref_radius = 2 * emax + 1.0
        R = _region_radius(x_set, ref_radius)
        l_f0 = R + emax
        diam = 2 * float(np.max(np.linalg.norm(self.D - self.D[0], axis=1)))
        consts = SmoothnessConstants(
            l_f0=l_f0, l_f1=1.0, l_g1=float(self.A.max()), l_g2=NEGLIGIBLE,
            mu_g=float(self.A.min()), q=max(0.5 * l_f0**2, NEGLIGIBLE), d_diam=diam,
        )
        super().__init__(d, d, T, x_set, consts, Capabilities(True, True, True), ref_radius)

    def f(self, t, x, y):
        self.check_round(t)
        r = y - self.C[t - 1]
        return 0.5 * float(r @ r)

    def g(self, t, x, y):
        self.check_round(t)
        r = y - x - self.D[t - 1]
        return 0.5 * float(r @ (self.A * r))

    def grad_x_f(self, t, x, y):
        self.check_round(t)
        return np.zeros(self.d_x)

    def grad_y_f(self, t, x, y):
        self.check_round(t)
        return y - self.C[t - 1]

    def grad_y_g(self, t, x, y):
        self.check_round(t)
        return self.A * (y - x - self.D[t - 1])

    def grad_x_g(self, t, x, y):
        return -self.grad_y_g(t, x, y)

    def hvp_yy_g(self, t, x, y, v):
        self.check_round(t)
        return self.A * _vec(v, self.d_y, "v")

    def jvp_xy_g(self, t, x, y, v):
        self.check_round(t)
        return -self.A * _vec(v, self.d_y, "v")

    def inner_opt(self, t, x):
        self.check_round(t)
        return np.asarray(x, dtype=float) + self.D[t - 1]

    def true_hypergrad(self, t, x):
        self.check_round(t)
        return np.asarray(x, dtype=float) + self.E[t - 1]

    def F(self, t, x):
        r = np.asarray(x, dtype=float) + self.E[t - 1]
        return 0.5 * float(r @ r)

    def variation_increments(self, t, x=None, y=None):
        self.check_round(t)
        if t == 1:
            return ZERO_VARIATION
        de = self.E[t - 1] - self.E[t - 2]
        b = 0.5 * (self.E[t - 1] @ self.E[t - 1] - self.E[t - 2] @ self.E[t - 2])
        v = sup_abs_affine(self.x_set, de, b, self.ref_radius)
        dd = self.D[t - 1] - self.D[t - 2]
        dc = self.C[t - 1] - self.C[t - 2]
        h2 = float(dd @ dd)
        e2 = float(dc @ dc)
        g_y = float(np.sum((self.A * dd) ** 2))
        return VariationRecord(v_inc=v, h2_inc=h2, e2_inc=e2, p_inc=g_y, psi_inc=g_y + e2)

    # window objects: all rounds share A, so the averaged minimizer is the
    # weighted mean shift over live rounds
    def window_inner_opt(self, ts, ws, x):
        w = np.asarray(ws, dtype=float)
        idx = np.asarray(ts) - 1
        return np.asarray(x, dtype=float) + (w @ self.D[idx]) / w.sum()

    def window_true_hypergrad(self, ts, ws, w_norm, x):
        w = np.asarray(ws, dtype=float)
        idx = np.asarray(ts) - 1
        ybar = self.window_inner_opt(ts, ws, x)
        cbar = (w @ self.C[idx]) / w.sum()
        return (w.sum() / w_norm) * (ybar - cbar)


def make_drifting_quadratic(d: int, T: int, drift_d: DriftPath, drift_c: DriftPath, mu_g: float,
                            x_set: Optional[ConstraintSet] = None, *, curvature_ratio: float = 1.0,
                            ref_radius: Optional[float] = None) -> DriftingQuadratic:
    """Benign family with every analytic capability.

    ``curvature_ratio > 1`` spreads the Hessian eigenvalues linearly over
    [mu_g, mu_g * ratio].
    """
    if not (mu_g > 0):
        raise ParameterDomainError(f"mu_g must be positive, got {mu_g!r}")
    if curvature_ratio < 1:
        raise ParameterDomainError("curvature_ratio must be >= 1")
    curv = np.linspace(mu_g, mu_g * curvature_ratio, d) if curvature_ratio > 1 else None
    return DriftingQuadratic(d, T, drift_d, drift_c, mu_g, x_set, curvature=curv, ref_radius=ref_radius)


# ---- block sigmoid adversary ---------------------------------------------------

class BlockSigmoidAdversary(ProblemInstance):
    """f_t = c sig(y_k) + c sig(x_k) with k the active block, g = mu/2 ||y - x||^2."""

    family = "block_sigmoid"

    def __init__(self, T, v_budget, q, l_f0=1.0, l_f1=1.0, mu_g=1.0, l_g2=NEGLIGIBLE):
        if v_budget < 0:
            raise ParameterDomainError("v_budget must be >= 0")
        if not q > 0:
            raise ParameterDomainError("q must be positive")
        n_blocks = math.ceil(round((1 + v_budget) / q, 12))
        if n_blocks > T:
            raise ParameterDomainError(f"variation budget too large: {n_blocks} blocks exceed horizon {T}")
        self.n_blocks = n_blocks
        self.block_len = int(math.floor(round(q * T / (1 + v_budget), 12)))
        self.c = min(q / 2, 2 * math.sqrt(2) * l_f0, 6 * math.sqrt(3) * l_f1)
        self.mu = float(mu_g)
        consts = SmoothnessConstants(l_f0=l_f0, l_f1=l_f1, l_g1=mu_g, l_g2=l_g2, mu_g=mu_g, q=q)
        super().__init__(n_blocks, n_blocks, T, unconstrained(n_blocks), consts,
                         Capabilities(True, True, True))
        self.first_step_constant = float(np.sum(self.true_hypergrad(1, np.zeros(n_blocks)) ** 2))

    def block(self, t) -> int:
        self.check_round(t)
        return min((t - 1) // self.block_len, self.n_blocks - 1)

    def block_starts(self):
        return [k * self.block_len + 1 for k in range(self.n_blocks)]

    def f(self, t, x, y):
        k = self.block(t)
        return float(self.c * (sigmoid(y[k]) + sigmoid(x[k])))

    def g(self, t, x, y):
        self.check_round(t)
        r = y - x
        return 0.5 * self.mu * float(r @ r)

    def _unit(self, k, val):
        out = np.zeros(self.n_blocks)
        out[k] = val
        return out

    def grad_x_f(self, t, x, y):
        k = self.block(t)
        return self._unit(k, self.c * dsigmoid(x[k]))

    def grad_y_f(self, t, x, y):
        k = self.block(t)
        return self._unit(k, self.c * dsigmoid(y[k]))

    def grad_y_g(self, t, x, y):
        self.check_round(t)
        return self.mu * (y - x)

    def grad_x_g(self, t, x, y):
        return -self.grad_y_g(t, x, y)

    def hvp_yy_g(self, t, x, y, v):
        self.check_round(t)
        return self.mu * _vec(v, self.d_y, "v")

    def jvp_xy_g(self, t, x, y, v):
        self.check_round(t)
        return -self.mu * _vec(v, self.d_y, "v")

    def inner_opt(self, t, x):
        self.check_round(t)
        return np.array(x, dtype=float)

    def true_hypergrad(self, t, x):
        k = self.block(t)
        return self._unit(k, 2 * self.c * dsigmoid(x[k]))

    def variation_increments(self, t, x=None, y=None):
        if t == 1 or self.block(t) == self.block(t - 1):
            return ZERO_VARIATION
        c2 = self.c**2 / 8
        return VariationRecord(v_inc=2 * self.c, e2_inc=c2, p_inc=c2, psi_inc=2 * c2)

    def window_inner_opt(self, ts, ws, x):
        return np.array(x, dtype=float)

    def window_true_hypergrad(self, ts, ws, w_norm, x):
        return sum(w * self.true_hypergrad(t, x) for t, w in zip(ts, ws)) / w_norm


def make_block_sigmoid_adversary(T: int, v_budget: float, q: float, **kw) -> BlockSigmoidAdversary:
    return BlockSigmoidAdversary(T, v_budget, q, **kw)


# ---- per-coordinate window adversary ----------------------------------------------

class WindowAdversary(ProblemInstance):
    """f_t = c sig(y_t) + c sig(x_t), g = mu/2 ||y - phi(x)||^2, phi_i = sig(x_i)/sqrt(d).

    Dimension d = T: round t acts on coordinate t only.  phi maps into
    [0, 1/sqrt(d)]^d, whose diameter is 1.
    """

    family = "window_adversary"

    def __init__(self, T, c_scale, mu, d_max=4096):
        if T > d_max:
            raise ParameterDomainError(f"horizon {T} exceeds the dimension cap d_max={d_max}")
        if not (c_scale > 0 and mu > 0):
            raise ParameterDomainError("c_scale and mu must be positive")
        self.c = float(c_scale)
        self.mu = float(mu)
        self.sqd = math.sqrt(T)
        c = self.c
        consts = SmoothnessConstants(
            l_f0=math.sqrt(2) * c / 4, l_f1=c * D2SIG_MAX, l_g1=mu,
            l_g2=mu * D2SIG_MAX / self.sqd, mu_g=mu, q=2 * c, d_diam=1.0,
        )
        super().__init__(T, T, T, unconstrained(T), consts, Capabilities(True, True, True))

    def phi(self, x):
        return sigmoid(x) / self.sqd

    def f(self, t, x, y):
        self.check_round(t)
        i = t - 1
        return float(self.c * (sigmoid(y[i]) + sigmoid(x[i])))

    def g(self, t, x, y):
        self.check_round(t)
        r = y - self.phi(x)
        return 0.5 * self.mu * float(r @ r)

    def _unit(self, i, val):
        out = np.zeros(self.d_x)
        out[i] = val
        return out

    def grad_x_f(self, t, x, y):
        self.check_round(t)
        return self._unit(t - 1, self.c * dsigmoid(x[t - 1]))

    def grad_y_f(self, t, x, y):
        self.check_round(t)
        return self._unit(t - 1, self.c * dsigmoid(y[t - 1]))

    def grad_y_g(self, t, x, y):
        self.check_round(t)
        return self.mu * (y - self.phi(x))

    def grad_x_g(self, t, x, y):
        self.check_round(t)
        return -self.mu * dsigmoid(x) / self.sqd * (y - self.phi(x))

    def hvp_yy_g(self, t, x, y, v):
        self.check_round(t)
        return self.mu * _vec(v, self.d_y, "v")

    def jvp_xy_g(self, t, x, y, v):
        self.check_round(t)
        return -self.mu * dsigmoid(x) / self.sqd * _vec(v, self.d_y, "v")

    def inner_opt(self, t, x):
        self.check_round(t)
        return self.phi(np.asarray(x, dtype=float))

    def true_hypergrad(self, t, x):
        self.check_round(t)
        i = t - 1
        ph = sigmoid(x[i]) / self.sqd
        val = self.c * dsigmoid(ph) * dsigmoid(x[i]) / self.sqd + self.c * dsigmoid(x[i])
        return self._unit(i, val)

    def variation_increments(self, t, x=None, y=None):
        self.check_round(t)
        if t == 1:
            return ZERO_VARIATION
        c2 = self.c**2 / 8
        v = self.c * (sigmoid(1 / self.sqd) + 0.5)
        return VariationRecord(v_inc=v, e2_inc=c2, p_inc=c2, psi_inc=2 * c2)

    # vectorized window primitives
    def _idx(self, ts, ws):
        return np.asarray(ts, dtype=int) - 1, np.asarray(ws, dtype=float)

    def w_f(self, ts, ws, x, y):
        i, w = self._idx(ts, ws)
        return float(self.c * (w @ (sigmoid(y[i]) + sigmoid(x[i]))))

    def w_g(self, ts, ws, x, y):
        return float(np.sum(ws)) * self.g(ts[0], x, y)

    def w_grad_x_f(self, ts, ws, x, y):
        i, w = self._idx(ts, ws)
        out = np.zeros(self.d_x)
        out[i] = self.c * w * dsigmoid(x[i])
        return out

    def w_grad_y_f(self, ts, ws, x, y):
        i, w = self._idx(ts, ws)
        out = np.zeros(self.d_y)
        out[i] = self.c * w * dsigmoid(y[i])
        return out

    def w_grad_y_g(self, ts, ws, x, y):
        return float(np.sum(ws)) * self.mu * (y - self.phi(x))

    def w_hvp_yy_g(self, ts, ws, x, y, v):
        return float(np.sum(ws)) * self.mu * _vec(v, self.d_y, "v")

    def w_jvp_xy_g(self, ts, ws, x, y, v):
        return float(np.sum(ws)) * self.jvp_xy_g(ts[0], x, y, v)

    def window_inner_opt(self, ts, ws, x):
        return self.phi(np.asarray(x, dtype=float))

    def window_true_hypergrad(self, ts, ws, w_norm, x):
        i, w = self._idx(ts, ws)
        ph = sigmoid(x[i]) / self.sqd
        out = np.zeros(self.d_x)
        out[i] = w * self.c * dsigmoid(x[i]) * (dsigmoid(ph) / self.sqd + 1)
        return out / w_norm


def make_window_adversary(T: int, c_scale: float, mu: float, *, d_max: int = 4096) -> WindowAdversary:
    return WindowAdversary(T, c_scale, mu, d_max=d_max)


# ---- synthetic hyper-cleaning -----------------------------------------------------

class HyperCleaning(ProblemInstance):
    """Per-sample reweighting of a ridge logistic regression.

    x_i is the weight logit of training sample i, y = theta.
    g_t = (1/n) sum sig(x_i) l(b_i^t a_i^T theta) + ridge/2 ||theta||^2 with the
    round's corrupted labels b^t; f_t is the clean validation logistic loss.
    """

    family = "hypercleaning"

    def __init__(self, n_train, n_val, d, corruption_rate_schedule, ridge, seed, T, x_bound=6.0):
        sched = [float(r) for r in corruption_rate_schedule]
        if not sched:
            raise ParameterDomainError("corruption schedule must be non-empty")
        if any(not (0.0 <= r <= 1.0) for r in sched):
            raise ParameterDomainError("corruption rates must lie in [0, 1]")
        if not ridge > 0:
            raise ParameterDomainError("ridge must be positive")
        rng = np.random.default_rng(seed)
        w_true = rng.standard_normal(d)
        self.A_tr = rng.standard_normal((n_train, d)) / math.sqrt(d)
        self.A_val = rng.standard_normal((n_val, d)) / math.sqrt(d)
        self.b_tr = np.where(self.A_tr @ w_true >= 0, 1.0, -1.0)
        self.b_val = np.where(self.A_val @ w_true >= 0, 1.0, -1.0)
        # nested, persistent corruption: sample i is flipped while u_i < rate
        u = rng.uniform(size=n_train)
        self.schedule = sched
        self.phase_of = np.minimum((np.arange(T) * len(sched)) // T, len(sched) - 1)
        self.labels = np.stack([np.where(u < r, -self.b_tr, self.b_tr) for r in sched])
        self.ridge = float(ridge)
        self.n = n_train
        na = np.linalg.norm(self.A_tr, axis=1)
        nv = np.linalg.norm(self.A_val, axis=1)
        lam_tr = float(np.linalg.eigvalsh(self.A_tr.T @ self.A_tr).max())
        lam_val = float(np.linalg.eigvalsh(self.A_val.T @ self.A_val).max())
        theta_max = float(na.mean()) / (2 * ridge)
        consts = SmoothnessConstants(
            l_f0=float(nv.mean()),
            l_f1=lam_val / (4 * n_val),
            l_g1=ridge + lam_tr / (4 * n_train),
            l_g2=float(np.mean(na**3)) * D2SIG_MAX + float(na.max()) ** 2 / 16,
            mu_g=ridge,
            q=math.log(2) + float(nv.max()) * theta_max,
        )
        super().__init__(n_train, d, T, box(-x_bound * np.ones(n_train), x_bound * np.ones(n_train)),
                         consts, Capabilities())

    def corrupted_fraction(self, t):
        self.check_round(t)
        return float(np.mean(self.labels[self.phase_of[t - 1]] != self.b_tr))

    def _b(self, t):
        self.check_round(t)
        return self.labels[self.phase_of[t - 1]]

    def f(self, t, x, y):
        self.check_round(t)
        z = self.b_val * (self.A_val @ y)
        return float(np.mean(np.logaddexp(0.0, -z)))

    def g(self, t, x, y):
        z = self._b(t) * (self.A_tr @ y)
        return float(np.mean(sigmoid(x) * np.logaddexp(0.0, -z)) + 0.5 * self.ridge * (y @ y))

    def grad_x_f(self, t, x, y):
        self.check_round(t)
        return np.zeros(self.d_x)

    def grad_y_f(self, t, x, y):
        self.check_round(t)
        z = self.b_val * (self.A_val @ y)
        return self.A_val.T @ (-sigmoid(-z) * self.b_val) / len(z)

    def grad_y_g(self, t, x, y):
        b = self._b(t)
        z = b * (self.A_tr @ y)
        return self.A_tr.T @ (sigmoid(x) * -sigmoid(-z) * b) / self.n + self.ridge * y

    def grad_x_g(self, t, x, y):
        z = self._b(t) * (self.A_tr @ y)
        return dsigmoid(x) * np.logaddexp(0.0, -z) / self.n

    def hvp_yy_g(self, t, x, y, v):
        b = self._b(t)
        z = b * (self.A_tr @ y)
        s = sigmoid(x) * sigmoid(z) * sigmoid(-z)
        return self.A_tr.T @ (s * (self.A_tr @ v)) / self.n + self.ridge * v

    def jvp_xy_g(self, t, x, y, v):
        b = self._b(t)
        z = b * (self.A_tr @ y)
        return dsigmoid(x) * (-sigmoid(-z) * b) * (self.A_tr @ v) / self.n


def make_hypercleaning_synthetic(n_train: int, n_val: int, d: int, corruption_rate_schedule: Sequence[float],
                                 ridge: float, seed: int, *, T: int = 300) -> HyperCleaning:
    return HyperCleaning(n_train, n_val, d, corruption_rate_schedule, ridge, seed, T)

