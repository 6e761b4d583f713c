"""Smoothness constants, derived constants and default step-size schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

ALGORITHMS = ("aobo", "fsobo", "wobo", "sobow", "obbo")

# strict "<" bounds are met by backing off from the supremum
STRICT_BACKOFF = 0.99
_STEP_TOL = 1e-12


class ParameterDomainError(ValueError):
    """A constant or step size lies outside its admissible range."""


class UnsupportedCapability(NotImplementedError):
    """The problem instance does not expose the requested analytic oracle."""


class CappedLoopError(RuntimeError):
    """An adaptive inner loop hit its iteration cap."""

    def __init__(self, message, residual, iters):
        super().__init__(f"{message} (residual={residual!r}, iters={iters})")
        self.residual = residual
        self.iters = iters


def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ParameterDomainError(f"{name} must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class SmoothnessConstants:
    """Base Lipschitz / strong-convexity parameters of a bilevel family.

    ``l_g1 >= mu_g`` is not enforced: several useful test configurations
    declare a curvature bound below the modulus and the formulas stay finite.
    """

    l_f0: float
    l_f1: float
    l_g1: float
    l_g2: float
    mu_g: float
    q: float = 1.0
    d_diam: Optional[float] = None

    def __post_init__(self):
        for name in ("l_f0", "l_f1", "l_g1", "l_g2", "mu_g", "q"):
            _positive(name, getattr(self, name))
        if self.d_diam is not None:
            if not (math.isfinite(self.d_diam) and self.d_diam >= 0):
                raise ParameterDomainError(f"d_diam must be finite and >= 0, got {self.d_diam!r}")


@dataclass(frozen=True)
class DerivedConstants:
    kappa_g: float
    l_f_outer: float
    kappa_f: float
    l_v: float
    v_radius: float
    rho_y: float
    rho_v: float


@dataclass(frozen=True)
class HyperParams:
    """Step sizes and loop controls shared by all algorithms.

    ``k_iters`` is the unroll depth of the ITD baseline, ``m_growth`` the
    per-round increment of the conjugate-gradient budget, and
    ``hypergrad_form`` selects the cross ("xy") or printed ("yy") Hessian in
    the window hypergradient.
    """

    alpha: float
    beta: float
    gamma: float
    delta: float
    m_iters: int = 1
    eta_weight: float = 1.0
    window_w: int = 1
    cap_inner: int = 10**6
    k_iters: int = 1
    m_growth: float = 0.0
    hypergrad_form: str = "xy"

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            _positive(name, getattr(self, name))
        if int(self.m_iters) != self.m_iters or self.m_iters < 1:
            raise ParameterDomainError(f"m_iters must be an integer >= 1, got {self.m_iters!r}")
        if int(self.window_w) != self.window_w or self.window_w < 1:
            raise ParameterDomainError(f"window_w must be an integer >= 1, got {self.window_w!r}")
        if not (0 < self.eta_weight <= 1):
            raise ParameterDomainError(f"eta_weight must lie in (0, 1], got {self.eta_weight!r}")
        if int(self.cap_inner) != self.cap_inner or self.cap_inner < 1:
            raise ParameterDomainError(f"cap_inner must be an integer >= 1, got {self.cap_inner!r}")
        if int(self.k_iters) != self.k_iters or self.k_iters < 1:
            raise ParameterDomainError(f"k_iters must be an integer >= 1, got {self.k_iters!r}")
        if not (math.isfinite(self.m_growth) and self.m_growth >= 0):
            raise ParameterDomainError(f"m_growth must be finite and >= 0, got {self.m_growth!r}")
        if self.hypergrad_form not in ("xy", "yy"):
            raise ParameterDomainError(f"hypergrad_form must be 'xy' or 'yy', got {self.hypergrad_form!r}")

    @property
    def w_norm(self) -> float:
        return window_norm(self.window_w, self.eta_weight)

    def with_overrides(self, **kw) -> "HyperParams":
        return replace(self, **kw)


def window_norm(w: int, eta: float) -> float:
    """W = sum_{i<w} eta^i."""
    if eta == 1.0:
        return float(w)
    return float(sum(eta**i for i in range(w)))


def outer_smoothness(b: SmoothnessConstants) -> float:
    """Smoothness constant L_F of F_t(x) = f_t(x, y*_t(x))."""
    mu = b.mu_g
    return (
        b.l_f1
        + b.l_f0 * b.l_g2 / mu
        + 2 * b.l_g1 * b.l_f1 / mu
        + b.l_g1**2 * b.l_f1 / mu**2
        + 2 * b.l_f0 * b.l_g1 * b.l_g2 / mu**2
        + b.l_f0 * b.l_g1**2 * b.l_g2 / mu**3
    )


def kappa_f(b: SmoothnessConstants) -> float:
    mu = b.mu_g
    return (
        2 * b.l_f1**2 / mu**2
        + 4 * b.l_f0**2 * b.l_g2**2 / mu**4
        + 16 * b.l_f1**2 * b.l_g1**2 / mu**4
        + 16 * b.l_f0**2 * b.l_g1**2 * b.l_g2**2 / mu**6
    )


def l_v(b: SmoothnessConstants) -> float:
    return b.l_f1 / b.mu_g + b.l_f0 * b.l_g2 / b.mu_g**2


def derive_constants(base: SmoothnessConstants, alpha: float, beta: float) -> DerivedConstants:
    """All constants derived from ``base`` at inner step ``alpha`` and v-step ``beta``."""
    if not base.mu_g > 0:
        raise ParameterDomainError("mu_g must be positive")
    _positive("alpha", alpha)
    _positive("beta", beta)
    cap = 1.0 / base.l_g1
    for name, step in (("alpha", alpha), ("beta", beta)):
        if step > cap * (1 + _STEP_TOL):
            raise ParameterDomainError(f"{name}={step!r} exceeds 1/l_g1={cap!r}")
        if step * base.mu_g > 1 + _STEP_TOL:
            raise ParameterDomainError(f"{name}*mu_g={step * base.mu_g!r} exceeds 1")
    return DerivedConstants(
        kappa_g=base.l_g1 / base.mu_g,
        l_f_outer=outer_smoothness(base),
        kappa_f=kappa_f(base),
        l_v=l_v(base),
        v_radius=base.l_f0 / base.mu_g,
        rho_y=max(0.0, 1.0 - alpha * base.mu_g),
        rho_v=max(0.0, 1.0 - beta * base.mu_g),
    )


# ---- single-loop step-size bounds ---------------------------------------


def c_beta(b: SmoothnessConstants, beta: float) -> float:
    mu = b.mu_g
    return (
        8 * b.l_g1**2
        * (4 * b.l_f1**2 / mu**2 + 4 * b.l_f0**2 * b.l_g2**2 / mu**4)
        * (1 + 2 / (beta * mu))
    )


def fsobo_rates(b: SmoothnessConstants, alpha: float, beta: float) -> Tuple[float, float]:
    """Joint (y, v) contraction factors of the single-loop recursion."""
    mu, L = b.mu_g, b.l_g1
    return 1 - alpha * mu * L / (mu + L), 1 - beta * mu / 2


def fsobo_c_x(b: SmoothnessConstants, alpha: float, beta: float) -> float:
    mu, L = b.mu_g, b.l_g1
    kg = L / mu
    kf = kappa_f(b)
    return 2 * kg**2 * kf * mu**2 * (1 + (mu + L) / (alpha * mu * L)) + c_beta(b, beta)


def fsobo_alpha_bound(b: SmoothnessConstants, beta: float) -> float:
    mu, L = b.mu_g, b.l_g1
    kf = kappa_f(b)
    return 2 * kf * mu**2 / ((mu + L) * (kf * mu**2 + c_beta(b, beta)))


def fsobo_gamma_bound(b: SmoothnessConstants, alpha: float, beta: float) -> float:
    """Supremum of admissible gamma for the fully single-loop method.

    With u = gamma^2 C_x / (1 - rho) the requirement
    gamma^2 < (1 - rho)(1 - 2u) / (12 C_x) reads 12u < 1 - 2u, i.e. u < 1/14.
    """
    rho = max(fsobo_rates(b, alpha, beta))
    cx = fsobo_c_x(b, alpha, beta)
    return min(1 / (2 * outer_smoothness(b)), math.sqrt((1 - rho) / (14 * cx)))


def sobow_c_y(b: SmoothnessConstants) -> float:
    return 2 * b.l_f1**2 + 4 * b.l_f0**2 * b.l_g2**2 / b.mu_g**2


def sobow_gamma_bound(b: SmoothnessConstants, alpha: float) -> float:
    """Supremum of admissible gamma for the conjugate-gradient baseline.

    With u = 16 gamma^2 kappa_g^2 C_y / (alpha mu)^2 the requirement
    u < (1 - u) / 6 gives u < 1/7.
    """
    kg = b.l_g1 / b.mu_g
    inner = alpha * b.mu_g / (4 * kg) * math.sqrt(1 / (7 * sobow_c_y(b)))
    return min(1 / (2 * outer_smoothness(b)), inner)


def sobow_growth(b: SmoothnessConstants, alpha: float, lam: float) -> float:
    """Minimal per-round increase of the CG budget."""
    if lam * b.mu_g >= 1:
        return 0.0
    return math.log(1 - alpha * b.mu_g / 2) / (2 * math.log(1 - lam * b.mu_g))


def wobo_gamma(b: SmoothnessConstants) -> float:
    kg = b.l_g1 / b.mu_g
    return min(
        1 / (4 * outer_smoothness(b)),
        1 / (456 * kg**4 * b.l_g1 * l_v(b) * math.sqrt(kappa_f(b))),
    )


def _ceil(x: float) -> int:
    # guards against 2.0000000000000004 style round-off
    return int(math.ceil(round(x, 9)))


def aobo_m_iters(horizon_T: int, rho: float) -> int:
    if rho <= 0 or horizon_T <= 1:
        return 1
    return max(1, _ceil(-math.log(horizon_T) / math.log(rho)))


def obbo_k_iters(horizon_T: int, eta_mu: float) -> int:
    if eta_mu >= 1 or horizon_T <= 1:
        return 1
    return _ceil(math.log(horizon_T) / math.log(1 / (1 - eta_mu))) + 1


def default_schedule(
    base: SmoothnessConstants,
    algo: str,
    horizon_T: int,
    window: Optional[Tuple[int, float]] = None,
    *,
    alpha: Optional[float] = None,
    beta: Optional[float] = None,
    delta: Optional[float] = None,
    cap_inner: int = 10**6,
) -> HyperParams:
    """Default hyperparameters for ``algo`` over ``horizon_T`` rounds.

    ``alpha`` / ``beta`` / ``delta`` override the defaults before the
    dependent quantities (M, K, gamma) are evaluated.
    """
    if algo not in ALGORITHMS:
        raise ParameterDomainError(f"unknown algorithm id {algo!r}; expected one of {ALGORITHMS}")
    if int(horizon_T) != horizon_T or horizon_T < 1:
        raise ParameterDomainError(f"horizon_T must be an integer >= 1, got {horizon_T!r}")
    w, eta = window if window is not None else (1, 1.0)
    mu, L = base.mu_g, base.l_g1
    inv_l = 1.0 / L
    beta = inv_l if beta is None else beta
    delta = 1.0 / math.sqrt(horizon_T) if delta is None else delta
    common = dict(delta=delta, window_w=w, eta_weight=eta, cap_inner=cap_inner)

    if algo == "aobo":
        a = inv_l if alpha is None else alpha
        dc = derive_constants(base, a, beta)
        return HyperParams(
            alpha=a, beta=beta, gamma=1 / (2 * dc.l_f_outer),
            m_iters=aobo_m_iters(horizon_T, dc.rho_v), **common,
        )
    if algo == "fsobo":
        a = min(fsobo_alpha_bound(base, beta), inv_l, 1 / mu) if alpha is None else alpha
        derive_constants(base, a, beta)
        g = STRICT_BACKOFF * fsobo_gamma_bound(base, a, beta)
        return HyperParams(alpha=a, beta=beta, gamma=g, m_iters=1, **common)
    if algo == "wobo":
        a = inv_l if alpha is None else alpha
        derive_constants(base, a, beta)
        return HyperParams(alpha=a, beta=beta, gamma=wobo_gamma(base), m_iters=1, **common)
    if algo == "sobow":
        a = inv_l if alpha is None else alpha
        derive_constants(base, a, beta)
        g = STRICT_BACKOFF * sobow_gamma_bound(base, a)
        return HyperParams(
            alpha=a, beta=beta, gamma=g, m_iters=1,
            m_growth=sobow_growth(base, a, beta), **common,
        )
    # obbo: alpha is the unrolled inner step
    a = min(1 / mu, inv_l) if alpha is None else alpha
    derive_constants(base, a, beta)
    return HyperParams(
        alpha=a, beta=beta, gamma=1 / (2 * outer_smoothness(base)),
        k_iters=obbo_k_iters(horizon_T, a * mu), **common,
    )
