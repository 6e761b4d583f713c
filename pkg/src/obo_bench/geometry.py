"""Constraint sets, Euclidean projection and the gradient mapping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ParameterDomainError


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    kind: str  # "unconstrained" | "ball" | "box"
    dim: Optional[int] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __repr__(self):
        if self.kind == "ball":
            return f"ConstraintSet(ball, dim={self.dim}, radius={self.radius!r})"
        return f"ConstraintSet({self.kind}, dim={self.dim})"


def unconstrained(dim: Optional[int] = None) -> ConstraintSet:
    return ConstraintSet("unconstrained", dim=dim)


def ball(center, radius: float) -> ConstraintSet:
    c = np.array(center, dtype=float).reshape(-1)
    if not (np.isfinite(radius) and radius > 0):
        raise ParameterDomainError(f"ball radius must be positive, got {radius!r}")
    c.setflags(write=False)
    return ConstraintSet("ball", dim=c.size, center=c, radius=float(radius))


def box(lower, upper) -> ConstraintSet:
    lo = np.array(lower, dtype=float).reshape(-1)
    hi = np.array(upper, dtype=float).reshape(-1)
    if lo.shape != hi.shape:
        raise ParameterDomainError("box bounds must have equal shapes")
    if np.any(lo > hi):
        raise ParameterDomainError("box requires lower <= upper componentwise")
    lo.setflags(write=False)
    hi.setflags(write=False)
    return ConstraintSet("box", dim=lo.size, lower=lo, upper=hi)


def _check_dim(s: ConstraintSet, p: np.ndarray):
    if s.dim is not None and p.shape != (s.dim,):
        raise ValueError(f"dimension mismatch: set has dim {s.dim}, point has shape {p.shape}")


def project(s: ConstraintSet, p) -> np.ndarray:
    """Euclidean projection of ``p`` onto ``s``."""
    p = np.asarray(p, dtype=float)
    _check_dim(s, p)
    if s.kind == "unconstrained":
        return p.copy()
    if s.kind == "box":
        return np.clip(p, s.lower, s.upper)
    diff = p - s.center
    n = np.linalg.norm(diff)
    if n <= s.radius:
        return p.copy()
    return s.center + diff * (s.radius / n)


def project_ball0(p: np.ndarray, radius: float) -> np.ndarray:
    """Projection onto the origin-centred ball (the v-set)."""
    n = np.linalg.norm(p)
    if n <= radius:
        return p
    return p * (radius / n)


def contains(s: ConstraintSet, p, tol: float = 1e-12) -> bool:
    p = np.asarray(p, dtype=float)
    _check_dim(s, p)
    if s.kind == "unconstrained":
        return True
    if s.kind == "box":
        return bool(np.all(p >= s.lower - tol) and np.all(p <= s.upper + tol))
    return bool(np.linalg.norm(p - s.center) <= s.radius + tol)


@dataclass(frozen=True, eq=False)
class GradientMappingResult:
    x_plus: np.ndarray
    mapping: np.ndarray


def gradient_mapping(s: ConstraintSet, x, g, gamma: float) -> GradientMappingResult:
    """Prox step x+ = P(x - gamma g) and mapping (x - x+)/gamma."""
    if not gamma > 0:
        raise ParameterDomainError(f"gamma must be positive, got {gamma!r}")
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    if x.shape != g.shape:
        raise ValueError(f"dimension mismatch: x {x.shape} vs g {g.shape}")
    if s.kind == "unconstrained":
        _check_dim(s, x)
        return GradientMappingResult(x - gamma * g, g.copy())
    x_plus = project(s, x - gamma * g)
    return GradientMappingResult(x_plus, (x - x_plus) / gamma)


def sup_abs_affine(s: ConstraintSet, a, b: float, ref_radius: Optional[float] = None) -> float:
    """sup over s of |<a, x> + b|.

    Unconstrained sets use the origin-centred ball of ``ref_radius``.
    """
    a = np.asarray(a, dtype=float)
    if s.kind == "unconstrained":
        if ref_radius is None:
            return float("inf") if np.any(a != 0) else abs(b)
        return float(ref_radius * np.linalg.norm(a) + abs(b))
    if s.kind == "ball":
        return float(abs(a @ s.center + b) + s.radius * np.linalg.norm(a))
    hi = b + np.sum(np.maximum(a * s.lower, a * s.upper))
    lo = b + np.sum(np.minimum(a * s.lower, a * s.upper))
    return float(max(abs(hi), abs(lo)))


def sample_points(s: ConstraintSet, n: int, rng: np.random.Generator, ref_radius: float = 1.0) -> np.ndarray:
    """``n`` points drawn from ``s`` (from the reference ball if unconstrained)."""
    d = s.dim
    if d is None:
        raise ValueError("sampling needs a set with known dimension")
    if s.kind == "box":
        return rng.uniform(s.lower, s.upper, size=(n, d))
    center = np.zeros(d) if s.kind == "unconstrained" else s.center
    radius = ref_radius if s.kind == "unconstrained" else s.radius
    z = rng.standard_normal((n, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = radius * rng.uniform(0, 1, size=(n, 1)) ** (1.0 / d)
    return center + r * z
