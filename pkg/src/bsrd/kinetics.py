"""Reaction kinetics, linear bulk-surface coupling, and exact Jacobians.

Two species (u, v) react and diffuse inside the unit ball, two more (r, s)
on its boundary sphere.  The reaction pair is the activator-depleted model

    f(x, y) = a - x + x^2 y,        g(x, y) = b - x^2 y,

used both in the bulk and on the surface.  Bulk and surface exchange mass
through the linear functions

    h1 = alpha1*r - beta1*u - kappa1*v,
    h2 = alpha2*s - beta2*u - kappa2*v,

which enter the surface kinetics with a minus sign and the bulk boundary
flux with a plus sign.  Everything in this module is a pure function of
floats or numpy arrays; parameter containers are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class KineticParams:
    """Source rates and length-scale factors of the reaction pair.

    ``a`` and ``b`` are the dimensionless source rates, ``gamma_bulk`` and
    ``gamma_surf`` the scale factors multiplying the bulk and surface
    kinetics.  Nonnegative values are accepted here so that degenerate
    points (``gamma = 0``, ``a = 0``) remain evaluable; simulation configs
    enforce strict positivity separately.
    """

    a: float
    b: float
    gamma_bulk: float
    gamma_surf: float

    def __post_init__(self) -> None:
        for name in ("a", "b", "gamma_bulk", "gamma_surf"):
            value = getattr(self, name)
            _require_finite(name, value)
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value!r}")


@dataclass(frozen=True)
class CouplingParams:
    """Coefficients of the linear exchange functions h1, h2."""

    alpha1: float
    alpha2: float
    beta1: float
    beta2: float
    kappa1: float
    kappa2: float

    def __post_init__(self) -> None:
        for name in ("alpha1", "alpha2", "beta1", "beta2", "kappa1", "kappa2"):
            _require_finite(name, getattr(self, name))

    @classmethod
    def zero(cls) -> "CouplingParams":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class DiffusionParams:
    """Diffusion ratios of the second species, bulk and surface."""

    d_bulk: float
    d_surf: float

    def __post_init__(self) -> None:
        for name in ("d_bulk", "d_surf"):
            value = getattr(self, name)
            _require_finite(name, value)
            if value <= 0:
                raise ValueError(f"{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class SteadyState:
    """The uniform steady state; bulk and surface values coincide."""

    u_star: float
    v_star: float
    r_star: float
    s_star: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.u_star, self.v_star, self.r_star, self.s_star)


@dataclass(frozen=True)
class ModelParams:
    """A full parameter point: kinetics, coupling, and diffusion ratios."""

    kinetics: KineticParams
    coupling: CouplingParams
    diffusion: DiffusionParams

    @classmethod
    def reference(cls, d_bulk: float = 1.0, d_surf: float = 1.0,
                  gamma: float = 500.0) -> "ModelParams":
        """Reference parameter set used throughout the demos and tests:
        a = 0.1, b = 0.9, equal scale factors, and the compatible coupling
        alpha1 = beta1 = 5/12, alpha2 = kappa2 = 5, kappa1 = beta2 = 0.
        """
        return cls(
            kinetics=KineticParams(a=0.1, b=0.9, gamma_bulk=gamma, gamma_surf=gamma),
            coupling=CouplingParams(alpha1=5.0 / 12.0, alpha2=5.0, beta1=5.0 / 12.0,
                                    beta2=0.0, kappa1=0.0, kappa2=5.0),
            diffusion=DiffusionParams(d_bulk=d_bulk, d_surf=d_surf),
        )


@dataclass(frozen=True)
class JacobianBlocks:
    """2x2 blocks of the 4x4 kinetics Jacobian.

    ``j_bulk`` acts on (u, v), ``j_surf`` on (r, s), and ``j_cross`` holds
    the derivatives of the surface equations with respect to (u, v).  The
    bulk equations do not depend on (r, s), so the assembled 4x4 matrix is
    block lower-triangular.
    """

    j_bulk: np.ndarray
    j_surf: np.ndarray
    j_cross: np.ndarray

    def full(self) -> np.ndarray:
        """Assemble the 4x4 Jacobian (zero upper-right block)."""
        top = np.hstack([self.j_bulk, np.zeros((2, 2))])
        bottom = np.hstack([self.j_cross, self.j_surf])
        return np.vstack([top, bottom])


def reaction_values(a, b, x, y):
    """Activator-depleted pair (f, g) at concentrations (x, y), unscaled."""
    xxy = x * x * y
    return a - x + xxy, b - xxy


def reaction_derivs(a, b, x, y):
    """Partial derivatives (f_x, f_y, g_x, g_y) of the unscaled pair."""
    two_xy = 2.0 * x * y
    xx = x * x
    return -1.0 + two_xy, xx, -two_xy, -xx


class ActivatorDepletedReaction:
    """Callable wrapper around the unscaled reaction pair.

    Used by the FEM residual assembly where the pair is evaluated on whole
    nodal arrays.
    """

    def __init__(self, a: float, b: float):
        self.a = a
        self.b = b

    def values(self, x, y):
        return reaction_values(self.a, self.b, x, y)

    def derivs(self, x, y):
        return reaction_derivs(self.a, self.b, x, y)


class LinearizedReaction:
    """First-order expansion of a reaction pair about a base point."""

    def __init__(self, base, x0: float, y0: float):
        self.x0 = x0
        self.y0 = y0
        self.f0, self.g0 = base.values(x0, y0)
        self.fx, self.fy, self.gx, self.gy = base.derivs(x0, y0)

    def values(self, x, y):
        dx = x - self.x0
        dy = y - self.y0
        return (self.f0 + self.fx * dx + self.fy * dy,
                self.g0 + self.gx * dx + self.gy * dy)

    def derivs(self, x, y):
        shape = np.broadcast(x, y).shape
        if shape:
            ones = np.ones(shape)
            return self.fx * ones, self.fy * ones, self.gx * ones, self.gy * ones
        return self.fx, self.fy, self.gx, self.gy


def eval_kinetics(p: KineticParams, c: CouplingParams, state):
    """Evaluate the four scaled reaction terms at (u, v, r, s).

    Returns the bulk pair gamma_bulk*(f, g)(u, v) and the surface pair
    gamma_surf*((f, g)(r, s) - (h1, h2)), elementwise over arrays.
    """
    u, v, r, s = state
    fb, gb = reaction_values(p.a, p.b, u, v)
    fs, gs = reaction_values(p.a, p.b, r, s)
    h1, h2 = eval_coupling(c, state)
    return (p.gamma_bulk * fb,
            p.gamma_bulk * gb,
            p.gamma_surf * (fs - h1),
            p.gamma_surf * (gs - h2))


def eval_coupling(c: CouplingParams, state):
    """Exchange functions (h1, h2) at (u, v, r, s), without any gamma factor.

    Callers apply the surface scale factor where the boundary conditions or
    the surface kinetics require it; keeping the bare form here avoids
    double scaling.
    """
    u, v, r, s = state
    h1 = c.alpha1 * r - c.beta1 * u - c.kappa1 * v
    h2 = c.alpha2 * s - c.beta2 * u - c.kappa2 * v
    return h1, h2


def steady_state(p: KineticParams) -> SteadyState:
    """Unique uniform steady state (a+b, b/(a+b)^2) on both domains.

    Raises ValueError when a + b = 0 (degenerate source rates).
    """
    total = p.a + p.b
    if total <= 0.0:
        raise ValueError(f"steady state requires a + b > 0, got a={p.a}, b={p.b}")
    v = p.b / (total * total)
    return SteadyState(total, v, total, v)


def compatibility_residual(c: CouplingParams) -> float:
    """Determinant constraint (beta1-alpha1)*(kappa2-alpha2) - kappa1*beta2.

    Zero is necessary for the coupling rows to annihilate a common nonzero
    concentration pair; see ``steady_state_residual`` for the sharper,
    parameter-dependent check.
    """
    return (c.beta1 - c.alpha1) * (c.kappa2 - c.alpha2) - c.kappa1 * c.beta2


def steady_state_residual(p: KineticParams, c: CouplingParams) -> tuple[float, float]:
    """Values (h1, h2) at the uniform steady state.

    Both must vanish for the steady state to satisfy the coupling boundary
    conditions; this implies ``compatibility_residual(c) == 0`` but not
    conversely.
    """
    ss = steady_state(p)
    return eval_coupling(c, ss.as_tuple())


def jacobian_at(p: KineticParams, c: CouplingParams, state) -> JacobianBlocks:
    """Exact partial derivatives of the four scaled reaction terms.

    The surface diagonal block includes the -h1, -h2 contributions
    (-alpha1 and -alpha2 on its diagonal); the cross block holds the
    (u, v)-derivatives of the surface equations, +beta and +kappa.
    """
    u, v, r, s = state
    fu, fv, gu, gv = reaction_derivs(p.a, p.b, u, v)
    fr, fs_, gr, gs_ = reaction_derivs(p.a, p.b, r, s)
    gb = p.gamma_bulk
    gs = p.gamma_surf
    j_bulk = gb * np.array([[fu, fv], [gu, gv]])
    j_surf = gs * np.array([[fr - c.alpha1, fs_], [gr, gs_ - c.alpha2]])
    j_cross = gs * np.array([[c.beta1, c.kappa1], [c.beta2, c.kappa2]])
    return JacobianBlocks(j_bulk=j_bulk, j_surf=j_surf, j_cross=j_cross)
