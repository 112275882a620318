"""Pointwise coefficients of the non-divergence form and their extensions.

For positive, smooth films the flux divergence splits as

    (u^3 [1 + |b u u_xxx|^(alpha-1)] u_xxx)_x * a = A(u, ..) u_xxxx - F(u, ..)

with ``A`` multiplying the highest derivative linearly and ``F`` collecting
the lower-order products. ``A`` is only defined for ``u > 0``; the
positive-part extension floored at ``epsilon / 2`` is defined everywhere and
stays uniformly parabolic.

All coefficient functions broadcast over array-valued samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import grid as _grid
from .exceptions import DomainError
from .rheology import FluidParams


class CoefficientSample(NamedTuple):
    """Arguments ``(u, u_x, u_xx, u_xxx)`` of the coefficient maps."""

    z0: float
    z1: float
    z2: float
    z3: float

    @classmethod
    def from_state(cls, heights, grid):
        u = grid.check(heights)
        return cls(u, *(_grid.derivative(u, k, grid) for k in (1, 2, 3)))


@dataclass(frozen=True)
class RegularizationConfig:
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise DomainError(f"epsilon must be positive, got {self.epsilon!r}")

    @property
    def floor(self):
        return 0.5 * self.epsilon

    def height_threshold(self, params):
        """Height above which ``a u^3`` already exceeds the floor."""
        return (self.epsilon / (2.0 * params.a)) ** (1.0 / 3.0)


def _kernel(w, alpha):
    return np.abs(w) ** (alpha - 1.0)


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def _coeff_A_raw(z0, z3, params):
    return params.a * z0**3 * (1.0 + params.alpha * _kernel(params.b * z0 * z3, params.alpha))


def coeff_A(z, params: FluidParams):
    """``a z0^3 (1 + alpha |b z0 z3|^(alpha-1))`` for ``z0 > 0``."""
    z0 = np.asarray(z.z0, dtype=float)
    if np.any(z0 <= 0):
        raise DomainError("coeff_A requires z0 > 0; use coeff_A_bar_eps for the extension")
    return _scalar_or_array(_coeff_A_raw(z0, np.asarray(z.z3, dtype=float), params))


def coeff_A_bar_eps(z, params: FluidParams, reg: RegularizationConfig):
    """Positive-part extension of ``A`` floored at ``epsilon / 2``."""
    z0 = np.maximum(np.asarray(z.z0, dtype=float), 0.0)
    raw = _coeff_A_raw(z0, np.asarray(z.z3, dtype=float), params)
    return _scalar_or_array(np.maximum(raw, reg.floor))


def coeff_F(z, params: FluidParams):
    """Lower-order part ``-3 a z0^2 (1 + |b_tilde z0 z3|^(alpha-1)) z1 z3``.

    Includes the prefactor ``a`` so that ``A u_xxxx - F`` is the full flux
    divergence.
    """
    z0 = np.asarray(z.z0, dtype=float)
    z1 = np.asarray(z.z1, dtype=float)
    z3 = np.asarray(z.z3, dtype=float)
    shear = _kernel(params.b_tilde * z0 * z3, params.alpha)
    return _scalar_or_array(-3.0 * params.a * z0**2 * (1.0 + shear) * z1 * z3)


def _odd_extend(values, k):
    v = np.asarray(values, dtype=float)
    return np.concatenate([-v[k:0:-1], v, -v[-2:-k - 2:-1]])


def divergence_residual(state, grid, params):
    """Nodal mismatch between the divergence and non-divergence forms.

    Form (i) takes a centred difference of the nodal flux (odd-reflected at
    the walls, where it vanishes); form (ii) evaluates ``A u_xxxx - F`` from
    the nodal stencils. Both are second-order approximations of the same
    operator, so the residual is ``O(h^2)`` on smooth reflection-symmetric
    data.
    """
    u = grid.check(state.heights)
    if np.any(u <= 0):
        raise DomainError("divergence_residual requires strictly positive heights")
    z = CoefficientSample.from_state(u, grid)
    node_flux = params.a * u**3 * (1.0 + _kernel(params.b * u * z.z3, params.alpha)) * z.z3
    f = _odd_extend(node_flux, 1)
    divergence = (f[2:] - f[:-2]) / (2.0 * grid.spacing)
    split = coeff_A(z, params) * _grid.derivative(u, 4, grid) - coeff_F(z, params)
    return divergence - split


def holder_constants(params: FluidParams, radius):
    """Bounds ``(C_A, C_F)`` on the ``(alpha-1)``-Holder moduli over ``|z| <= radius``.

    Valid for ``1 < alpha <= 2`` and for every ``epsilon``: the floor and the
    positive part are 1-Lipschitz. Lipschitz pieces are converted with
    ``d <= (2R)^(2-alpha) d^(alpha-1)`` for ``d <= 2R``.
    """
    alpha, R = params.alpha, float(radius)
    if not 1.0 < alpha <= 2.0:
        raise DomainError("Holder bounds are derived for 1 < alpha <= 2")
    beta = alpha - 1.0
    lip_to_holder = (2.0 * R) ** (2.0 - alpha)
    a, b, bt = params.a, params.b, params.b_tilde

    # a p^3 + a alpha b^beta p^(alpha+2) |z3|^beta, with p = max(z0, 0)
    c_cubic = 3.0 * a * R**2 * lip_to_holder
    c_shear = a * alpha * b**beta * (
        (alpha + 2.0) * R ** (alpha + 1.0) * lip_to_holder * R**beta + R ** (alpha + 2.0)
    )
    # F = -3a (z0^2 z1 z3 + bt^beta |z0|^(alpha+1) z1 |z3|^beta z3), Lipschitz on the ball
    c_newt = math.sqrt(6.0) * R**3
    c_thin = bt**beta * (2.0 * alpha + 2.0) * R ** (2.0 * alpha + 1.0)
    return c_cubic + c_shear, 3.0 * a * (c_newt + c_thin) * lip_to_holder
