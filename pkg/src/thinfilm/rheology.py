"""Ellis constitutive law and the lubrication coefficients derived from it.

All quantities are dimensionless. The Ellis law links shear rate ``s`` and
shear stress ``tau`` implicitly through

    s = (1 / mu0) * (1 + |tau / tau_star|**(alpha - 1)) * tau

and the film equation inherits the coefficients

    a = sigma / (3 mu0),  b = (3 / (alpha + 2))**(1 / (alpha - 1)) * sigma / tau_star,
    b_tilde = sigma / tau_star.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError, DomainError

# Below this the factor (3/(alpha+2))**(1/(alpha-1)) under/overflows.
ALPHA_MIN = 1.0 + 1e-6

_ROOT_TOL = 1e-12
_ROOT_MAXITER = 100


@dataclass(frozen=True)
class FluidParams:
    """Physical inputs plus the derived lubrication coefficients.

    Build instances with :func:`derive_params` (from fluid properties) or
    :meth:`FluidParams.from_coefficients` (from ``a`` and ``b`` directly).
    """

    sigma: float
    mu0: float
    tau_star: float
    alpha: float
    a: float
    b: float
    b_tilde: float

    @classmethod
    def from_coefficients(cls, a, b, alpha, b_tilde=None):
        """Build parameters from the lubrication coefficients.

        The physical inputs are not unique given ``(a, b)``; the representative
        with ``sigma = 1`` is stored. ``b = 0`` gives the Newtonian limit with
        ``tau_star = inf``. If ``b_tilde`` is supplied it must agree with the
        value implied by ``b`` and ``alpha``.
        """
        a = _check_positive("a", a)
        alpha = _check_alpha(alpha)
        b = float(b)
        if not math.isfinite(b) or b < 0:
            raise DomainError(f"b must be finite and non-negative, got {b!r}")
        implied = b * ((alpha + 2.0) / 3.0) ** (1.0 / (alpha - 1.0))
        if b_tilde is None:
            b_tilde = implied
        else:
            b_tilde = float(b_tilde)
            if not math.isclose(b_tilde, implied, rel_tol=1e-9, abs_tol=1e-300):
                raise DomainError(
                    f"b_tilde={b_tilde!r} inconsistent with b={b!r}, alpha={alpha!r} "
                    f"(expected {implied!r})"
                )
        tau_star = math.inf if b_tilde == 0 else 1.0 / b_tilde
        return cls(
            sigma=1.0, mu0=1.0 / (3.0 * a), tau_star=tau_star, alpha=alpha,
            a=a, b=b, b_tilde=b_tilde,
        )

    @property
    def is_newtonian(self):
        return self.b == 0.0


def _check_positive(name, value):
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be finite and positive, got {value!r}")
    return value


def _check_alpha(alpha):
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha <= 1.0:
        raise DomainError(f"alpha must exceed 1, got {alpha!r}")
    if alpha < ALPHA_MIN:
        raise DomainError(
            f"alpha={alpha!r} too close to 1; use b=0 for the Newtonian limit"
        )
    return alpha


def derive_params(sigma=1.0, mu0=1.0, tau_star=1.0, alpha=2.0):
    """Return :class:`FluidParams` for the given fluid properties.

    Raises
    ------
    DomainError
        If any input is non-finite or non-positive, or ``alpha <= 1``.
    """
    sigma = _check_positive("sigma", sigma)
    mu0 = _check_positive("mu0", mu0)
    tau_star = _check_positive("tau_star", tau_star)
    alpha = _check_alpha(alpha)
    ratio = sigma / tau_star
    b = (3.0 / (alpha + 2.0)) ** (1.0 / (alpha - 1.0)) * ratio
    return FluidParams(
        sigma=sigma, mu0=mu0, tau_star=tau_star, alpha=alpha,
        a=sigma / (3.0 * mu0), b=b, b_tilde=ratio,
    )


def _ellis_rate(tau, params):
    return (1.0 + abs(tau / params.tau_star) ** (params.alpha - 1.0)) * tau / params.mu0


def shear_stress(s, params):
    """Solve the Ellis relation for the shear stress at shear rate ``s``.

    Safeguarded Newton iteration on the bracket ``[0, mu0 * |s|]``, which
    always contains the root because the Ellis factor is at least one.
    """
    s = float(s)
    if not math.isfinite(s):
        raise DomainError(f"shear rate must be finite, got {s!r}")
    if s == 0.0:
        return 0.0
    if s < 0:
        return -shear_stress(-s, params)

    mu0, alpha, tau_star = params.mu0, params.alpha, params.tau_star
    lo, hi = 0.0, mu0 * s
    tau = hi
    scale = max(1.0, s)
    for _ in range(_ROOT_MAXITER):
        g = _ellis_rate(tau, params) - s
        if abs(g) <= _ROOT_TOL * scale:
            return tau
        if g > 0:
            hi = tau
        else:
            lo = tau
        dg = (1.0 + alpha * (tau / tau_star) ** (alpha - 1.0)) / mu0
        trial = tau - g / dg
        # fall back to bisection when Newton leaves the bracket
        tau = trial if lo < trial < hi else 0.5 * (lo + hi)
        if hi - lo <= _ROOT_TOL * max(hi, 1e-300):
            return tau
    raise ConvergenceError(f"Ellis root solve did not converge for s={s!r}")


def viscosity(s, params):
    """Apparent viscosity ``tau(s) / s``; equals ``mu0`` at ``s = 0``."""
    s = float(s)
    if s == 0.0:
        return params.mu0
    return shear_stress(s, params) / s


def velocity_profile(u, u_xxx, z, params):
    """Horizontal velocity at height ``z`` inside a film of height ``u``."""
    u = float(u)
    z = float(z)
    if u < 0 or not (0.0 <= z <= u):
        raise DomainError(f"need 0 <= z <= u, got z={z!r}, u={u!r}")
    sigma, mu0, alpha = params.sigma, params.mu0, params.alpha
    newtonian = sigma / mu0 * u_xxx * (u * z - 0.5 * z * z)
    if params.is_newtonian:
        return newtonian
    coef = sigma**alpha / ((alpha + 1.0) * mu0 * params.tau_star ** (alpha - 1.0))
    thinning = coef * abs(u_xxx) ** (alpha - 1.0) * u_xxx * (
        (u - z) ** (alpha + 1.0) - u ** (alpha + 1.0)
    )
    return newtonian - thinning


def mobility(u, u_xxx, params):
    """``a u^3 (1 + |b u u_xxx|^(alpha-1))``, elementwise."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(u_xxx, dtype=float)
    return params.a * u**3 * (1.0 + np.abs(params.b * u * w) ** (params.alpha - 1.0))


def flux(u, u_xxx, params):
    """Depth-integrated volume flux ``a u^3 (1 + |b u u_xxx|^(alpha-1)) u_xxx``.

    Accepts scalars or arrays; returns a float for scalar input.
    """
    if np.any(np.asarray(u) < 0):
        raise DomainError("film height must be non-negative")
    q = mobility(u, u_xxx, params) * np.asarray(u_xxx, dtype=float)
    return float(q) if np.ndim(q) == 0 else q


def pressure(u_xx, params):
    """Capillary pressure ``-sigma u_xx`` at the free surface."""
    p = -params.sigma * np.asarray(u_xx, dtype=float)
    return float(p) if p.ndim == 0 else p
