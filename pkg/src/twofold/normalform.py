"""Closed-form machinery of the unperturbed two-fold.

Both half systems integrate in closed form,

    phi_left(t)  = (x0 + z0 t + t^2/2,  y0 + V- t,  z0 + t),
    phi_right(t) = (x0 - y0 t - t^2/2,  y0 + t,     z0 + V+ t),

which yields an explicit crossing return map on the surface, the invariant
ray zeta = {(0, y, gamma*y) : y > 0}, the two-sheeted unstable cone through
zeta, and the one-parameter family of orbits psi_a leaving the singularity
at t = 0 and meeting zeta at t = a.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DerivedConstants,
    Side,
    TwoFoldError,
    TwoFoldParams,
    derived_constants,
)

__all__ = [
    "LeavesCrossingRegimeError",
    "ReturnMapResult",
    "PsiOrbit",
    "flow_left",
    "flow_right",
    "crossing_matrix",
    "return_map",
    "derived_constants",
    "xi",
    "lambda_surface_x",
    "psi_point_on_ray",
    "psi_orbit_eval",
]

# Below this fraction of a, psi_a(t) is indistinguishable from the
# singularity in double precision and the origin is returned.
PSI_TIME_CUTOFF = 1e-12


class LeavesCrossingRegimeError(TwoFoldError):
    """The orbit enters attracting sliding instead of crossing again."""


def flow_left(params: TwoFoldParams, X0, dt):
    """Exact left half-flow after time dt; dt may be an array."""
    X0 = np.asarray(X0, dtype=float)
    dt = np.asarray(dt, dtype=float)
    x = X0[0] + X0[2] * dt + 0.5 * dt * dt
    y = X0[1] + params.v_minus * dt
    z = X0[2] + dt
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def flow_right(params: TwoFoldParams, X0, dt):
    """Exact right half-flow after time dt; dt may be an array."""
    X0 = np.asarray(X0, dtype=float)
    dt = np.asarray(dt, dtype=float)
    x = X0[0] - X0[1] * dt - 0.5 * dt * dt
    y = X0[1] + dt
    z = X0[2] + params.v_plus * dt
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def crossing_matrix(params: TwoFoldParams) -> np.ndarray:
    """Linear map sending one crossing point (y, z) to the next."""
    vm, vp = params.v_minus, params.v_plus
    return np.array([[-1.0, 2.0 * vm], [-2.0 * vp, 4.0 * vm * vp - 1.0]])


@dataclass(frozen=True)
class ReturnMapResult:
    y_next: float
    z_next: float
    elapsed: float


def return_map(params: TwoFoldParams, y: float, z: float) -> ReturnMapResult:
    """Next surface intersection with positive y, from (0, y, z) with z <= 0.

    The orbit crosses into x < 0, returns, crosses into x > 0 and lands at
    (0, y', z') with z' < 0 provided z < 2 V+ y / (4 V- V+ - 1); beyond that
    threshold the landing has z' > 0 (the orbit meets attracting sliding)
    and LeavesCrossingRegimeError is raised.
    """
    vm, vp = params.v_minus, params.v_plus
    if z > 0.0:
        raise ValueError(f"return map needs z <= 0, got z = {z}")
    bound = 2.0 * vp * y / (4.0 * vm * vp - 1.0)
    if z > bound:
        raise LeavesCrossingRegimeError(
            f"(y, z) = ({y}, {z}) maps to z' > 0: next return enters sliding"
        )
    y_next = -y + 2.0 * vm * z
    z_next = -2.0 * vp * y + (4.0 * vm * vp - 1.0) * z
    elapsed = 2.0 * ((2.0 * vm - 1.0) * z - y)
    return ReturnMapResult(y_next, z_next, elapsed)


def xi(params: TwoFoldParams, y: float, z: float) -> float:
    """Quadratic form whose zero set on each side carves the unstable cone."""
    vm, vp = params.v_minus, params.v_plus
    return (vp * y * y - 2.0 * vp * vm * y * z + vm * z * z) / (
        2.0 * (vp * vm - 1.0)
    )


def lambda_surface_x(params: TwoFoldParams, y: float, z: float, side: Side) -> float:
    """x-value of the unstable-cone sheet over (y, z) on the given side."""
    if side is Side.LEFT:
        return -xi(params, y, z) / params.v_minus
    return xi(params, y, z) / params.v_plus


def psi_point_on_ray(params: TwoFoldParams, a: float) -> np.ndarray:
    """The point psi_a(a) = (0, alpha a, gamma alpha a) on the invariant ray."""
    ya = params.alpha * a
    return np.array([0.0, ya, params.gamma * ya])


@dataclass(frozen=True)
class PsiOrbit:
    """Orbit leaving the two-fold at t = 0, meeting the invariant ray at t = a.

    Scaling a by any integer power of mu selects the same orbit.
    """

    params: TwoFoldParams
    a: float

    def __post_init__(self):
        if not self.a > 0.0:
            raise ValueError("a must be positive")

    def __call__(self, t: float) -> np.ndarray:
        return psi_orbit_eval(self, t)


def psi_orbit_eval(orbit: PsiOrbit, t: float) -> np.ndarray:
    """Evaluate psi_a at time t >= 0.

    Each revolution between ray visits at mu^k a and mu^(k+1) a is one left
    flight of duration -2 gamma y_k followed by one right flight, both in
    closed form.  Times below PSI_TIME_CUTOFF * a collapse to the origin.
    """
    if t < 0.0:
        raise ValueError("psi orbits are defined for t >= 0")
    p, a = orbit.params, orbit.a
    if t < PSI_TIME_CUTOFF * a:
        return np.zeros(3)
    mu, gamma, alpha = p.mu, p.gamma, p.alpha
    k = np.floor(np.log(t / a) / np.log(mu))
    # guard the floor against roundoff at revolution boundaries
    while mu**k * a > t:
        k -= 1.0
    while mu ** (k + 1.0) * a <= t:
        k += 1.0
    t_k = mu**k * a
    y_k = alpha * t_k
    start = np.array([0.0, y_k, gamma * y_k])
    s = t - t_k
    d_left = -2.0 * gamma * y_k
    if s <= d_left:
        return flow_left(p, start, s)
    mid = flow_left(p, start, d_left)
    mid[0] = 0.0  # lands exactly on the surface
    d_right = -2.0 * mid[1]
    return flow_right(p, mid, min(s - d_left, d_right))
