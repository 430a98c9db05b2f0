"""Flow-adapted polar coordinates around the two-fold.

Orbits on the unstable cone spiral away from the singularity.  In the
coordinates built here the restriction of the flow to the cone becomes

    r' = alpha,    theta' = beta / r,

so radii grow linearly in time and the angle completes one turn per return
of the orbit to the invariant ray (the positive y-axis, theta = 0).  The
chart is a continuous bijection of the (x, y) plane minus the origin onto
r > 0, theta in [0, 2pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, TwoFoldError, TwoFoldParams

__all__ = [
    "DegenerateOriginError",
    "PolarPoint",
    "tau_left",
    "tau_right",
    "to_polar",
    "negative_y_axis_angle",
    "polar_flow_from_singularity",
]

_TWO_PI = 2.0 * math.pi


class DegenerateOriginError(TwoFoldError):
    """The polar angle is undefined at the two-fold itself."""


@dataclass(frozen=True)
class PolarPoint:
    """r >= 0 and theta in [0, 2pi); degenerate marks the r = 0 singularity."""

    r: float
    theta: float
    degenerate: bool = False


def _stable_root_gap(y: float, c: float) -> float:
    """y - sqrt(y^2 + c) for c >= 0, avoiding cancellation for y > 0."""
    root = math.sqrt(y * y + c)
    if y > 0.0:
        return -c / (y + root)
    return y - root


def tau_left(params: TwoFoldParams, x: float, y: float) -> float:
    """Travel time from the invariant ray to (x, y, .) on the left sheet.

    Defined for x < 0; the launch point has y0 = y - V- tau > 0.
    """
    if not x < 0.0:
        raise DomainError(f"tau_left needs x < 0, got x = {x}")
    vm, vp = params.v_minus, params.v_plus
    c = -2.0 * (vm / vp) * x  # positive for x < 0
    s = math.sqrt(1.0 - 1.0 / (vm * vp))
    return _stable_root_gap(y, c) / (vm * (1.0 + s))


def tau_right(x: float, y: float) -> float:
    """Backward travel time from the ray to (x, y, .) on the right sheet.

    Defined for x > 0 and always negative; the launch point has
    y0 = y - tau > 0.
    """
    if not x > 0.0:
        raise DomainError(f"tau_right needs x > 0, got x = {x}")
    return _stable_root_gap(y, 2.0 * x)


def negative_y_axis_angle(params: TwoFoldParams) -> float:
    """Common one-sided limit of theta on the negative y-axis."""
    return (params.beta / params.alpha) * math.log(
        1.0 - 2.0 * params.alpha * params.gamma
    )


def to_polar(params: TwoFoldParams, x: float, y: float) -> PolarPoint:
    """Adapted polar coordinates of (x, y).

    theta uses the left branch for x < 0 and the right branch (offset 2pi,
    reduced mod 2pi) for x > 0; on x = 0 the positive y-axis is theta = 0
    and the negative y-axis takes the shared limit of both branches.
    """
    alpha, beta = params.alpha, params.beta
    vm, vp = params.v_minus, params.v_plus
    if x == 0.0:
        if y == 0.0:
            raise DegenerateOriginError("polar angle undefined at the two-fold")
        if y > 0.0:
            return PolarPoint(y, 0.0)
        return PolarPoint((2.0 * alpha - 1.0) * y, negative_y_axis_angle(params))
    if x < 0.0:
        c = -2.0 * (vm / vp) * x
        tau = tau_left(params, x, y)
        # theta = (beta/alpha) ln(1 + alpha/(y/tau - V-)), rearranged so the
        # tau -> 0 limit needs no special case
        theta = (beta / alpha) * math.log1p(alpha * tau / (y - vm * tau))
    else:
        c = 2.0 * x
        tau = tau_right(x, y)
        theta = (beta / alpha) * math.log1p(alpha * tau / (y - tau)) + _TWO_PI
    r = alpha * y + (1.0 - alpha) * math.sqrt(y * y + c)
    return PolarPoint(r, theta % _TWO_PI)


def polar_flow_from_singularity(
    params: TwoFoldParams, C: float, t: float, t0: float
) -> PolarPoint:
    """Solution of r' = alpha, theta' = beta/r that leaves r = 0 at t0.

    The angular offset C in [0, 2pi) labels the member of the family.
    """
    if not t > t0:
        raise DomainError(f"need t > t0, got t = {t}, t0 = {t0}")
    dt = t - t0
    r = params.alpha * dt
    theta = ((params.beta / params.alpha) * math.log(dt) + C) % _TWO_PI
    return PolarPoint(r, theta)
