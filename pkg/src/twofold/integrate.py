"""Numerical time-stepping for piecewise-smooth fields.

Two integrators are provided.  The deterministic one is a hybrid scheme:
fixed-step classical Runge-Kutta on one-sided smooth segments, surface
crossings located by bisection inside the offending step, and exact
sliding (x held at zero) governed by the Filippov combination wherever the
two half fields trap the orbit on the surface.  Orbits reaching the
singularity stop with a TwoFoldReached event; continuing through it
requires an explicit choice of outgoing orbit (two_fold_continuation).
Repelling sliding is never produced: a start inside the repelling region
departs into x < 0, and all other orbits are viable by construction.

The stochastic integrator is plain Euler-Maruyama with the drift side
selected by the sign of x each step; no sliding bookkeeping is attempted
because noise itself resolves the surface.  Surface crossings with y > 0
are logged, with a chatter guard suppressing noise-scale recrossings.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    FieldSpec,
    Side,
    TwoFoldError,
    eval_field,
)
from .normalform import psi_point_on_ray

__all__ = [
    "MaxStepsExceededError",
    "NonFiniteStateError",
    "IntegratorConfig",
    "EventKind",
    "Event",
    "Trajectory",
    "NoiseSpec",
    "ViablePsi",
    "Stop",
    "integrate_deterministic",
    "two_fold_continuation",
    "integrate_sde",
    "scalar_field",
    "vector_drift",
]


class MaxStepsExceededError(TwoFoldError):
    pass


class NonFiniteStateError(TwoFoldError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    """Step sizes and tolerances for both integrators.

    dt:           base step (default from the reference simulations).
    event_tol:    bisection tolerance for crossing times.
    twofold_tol:  sliding-state norm below which two-fold arrival is declared.
    max_steps:    hard cap on accepted steps.
    chatter_guard: minimum |x| excursion between recorded SDE crossings;
                  None selects 3 * eps * sqrt(dt) * ||D|| at run time.
    """

    dt: float = 1e-5
    event_tol: float = 1e-12
    twofold_tol: float = 1e-6
    max_steps: int = 50_000_000
    chatter_guard: float | None = None

    def __post_init__(self):
        if not (self.dt > 0 and self.event_tol > 0 and self.twofold_tol > 0):
            raise ValueError("dt, event_tol and twofold_tol must be positive")
        if not self.event_tol < self.dt:
            raise ValueError("event_tol must be smaller than dt")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


class EventKind(enum.Enum):
    CROSSING_POS_Y = "crossing_pos_y"
    CROSSING_NEG_Y = "crossing_neg_y"
    SLIDING_ENTRY = "sliding_entry"
    SLIDING_EXIT = "sliding_exit"
    TWO_FOLD_REACHED = "two_fold_reached"


@dataclass(frozen=True)
class Event:
    kind: EventKind
    t: float
    X: np.ndarray


@dataclass
class Trajectory:
    """Time-stamped states with an ordered event log."""

    times: np.ndarray
    states: np.ndarray
    events: list[Event] = field(default_factory=list)

    def interp(self, t: float) -> np.ndarray:
        """Linear interpolation of the state at time t."""
        return np.array(
            [np.interp(t, self.times, self.states[:, c]) for c in range(3)]
        )

    def event_times(self, kind: EventKind) -> np.ndarray:
        return np.array([e.t for e in self.events if e.kind is kind])

    def last_event_before(self, kind: EventKind, T: float) -> Event | None:
        best = None
        for e in self.events:
            if e.kind is kind and e.t <= T:
                best = e
        return best


@dataclass
class NoiseSpec:
    """Additive noise eps * D dW with a reproducible seed."""

    epsilon: float
    D: np.ndarray = None
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.D is None:
            self.D = np.eye(3)
        self.D = np.asarray(self.D, dtype=float)
        if self.D.shape != (3, 3):
            raise ValueError("D must be a 3x3 matrix")


# --- scalar field closures (hot path works on plain floats) ---------------

def scalar_field(spec: FieldSpec, side: Side):
    """Return f(x, y, z, t) -> (fx, fy, fz) for one side of the field."""
    if spec.kind == "normal_form":
        vm = spec.params.v_minus
        vp = spec.params.v_plus
        kind = spec.perturbation.kind
        left = side is Side.LEFT
        if kind == "none":
            if left:
                return lambda x, y, z, t: (z, vm, 1.0)
            return lambda x, y, z, t: (-y, 1.0, vp)
        if kind == "linear_damping":
            if left:
                return lambda x, y, z, t: (z - x, vm - y, 1.0 - z)
            return lambda x, y, z, t: (-y - x, 1.0 - y, vp - z)
        if kind == "cubic":
            if left:
                return lambda x, y, z, t: (z - x * x * x, vm - y * y * y, 1.0)
            return lambda x, y, z, t: (-y - x * x * x, 1.0 - y * y * y, vp)
        # generic polynomial: precompute the nonzero monomials
        table = spec.perturbation.coeffs[0 if left else 1]
        terms = [
            (comp, i, j, k, table[comp, i, j, k])
            for comp in range(3)
            for (i, j, k) in map(tuple, np.argwhere(table[comp] != 0.0))
        ]
        base = (
            (lambda x, y, z: (z, vm, 1.0))
            if left
            else (lambda x, y, z: (-y, 1.0, vp))
        )

        def f_poly(x, y, z, t, _terms=terms, _base=base):
            g = [0.0, 0.0, 0.0]
            for comp, i, j, k, c in _terms:
                g[comp] += c * x**i * y**j * z**k
            b = _base(x, y, z)
            return (b[0] + g[0], b[1] + g[1], b[2] + g[2])

        return f_poly

    # controlled Hopf with time as the third coordinate
    from .desync import controlled_field_one_sided

    def f_hopf(x, y, z, t, _p=spec.control, _side=side):
        fx, fy = controlled_field_one_sided(t, x, y, _p, _side)
        return (fx, fy, 1.0)

    return f_hopf


def vector_drift(spec: FieldSpec):
    """Return F(X, t) on (n, 3) arrays, side chosen rowwise by sign of x."""
    if spec.kind != "normal_form":
        raise ValueError("vectorised drift supports normal-form specs only")
    vm = spec.params.v_minus
    vp = spec.params.v_plus
    kind = spec.perturbation.kind
    pert = spec.perturbation

    def drift(X, t=0.0):
        x, y, z = X[:, 0], X[:, 1], X[:, 2]
        left = x < 0.0
        F = np.empty_like(X)
        F[:, 0] = np.where(left, z, -y)
        F[:, 1] = np.where(left, vm, 1.0)
        F[:, 2] = np.where(left, 1.0, vp)
        if kind == "linear_damping":
            F -= X
        elif kind == "cubic":
            F[:, 0] -= x * x * x
            F[:, 1] -= y * y * y
        elif kind == "polynomial":
            gL = pert(Side.LEFT, X)
            gR = pert(Side.RIGHT, X)
            F += np.where(left[:, None], gL, gR)
        return F

    return drift


# --- deterministic hybrid integrator --------------------------------------

def _rk4(f, x, y, z, t, h):
    a1, b1, c1 = f(x, y, z, t)
    a2, b2, c2 = f(
        x + 0.5 * h * a1, y + 0.5 * h * b1, z + 0.5 * h * c1, t + 0.5 * h
    )
    a3, b3, c3 = f(
        x + 0.5 * h * a2, y + 0.5 * h * b2, z + 0.5 * h * c2, t + 0.5 * h
    )
    a4, b4, c4 = f(x + h * a3, y + h * b3, z + h * c3, t + h)
    return (
        x + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        y + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
        z + h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4),
    )


class _Recorder:
    def __init__(self, t0, X0):
        self.times = [t0]
        self.states = [tuple(X0)]
        self.events: list[Event] = []

    def sample(self, t, X):
        self.times.append(t)
        self.states.append(tuple(X))

    def event(self, kind, t, X):
        self.events.append(Event(kind, t, np.asarray(X, dtype=float)))

    def freeze(self) -> Trajectory:
        return Trajectory(
            np.asarray(self.times), np.asarray(self.states), self.events
        )


def _check_finite(x, y, z):
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise NonFiniteStateError(f"state became non-finite: {(x, y, z)}")


def integrate_deterministic(
    spec: FieldSpec, X0, t0: float, t_end: float, cfg: IntegratorConfig
) -> Trajectory:
    """Hybrid Filippov integration from X0 over [t0, t_end].

    Returns the trajectory with its event log; integration stops early with
    a TwoFoldReached event when a sliding orbit contracts into the
    singularity (restart via two_fold_continuation).
    """
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    fL = scalar_field(spec, Side.LEFT)
    fR = scalar_field(spec, Side.RIGHT)
    x, y, z = (float(v) for v in np.asarray(X0, dtype=float))
    _check_finite(x, y, z)
    t = t0
    rec = _Recorder(t0, (x, y, z))
    budget = cfg.max_steps
    tiny = 1e-15 * max(1.0, abs(t_end))

    def surface_mode(y, z, t):
        """'slide', Side, or 'twofold' for a point sitting on x = 0."""
        fl1 = fL(0.0, y, z, t)[0]
        fr1 = fR(0.0, y, z, t)[0]
        if fl1 == 0.0 and fr1 == 0.0:
            return "twofold"
        if fl1 >= 0.0 >= fr1:
            return "slide"
        if fl1 < 0.0:
            return Side.LEFT
        return Side.RIGHT

    on_surf = abs(x) < 1e-12 * (1.0 + math.hypot(x, math.hypot(y, z)))
    if on_surf:
        x = 0.0
        mode = surface_mode(y, z, t)
        if mode == "slide":
            rec.event(EventKind.SLIDING_ENTRY, t, (0.0, y, z))
        elif isinstance(mode, Side):
            fl1 = fL(0.0, y, z, t)[0]
            fr1 = fR(0.0, y, z, t)[0]
            # transversal start: both normal components agree in sign
            if fl1 * fr1 > 0.0:
                kind = (
                    EventKind.CROSSING_POS_Y if y > 0 else EventKind.CROSSING_NEG_Y
                )
                rec.event(kind, t, (0.0, y, z))
    else:
        mode = Side.LEFT if x < 0.0 else Side.RIGHT

    while t < t_end - tiny:
        if mode == "twofold":
            rec.event(EventKind.TWO_FOLD_REACHED, t, (0.0, y, z))
            break

        if mode == "slide":
            res = _slide(
                spec, fL, fR, y, z, t, t_end, cfg, rec, budget
            )
            t, y, z, budget, outcome, exit_side = res
            x = 0.0
            if outcome == "twofold":
                rec.event(EventKind.TWO_FOLD_REACHED, t, (0.0, y, z))
                break
            if outcome == "t_end":
                break
            rec.event(EventKind.SLIDING_EXIT, t, (0.0, y, z))
            mode = exit_side
            continue

        # one-sided smooth segment
        side = mode
        f = fL if side is Side.LEFT else fR
        inward = -1.0 if side is Side.LEFT else 1.0  # sign of x inside
        while t < t_end - tiny:
            if budget <= 0:
                raise MaxStepsExceededError(
                    f"exceeded {cfg.max_steps} steps at t = {t}"
                )
            budget -= 1
            h = min(cfg.dt, t_end - t)
            xn, yn, zn = _rk4(f, x, y, z, t, h)
            _check_finite(xn, yn, zn)
            if xn * inward > 0.0:
                x, y, z, t = xn, yn, zn, t + h
                rec.sample(t, (x, y, z))
                continue
            # the step ends on or beyond the surface: bisect the crossing
            lo = 0.0
            if x == 0.0:
                # segment starts on the surface; find a strictly interior time
                s = h
                for _ in range(80):
                    s *= 0.5
                    xs, _, _ = _rk4(f, x, y, z, t, s)
                    if xs * inward > 0.0:
                        lo = s
                        break
                else:
                    # field cannot actually enter this side; flip over
                    mode = Side.RIGHT if side is Side.LEFT else Side.LEFT
                    break
            hi = h
            for _ in range(200):
                if hi - lo <= cfg.event_tol:
                    break
                smid = 0.5 * (lo + hi)
                xs, _, _ = _rk4(f, x, y, z, t, smid)
                if xs * inward > 0.0:
                    lo = smid
                else:
                    hi = smid
            s_cross = 0.5 * (lo + hi)
            xc, yc, zc = _rk4(f, x, y, z, t, s_cross)
            t = t + s_cross
            x, y, z = 0.0, yc, zc
            kind = EventKind.CROSSING_POS_Y if y > 0 else EventKind.CROSSING_NEG_Y
            rec.event(kind, t, (0.0, y, z))
            rec.sample(t, (x, y, z))
            new_mode = surface_mode(y, z, t)
            if new_mode == "slide":
                rec.event(EventKind.SLIDING_ENTRY, t, (0.0, y, z))
            mode = new_mode
            break
        else:
            break  # reached t_end inside the segment

    return rec.freeze()


def _slide(spec, fL, fR, y, z, t, t_end, cfg, rec, budget):
    """Sliding on x = 0 until two-fold arrival, region exit, or t_end.

    Returns (t, y, z, budget, outcome, exit_side) with outcome in
    {"twofold", "t_end", "exit"}.
    """

    def combo(y, z, t):
        aL = fL(0.0, y, z, t)
        aR = fR(0.0, y, z, t)
        denom = aL[0] - aR[0]
        q = aL[0] / denom if denom != 0.0 else math.nan
        sy = (1.0 - q) * aL[1] + q * aR[1]
        sz = (1.0 - q) * aL[2] + q * aR[2]
        return sy, sz, q

    def rhs(y, z, t):
        sy, sz, _ = combo(y, z, t)
        return sy, sz

    tiny = 1e-15 * max(1.0, abs(t_end))
    while t < t_end - tiny:
        if budget <= 0:
            raise MaxStepsExceededError(f"exceeded {cfg.max_steps} steps at t = {t}")
        budget -= 1
        norm = math.hypot(y, z)
        if norm < cfg.twofold_tol:
            return t, y, z, budget, "twofold", None
        sy, sz, q = combo(y, z, t)
        speed = math.hypot(sy, sz)
        if not (math.isfinite(sy) and math.isfinite(sz)):
            raise NonFiniteStateError(f"sliding field non-finite at {(y, z)}")
        h = min(cfg.dt, t_end - t)
        if speed > 0.0:
            # shrink near the singularity: the angular rate grows like 1/norm,
            # so steps must stay well under norm/speed to keep the approach
            # ray stable; the floor guarantees entry into the stop ball
            h = min(h, max(norm / (16.0 * speed), cfg.twofold_tol / (8.0 * speed)))
        yn, zn = _rk4_2d(rhs, y, z, t, h)
        _check_finite(0.0, yn, zn)
        _, _, qn = combo(yn, zn, t + h)
        if math.isnan(qn) or not 0.0 <= qn <= 1.0:
            # bisect the exit time where q leaves [0, 1]
            lo, hi = 0.0, h
            for _ in range(200):
                if hi - lo <= cfg.event_tol:
                    break
                smid = 0.5 * (lo + hi)
                ym, zm = _rk4_2d(rhs, y, z, t, smid)
                _, _, qm = combo(ym, zm, t + smid)
                if math.isnan(qm) or not 0.0 <= qm <= 1.0:
                    hi = smid
                else:
                    lo = smid
            s_exit = 0.5 * (lo + hi)
            ye, ze = _rk4_2d(rhs, y, z, t, s_exit)
            # a fold graze within a few stop radii of the singularity is the
            # two-fold arrival itself; treating it as an exit would chatter
            if math.hypot(ye, ze) <= 10.0 * cfg.twofold_tol:
                t += s_exit
                return t, ye, ze, budget, "twofold", None
            _, _, qe = combo(ye, ze, t + s_exit)
            exit_side = Side.LEFT if (not math.isnan(qe) and qe < 0.5) else Side.RIGHT
            t += s_exit
            rec.sample(t, (0.0, ye, ze))
            return t, ye, ze, budget, "exit", exit_side
        y, z, t = yn, zn, t + h
        rec.sample(t, (0.0, y, z))
    return t, y, z, budget, "t_end", None


def _rk4_2d(rhs, y, z, t, h):
    b1, c1 = rhs(y, z, t)
    b2, c2 = rhs(y + 0.5 * h * b1, z + 0.5 * h * c1, t + 0.5 * h)
    b3, c3 = rhs(y + 0.5 * h * b2, z + 0.5 * h * c2, t + 0.5 * h)
    b4, c4 = rhs(y + h * b3, z + h * c3, t + h)
    return (
        y + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
        z + h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4),
    )


# --- continuation through the singularity ----------------------------------

@dataclass(frozen=True)
class ViablePsi:
    """Continue along the outgoing orbit meeting the invariant ray at offset a."""

    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")


class Stop:
    """Truncate at the singularity."""


def two_fold_continuation(spec: FieldSpec, t_arrival: float, policy):
    """Initial condition for restarting past the two-fold, or None for Stop.

    The restart point is the outgoing orbit evaluated one ray-return past
    the singularity (its normal-form position), shifted to arrival time.
    """
    if isinstance(policy, Stop) or policy is Stop:
        return None
    if not isinstance(policy, ViablePsi):
        raise TypeError(f"unknown continuation policy {policy!r}")
    if spec.kind != "normal_form":
        raise ValueError("continuation needs a normal-form field")
    X = psi_point_on_ray(spec.params, policy.a)
    return t_arrival + policy.a, X


# --- Euler-Maruyama ---------------------------------------------------------

def default_chatter_guard(noise: NoiseSpec, dt: float) -> float:
    """3 eps sqrt(dt) ||D||: noise-scale excursions are not real crossings."""
    return 3.0 * noise.epsilon * math.sqrt(dt) * float(np.linalg.norm(noise.D, 2))


def integrate_sde(
    spec: FieldSpec,
    X0,
    t0: float,
    t_end: float,
    cfg: IntegratorConfig,
    noise: NoiseSpec,
) -> Trajectory:
    """Euler-Maruyama path of the noisy field, reproducible from the seed.

    The drift side follows the sign of x each step; surface crossings with
    y > 0 are recorded (linear-in-step interpolation) whenever |x| exceeded
    the chatter guard since the previous recorded crossing.
    """
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    if spec.kind != "normal_form":
        raise ValueError("integrate_sde supports normal-form specs")
    fL = scalar_field(spec, Side.LEFT)
    fR = scalar_field(spec, Side.RIGHT)
    dt = cfg.dt
    n_steps = int(round((t_end - t0) / dt))
    guard = (
        cfg.chatter_guard
        if cfg.chatter_guard is not None
        else default_chatter_guard(noise, dt)
    )
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(noise.seed)))
    amp = noise.epsilon * math.sqrt(dt)
    D = noise.D
    identity_D = np.allclose(D, np.eye(3))

    times = t0 + dt * np.arange(n_steps + 1)
    states = np.empty((n_steps + 1, 3))
    states[0] = np.asarray(X0, dtype=float)
    events: list[Event] = []
    x, y, z = (float(v) for v in states[0])
    max_exc = 0.0
    for k in range(n_steps):
        t = times[k]
        fx, fy, fz = (fL if x < 0.0 else fR)(x, y, z, t)
        xi = rng.standard_normal(3)
        if not identity_D:
            xi = D @ xi
        xn = x + fx * dt + amp * xi[0]
        yn = y + fy * dt + amp * xi[1]
        zn = z + fz * dt + amp * xi[2]
        if not (math.isfinite(xn) and math.isfinite(yn) and math.isfinite(zn)):
            raise NonFiniteStateError(f"state non-finite at step {k}")
        if x * xn < 0.0:
            frac = x / (x - xn)
            y_c = y + frac * (yn - y)
            if y_c > 0.0 and max_exc >= guard:
                z_c = z + frac * (zn - z)
                events.append(
                    Event(
                        EventKind.CROSSING_POS_Y,
                        t + frac * dt,
                        np.array([0.0, y_c, z_c]),
                    )
                )
                max_exc = 0.0
        if abs(xn) > max_exc:
            max_exc = abs(xn)
        x, y, z = xn, yn, zn
        states[k + 1, 0] = x
        states[k + 1, 1] = y
        states[k + 1, 2] = z
    return Trajectory(times, states, events)
