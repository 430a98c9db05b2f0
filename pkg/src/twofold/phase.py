"""Asymptotic phase machinery: limit cycle, return times, phase densities.

Orbits leaving the two-fold settle onto a stable periodic orbit.  The
phase of a trajectory relative to a reference time T is

    phi_T = 2 pi (T - s_T) / tau  mod 2 pi,

where s_T is the last time the trajectory met the surface x = 0 with
y > 0.  Near the singularity successive surface returns stretch times by
the factor mu; near the cycle they shift times by the period tau.  The
return-time function f interpolates between the two regimes and transports
the reciprocal law of s_T outward, which is how the theoretical phase
density is constructed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .core import FieldSpec, Side, TwoFoldError
from .integrate import (
    EventKind,
    IntegratorConfig,
    Trajectory,
    _rk4,
    integrate_deterministic,
    scalar_field,
)
from .normalform import psi_point_on_ray

__all__ = [
    "NoCrossingError",
    "DepthTooLargeError",
    "SeedEscapedError",
    "NoConvergenceError",
    "PeriodicOrbit",
    "find_periodic_orbit",
    "phase_phi_T",
    "ReturnTimeTable",
    "return_time_table",
    "DensityTable",
    "pdf_sT",
    "auto_depth",
    "pdf_phase",
    "PhaseTheory",
    "theoretical_phase_pdf",
    "isochron_mesh",
]

_TWO_PI = 2.0 * math.pi


class NoCrossingError(TwoFoldError):
    """No positive-y surface crossing exists before the reference time."""


class DepthTooLargeError(TwoFoldError):
    """The inverse return-time chain cannot be pushed that deep."""


class SeedEscapedError(TwoFoldError):
    """A seeded orbit failed to return to the surface."""


class NoConvergenceError(TwoFoldError):
    """The section map iteration did not settle onto a periodic orbit."""


# --- periodic orbit ---------------------------------------------------------

@dataclass
class PeriodicOrbit:
    """Limit cycle with its reference section point on {x = 0, y > 0}."""

    section_point: np.ndarray
    tau: float
    times: np.ndarray
    states: np.ndarray
    events: list = None

    def surface_crossings(self) -> list:
        """Crossing events over one period (the closing return excluded)."""
        if not self.events:
            return []
        cut = self.times[0] + self.tau * (1.0 - 1e-9)
        return [
            e
            for e in self.events
            if e.kind in (EventKind.CROSSING_POS_Y, EventKind.CROSSING_NEG_Y)
            and e.t < cut
        ]


def _hopf_section_crossings(spec, traj, cfg):
    """Times/states where y crosses zero upward with x > 0 (smooth field)."""
    f = scalar_field(spec, Side.RIGHT)
    times, states = traj.times, traj.states
    out = []
    for i in range(len(times) - 1):
        y0, y1 = states[i, 1], states[i + 1, 1]
        if y0 < 0.0 <= y1 and states[i, 0] > 0.0:
            x, y, z = states[i]
            h = times[i + 1] - times[i]
            lo, hi = 0.0, h
            for _ in range(200):
                if hi - lo <= cfg.event_tol:
                    break
                mid = 0.5 * (lo + hi)
                _, ym, _ = _rk4(f, x, y, z, times[i], mid)
                if ym < 0.0:
                    lo = mid
                else:
                    hi = mid
            s = 0.5 * (lo + hi)
            xc, yc, zc = _rk4(f, x, y, z, times[i], s)
            out.append((times[i] + s, np.array([xc, 0.0, zc])))
    return out


def find_periodic_orbit(
    spec: FieldSpec,
    guess,
    cfg: IntegratorConfig,
    section: str = "surface_pos_y",
    tol: float = 1e-10,
    max_time: float = 400.0,
) -> PeriodicOrbit:
    """Iterate the section map from a basin point until it fixes itself.

    section "surface_pos_y" uses the crossings of x = 0 with y > 0 (the
    two-fold systems); "y0_x_pos" uses upward crossings of y = 0 with x > 0
    (planar oscillators embedded with a time-like third coordinate).
    """
    guess = np.asarray(guess, dtype=float)
    t, X = 0.0, guess
    leg = 80.0
    prev = None
    while t < max_time:
        traj = integrate_deterministic(spec, X, t, t + leg, cfg)
        if section == "surface_pos_y":
            hits = [
                (e.t, e.X)
                for e in traj.events
                if e.kind is EventKind.CROSSING_POS_Y and e.t > t + 1e-9
            ]
        elif section == "y0_x_pos":
            hits = [(tc, Xc) for tc, Xc in _hopf_section_crossings(spec, traj, cfg)
                    if tc > t + 1e-9]
        else:
            raise ValueError(f"unknown section {section!r}")
        if prev is not None:
            hits = [(prev[0], prev[1])] + hits
        for (t1, X1), (t2, X2) in zip(hits, hits[1:]):
            if np.linalg.norm(X2 - X1) < tol:
                tau = t2 - t1
                period = integrate_deterministic(spec, X2, 0.0, tau, cfg)
                return PeriodicOrbit(
                    X2.copy(), tau, period.times, period.states, period.events
                )
        if not hits:
            raise NoConvergenceError("no section crossings found from the guess")
        prev = hits[-1]
        t, X = traj.times[-1], traj.states[-1]
    raise NoConvergenceError(
        f"section points did not contract below {tol} within t = {max_time}"
    )


def phase_phi_T(traj: Trajectory, T: float, tau: float) -> float:
    """Phase 2 pi (T - s_T)/tau mod 2 pi from the trajectory's crossing log."""
    ev = traj.last_event_before(EventKind.CROSSING_POS_Y, T)
    if ev is None:
        raise NoCrossingError(f"no surface crossing with y > 0 at or before T = {T}")
    return (_TWO_PI * (T - ev.t) / tau) % _TWO_PI


# --- return-time function ---------------------------------------------------

class ReturnTimeTable:
    """Tabulated strictly increasing return-time map with f(a) > a.

    Inside the knot span a monotone piecewise-cubic interpolant is used.
    Below the first knot the map is extended linearly through the origin
    (geometric regime), above the last knot by a constant shift (periodic
    regime).
    """

    def __init__(self, a_knots, f_values):
        a = np.asarray(a_knots, dtype=float)
        f = np.asarray(f_values, dtype=float)
        if a.ndim != 1 or a.shape != f.shape or len(a) < 4:
            raise ValueError("need matching 1-d knot arrays with >= 4 entries")
        if not np.all(np.diff(a) > 0):
            raise ValueError("knot abscissae must be strictly increasing")
        if not np.all(np.diff(f) > 0):
            raise ValueError("return times must be strictly increasing")
        if not np.all(f > a):
            raise ValueError("return times must satisfy f(a) > a")
        self.a_knots = a
        self.f_values = f
        self.below_slope = f[0] / a[0]
        self.above_offset = f[-1] - a[-1]
        self._pchip = PchipInterpolator(a, f)
        self._deriv = self._pchip.derivative()

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        inner = self._pchip(np.clip(a, self.a_knots[0], self.a_knots[-1]))
        out = np.where(
            a < self.a_knots[0],
            self.below_slope * a,
            np.where(a > self.a_knots[-1], a + self.above_offset, inner),
        )
        return out if out.ndim else float(out)

    def derivative(self, a):
        a = np.asarray(a, dtype=float)
        inner = self._deriv(np.clip(a, self.a_knots[0], self.a_knots[-1]))
        out = np.where(
            a < self.a_knots[0],
            self.below_slope,
            np.where(a > self.a_knots[-1], 1.0, inner),
        )
        return out if out.ndim else float(out)

    def inverse(self, u, tol: float = 1e-12):
        """Bisection inverse of the monotone map, elementwise."""
        u = np.asarray(u, dtype=float)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        if np.any(u <= 0.0):
            raise DepthTooLargeError("inverse return time requires positive times")
        lo = np.minimum(u / self.below_slope, u) * 0.5
        hi = np.maximum(u - self.above_offset, np.max(self.a_knots)) + 1.0
        hi = np.broadcast_to(hi, u.shape).copy()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            above = self(mid) > u
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
            if np.max(hi - lo) <= tol:
                break
        out = 0.5 * (lo + hi)
        return float(out[0]) if scalar else out


def return_time_table(
    spec: FieldSpec,
    a_min: float,
    cfg: IntegratorConfig,
    n_seeds: int = 12,
    t_max: float = 30.0,
) -> ReturnTimeTable:
    """Build the return-time map from orbits seeded just off the singularity.

    Seeds are placed on the invariant ray at times a covering one geometric
    span [a_min, mu a_min); every consecutive pair of recorded crossing
    times of a seed contributes one knot (a_k, f(a_k)), so the pooled knots
    tile the whole range out to the periodic regime.
    """
    if spec.kind != "normal_form":
        raise ValueError("return-time tables need a normal-form field")
    if not a_min > 0:
        raise ValueError("a_min must be positive")
    mu = spec.params.mu
    seeds = np.exp(
        np.linspace(math.log(a_min), math.log(mu * a_min), n_seeds + 1)
    )[:-1]
    pairs: list[tuple[float, float]] = []
    for a in seeds:
        X0 = psi_point_on_ray(spec.params, float(a))
        traj = integrate_deterministic(spec, X0, float(a), t_max, cfg)
        ts = traj.event_times(EventKind.CROSSING_POS_Y)
        if len(ts) < 2:
            raise SeedEscapedError(
                f"orbit seeded at a = {a} recorded {len(ts)} crossing(s)"
            )
        pairs.extend(zip(ts[:-1], ts[1:]))
    pairs.sort()
    a_all = np.array([p[0] for p in pairs])
    f_all = np.array([p[1] for p in pairs])
    # drop near-duplicate abscissae and any numerically non-monotone values
    keep = np.concatenate([[True], np.diff(a_all) > 1e-10 * a_all[1:]])
    a_all, f_all = a_all[keep], f_all[keep]
    mono = np.concatenate([[True], np.diff(f_all) > 0.0])
    a_all, f_all = a_all[mono], f_all[mono]
    return ReturnTimeTable(a_all, f_all)


# --- densities ---------------------------------------------------------------

@dataclass
class DensityTable:
    """Tabulated 1-d probability density, normalised at construction."""

    s: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.s.ndim != 1 or self.s.shape != self.p.shape or len(self.s) < 2:
            raise ValueError("need matching 1-d arrays with >= 2 entries")
        if not np.all(np.diff(self.s) > 0):
            raise ValueError("support knots must be strictly increasing")
        if not np.all(np.isfinite(self.p)):
            raise ValueError("density values must be finite")
        if np.min(self.p) < -1e-12 * max(np.max(self.p), 1.0):
            raise ValueError("density values must be non-negative")
        self.p = np.maximum(self.p, 0.0)
        self.raw_mass = float(np.trapezoid(self.p, self.s))
        if not self.raw_mass > 0.0:
            raise ValueError("density has no mass")
        self.p = self.p / self.raw_mass
        self._cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * (self.p[1:] + self.p[:-1]) * np.diff(self.s))]
        )
        self._cum /= self._cum[-1]

    @property
    def support(self) -> tuple[float, float]:
        return float(self.s[0]), float(self.s[-1])

    def pdf(self, x):
        return np.interp(x, self.s, self.p, left=0.0, right=0.0)

    def cdf(self, x):
        return np.interp(x, self.s, self._cum, left=0.0, right=1.0)


def auto_depth(
    table: ReturnTimeTable,
    T: float,
    t0: float,
    rtol: float = 0.02,
    max_depth: int = 64,
) -> int:
    """Smallest depth placing the reciprocal seed inside the geometric regime.

    The reciprocal law for the last crossing time is exact only where
    f(a)/a has settled onto its small-a slope; the chain T, f^-1(T), ... is
    descended until that holds within rtol.
    """
    u = T - t0
    if not u > 0:
        raise ValueError("T must exceed t0")
    target = table.below_slope
    n = 0
    while abs(float(table(u)) / u - target) > rtol * target:
        u = table.inverse(u)
        n += 1
        if n > max_depth:
            raise DepthTooLargeError(
                f"no geometric regime reached within {max_depth} inversions"
            )
    return max(n, 1)


def pdf_sT(
    table: ReturnTimeTable,
    T: float,
    t0: float,
    n: int = 10,
    grid_size: int = 1601,
) -> DensityTable:
    """Density of the last positive-y crossing time s_T before T.

    A reciprocal density on the n-fold pre-image of [f^-1(T), T] is pushed
    forward n times through the tabulated map (times are measured from the
    two-fold passage at t0 when entering the table).
    """
    if n < 1:
        raise ValueError("depth n must be >= 1")
    u = T - t0
    if not u > 0:
        raise ValueError("T must exceed t0")
    chain = [u]
    for _ in range(n + 1):
        v = table.inverse(chain[-1])
        if not (np.isfinite(v) and v > 1e-300):
            raise DepthTooLargeError(
                f"inverse chain left the representable range at depth {len(chain)}"
            )
        chain.append(float(v))
    seed_lo, seed_hi = chain[n + 1], chain[n]
    log_ratio = math.log(seed_hi / seed_lo)
    sgrid = np.linspace(chain[1], u, grid_size)
    v = sgrid.copy()
    jac = np.ones(grid_size)
    for _ in range(n):
        v = table.inverse(v)
        jac /= table.derivative(v)
    v = np.clip(v, seed_lo, seed_hi)
    p = jac / (log_ratio * v)
    return DensityTable(t0 + sgrid, p)


def pdf_phase(
    p_sT: DensityTable, T: float, tau: float, grid_size: int = 1441
) -> DensityTable:
    """Wrap the s_T density onto the phase circle.

    phi = 2 pi (T - s)/tau mod 2 pi; the transport Jacobian is tau/(2 pi)
    and branches are summed where the support folds over.
    """
    lo, hi = p_sT.support
    phi = np.linspace(0.0, _TWO_PI, grid_size)
    dens = np.zeros(grid_size)
    k_lo = math.floor((T - hi) / tau) - 1
    k_hi = math.ceil((T - lo) / tau) + 1
    for k in range(k_lo, k_hi + 1):
        s = T - (phi + _TWO_PI * k) * tau / _TWO_PI
        dens += p_sT.pdf(s) * tau / _TWO_PI
    return DensityTable(phi, dens)


# --- end-to-end theoretical density -----------------------------------------

@dataclass
class PhaseTheory:
    """Everything the phase-density construction produced."""

    t0: float
    tau: float
    orbit: PeriodicOrbit
    table: ReturnTimeTable
    depth: int
    density_sT: DensityTable
    density_phi: DensityTable


def theoretical_phase_pdf(
    spec: FieldSpec,
    X0,
    T: float,
    cfg_arrival: IntegratorConfig | None = None,
    cfg_orbits: IntegratorConfig | None = None,
    a_min: float = 1e-3,
    n: int | None = None,
    n_seeds: int = 12,
) -> PhaseTheory:
    """Theoretical phase density for noisy passage through the two-fold.

    Runs the deterministic arrival from X0 for t0, locates the limit cycle,
    builds the return-time table, then pushes the reciprocal law forward.
    The depth defaults to the smallest one whose seed interval lies in the
    geometric regime (auto_depth).
    """
    cfg_arrival = cfg_arrival or IntegratorConfig(dt=1e-4)
    cfg_orbits = cfg_orbits or IntegratorConfig(dt=1e-3, event_tol=1e-13)
    arrival = integrate_deterministic(spec, X0, 0.0, T, cfg_arrival)
    hit = [e for e in arrival.events if e.kind is EventKind.TWO_FOLD_REACHED]
    if not hit:
        raise TwoFoldError("deterministic orbit did not reach the two-fold")
    t0 = hit[0].t
    orbit = find_periodic_orbit(
        spec, psi_point_on_ray(spec.params, 1.0), cfg_orbits
    )
    table = return_time_table(
        spec, a_min, cfg_orbits, n_seeds=n_seeds,
        t_max=(T - t0) + 3.0 * orbit.tau + 1.0,
    )
    depth = n if n is not None else auto_depth(table, T, t0)
    density_sT = pdf_sT(table, T, t0, depth)
    density_phi = pdf_phase(density_sT, T, orbit.tau)
    return PhaseTheory(t0, orbit.tau, orbit, table, depth, density_sT, density_phi)


# --- isochrons ---------------------------------------------------------------

def isochron_mesh(
    spec: FieldSpec,
    orbit: PeriodicOrbit,
    n_orbits: int,
    phases,
    cfg: IntegratorConfig | None = None,
    a_min: float = 1e-3,
    t_end: float = 30.0,
) -> list[np.ndarray]:
    """Polylines of constant asymptotic phase on the outgoing-orbit surface.

    n_orbits trajectories are launched from the invariant ray, each sample
    point inherits the asymptotic phase of its orbit (the terminal phi_T
    back-propagated at rate 2 pi / tau), and level sets are read off at the
    requested phases.  Points are ordered by time from the singularity,
    i.e. inside-out toward the cycle.
    """
    if n_orbits < 10:
        raise ValueError("need n_orbits >= 10")
    cfg = cfg or IntegratorConfig(dt=1e-3, event_tol=1e-13)
    mu = spec.params.mu
    tau = orbit.tau
    seeds = np.exp(
        np.linspace(math.log(a_min), math.log(mu * a_min), n_orbits + 1)
    )[:-1]
    trajs = []
    phi_ends = []
    for a in seeds:
        X0 = psi_point_on_ray(spec.params, float(a))
        traj = integrate_deterministic(spec, X0, float(a), t_end, cfg)
        trajs.append(traj)
        phi_ends.append(phase_phi_T(traj, t_end, tau))
    polylines = []
    for target in phases:
        target = float(target) % _TWO_PI
        pts = []
        for a, traj, phi_end in zip(seeds, trajs, phi_ends):
            delta = (phi_end - target) % _TWO_PI
            t_star = t_end - delta * tau / _TWO_PI
            while t_star >= traj.times[0]:
                pts.append((t_star, traj.interp(t_star)))
                t_star -= tau
        pts.sort(key=lambda item: item[0])
        polylines.append(np.array([p for _, p in pts]))
    return polylines
