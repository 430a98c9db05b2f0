"""Desynchronising smooth oscillators through a controlled two-fold.

A planar Hopf oscillator is driven by a discontinuous control switched on
over a time window (t1, t2):

    c(t) = (a1 t, a2)  for x <= 0,      c(t) = (a3 t, a4)  for x > 0.

Viewing time as a third coordinate, the controlled system is
piecewise-smooth across x = 0 with fold lines y = a1 t and y = a3 t, and
for a2 < a1 < a3 < a4 the origin of (x, y, t) is an invisible two-fold.
Steering the synchronised oscillators through it scrambles their phases
without any slowing of the dynamics.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import Side

__all__ = [
    "ControlParams",
    "TwoFoldConditionReport",
    "hopf_field",
    "controlled_field",
    "controlled_field_one_sided",
    "verify_twofold_conditions",
    "circular_variance",
    "DesyncResult",
    "desync_experiment",
]


@dataclass(frozen=True)
class ControlParams:
    """Control gains and switching window.

    The gain ordering a2 < a1 < a3 < a4 required for the controlled
    two-fold is reported by verify_twofold_conditions rather than enforced
    here, so that broken configurations remain constructible for analysis.
    """

    a1: float
    a2: float
    a3: float
    a4: float
    t1: float
    t2: float

    def __post_init__(self):
        vals = (self.a1, self.a2, self.a3, self.a4, self.t1, self.t2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("control parameters must be finite")
        if not self.t1 <= self.t2:
            raise ValueError("need t1 <= t2")


def hopf_field(s):
    """Planar Hopf normal form with unit cycle: radial rate r(1 - r^2)."""
    x, y = s[0], s[1]
    r2 = x * x + y * y
    return np.array([x - y - x * r2, x + y - y * r2])


def _control(t: float, p: ControlParams, left: bool):
    if left:
        return p.a1 * t, p.a2
    return p.a3 * t, p.a4


def controlled_field_one_sided(t, x, y, p: ControlParams, side: Side):
    """Hopf field plus the windowed control for a prescribed side of x = 0."""
    r2 = x * x + y * y
    fx = x - y - x * r2
    fy = x + y - y * r2
    if p.t1 < t < p.t2:
        cx, cy = _control(t, p, side is Side.LEFT)
        return fx + cx, fy + cy
    return fx, fy


def controlled_field(t: float, s, p: ControlParams):
    """Controlled field at state s = (x, y); the side follows sign(x)."""
    x, y = float(s[0]), float(s[1])
    side = Side.LEFT if x <= 0.0 else Side.RIGHT
    fx, fy = controlled_field_one_sided(t, x, y, p, side)
    return np.array([fx, fy])


@dataclass(frozen=True)
class TwoFoldConditionReport:
    """Pass/fail record of the gain inequalities behind the controlled two-fold."""

    left_fold_invisible: bool   # a2 < a1
    right_fold_invisible: bool  # a3 < a4
    folds_distinct: bool        # a1 != a3
    ordering: bool              # a1 < a3

    @property
    def all_pass(self) -> bool:
        return (
            self.left_fold_invisible
            and self.right_fold_invisible
            and self.folds_distinct
            and self.ordering
        )


def verify_twofold_conditions(p: ControlParams) -> TwoFoldConditionReport:
    """Check each inequality that makes (x, y, t) = (0, 0, 0) an invisible two-fold."""
    return TwoFoldConditionReport(
        left_fold_invisible=p.a2 < p.a1,
        right_fold_invisible=p.a3 < p.a4,
        folds_distinct=p.a1 != p.a3,
        ordering=p.a1 < p.a3,
    )


def circular_variance(phases) -> float:
    """1 - |mean unit phasor|; zero for perfect synchrony."""
    phases = np.asarray(phases, dtype=float)
    return float(1.0 - abs(np.mean(np.exp(1j * phases))))


@dataclass
class DesyncResult:
    phases_before: np.ndarray
    phases_after: np.ndarray
    variance_before: float
    variance_after: float
    paths: list[np.ndarray] | None = None
    path_times: np.ndarray | None = None


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,)))
    )


def _run_oscillators(p, indices, eps, seed, t_start, t_end, X0, dt,
                     record_paths, noise_block=4000):
    n = len(indices)
    n_steps = int(round((t_end - t_start) / dt))
    amp = eps * math.sqrt(dt)
    rngs = [_stream(seed, i) for i in indices]
    X = np.tile(np.asarray(X0, dtype=float), (n, 1))
    paths = [np.empty((n_steps + 1, 2)) for _ in range(n)] if record_paths else None
    if record_paths:
        for i in range(n):
            paths[i][0] = X[i]
    a1, a2, a3, a4, t1, t2 = p.a1, p.a2, p.a3, p.a4, p.t1, p.t2
    k = 0
    while k < n_steps:
        m = min(noise_block, n_steps - k)
        noise = np.empty((n, m, 2))
        for i, rg in enumerate(rngs):
            noise[i] = rg.standard_normal((m, 2))
        for j in range(m):
            t = t_start + (k + j) * dt
            x, y = X[:, 0], X[:, 1]
            r2 = x * x + y * y
            fx = x - y - x * r2
            fy = x + y - y * r2
            if t1 < t < t2:
                left = x <= 0.0
                fx = fx + np.where(left, a1 * t, a3 * t)
                fy = fy + np.where(left, a2, a4)
            X = X + np.stack([fx, fy], axis=1) * dt + amp * noise[:, j]
            if record_paths:
                for i in range(n):
                    paths[i][k + j + 1] = X[i]
        k += m
    return X, paths


def desync_experiment(
    p: ControlParams,
    n_osc: int,
    epsilon: float,
    seed: int,
    t_start: float,
    t_end: float,
    X0,
    dt: float = 1e-4,
    n_threads: int = 1,
    record_paths: bool = False,
) -> DesyncResult:
    """Drive n_osc synchronised oscillators through the controlled window.

    All oscillators start at X0 at t_start with independent noise streams
    derived from (seed, index).  Phases are read as atan2(y, x) at t_start
    and t_end (a faithful proxy once orbits have relaxed to the unit
    cycle), together with their circular variances.
    """
    if not t_start < t_end:
        raise ValueError("need t_start < t_end")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    X0 = np.asarray(X0, dtype=float)
    phase0 = math.atan2(X0[1], X0[0])
    chunks = [list(range(lo, min(lo + 64, n_osc))) for lo in range(0, n_osc, 64)]
    args = (p, epsilon, seed, t_start, t_end, X0, dt, record_paths)
    if n_threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(
                pool.map(lambda ix: _run_oscillators(p, ix, *args[1:]), chunks)
            )
    else:
        parts = [_run_oscillators(p, ix, *args[1:]) for ix in chunks]
    finals = np.vstack([part[0] for part in parts])
    paths = None
    if record_paths:
        paths = [path for part in parts for path in part[1]]
    phases_after = np.arctan2(finals[:, 1], finals[:, 0])
    phases_before = np.full(n_osc, phase0)
    times = t_start + dt * np.arange(int(round((t_end - t_start) / dt)) + 1)
    return DesyncResult(
        phases_before=phases_before,
        phases_after=phases_after,
        variance_before=circular_variance(phases_before),
        variance_after=circular_variance(phases_after),
        paths=paths,
        path_times=times if record_paths else None,
    )
