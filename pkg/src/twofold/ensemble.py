"""Monte-Carlo ensembles of noisy passages through the two-fold.

Samples share the initial condition; each one carries its own
counter-based noise stream derived from (master seed, sample index), so
results are independent of chunking and worker count.  Stepping is
vectorised Euler-Maruyama across samples; only the crossing statistics
needed for the phase (the last surface crossing with y > 0 before T) are
tracked, not full paths.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import FieldSpec
from .integrate import IntegratorConfig, NoiseSpec, default_chatter_guard, vector_drift

__all__ = [
    "EnsembleConfig",
    "PhaseSample",
    "EnsembleResult",
    "sample_stream",
    "run_ensemble",
    "histogram",
    "ks_distance",
]

_TWO_PI = 2.0 * math.pi


@dataclass
class EnsembleConfig:
    n_samples: int
    X0: np.ndarray
    T: float
    noise: NoiseSpec
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        self.X0 = np.asarray(self.X0, dtype=float)
        if self.X0.shape != (3,):
            raise ValueError("X0 must be a 3-vector")
        if not self.T > 0:
            raise ValueError("T must be positive")


@dataclass(frozen=True)
class PhaseSample:
    sample_index: int
    phi_T: float
    s_T: float


@dataclass
class EnsembleResult:
    samples: list[PhaseSample]
    failures: list[tuple[int, str]]

    @property
    def phis(self) -> np.ndarray:
        return np.array([s.phi_T for s in self.samples])

    @property
    def s_times(self) -> np.ndarray:
        return np.array([s.s_T for s in self.samples])


def sample_stream(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based noise stream for one sample; depends only on (seed, index)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(index,)))
    )


def _run_chunk(spec, cfg, indices, noise_block=4000):
    """Step one chunk of samples to time T; returns (s_T, failed_flags)."""
    n = len(indices)
    dt = cfg.integrator.dt
    n_steps = int(round(cfg.T / dt))
    eps = cfg.noise.epsilon
    amp = eps * math.sqrt(dt)
    D = cfg.noise.D
    identity_D = np.allclose(D, np.eye(3))
    guard = (
        cfg.integrator.chatter_guard
        if cfg.integrator.chatter_guard is not None
        else default_chatter_guard(cfg.noise, dt)
    )
    drift = vector_drift(spec)
    rngs = [sample_stream(cfg.noise.seed, i) for i in indices]

    X = np.tile(cfg.X0, (n, 1))
    s_T = np.full(n, np.nan)
    max_exc = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    k = 0
    t = 0.0
    while k < n_steps:
        m = min(noise_block, n_steps - k)
        noise = np.empty((n, m, 3))
        for i, rg in enumerate(rngs):
            noise[i] = rg.standard_normal((m, 3))
        if not identity_D:
            noise = noise @ D.T
        for j in range(m):
            x = X[:, 0]
            F = drift(X, t)
            Xn = X + F * dt + amp * noise[:, j]
            x_new = Xn[:, 0]
            bad = ~np.isfinite(Xn).all(axis=1)
            if bad.any():
                newly = bad & alive
                alive &= ~bad
                Xn[newly] = 0.0  # park dead samples at the origin
            crossed = (x * x_new < 0.0) & alive
            if crossed.any():
                frac = np.where(crossed, x / np.where(crossed, x - x_new, 1.0), 0.0)
                y_c = X[:, 1] + frac * (Xn[:, 1] - X[:, 1])
                rec = crossed & (y_c > 0.0) & (max_exc >= guard)
                s_T = np.where(rec, t + frac * dt, s_T)
                max_exc = np.where(rec, 0.0, max_exc)
            np.maximum(max_exc, np.abs(x_new), out=max_exc)
            X = Xn
            t += dt
        k += m
    return s_T, ~alive


def run_ensemble(
    spec: FieldSpec,
    cfg: EnsembleConfig,
    tau: float,
    n_threads: int = 1,
    chunk_size: int = 512,
) -> EnsembleResult:
    """Phase samples of n_samples independent noisy runs.

    The result is a deterministic function of the master seed alone:
    chunking and thread count never change any sample.  Failed samples
    (non-finite states, or no recorded crossing before T) are reported by
    index and excluded from the statistics.
    """
    idx_chunks = [
        list(range(lo, min(lo + chunk_size, cfg.n_samples)))
        for lo in range(0, cfg.n_samples, chunk_size)
    ]
    if n_threads > 1 and len(idx_chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(
                pool.map(lambda ix: _run_chunk(spec, cfg, ix), idx_chunks)
            )
    else:
        parts = [_run_chunk(spec, cfg, ix) for ix in idx_chunks]

    samples: list[PhaseSample] = []
    failures: list[tuple[int, str]] = []
    for indices, (s_T, dead) in zip(idx_chunks, parts):
        for i, sample_idx in enumerate(indices):
            if dead[i]:
                failures.append((sample_idx, "non-finite state"))
            elif math.isnan(s_T[i]):
                failures.append((sample_idx, "no crossing before T"))
            else:
                phi = (_TWO_PI * (cfg.T - s_T[i]) / tau) % _TWO_PI
                samples.append(PhaseSample(sample_idx, float(phi), float(s_T[i])))
    return EnsembleResult(samples, failures)


def _phases_of(samples) -> np.ndarray:
    if isinstance(samples, (list, tuple)) and samples and isinstance(
        samples[0], PhaseSample
    ):
        return np.array([s.phi_T for s in samples])
    return np.asarray(samples, dtype=float)


def histogram(samples, n_bins: int):
    """Bin counts of phases over [0, 2 pi), half-open equal bins."""
    if n_bins < 2:
        raise ValueError("need n_bins >= 2")
    return np.histogram(_phases_of(samples), bins=n_bins, range=(0.0, _TWO_PI))


def ks_distance(samples, cdf) -> float:
    """Sup distance between the empirical CDF of samples and a model CDF.

    cdf may be a callable or anything with a .cdf method (DensityTable).
    """
    phis = _phases_of(samples)
    if phis.size == 0:
        raise ValueError("need at least one sample")
    func = cdf.cdf if hasattr(cdf, "cdf") else cdf
    xs = np.sort(phis)
    F = np.asarray(func(xs), dtype=float)
    n = len(xs)
    up = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(np.abs(F - up)), np.max(np.abs(F - lo))))
