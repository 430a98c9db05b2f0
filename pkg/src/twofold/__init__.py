"""Piecewise-smooth flows through an invisible two-fold singularity.

Simulation (deterministic Filippov and Euler-Maruyama), flow-adapted
analytics of the singularity (return map, unstable cone, polar chart), the
phase-density construction for noisy passages, and the oscillator
desynchronisation experiment.
"""

from .core import (
    DegenerateSlidingError,
    DerivedConstants,
    DomainError,
    FieldSpec,
    NotSlidingRegionError,
    Perturbation,
    Region,
    Side,
    TwoFoldError,
    TwoFoldParams,
    classify_region,
    derived_constants,
    eval_field,
    filippov_sliding_field,
)
from .desync import (
    ControlParams,
    DesyncResult,
    circular_variance,
    controlled_field,
    desync_experiment,
    hopf_field,
    verify_twofold_conditions,
)
from .ensemble import (
    EnsembleConfig,
    EnsembleResult,
    PhaseSample,
    histogram,
    ks_distance,
    run_ensemble,
)
from .integrate import (
    Event,
    EventKind,
    IntegratorConfig,
    MaxStepsExceededError,
    NoiseSpec,
    NonFiniteStateError,
    Stop,
    Trajectory,
    ViablePsi,
    integrate_deterministic,
    integrate_sde,
    two_fold_continuation,
)
from .normalform import (
    LeavesCrossingRegimeError,
    PsiOrbit,
    ReturnMapResult,
    crossing_matrix,
    flow_left,
    flow_right,
    lambda_surface_x,
    psi_orbit_eval,
    psi_point_on_ray,
    return_map,
)
from .phase import (
    DensityTable,
    DepthTooLargeError,
    NoConvergenceError,
    NoCrossingError,
    PeriodicOrbit,
    PhaseTheory,
    ReturnTimeTable,
    SeedEscapedError,
    auto_depth,
    find_periodic_orbit,
    isochron_mesh,
    pdf_phase,
    pdf_sT,
    phase_phi_T,
    return_time_table,
    theoretical_phase_pdf,
)
from .polar import (
    DegenerateOriginError,
    PolarPoint,
    polar_flow_from_singularity,
    tau_left,
    tau_right,
    to_polar,
)

__version__ = "0.1.0"
