"""Foundational types for piecewise-smooth vector fields with a two-fold singularity.

The phase space is R^3 with coordinates X = (x, y, z); the field switches
across the surface x = 0.  The half fields of the invisible two-fold are

    F_left(X)  = (z,  V-, 1)     for x < 0,
    F_right(X) = (-y, 1,  V+)    for x > 0,

with V- < 0, V+ < 0 and V- V+ > 1.  On the surface, motion is resolved by
the Filippov convex combination; the sliding system in the attracting and
repelling regions reduces to

    (y', z') = [[V-, 1], [1, V+]] (y, z) / (y + z).

Higher-order terms may be attached to either side of the field as
polynomial perturbations; two ready-made choices are the linear damping
G = -X and the cubic G = (-x^3, -y^3, 0).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TwoFoldError",
    "DomainError",
    "DegenerateSlidingError",
    "NotSlidingRegionError",
    "Side",
    "Region",
    "DerivedConstants",
    "derived_constants",
    "TwoFoldParams",
    "Perturbation",
    "FieldSpec",
    "classify_region",
    "eval_field",
    "filippov_sliding_field",
    "on_surface",
]

# Margin above 1 required of V- V+; keeps the square roots in the derived
# constants away from their branch points.
_PRODUCT_MARGIN = 1e-12

# A point counts as on the surface when |x| < tol * (1 + |X|).
SURFACE_REL_TOL = 1e-12


class TwoFoldError(Exception):
    """Base class for errors raised by this package."""


class DomainError(TwoFoldError):
    """An argument lies outside the domain of a coordinate formula."""


class DegenerateSlidingError(TwoFoldError):
    """The convex combination has no unique sliding weight."""


class NotSlidingRegionError(TwoFoldError):
    """The sliding weight falls outside [0, 1]: the point does not slide."""


class Side(enum.Enum):
    LEFT = "left"     # x < 0
    RIGHT = "right"   # x > 0


class Region(enum.Enum):
    """Classification of a surface point (0, y, z)."""

    A = "attracting_sliding"      # y, z > 0
    R = "repelling_sliding"       # y, z < 0
    C_PLUS = "crossing_to_right"  # y < 0, z > 0
    C_MINUS = "crossing_to_left"  # y > 0, z < 0
    FOLD_BOUNDARY = "fold_boundary"
    TWO_FOLD = "two_fold"


@dataclass(frozen=True)
class DerivedConstants:
    lambda_weak: float
    mu: float
    gamma: float
    alpha: float
    beta: float


def derived_constants(v_minus: float, v_plus: float) -> DerivedConstants:
    """Closed-form constants of the two-fold normal form.

    mu is the unstable multiplier of the crossing return map and (1, gamma)
    the corresponding eigenvector; lambda_weak is the weak (small-modulus)
    eigenvalue of the sliding matrix; alpha and beta are the radial and
    angular rates of the flow-adapted polar coordinates.
    """
    prod = v_minus * v_plus
    s = math.sqrt(1.0 - 1.0 / prod)
    mu = 2.0 * prod * (1.0 + s) - 1.0
    gamma = v_plus * (1.0 + s)
    lam = 0.5 * (v_plus + v_minus + math.sqrt((v_plus - v_minus) ** 2 + 4.0))
    alpha = 1.0 / (1.0 + (1.0 - 1.0 / v_minus) / s)
    beta = 2.0 * math.pi * alpha / math.log(mu)
    return DerivedConstants(lam, mu, gamma, alpha, beta)


@dataclass(frozen=True)
class TwoFoldParams:
    """Normal-form parameters with their derived constants.

    Construction requires V- < 0, V+ < 0 and V- V+ > 1; the derived values
    are computed once and the standard identities are asserted.
    """

    v_minus: float
    v_plus: float
    lambda_weak: float = field(init=False)
    mu: float = field(init=False)
    gamma: float = field(init=False)
    alpha: float = field(init=False)
    beta: float = field(init=False)

    def __post_init__(self):
        vm, vp = float(self.v_minus), float(self.v_plus)
        if not (math.isfinite(vm) and math.isfinite(vp)):
            raise ValueError("parameters must be finite")
        if not (vm < 0.0 and vp < 0.0):
            raise ValueError(f"require V- < 0 and V+ < 0, got ({vm}, {vp})")
        if not vm * vp > 1.0 + _PRODUCT_MARGIN:
            raise ValueError(f"require V- V+ > 1, got product {vm * vp}")
        d = derived_constants(vm, vp)
        for name, val in (
            ("lambda_weak", d.lambda_weak),
            ("mu", d.mu),
            ("gamma", d.gamma),
            ("alpha", d.alpha),
            ("beta", d.beta),
        ):
            object.__setattr__(self, name, val)
        assert d.mu > 1.0 and d.gamma < 0.0
        assert 0.0 < d.alpha < 0.5
        assert 0.0 < d.beta < math.pi
        # mu * (1 - 2 alpha) = 1 - 2 alpha gamma, to relative 1e-12
        lhs = d.mu * (1.0 - 2.0 * d.alpha)
        rhs = 1.0 - 2.0 * d.alpha * d.gamma
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))

    @property
    def derived(self) -> DerivedConstants:
        return DerivedConstants(
            self.lambda_weak, self.mu, self.gamma, self.alpha, self.beta
        )


def classify_region(y: float, z: float, tol: float = 0.0) -> Region:
    """Classify the surface point (0, y, z).

    With tol = 0 the inequalities are strict and boundary values land on
    FOLD_BOUNDARY / TWO_FOLD only for exact zeros; numerical callers pass a
    positive tol.
    """
    if tol < 0.0:
        raise ValueError("tol must be >= 0")
    y_zero = abs(y) <= tol
    z_zero = abs(z) <= tol
    if y_zero and z_zero:
        return Region.TWO_FOLD
    if y_zero or z_zero:
        return Region.FOLD_BOUNDARY
    if y > tol and z > tol:
        return Region.A
    if y < -tol and z < -tol:
        return Region.R
    if y < -tol and z > tol:
        return Region.C_PLUS
    return Region.C_MINUS


# --- perturbations -------------------------------------------------------

_MAX_DEGREE = 4


def _empty_coeffs() -> np.ndarray:
    # [side, component, i, j, k] multiplies x^i y^j z^k
    n = _MAX_DEGREE + 1
    return np.zeros((2, 3, n, n, n))


def _check_order_conditions(coeffs: np.ndarray) -> None:
    """Require the perturbation to vanish appropriately at the origin.

    First component: no constant term and no linear y or z terms (any term
    carrying a factor of x is allowed).  Second and third components: no
    constant term.
    """
    for s in range(2):
        side = "left" if s == 0 else "right"
        for (j, k) in ((0, 0), (1, 0), (0, 1)):
            if coeffs[s, 0, 0, j, k] != 0.0:
                raise ValueError(
                    f"{side} first component has forbidden term x^0 y^{j} z^{k}"
                )
        for c in (1, 2):
            if coeffs[s, c, 0, 0, 0] != 0.0:
                raise ValueError(
                    f"{side} component {c} has a constant term"
                )


@dataclass(frozen=True)
class Perturbation:
    """Higher-order terms G_left/G_right added to the normal form.

    kind is one of "none", "linear_damping", "cubic", "polynomial".  The
    first two ready-made kinds are G = -X and G = (-x^3, -y^3, 0) on both
    sides.  Polynomial tables are dense up to total degree 4 per component
    per side; order conditions are checked at construction.
    """

    kind: str
    coeffs: np.ndarray | None = None

    @staticmethod
    def none() -> "Perturbation":
        return Perturbation("none")

    @staticmethod
    def linear_damping() -> "Perturbation":
        return Perturbation("linear_damping")

    @staticmethod
    def cubic() -> "Perturbation":
        return Perturbation("cubic")

    @staticmethod
    def polynomial(
        left: dict[tuple[int, int, int, int], float],
        right: dict[tuple[int, int, int, int], float] | None = None,
    ) -> "Perturbation":
        """Build a polynomial perturbation from {(comp, i, j, k): c} tables.

        The coefficient c multiplies x^i y^j z^k in the given component;
        right defaults to a copy of left.
        """
        coeffs = _empty_coeffs()
        tables = (left, left if right is None else right)
        for s, table in enumerate(tables):
            for (comp, i, j, k), c in table.items():
                if not (0 <= comp < 3):
                    raise ValueError(f"component index {comp} out of range")
                if min(i, j, k) < 0 or i + j + k > _MAX_DEGREE:
                    raise ValueError(
                        f"monomial x^{i} y^{j} z^{k} exceeds total degree "
                        f"{_MAX_DEGREE}"
                    )
                coeffs[s, comp, i, j, k] = float(c)
        _check_order_conditions(coeffs)
        coeffs.setflags(write=False)
        return Perturbation("polynomial", coeffs)

    def __post_init__(self):
        if self.kind not in ("none", "linear_damping", "cubic", "polynomial"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "polynomial" and self.coeffs is None:
            raise ValueError("polynomial perturbation needs a coefficient table")

    def __call__(self, side: Side, X: np.ndarray) -> np.ndarray:
        """Evaluate G_side at X; X may be shape (3,) or (..., 3)."""
        X = np.asarray(X, dtype=float)
        x, y, z = X[..., 0], X[..., 1], X[..., 2]
        if self.kind == "none":
            return np.zeros_like(X)
        if self.kind == "linear_damping":
            return -X
        if self.kind == "cubic":
            out = np.zeros_like(X)
            out[..., 0] = -x * x * x
            out[..., 1] = -y * y * y
            return out
        out = np.zeros_like(X)
        table = self.coeffs[0 if side is Side.LEFT else 1]
        for comp in range(3):
            nz = np.argwhere(table[comp] != 0.0)
            for i, j, k in nz:
                out[..., comp] += table[comp, i, j, k] * x**i * y**j * z**k
        return out


# --- field specification -------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    """A piecewise vector-field description.

    kind "normal_form": the two-fold normal form plus optional higher-order
    terms.  kind "controlled_hopf": the planar Hopf oscillator under the
    time-windowed discontinuous control, viewed with time as the third
    coordinate (third field component 1).
    """

    kind: str
    params: TwoFoldParams | None = None
    perturbation: Perturbation | None = None
    control: object | None = None

    @staticmethod
    def normal_form(
        params: TwoFoldParams, perturbation: Perturbation | None = None
    ) -> "FieldSpec":
        return FieldSpec(
            "normal_form", params, perturbation or Perturbation.none(), None
        )

    @staticmethod
    def controlled_hopf(control) -> "FieldSpec":
        return FieldSpec("controlled_hopf", None, None, control)

    def __post_init__(self):
        if self.kind == "normal_form":
            if self.params is None or self.perturbation is None:
                raise ValueError("normal_form spec needs params and perturbation")
        elif self.kind == "controlled_hopf":
            if self.control is None:
                raise ValueError("controlled_hopf spec needs control parameters")
        else:
            raise ValueError(f"unknown field kind {self.kind!r}")


def eval_field(spec: FieldSpec, side: Side, X, t: float = 0.0) -> np.ndarray:
    """The one-sided vector field at X (time enters only through the control)."""
    X = np.asarray(X, dtype=float)
    if spec.kind == "normal_form":
        F = np.empty_like(X)
        if side is Side.LEFT:
            F[..., 0] = X[..., 2]
            F[..., 1] = spec.params.v_minus
            F[..., 2] = 1.0
        else:
            F[..., 0] = -X[..., 1]
            F[..., 1] = 1.0
            F[..., 2] = spec.params.v_plus
        return F + spec.perturbation(side, X)
    # controlled Hopf, time-augmented: planar field in (x, y), third component 1
    from .desync import controlled_field_one_sided

    F = np.empty_like(X)
    planar = controlled_field_one_sided(t, X[..., 0], X[..., 1], spec.control, side)
    F[..., 0] = planar[0]
    F[..., 1] = planar[1]
    F[..., 2] = 1.0
    return F


def on_surface(X) -> bool:
    """Whether X lies on the discontinuity surface within relative tolerance."""
    X = np.asarray(X, dtype=float)
    return abs(X[0]) < SURFACE_REL_TOL * (1.0 + float(np.linalg.norm(X)))


def _sliding_combination(spec: FieldSpec, X, t: float = 0.0):
    """Raw Filippov combination on x = 0: returns (ydot, zdot, q, denom).

    q solves the vanishing of the x-component of (1-q) F_left + q F_right;
    no range check is applied here.
    """
    fL = eval_field(spec, Side.LEFT, X, t)
    fR = eval_field(spec, Side.RIGHT, X, t)
    denom = fL[0] - fR[0]
    if denom == 0.0:
        return math.nan, math.nan, math.nan, 0.0
    q = fL[0] / denom
    ydot = (1.0 - q) * fL[1] + q * fR[1]
    zdot = (1.0 - q) * fL[2] + q * fR[2]
    return ydot, zdot, q, denom


def filippov_sliding_field(spec: FieldSpec, X, t: float = 0.0):
    """Sliding motion on the surface: tangential velocity and weight q.

    X must lie on x = 0 inside a sliding region (the one-sided fields point
    to opposite sides).  Returns (ydot, zdot, q).
    """
    X = np.asarray(X, dtype=float)
    ydot, zdot, q, denom = _sliding_combination(spec, X, t)
    if denom == 0.0:
        raise DegenerateSlidingError(
            f"normal components balance identically at {tuple(X)}"
        )
    if not 0.0 < q < 1.0:
        raise NotSlidingRegionError(
            f"sliding weight q = {q} outside (0, 1) at {tuple(X)}"
        )
    return ydot, zdot, q
