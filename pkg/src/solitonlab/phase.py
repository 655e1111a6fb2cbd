"""Phase-space core for the cohomogeneity-one soliton flow.

The soliton equation on a complex line bundle over CP^{2m+1} with squashed
principal orbit S^{4m+3}/Z_k reduces, after dividing out the scale
tau = tr(L) - fdot and switching to the slow variable eta, to a polynomial
autonomous system in eight variables

    (X1, X2, X3, Z1, Z2, Z3, Z4, W)

where X1, X2, X3 are the normalized logarithmic derivatives of the fiber and
base metric components a, b, c; Z1 = a^2/b^2; Z2, Z3, Z4 are the normalized
inverse-square sizes 1/b^2, b^2/c^4, 1/c^2; and W = 1/tau^2.  The physically
meaningful locus is the 7-dimensional algebraic set

    RS = {Q <= 0, H <= 1, W >= 0, Z >= 0, Z4^2 = Z2 Z3},

with Q the conservation polynomial that vanishes exactly on Einstein
trajectories.  Everything here is a pure closed-form function of the point;
the formulas are written with scalar arithmetic only, so they evaluate
elementwise when handed a tuple of equal-length numpy arrays (the audits in
the regions module rely on this).

The constant n = 4m + 3 in Q is the unique value for which all the known
critical points of the flow satisfy Q = 0; the underlying derivation leaves
n implicit, so treat this as a fixed convention of this package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class IDX:
    """Positions of the phase coordinates inside an 8-vector."""

    X1, X2, X3, Z1, Z2, Z3, Z4, W = range(8)


PHASE_DIM = 8
PHASE_NAMES = ("X1", "X2", "X3", "Z1", "Z2", "Z3", "Z4", "W")


@dataclass(frozen=True)
class ModelParams:
    """Discrete problem data: base parameter m, Chern degree k, epsilon.

    epsilon = 0 selects steady solitons, epsilon = 1 expanding ones.
    m = 0 is admitted for the degenerate reduction (4-dimensional line
    bundles over CP^1); the geometric case has m >= 1.
    """

    m: int
    k: int
    epsilon: int

    def __post_init__(self):
        if not (isinstance(self.m, int) and self.m >= 0):
            raise ValueError(f"m must be a nonnegative integer, got {self.m!r}")
        if not (isinstance(self.k, int) and self.k >= 1):
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if self.epsilon not in (0, 1):
            raise ValueError(f"epsilon must be 0 or 1, got {self.epsilon!r}")

    @property
    def n(self) -> int:
        return 4 * self.m + 3


@dataclass(frozen=True)
class DerivedScalars:
    """Scalar functions of a phase point.

    P = G - (epsilon/2) W is the logarithmic contraction rate of the scale
    tau; it is not part of the original scalar list but nearly every flow
    expression needs it, so it rides along.
    """

    G: float
    H: float
    Q: float
    R1: float
    R2: float
    R3: float
    Rs: float
    P: float


def derived_scalars(p, mp: ModelParams) -> DerivedScalars:
    """Evaluate G, H, Q, R1..R3, Rs (and P) at a phase point."""
    x1, x2, x3, z1, z2, z3, z4, w = p
    m = mp.m
    g = x1 * x1 + 2 * x2 * x2 + 4 * m * x3 * x3
    h = x1 + 2 * x2 + 4 * m * x3
    r1 = 2 * z1 * z2 + 4 * m * z1 * z3
    r2 = 4 * z2 - 2 * z1 * z2 + 4 * m * z3
    r3 = (4 * m + 8) * z4 - 2 * z1 * z3 - 4 * z3
    rs = r1 + 2 * r2 + 4 * m * r3
    q = g + rs + (mp.n - 1) * (mp.epsilon / 2) * w - 1
    return DerivedScalars(
        G=g, H=h, Q=q, R1=r1, R2=r2, R3=r3, Rs=rs, P=g - 0.5 * mp.epsilon * w
    )


def vector_field(p, mp: ModelParams):
    """The polynomial velocity V at a phase point, as an 8-tuple."""
    x1, x2, x3, z1, z2, z3, z4, w = p
    m = mp.m
    eps = mp.epsilon
    g = x1 * x1 + 2 * x2 * x2 + 4 * m * x3 * x3
    pf = g - 0.5 * eps * w
    ew = 0.5 * eps * w
    r1 = 2 * z1 * z2 + 4 * m * z1 * z3
    r2 = 4 * z2 - 2 * z1 * z2 + 4 * m * z3
    r3 = (4 * m + 8) * z4 - 2 * z1 * z3 - 4 * z3
    return (
        x1 * (pf - 1) + r1 + ew,
        x2 * (pf - 1) + r2 + ew,
        x3 * (pf - 1) + r3 + ew,
        2 * z1 * (x1 - x2),
        2 * z2 * (pf - x2),
        2 * z3 * (pf + x2 - 2 * x3),
        2 * z4 * (pf - x3),
        2 * w * pf,
    )


def constraint_residual(p):
    """Cone residual Z4^2 - Z2 Z3; zero on the physical locus.

    Along the flow the residual satisfies r' = 4 (P - X3) r, a homogeneous
    linear equation, so an initially vanishing residual stays zero exactly
    and any numerical value is pure integration drift.
    """
    return p[IDX.Z4] * p[IDX.Z4] - p[IDX.Z2] * p[IDX.Z3]


def constraint_residual_rate(p, mp: ModelParams):
    """Directional derivative <grad r, V> of the cone residual, unfactored.

    Computed as 2 Z4 V7 - Z3 V5 - Z2 V6 so that tangency tests exercise the
    actual inner product rather than the factored form 4 (P - X3) r.
    """
    v = vector_field(p, mp)
    return (
        2 * p[IDX.Z4] * v[IDX.Z4] - p[IDX.Z3] * v[IDX.Z2] - p[IDX.Z2] * v[IDX.Z3]
    )


def q_gradient(p, mp: ModelParams):
    """Analytic gradient of Q, as an 8-tuple."""
    x1, x2, x3, z1, z2, z3, z4, w = p
    m = mp.m
    return (
        2 * x1,
        4 * x2,
        8 * m * x3,
        -2 * z2 - 4 * m * z3,
        8 - 2 * z1,
        -8 * m - 4 * m * z1,
        4 * m * (4 * m + 8),
        (mp.n - 1) * (mp.epsilon / 2),
    )


def q_flow_consistency(p, mp: ModelParams):
    """Residual of the Q-flow identity <grad Q, V> = 2QP + eps (H-1) W.

    Vanishes identically on all of R^8 (verified symbolically), so any
    nonzero value is round-off; the property tests bound it by 1e-12.
    """
    s = derived_scalars(p, mp)
    v = vector_field(p, mp)
    grad = q_gradient(p, mp)
    lhs = sum(gi * vi for gi, vi in zip(grad, v))
    rhs = 2 * s.Q * s.P + mp.epsilon * (s.H - 1) * p[IDX.W]
    return lhs - rhs


def h_flow_consistency(p, mp: ModelParams):
    """Residual of the H-flow identity <grad H, V> = (H-1)(P-1) + Q."""
    s = derived_scalars(p, mp)
    v = vector_field(p, mp)
    m = mp.m
    lhs = v[0] + 2 * v[1] + 4 * m * v[2]
    rhs = (s.H - 1) * (s.P - 1) + s.Q
    return lhs - rhs


@dataclass(frozen=True)
class Membership:
    """Flags for the physical locus and its named invariant subsets."""

    in_rs: bool
    einstein: bool
    steady: bool
    ricci_flat: bool
    fubini_study: bool
    kahler_einstein: bool
    round_fiber: bool
    m0_reduction: bool

    def as_dict(self) -> dict:
        return {
            "RS": self.in_rs,
            "Einstein": self.einstein,
            "steady": self.steady,
            "Ricci_flat": self.ricci_flat,
            "Fubini_Study": self.fubini_study,
            "Kahler_Einstein": self.kahler_einstein,
            "round": self.round_fiber,
            "m0_reduction": self.m0_reduction,
        }


def subset_membership(p, mp: ModelParams, tol: float = 1e-9) -> Membership:
    """Evaluate membership of the physical locus and its invariant subsets.

    Inequalities are tested as f >= -tol, equalities as |f| <= tol.  The
    subsets follow the standard list: Einstein {Q=0, H=1}; steady {W=0};
    Ricci-flat their intersection; Fubini-Study {Z2=Z3, X2=X3} (the X-part
    adopts the evident reading of the source's typo'd display); the
    Kahler locus inside Fubini-Study; round {Z1=1, X1=X2}; and the
    degenerate reduction steady ∩ {X3=0, Z3=0}.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    x1, x2, x3, z1, z2, z3, z4, w = p
    s = derived_scalars(p, mp)
    in_rs = bool(
        (s.Q <= tol)
        & (s.H <= 1 + tol)
        & (w >= -tol)
        & (z1 >= -tol)
        & (z2 >= -tol)
        & (z3 >= -tol)
        & (z4 >= -tol)
        & (abs(constraint_residual(p)) <= tol)
    )
    einstein = bool(in_rs & (abs(s.Q) <= tol) & (abs(s.H - 1) <= tol))
    steady = bool(in_rs & (abs(w) <= tol))
    fs = bool(in_rs & (abs(z2 - z3) <= tol) & (abs(x2 - x3) <= tol))
    ke = bool(
        fs
        & (abs(x2 * x2 - z1 * z2) <= tol)
        & (
            abs((4 * mp.m + 4) * z2 + 0.5 * mp.epsilon * w - x2 * (1 + x1))
            <= tol
        )
    )
    return Membership(
        in_rs=in_rs,
        einstein=einstein,
        steady=steady,
        ricci_flat=steady and einstein,
        fubini_study=fs,
        kahler_einstein=ke,
        round_fiber=bool(in_rs & (abs(z1 - 1) <= tol) & (abs(x1 - x2) <= tol)),
        m0_reduction=bool(steady & (abs(x3) <= tol) & (abs(z3) <= tol)),
    )


def barrier_F(l: float, p):
    """Barrier function F_l = X2 - X1 + l (sqrt(Z2/Z1) - sqrt(Z1 Z2)).

    Undefined on the Z1 <= 0 face (a domain error, not a limit convention).
    """
    x1, x2 = p[IDX.X1], p[IDX.X2]
    z1, z2 = p[IDX.Z1], p[IDX.Z2]
    if np.any(np.asarray(z1) <= 0.0):
        raise ValueError("barrier_F requires Z1 > 0")
    return x2 - x1 + l * (np.sqrt(z2 / z1) - np.sqrt(z1 * z2))


def barrier_F_derivative(l: float, p, mp: ModelParams):
    """Closed-form flow derivative <grad F_l, V>.

    The derivative factors through F_l itself plus a term carrying (1 - Z1):

        F_l' = F_l (P - 1 + 2 l sqrt(Z1 Z2))
               + (l sqrt(Z2/Z1) (1 - X1) + (4 - 2 l^2) Z2 + 4 m Z3)(1 - Z1)

    which is what makes {F_l = 0} a barrier on the relevant strata.
    """
    x1 = p[IDX.X1]
    z1, z2, z3 = p[IDX.Z1], p[IDX.Z2], p[IDX.Z3]
    if np.any(np.asarray(z1) <= 0.0):
        raise ValueError("barrier_F_derivative requires Z1 > 0")
    s = derived_scalars(p, mp)
    f = barrier_F(l, p)
    return f * (s.P - 1 + 2 * l * np.sqrt(z1 * z2)) + (
        l * np.sqrt(z2 / z1) * (1 - x1) + (4 - 2 * l * l) * z2 + 4 * mp.m * z3
    ) * (1 - z1)


def rs_violation(p, mp: ModelParams) -> float:
    """Largest inequality violation of the physical locus (0 when inside).

    Reports max(Q, H-1, -Z_i, -W, 0): the cone residual is tracked
    separately since its natural tolerance differs.
    """
    x1, x2, x3, z1, z2, z3, z4, w = p
    s = derived_scalars(p, mp)
    return max(s.Q, s.H - 1.0, -z1, -z2, -z3, -z4, -w, 0.0)
