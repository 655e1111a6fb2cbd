"""Trichotomy regions, exit detection, monotone witnesses, boundary audits.

Inside the soliton set RS four overlapping subsets organize the long-time
behavior of trajectories:

  F  compact invariant set (the completeness certificate),
  A  collapsed region: the fiber rate has dropped below the base rate
     (X1 <= X2) while the fiber is still small (Z1 <= 1),
  B  transit region: X1 >= X2 and Z1 <= 1,
  C  escape region: Z1 >= 1 and X1 >= X2; trajectories entering it have
     unboundedly growing fiber and do not produce complete metrics.

F and A/B share the constraints Z2 >= Z3, squash_margin >= 0 and X_i >= 0;
F carries the barrier inequality F_2 >= 0 instead of a sign on X1 - X2.

Verdicts about a finished trajectory (EntersA / EntersC / StaysInB) are read
off the confirmed watcher events recorded during integration, never from raw
sample signs, so the hysteresis policy lives in one place (the integrator).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from solitonlab.phase import (
    IDX,
    ModelParams,
    barrier_F,
    barrier_F_derivative,
    derived_scalars,
)

# Event names the integrator emits and this module consumes.  The region
# faces themselves are watched for information only; the verdict events fire
# on surfaces displaced INTO the target region, because borderline runs
# shadow critical points that sit exactly on the faces and wobble across
# them at round-off-amplified scale without ever leaving the transit region.
WATCH_RATE_GAP = "rate_gap"  # X1 - X2 crossing (informational)
WATCH_Z1_MARGIN = "z1_margin"  # 1 - Z1 crossing (informational)
WATCH_Z1_ESCAPE = "z1_escape"  # 1 + depth - Z1 crossing (-> C when downward)
WATCH_RATE_GAP_DEEP = "rate_gap_deep"  # X1 - X2 + depth crossing (-> A downward)
EVENT_ENTERS_A = "enters_A"  # deep rate-gap crossing
EVENT_ENTERS_C = "enters_C"  # deep Z1 crossing while the rate gap is not negative


def collapse_depth(mp: ModelParams) -> float:
    """Displacement of the verdict surface into the collapsed region.

    Half the rate gap X2 - X1 = 1/(n-1) at the collapsed-limit critical
    points, so genuine collapsing runs must cross it and shadow wobble
    around the face cannot reach it.
    """
    return 0.5 / (4 * mp.m + 2)

OUTCOME_ENTERS_A = "EntersA"
OUTCOME_ENTERS_C = "EntersC"
OUTCOME_STAYS_IN_B = "StaysInB"

COHOM1_DEFAULT_SEED = 20240817


def rate_gap(p):
    """X1 - X2: positive in B, negative in A."""
    return p[IDX.X1] - p[IDX.X2]


def z1_margin(p):
    """1 - Z1: positive below the escape threshold, negative inside C."""
    return 1.0 - p[IDX.Z1]


def squash_margin(p):
    """2(sqrt(Z2) - sqrt(Z3)) + X3 - X2, the shared face function S.

    Negative Z values (round-off) are clamped to zero under the roots.
    """
    z2 = np.maximum(p[IDX.Z2], 0.0)
    z3 = np.maximum(p[IDX.Z3], 0.0)
    return 2.0 * (np.sqrt(z2) - np.sqrt(z3)) + p[IDX.X3] - p[IDX.X2]


def squash_face_factor(p, mp: ModelParams):
    """The sign factor K = 1 + (4m-4)sqrt(Z3) - 4 sqrt(Z2) + 2 Z1 (sqrt(Z2)+sqrt(Z3)).

    Multiplies (sqrt(Z2) - sqrt(Z3)) in the derivative of squash_margin on the
    face {squash_margin = 0} (up to the nonnegative addend 1 - 2 X2).
    """
    z2 = np.maximum(p[IDX.Z2], 0.0)
    z3 = np.maximum(p[IDX.Z3], 0.0)
    r2, r3 = np.sqrt(z2), np.sqrt(z3)
    return 1.0 + (4 * mp.m - 4) * r3 - 4.0 * r2 + 2.0 * p[IDX.Z1] * (r2 + r3)


@dataclass(frozen=True)
class RegionState:
    in_F: bool
    in_A: bool
    in_B: bool
    in_C: bool
    diagnostic: str | None = None

    def as_dict(self) -> dict:
        return {
            "in_F": self.in_F,
            "in_A": self.in_A,
            "in_B": self.in_B,
            "in_C": self.in_C,
            "diagnostic": self.diagnostic,
        }


def region_flags(states: np.ndarray, mp: ModelParams, tol: float = 1e-9) -> dict:
    """Vectorized region membership for an (N, 8) array of states.

    Inequalities are tested with slack tol (closures), except the C side of
    the Z1 threshold which requires 1 - Z1 < -tol; this makes in_A and in_C
    structurally exclusive, matching the fact that X1 - X2 and 1 - Z1 only
    vanish together on the (invariant) round locus.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    cols = states.T
    s = derived_scalars(tuple(cols), mp)
    x1, x2, x3 = cols[IDX.X1], cols[IDX.X2], cols[IDX.X3]
    z1 = cols[IDX.Z1]

    in_rs = (
        (s.Q <= tol)
        & (s.H <= 1.0 + tol)
        & (cols[IDX.Z1] >= -tol)
        & (cols[IDX.Z2] >= -tol)
        & (cols[IDX.Z3] >= -tol)
        & (cols[IDX.Z4] >= -tol)
        & (cols[IDX.W] >= -tol)
    )
    x_nonneg = (x1 >= -tol) & (x2 >= -tol) & (x3 >= -tol)
    shared = (
        in_rs
        & x_nonneg
        & (cols[IDX.Z2] - cols[IDX.Z3] >= -tol)
        & (squash_margin(cols) >= -tol)
    )
    gap = x1 - x2
    zmargin = 1.0 - z1

    # F needs the barrier value, defined only for Z1 > 0.
    f2 = np.full(states.shape[0], -np.inf)
    pos = z1 > 0
    if np.any(pos):
        sub = cols[:, pos]
        f2_pos = (
            sub[IDX.X2]
            - sub[IDX.X1]
            + 2.0
            * (
                np.sqrt(np.maximum(sub[IDX.Z2], 0.0) / sub[IDX.Z1])
                - np.sqrt(sub[IDX.Z1] * np.maximum(sub[IDX.Z2], 0.0))
            )
        )
        f2[pos] = f2_pos

    in_F = shared & (zmargin >= -tol) & (f2 >= -tol)
    in_A = shared & (zmargin >= -tol) & (gap <= tol)
    in_B = shared & (zmargin >= -tol) & (gap >= -tol)
    in_C = in_rs & (zmargin < -tol) & (gap >= -tol)
    return {"in_F": in_F, "in_A": in_A, "in_B": in_B, "in_C": in_C}


def region_of(p, mp: ModelParams, tol: float = 1e-9) -> RegionState:
    """Region membership of a single phase point."""
    p = np.asarray(p, dtype=float)
    flags = region_flags(p[None, :], mp, tol)
    diagnostic = None
    if p[IDX.Z1] <= 0:
        diagnostic = "Z1 <= 0: barrier undefined, F membership reported false"
    return RegionState(
        in_F=bool(flags["in_F"][0]),
        in_A=bool(flags["in_A"][0]),
        in_B=bool(flags["in_B"][0]),
        in_C=bool(flags["in_C"][0]),
        diagnostic=diagnostic,
    )


class AmbiguousTransitionError(RuntimeError):
    """Both exit faces fired within event tolerance of each other."""


@dataclass(frozen=True)
class TransitionReport:
    outcome: str  # EntersA | EntersC | StaysInB
    eta_exit: float | None
    exit_kind: str | None  # ViaX | ViaZ1
    certified_to: float  # last eta examined; StaysInB means "up to here"

    def as_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "eta_exit": self.eta_exit,
            "exit_kind": self.exit_kind,
            "certified_to": self.certified_to,
        }


def watch_transitions(tr, mp: ModelParams, event_tol: float = 1e-6) -> TransitionReport:
    """First confirmed exit from the transit region decides the verdict.

    Consumes the events the integrator confirmed: an enters_A event (deep
    rate-gap crossing) means EntersA, an enters_C event (deep Z1 crossing)
    means EntersC.  If both occurred, the earlier one wins; a tie within
    event_tol raises AmbiguousTransitionError since the two exit surfaces
    are disjoint and approachable together only near the round locus, which
    no generic trajectory reaches.
    """
    eta_a = None
    for ev in tr.events:
        if ev.name == EVENT_ENTERS_A:
            eta_a = ev.eta
            break
    eta_c = None
    for ev in tr.events:
        if ev.name == EVENT_ENTERS_C:
            eta_c = ev.eta
            break

    horizon = float(tr.etas[-1])
    if eta_a is not None and eta_c is not None:
        if abs(eta_a - eta_c) <= event_tol:
            raise AmbiguousTransitionError(
                f"exit faces fired together at eta ~ {eta_a:.6f}"
            )
        if eta_a < eta_c:
            return TransitionReport(OUTCOME_ENTERS_A, eta_a, "ViaX", horizon)
        return TransitionReport(OUTCOME_ENTERS_C, eta_c, "ViaZ1", horizon)
    if eta_a is not None:
        return TransitionReport(OUTCOME_ENTERS_A, eta_a, "ViaX", horizon)
    if eta_c is not None:
        return TransitionReport(OUTCOME_ENTERS_C, eta_c, "ViaZ1", horizon)
    return TransitionReport(OUTCOME_STAYS_IN_B, None, None, horizon)


def estimate_s4(tr, mp: ModelParams) -> float:
    """Recover the potential parameter from Q at the first sample.

    Q(seed) = -2 s4 u + O(u^2) with u = e^{2 eta0}, so -Q/2u estimates s4 up
    to O(u); good enough to decide s4 == 0 vs s4 > 0 for witness gating.
    """
    u = math.exp(2.0 * float(tr.etas[0]))
    s = derived_scalars(tuple(np.asarray(tr.states[0], dtype=float)), mp)
    return -s.Q / (2.0 * u)


@dataclass(frozen=True)
class WitnessEntry:
    name: str
    applicable: bool
    max_violation: float | None
    n_samples: int
    diagnostic: str | None = None

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "applicable": self.applicable,
            "max_violation": self.max_violation,
            "n_samples": self.n_samples,
            "diagnostic": self.diagnostic,
        }


@dataclass(frozen=True)
class WitnessReport:
    entries: tuple

    def __getitem__(self, name: str) -> WitnessEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {"witnesses": [e.as_dict() for e in self.entries]}


def _increments_violation(values: np.ndarray, mask: np.ndarray, sign: int) -> tuple:
    """Largest increment of the wrong sign between consecutive masked samples.

    sign=-1 checks a nonincreasing claim (violations are positive increments),
    sign=+1 a nondecreasing claim.
    """
    idx = np.flatnonzero(mask)
    if idx.size < 2:
        return None, int(idx.size)
    consecutive = idx[1:] == idx[:-1] + 1
    if not np.any(consecutive):
        return None, int(idx.size)
    lo = idx[:-1][consecutive]
    steps = values[lo + 1] - values[lo]
    # nonincreasing claim (sign=-1): positive steps violate;
    # nondecreasing claim (sign=+1): negative steps violate.
    worst = float(np.max(steps)) if sign < 0 else float(np.max(-steps))
    return max(worst, 0.0), int(idx.size)


def monotone_witnesses(tr, mp: ModelParams, tol: float = 1e-9) -> WitnessReport:
    """Audit the three monotone quantities along a finished trajectory.

    1. (H-1)/sqrt(-Q): nonincreasing while in B (needs s4 > 0 so Q < 0).
    2. sqrt(Z1)(X1-X2)/sqrt(-Q): same applicability, nonincreasing in B.
    3. Z2^{2m+3} Z3^{2m} / Z1: nondecreasing on Ricci-flat runs while in B.

    Reported violations are the largest wrong-signed increments between
    consecutive in-B samples; inapplicable witnesses are marked skipped.
    """
    states = np.asarray(tr.states, dtype=float)
    cols = states.T
    s = derived_scalars(tuple(cols), mp)
    in_b = region_flags(states, mp, tol=2e-6)["in_B"]

    s4_est = estimate_s4(tr, mp)
    steady = bool(np.max(np.abs(cols[IDX.W])) == 0.0)
    entries = []

    neg_q = s.Q < -1e-14
    if s4_est > 1e-6:
        mask = in_b & neg_q
        if np.any(mask):
            sqrtmq = np.sqrt(np.where(neg_q, -s.Q, np.nan))
            w1 = (s.H - 1.0) / sqrtmq
            v1, n1 = _increments_violation(w1, mask, sign=-1)
            entries.append(WitnessEntry("h_over_sqrt_minus_q", True, v1, n1))
            w2 = (
                np.sqrt(np.maximum(cols[IDX.Z1], 0.0))
                * (cols[IDX.X1] - cols[IDX.X2])
                / sqrtmq
            )
            v2, n2 = _increments_violation(w2, mask, sign=-1)
            entries.append(WitnessEntry("z1_rate_over_sqrt_minus_q", True, v2, n2))
        else:
            for name in ("h_over_sqrt_minus_q", "z1_rate_over_sqrt_minus_q"):
                entries.append(
                    WitnessEntry(name, False, None, 0, "no in-B samples with Q < 0")
                )
    else:
        for name in ("h_over_sqrt_minus_q", "z1_rate_over_sqrt_minus_q"):
            entries.append(
                WitnessEntry(name, False, None, 0, "Q ~ 0 (s4 = 0 run), skipped")
            )

    if steady and s4_est <= 1e-6:
        z1 = cols[IDX.Z1]
        mask = in_b & (z1 > 0) & (cols[IDX.Z2] > 0) & (cols[IDX.Z3] > 0)
        if np.any(mask):
            with np.errstate(divide="ignore", invalid="ignore"):
                w3 = (
                    (2 * mp.m + 3) * np.log(np.maximum(cols[IDX.Z2], 1e-300))
                    + 2 * mp.m * np.log(np.maximum(cols[IDX.Z3], 1e-300))
                    - np.log(np.maximum(z1, 1e-300))
                )
            v3, n3 = _increments_violation(w3, mask, sign=+1)
            entries.append(WitnessEntry("ricci_flat_squash_product", True, v3, n3))
        else:
            entries.append(
                WitnessEntry(
                    "ricci_flat_squash_product", False, None, 0, "no usable samples"
                )
            )
    else:
        entries.append(
            WitnessEntry(
                "ricci_flat_squash_product", False, None, 0, "not a Ricci-flat run"
            )
        )
    return WitnessReport(tuple(entries))


@dataclass(frozen=True)
class StratumResult:
    name: str
    n_accepted: int
    min_value: float
    argmin: tuple
    note: str | None = None

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "n_accepted": self.n_accepted,
            "min_value": self.min_value,
            "argmin": list(self.argmin),
            "note": self.note,
        }


@dataclass(frozen=True)
class AuditReport:
    strata: tuple
    rng_seed: int

    def __getitem__(self, name: str) -> StratumResult:
        for st in self.strata:
            if st.name == name:
                return st
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "rng_seed": self.rng_seed,
            "strata": [st.as_dict() for st in self.strata],
        }


def _rs_ok(pts: np.ndarray, mp: ModelParams) -> np.ndarray:
    s = derived_scalars(tuple(pts.T), mp)
    return (s.Q <= 0.0) & (s.H <= 1.0)


def _collect(draw, want: int, max_rounds: int = 60):
    """Accumulate accepted samples from a vectorized rejection sampler."""
    vals, pts = [], []
    got = 0
    for _ in range(max_rounds):
        v, p = draw(want)
        if v.size:
            vals.append(v)
            pts.append(p)
            got += v.size
        if got >= want:
            break
    if not vals:
        return np.empty(0), np.empty((0, 8))
    return np.concatenate(vals)[:want], np.vstack(pts)[:want]


def boundary_sign_audit(
    mp: ModelParams, n_samples: int = 10_000, rng_seed: int | None = None
) -> AuditReport:
    """Monte-Carlo sign certificates on the four boundary strata.

    Z-coordinates are drawn log-uniformly in [1e-4, 1] and X-coordinates
    uniformly in [0, 1], then projected onto each stratum; points failing
    the stratum's side constraints or RS membership are rejected.

    Strata:
      barrier_zero        inward derivative of F_2 on {F_2 = 0} in F
      equal_squash_face   derivative of Z2 - Z3 on {Z2 = Z3} in F
      z1_face             derivative of 1 - Z1 on {Z1 = 1} in F
      squash_face_factor  K on {squash_margin = 0} within closure(B)
      squash_factor_literal  (diagnostic only) K on the larger literal region
                          RS n {Z1<=1, X3>=0, Z2>=Z3}; K is NOT nonnegative
                          there (e.g. X=0, Z1=0, Z2=1/8 gives 1 - sqrt(2)),
                          so this minimum is reported but not certified.
    """
    if rng_seed is None:
        rng_seed = int(os.environ.get("COHOM1_SEED", COHOM1_DEFAULT_SEED))
    rng = np.random.default_rng(rng_seed)
    m = mp.m

    def log_uniform(n, lo=1e-4, hi=1.0):
        return np.exp(rng.uniform(math.log(lo), math.log(hi), n))

    def assemble(x1, x2, x3, z1, z2, z3, w=None):
        z4 = np.sqrt(z2 * z3)
        if w is None:
            w = np.zeros_like(z1)
        return np.column_stack([x1, x2, x3, z1, z2, z3, z4, w])

    def draw_barrier(n):
        z1 = log_uniform(n)
        z2 = log_uniform(n)
        z3 = np.minimum(z2, log_uniform(n))
        x2 = rng.uniform(0, 1, n)
        x3 = rng.uniform(0, 1, n)
        x1 = x2 + 2.0 * (np.sqrt(z2 / z1) - np.sqrt(z1 * z2))
        pts = assemble(x1, x2, x3, z1, z2, z3)
        ok = (
            (x1 >= 0)
            & (x1 <= 1)
            & (z1 <= 1)
            & (squash_margin(pts.T) >= 0)
            & _rs_ok(pts, mp)
        )
        pts = pts[ok]
        if not pts.size:
            return np.empty(0), pts
        vals = np.array([barrier_F_derivative(2.0, p, mp) for p in pts])
        return vals, pts

    def draw_equal_squash(n):
        z = log_uniform(n)
        z1 = log_uniform(n)
        xa = rng.uniform(0, 1, n)
        xb = rng.uniform(0, 1, n)
        x2, x3 = np.minimum(xa, xb), np.maximum(xa, xb)  # margin X3 - X2 >= 0
        x1 = rng.uniform(x2, 1.0)  # B side
        pts = assemble(x1, x2, x3, z1, z, z)
        ok = (z1 <= 1) & _rs_ok(pts, mp)
        pts = pts[ok]
        vals = 4.0 * pts[:, IDX.Z2] * (pts[:, IDX.X3] - pts[:, IDX.X2])
        return vals, pts

    def draw_z1_face(n):
        z2 = log_uniform(n)
        z3 = np.minimum(z2, log_uniform(n))
        x1 = rng.uniform(0, 1, n)
        x2 = rng.uniform(x1, 1.0)  # F_2 >= 0 at Z1=1 means X2 >= X1
        x3 = rng.uniform(0, 1, n)
        z1 = np.ones(n)
        pts = assemble(x1, x2, x3, z1, z2, z3)
        ok = (squash_margin(pts.T) >= 0) & _rs_ok(pts, mp)
        pts = pts[ok]
        vals = 2.0 * pts[:, IDX.Z1] * (pts[:, IDX.X2] - pts[:, IDX.X1])
        return vals, pts

    def draw_squash_face(n):
        z2 = log_uniform(n)
        z3 = np.minimum(z2, log_uniform(n))
        z1 = log_uniform(n)
        x3 = rng.uniform(0, 1, n)
        x2 = x3 + 2.0 * (np.sqrt(z2) - np.sqrt(z3))  # squash_margin = 0
        x1 = rng.uniform(np.minimum(x2, 1.0), 1.0)  # closure(B): X1 >= X2
        pts = assemble(x1, x2, x3, z1, z2, z3)
        ok = (x2 <= 1) & (x1 >= x2) & (z1 <= 1) & _rs_ok(pts, mp)
        pts = pts[ok]
        vals = squash_face_factor(pts.T, mp)
        return vals, pts

    def draw_squash_literal(n):
        z2 = log_uniform(n)
        z3 = np.minimum(z2, log_uniform(n))
        z1 = log_uniform(n)
        x1 = rng.uniform(0, 1, n)
        x2 = rng.uniform(0, 1, n)
        x3 = rng.uniform(0, 1, n)
        pts = assemble(x1, x2, x3, z1, z2, z3)
        ok = (z1 <= 1) & _rs_ok(pts, mp)
        pts = pts[ok]
        vals = squash_face_factor(pts.T, mp)
        return vals, pts

    strata = []
    for name, draw, note in (
        ("barrier_zero", draw_barrier, None),
        ("equal_squash_face", draw_equal_squash, None),
        ("z1_face", draw_z1_face, None),
        ("squash_face_factor", draw_squash_face, None),
        (
            "squash_factor_literal",
            draw_squash_literal,
            "diagnostic only: the literal region admits K < 0",
        ),
    ):
        vals, pts = _collect(draw, n_samples)
        if vals.size == 0:
            strata.append(StratumResult(name, 0, math.nan, (), "no samples accepted"))
            continue
        i = int(np.argmin(vals))
        strata.append(
            StratumResult(name, int(vals.size), float(vals[i]), tuple(pts[i]), note)
        )
    return AuditReport(tuple(strata), rng_seed)
