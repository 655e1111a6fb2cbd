"""Critical-point catalog, end-geometry classification, metric reconstruction.

The flow's relevant critical points fall into a short list of closed forms
(functions of m alone, plus two one-parameter families).  A finished
trajectory is classified by which exit verdict it earned, whether the
soliton potential was switched on (s4), and whether the run is steady or
expanding; the geometric labels are

  AC   asymptotically conical
  ALC  asymptotically locally conical (circle stays bounded)
  AP   asymptotically paraboloidal
  ACP  paraboloid with a cigar factor (collapsed verdict, steady, s4 > 0)
  AH   asymptotically hyperbolic (expanding, s4 = 0)
  Incomplete   entered the escape region; no complete metric
  Undetermined tail diagnostics did not settle

Reconstruction undoes the coordinate change: with W~ the squared inverse of
tr(L) - fdot, the metric components are a^2 = Z1 W~/Z2, b^2 = W~/Z2,
c^2 = W~/Z4, arc length dt = sqrt(W~) deta, and f' (eta) = H - 1.  For
steady runs W is identically zero and W~ is recovered by quadrature of 2P;
the seed value W~(eta0) = e^{2 eta0} s6 pins the homothety so that b(0) = k
and a ~ k t at the singular orbit.

Quadratures run per accepted integrator step with a 5-point Gauss-Legendre
rule on the stored dense output; the integrands that decide the stored
columns (2P and H - 1) are polynomials of degree <= 8 in eta there, so the
rule is exact for them up to round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from solitonlab.phase import (
    IDX,
    ModelParams,
    constraint_residual,
    derived_scalars,
    vector_field,
)
from solitonlab.regions import (
    OUTCOME_ENTERS_A,
    OUTCOME_ENTERS_C,
    OUTCOME_STAYS_IN_B,
    watch_transitions,
)

LABEL_AC = "AC"
LABEL_ALC = "ALC"
LABEL_AP = "AP"
LABEL_ACP = "ACP"
LABEL_AH = "AH"
LABEL_INCOMPLETE = "Incomplete"
LABEL_UNDETERMINED = "Undetermined"

BASE_FUBINI_STUDY = "FubiniStudy"
BASE_NON_KAHLER = "NonKahlerCP"
BASE_STANDARD_SPHERE = "StandardSphere"
BASE_JENSEN_SPHERE = "JensenSphere"
BASE_NA = "NA"


@dataclass(frozen=True)
class CriticalPoint:
    id: str
    point: np.ndarray
    free: tuple = ()  # coordinate indices the family leaves unconstrained
    expected_q: float = 0.0
    note: str = ""

    def distance(self, p) -> float:
        """Max-norm distance ignoring family-free coordinates."""
        p = np.asarray(p, dtype=float)
        d = np.abs(p - self.point)
        if self.free:
            d = np.delete(d, list(self.free))
        return float(np.max(d))

    def at(self, z1: float) -> np.ndarray:
        """Family representative with the free coordinate set to z1."""
        q = self.point.copy()
        for i in self.free:
            q[i] = z1
        return q


def critical_points(mp: ModelParams) -> list:
    """All cataloged critical points for this (m, epsilon).

    The two *_m0 points live in the invariant reduction set
    {X3 = Z3 = Z4 = 0, W = 0}, where the flow coincides with the m = 0
    flow; they are critical for every m and are the limits of the
    theta = pi trajectories.
    """
    m = mp.m
    n = mp.n
    pts = [
        CriticalPoint("p0", np.array([1.0, 0, 0, 0, 0, 0, 0, 0]), note="seeding point"),
        CriticalPoint(
            "p1",
            np.array([1 / n, 1 / n, 1 / n, 1.0, 1 / n**2, 1 / n**2, 1 / n**2, 0.0]),
            note="equal-squash cone over the round fiber locus",
        ),
    ]
    zss = (n - 1) / (n**2 * (2 * (2 * m + 3) ** 2 + 4 * m))
    pts.append(
        CriticalPoint(
            "p2",
            np.array(
                [
                    1 / n,
                    1 / n,
                    1 / n,
                    1.0,
                    (2 * m + 3) ** 2 * zss,
                    zss,
                    (2 * m + 3) * zss,
                    0.0,
                ]
            ),
            note="squashed cone point",
        )
    )
    z = (n - 2) / ((n - 1) ** 2 * (n + 1))
    pts.append(
        CriticalPoint(
            "q1",
            np.array([0.0, 1 / (n - 1), 1 / (n - 1), 0.0, z, z, z, 0.0]),
            note="collapsed-fiber point, equal squash",
        )
    )
    zs = (n - 2) / ((n - 1) ** 2 * 4 * (m**2 + 3 * m + 1))
    pts.append(
        CriticalPoint(
            "q2",
            np.array(
                [
                    0.0,
                    1 / (n - 1),
                    1 / (n - 1),
                    0.0,
                    (m + 1) ** 2 * zs,
                    zs,
                    (m + 1) * zs,
                    0.0,
                ]
            ),
            note="collapsed-fiber point, squashed",
        )
    )
    if mp.epsilon == 1:
        q0 = np.array([1 / n, 1 / n, 1 / n, 0.0, 0.0, 0.0, 0.0, 2.0 / (n * mp.epsilon)])
        pts.append(
            CriticalPoint(
                "q0",
                q0,
                free=(IDX.Z1,),
                note="hyperbolic-rate family (expanding runs, s4 = 0)",
            )
        )
    pts.append(
        CriticalPoint(
            "origin",
            np.zeros(8),
            free=(IDX.Z1,),
            expected_q=-1.0,
            note="expanding-cone family, Q = -1",
        )
    )
    pts.append(
        CriticalPoint(
            "p1_m0",
            np.array([1 / 3, 1 / 3, 0.0, 1.0, 1 / 9, 0.0, 0.0, 0.0]),
            note="reduction-set analog of p1 (theta = pi runs, k = 2)",
        )
    )
    pts.append(
        CriticalPoint(
            "q1_m0",
            np.array([0.0, 0.5, 0.0, 0.0, 1 / 16, 0.0, 0.0, 0.0]),
            note="reduction-set analog of q1 (theta = pi runs, k = 1)",
        )
    )
    return pts


@dataclass(frozen=True)
class CatalogRow:
    id: str
    z1: float | None
    v_inf: float
    q_residual: float
    h: float
    cone_residual: float

    @property
    def ok(self) -> bool:
        return max(self.v_inf, self.q_residual, self.cone_residual) < 1e-12

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "z1": self.z1,
            "v_inf": self.v_inf,
            "q_residual": self.q_residual,
            "h": self.h,
            "cone_residual": self.cone_residual,
            "ok": self.ok,
        }


def catalog_audit(mp: ModelParams, family_z1=(0.0, 0.5, 1.0)) -> list:
    """Residuals of V, Q and the cone constraint at every catalog point.

    Family points are evaluated at each requested free-coordinate value.
    """
    rows = []
    for cp in critical_points(mp):
        reps = [(None, cp.point)] if not cp.free else [(z, cp.at(z)) for z in family_z1]
        for z1, pt in reps:
            v = np.array(vector_field(tuple(pt), mp))
            s = derived_scalars(tuple(pt), mp)
            rows.append(
                CatalogRow(
                    id=cp.id,
                    z1=z1,
                    v_inf=float(np.max(np.abs(v))),
                    q_residual=abs(s.Q - cp.expected_q),
                    h=float(s.H),
                    cone_residual=abs(constraint_residual(pt)),
                )
            )
    return rows


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def _segment_nodes(seg):
    """Gauss-Legendre nodes and weights mapped onto a dense-output segment."""
    h = seg.t - seg.t_old
    mid = 0.5 * (seg.t + seg.t_old)
    return mid + 0.5 * h * _GL_NODES, 0.5 * h * _GL_WEIGHTS


def segment_quadrature(segments, integrand) -> np.ndarray:
    """Per-segment integrals of integrand(eta, state) over dense output.

    Returns one value per segment; integrand must accept an (8, 5) state
    block and a node vector and return 5 values.
    """
    out = np.empty(len(segments))
    for i, seg in enumerate(segments):
        x, w = _segment_nodes(seg)
        vals = integrand(x, seg(x))
        out[i] = float(np.dot(w, vals))
    return out


@dataclass
class MetricProfile:
    """Reconstructed metric data on the integrator's accepted grid."""

    etas: np.ndarray
    t: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    f: np.ndarray
    adot: np.ndarray
    bdot: np.ndarray
    cdot: np.ndarray
    fdot: np.ndarray
    w_tilde: np.ndarray
    mp: ModelParams

    def rows(self):
        """(t, a, b, c, f, fdot) tuples, the serialization order."""
        for i in range(self.t.size):
            yield (
                self.t[i],
                self.a[i],
                self.b[i],
                self.c[i],
                self.f[i],
                self.fdot[i],
            )

    def products(self) -> dict:
        """The paraboloid invariants a*adot, b*bdot, c*cdot."""
        return {
            "a_adot": self.a * self.adot,
            "b_bdot": self.b * self.bdot,
            "c_cdot": self.c * self.cdot,
        }

    def rates(self) -> dict:
        """Logarithmic derivatives adot/a, bdot/b, cdot/c (AH diagnostics)."""
        return {
            "a": self.adot / self.a,
            "b": self.bdot / self.b,
            "c": self.cdot / self.c,
        }


def _steady_log_wtilde(tr, mp: ModelParams, w0: float) -> np.ndarray:
    """Cumulative log W~ on the sample grid, from (log W~)' = 2P."""

    def two_p(x, block):
        s = derived_scalars(tuple(block), mp)
        return 2.0 * s.P

    incr = segment_quadrature(tr.segments, two_p)
    logw = np.empty(tr.etas.size)
    logw[0] = math.log(w0)
    np.cumsum(incr, out=logw[1:])
    logw[1:] += logw[0]
    return logw


def reconstruct(tr, mp: ModelParams, sp, normalization: float | None = None) -> MetricProfile:
    """Undo the coordinate change along a finished trajectory.

    For expanding runs W~ is the W coordinate itself and must be positive.
    For steady runs W~ is integrated from (log W~)' = 2P with the seed value
    W~(eta0) = e^{2 eta0} s6 (or the explicit normalization argument); any
    other positive choice is the same metric up to homothety.

    t is anchored by t(eta0) = a(eta0)/k, matching the small-t closing
    a ~ k t; f is gauged to f(eta0) = 0 (the potential's additive constant
    is immaterial, and fdot(eta0) = O(t) pins it to the t = 0 value).
    """
    states = np.asarray(tr.states, dtype=float)
    cols = states.T
    etas = np.asarray(tr.etas, dtype=float)
    eps = mp.epsilon

    if eps == 1:
        w_tilde = cols[IDX.W].copy()
        if np.min(w_tilde) <= 0.0:
            raise ValueError(
                "W must stay positive to reconstruct an expanding run "
                "(run has s5 = 0?)"
            )
    else:
        w0 = normalization if normalization is not None else math.exp(
            2.0 * etas[0]
        ) * sp.s6(mp.k)
        if w0 <= 0.0:
            raise ValueError("steady normalization W~(eta0) must be positive")
        logw = _steady_log_wtilde(tr, mp, w0)
        w_tilde = np.exp(logw)

    # t and f by per-segment quadrature.
    sqrt_w_nodes = np.empty(len(tr.segments))
    f_incr = np.empty(len(tr.segments))
    for i, seg in enumerate(tr.segments):
        x, w = _segment_nodes(seg)
        block = seg(x)
        s = derived_scalars(tuple(block), mp)
        if eps == 1:
            wt = block[IDX.W]
        else:
            # partial integrals of 2P from the segment start to each node
            wt = np.empty(x.size)
            for j, xe in enumerate(x):
                h = xe - seg.t_old
                if h == 0.0:
                    wt[j] = logw[i]
                    continue
                mid = 0.5 * (seg.t_old + xe)
                xs = mid + 0.5 * h * _GL_NODES
                ws = 0.5 * h * _GL_WEIGHTS
                sp_block = derived_scalars(tuple(seg(xs)), mp)
                wt[j] = logw[i] + float(np.dot(ws, 2.0 * sp_block.P))
            wt = np.exp(wt)
        if np.min(wt) <= 0.0:
            raise ValueError("W~ hit zero inside a quadrature segment")
        sqrt_w_nodes[i] = float(np.dot(w, np.sqrt(wt)))
        f_incr[i] = float(np.dot(w, s.H - 1.0))

    z1, z2, z4 = cols[IDX.Z1], cols[IDX.Z2], cols[IDX.Z4]
    if np.min(z2) <= 0.0:
        raise ValueError("Z2 must stay positive to reconstruct b")
    b = np.sqrt(w_tilde / z2)
    a = np.sqrt(np.maximum(z1, 0.0) * w_tilde / z2)
    with np.errstate(divide="ignore"):
        c = np.where(z4 > 0.0, np.sqrt(w_tilde / np.maximum(z4, 1e-300)), np.inf)

    t = np.empty(etas.size)
    t[0] = a[0] / mp.k
    np.cumsum(sqrt_w_nodes, out=t[1:])
    t[1:] += t[0]

    f = np.empty(etas.size)
    f[0] = 0.0
    np.cumsum(f_incr, out=f[1:])

    sqrt_w = np.sqrt(w_tilde)
    scal = derived_scalars(tuple(cols), mp)
    adot = a * cols[IDX.X1] / sqrt_w
    bdot = b * cols[IDX.X2] / sqrt_w
    cdot = np.where(np.isfinite(c), c * cols[IDX.X3] / sqrt_w, np.nan)
    fdot = (scal.H - 1.0) / sqrt_w

    return MetricProfile(
        etas=etas,
        t=t,
        a=a,
        b=b,
        c=c,
        f=f,
        adot=adot,
        bdot=bdot,
        cdot=cdot,
        fdot=fdot,
        w_tilde=w_tilde,
        mp=mp,
    )


@dataclass(frozen=True)
class Classification:
    outcome: str
    asymptotic_label: str
    mu2: float
    nu2: float
    nu2_std: float
    limit_point: str | None
    base_label: str
    eta_final: float
    diagnostic: str | None = None

    def as_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "label": self.asymptotic_label,
            "mu2": self.mu2,
            "nu2": self.nu2,
            "nu2_std": self.nu2_std,
            "limit_point": self.limit_point,
            "base_label": self.base_label,
            "eta_final": self.eta_final,
            "diagnostic": self.diagnostic,
        }


TAIL_SAMPLES = 10
LIMIT_MATCH_TOL = 2e-2
NU2_SETTLE_TOL = 1e-2


def classify(tr, mp: ModelParams, sp) -> Classification:
    """Assign the end-geometry label to a finished trajectory.

    Decision table (verdict x parameters):
      expanding, s4 > 0          -> AC   (limit: expanding-cone family)
      expanding, s4 = 0          -> AH   (limit: hyperbolic-rate family)
      steady, s4 > 0, EntersA    -> ACP
      steady, s4 > 0, StaysInB   -> AP
      steady, s4 = 0, EntersA    -> ALC
      steady, s4 = 0, StaysInB   -> AC
      EntersC (any parameters)   -> Incomplete

    mu2 reports the Z1 tail mean and nu2 the sqrt(Z3/Z2) tail mean; when a
    label needs a settled squash ratio but the tail has not converged the
    run is demoted to Undetermined.

    The base_label maps nu2 and theta to the geometric base: 1 -> the
    projective base (Fubini-Study for theta = 0, the non-Kahler circle-sum
    otherwise), 1/(2m+3) -> the Jensen squashed sphere; collapsed limits use
    the catalog id (q1-type -> round sphere, q2 -> Jensen).  theta = pi runs
    live in the reduction set, whose base is the projective line.
    """
    states = np.asarray(tr.states, dtype=float)
    tail = states[-TAIL_SAMPLES:]
    etas = np.asarray(tr.etas, dtype=float)

    mu2 = float(np.mean(tail[:, IDX.Z1]))
    z2 = tail[:, IDX.Z2]
    z3 = tail[:, IDX.Z3]
    good = z2 > 0
    if np.any(good):
        ratio = np.sqrt(np.maximum(z3[good], 0.0) / z2[good])
        nu2 = float(np.mean(ratio))
        nu2_std = float(np.std(ratio))
    else:
        nu2, nu2_std = math.nan, math.inf

    verdict = watch_transitions(tr, mp)
    outcome = verdict.outcome

    diagnostic = None
    if outcome == OUTCOME_ENTERS_C:
        label = LABEL_INCOMPLETE
    elif mp.epsilon == 1:
        label = LABEL_AC if sp.s4 > 0 else LABEL_AH
    elif sp.s4 > 0:
        label = LABEL_ACP if outcome == OUTCOME_ENTERS_A else LABEL_AP
    else:
        label = LABEL_ALC if outcome == OUTCOME_ENTERS_A else LABEL_AC

    needs_ratio = label in (LABEL_AP, LABEL_ALC) or (
        label == LABEL_AC and mp.epsilon == 0
    )
    if needs_ratio and not (nu2_std <= NU2_SETTLE_TOL):
        diagnostic = f"squash ratio not settled (std {nu2_std:.3e})"
        label = LABEL_UNDETERMINED

    tail_mean = np.mean(tail, axis=0)
    limit_point = None
    best = math.inf
    for cp in critical_points(mp):
        if cp.id == "p0":
            continue
        d = cp.distance(tail_mean)
        if d < best:
            best, limit_point = d, cp.id
    if best > LIMIT_MATCH_TOL:
        limit_point = None

    base = BASE_NA
    if label == LABEL_ALC:
        if limit_point in ("q1", "q1_m0"):
            base = BASE_STANDARD_SPHERE
        elif limit_point == "q2":
            base = BASE_JENSEN_SPHERE
        elif abs(nu2 - 1.0) <= LIMIT_MATCH_TOL:
            base = BASE_STANDARD_SPHERE
        elif abs(nu2 - 1.0 / (mp.m + 1)) <= LIMIT_MATCH_TOL:
            base = BASE_JENSEN_SPHERE
    elif label == LABEL_AP or (label == LABEL_AC and mp.epsilon == 0):
        # Cone/paraboloid bases are resolved for the steady runs only; the
        # expanding cones keep NA.
        if sp.theta == math.pi or limit_point == "p1_m0":
            base = BASE_FUBINI_STUDY  # reduction set: projective-line base
        elif abs(nu2 - 1.0) <= LIMIT_MATCH_TOL:
            base = BASE_FUBINI_STUDY if sp.theta == 0.0 else BASE_NON_KAHLER
        elif abs(nu2 - 1.0 / (2 * mp.m + 3)) <= LIMIT_MATCH_TOL:
            base = BASE_JENSEN_SPHERE

    return Classification(
        outcome=outcome,
        asymptotic_label=label,
        mu2=mu2,
        nu2=nu2,
        nu2_std=nu2_std,
        limit_point=limit_point,
        base_label=base,
        eta_final=float(etas[-1]),
        diagnostic=diagnostic,
    )
