"""Adaptive integration of the phase flow with confirmed event crossings.

The driver wraps scipy's RK45 in stepping mode and keeps the dense output
of every accepted step, so events can be localized by root finding on the
actual interpolant and finished runs can be post-processed (quadrature,
resampling) without re-integration.

Sign watchers use hysteresis: a watcher's sign is *confirmed* only when the
value clears a dead band of width 2 * event_tol, and a crossing event is
recorded only between two confirmed opposite signs.  Trajectories that
approach a face without crossing it (the borderline separatrix runs) then
produce no event at all instead of chattering.

A run ends in exactly one of four statuses:

  ReachedHorizon            integrated to eta_max (or to the grace horizon
                            after an enters_C event; see exit_reason)
  ConvergedToCriticalPoint  parked at a cataloged critical point
  LeftRS                    drifted out of the physical locus beyond the
                            exit budget (exit_reason cone_drift or
                            drift_budget; the offending sample is kept in
                            exit_state, not in the arrays)
  NumericalFailure          step-size collapse, non-finite state, or step
                            budget exhausted
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45, solve_ivp
from scipy.optimize import brentq

from solitonlab.asymptotics import critical_points
from solitonlab.phase import (
    IDX,
    ModelParams,
    constraint_residual,
    derived_scalars,
    q_flow_consistency,
    vector_field,
)
from solitonlab.regions import (
    EVENT_ENTERS_A,
    EVENT_ENTERS_C,
    WATCH_RATE_GAP,
    WATCH_RATE_GAP_DEEP,
    WATCH_Z1_MARGIN,
    WATCH_Z1_ESCAPE,
    collapse_depth,
    rate_gap,
    z1_margin,
)

STATUS_REACHED_HORIZON = "ReachedHorizon"
STATUS_CONVERGED = "ConvergedToCriticalPoint"
STATUS_LEFT_RS = "LeftRS"
STATUS_NUMERICAL_FAILURE = "NumericalFailure"

EXIT_CONE_DRIFT = "cone_drift"
EXIT_DRIFT_BUDGET = "drift_budget"
EXIT_ENTERS_C_GRACE = "enters_C_grace"


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    eta_max: float = 60.0
    max_steps: int = 200_000
    max_step: float = math.inf
    event_tol: float = 1e-6
    constraint_tol: float = 1e-9
    rs_exit_tol: float = 1e-5
    rs_soft_exit_tol: float = 5e-2
    renormalize: bool = False
    grace: float = 2.0
    escape_depth: float = 5e-2
    collapse_depth: float | None = None  # None: 1/(2(n-1)) for the model's n
    convergence_dist: float = 1e-6
    convergence_speed: float = 1e-10
    convergence_streak: int = 3


@dataclass(frozen=True)
class Event:
    name: str
    eta: float
    sign: int
    value_scale: float
    state: np.ndarray

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "eta": self.eta,
            "sign": self.sign,
            "value_scale": self.value_scale,
        }


@dataclass(frozen=True)
class Watcher:
    """A scalar function of the state whose sign changes are of interest."""

    name: str
    fn: object  # callable(state) -> float


def default_watchers(escape_depth: float = 5e-2, a_depth: float = 0.25):
    """Region-face watchers plus the displaced verdict surfaces.

    The verdicts cannot hang on the faces {Z1 = 1} and {X1 = X2}
    themselves: the borderline critical points sit exactly on them, so a
    run shadowing one of those points wobbles across the face at
    round-off-amplified scale without ever leaving the transit region, and
    a run blowing off such a point into an outer region may do so without
    re-crossing the face at all.  Watching surfaces displaced into the
    target regions separates the cases cleanly: shadow wobble stays orders
    of magnitude below the displacement, genuine exits cross it
    immediately (collapsing runs head for rate gap -1/(n-1), escaping runs
    for an unbounded Z1).
    """
    return (
        Watcher(WATCH_RATE_GAP, rate_gap),
        Watcher(WATCH_Z1_MARGIN, z1_margin),
        Watcher(WATCH_Z1_ESCAPE, lambda p: z1_margin(p) + escape_depth),
        Watcher(WATCH_RATE_GAP_DEEP, lambda p: rate_gap(p) + a_depth),
    )


class _WatcherTracker:
    """Hysteresis bookkeeping for one watcher along one run."""

    __slots__ = ("watcher", "band", "confirmed_sign", "confirmed_eta")

    def __init__(self, watcher: Watcher, band: float, eta0: float, seed):
        self.watcher = watcher
        self.band = band
        v0 = float(watcher.fn(seed))
        self.confirmed_sign = None
        self.confirmed_eta = eta0
        if abs(v0) >= band:
            self.confirmed_sign = 1 if v0 > 0 else -1

    def update(self, eta: float, state) -> tuple:
        """Returns (crossed, bracket_left) after an accepted step."""
        v = float(self.watcher.fn(state))
        if abs(v) < self.band:
            return False, None
        sign = 1 if v > 0 else -1
        if self.confirmed_sign is None:
            self.confirmed_sign, self.confirmed_eta = sign, eta
            return False, None
        if sign == self.confirmed_sign:
            self.confirmed_eta = eta
            return False, None
        left = self.confirmed_eta
        self.confirmed_sign, self.confirmed_eta = sign, eta
        return True, left


@dataclass
class Trajectory:
    """Accepted samples, dense interpolants and the run verdict."""

    mp: ModelParams
    eta0: float
    etas: np.ndarray
    states: np.ndarray
    events: list
    segments: list
    status: str
    exit_reason: str | None = None
    converged_to: str | None = None
    exit_eta: float | None = None
    exit_state: np.ndarray | None = None
    nfev: int = 0

    @property
    def eta_final(self) -> float:
        return float(self.etas[-1])

    def interpolate(self, eta):
        """State at eta (scalar -> (8,), array -> (8, len))."""
        if not self.segments:
            raise ValueError("trajectory has no accepted steps to interpolate")
        eta_arr = np.atleast_1d(np.asarray(eta, dtype=float))
        lo, hi = self.etas[0], self.etas[-1]
        tol = 1e-9 * (1.0 + abs(hi - lo))
        if np.min(eta_arr) < lo - tol or np.max(eta_arr) > hi + tol:
            raise ValueError(
                f"eta outside the integrated range [{lo:.6g}, {hi:.6g}]"
            )
        idx = np.searchsorted(self.etas, eta_arr, side="right") - 1
        idx = np.clip(idx, 0, len(self.segments) - 1)
        out = np.empty((8, eta_arr.size))
        for j, (i, e) in enumerate(zip(idx, eta_arr)):
            out[:, j] = self.segments[i](e)
        if np.isscalar(eta) or np.asarray(eta).ndim == 0:
            return out[:, 0]
        return out

    def samples(self):
        """Yield (eta, state, scalars) over the accepted grid."""
        for i in range(self.etas.size):
            p = self.states[i]
            yield self.etas[i], p, derived_scalars(tuple(p), mp=self.mp)


def _dense_eval(etas_list, segments, eta, fn):
    idx = np.searchsorted(np.asarray(etas_list), eta, side="right") - 1
    idx = min(max(int(idx), 0), len(segments) - 1)
    return float(fn(segments[idx](eta)))


def _locate_crossing(etas_list, segments, fn, left, right, xtol):
    """Root of a watcher value between two confirmed opposite signs.

    The bracket may span several accepted steps (the value can linger in
    the dead band); walk the sample grid for an adjacent sign flip first,
    then polish with brentq on the dense output.
    """
    grid = [e for e in etas_list if left <= e <= right]
    vals = [_dense_eval(etas_list, segments, e, fn) for e in grid]
    a, b = left, right
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            return grid[i]
        if vals[i] * vals[i + 1] < 0.0:
            a, b = grid[i], grid[i + 1]
            break
    fa = _dense_eval(etas_list, segments, a, fn)
    fb = _dense_eval(etas_list, segments, b, fn)
    if fa == 0.0:
        return a
    if fb == 0.0 or fa * fb > 0.0:
        return b
    return float(
        brentq(
            lambda e: _dense_eval(etas_list, segments, e, fn),
            a,
            b,
            xtol=xtol,
        )
    )


def integrate_flow(
    seed,
    mp: ModelParams,
    cfg: IntegratorConfig | None = None,
    eta0: float = 0.0,
    watchers=None,
) -> Trajectory:
    """Integrate the flow from a seed state until a terminal condition.

    Watchers default to the region faces plus the displaced verdict
    surfaces (see default_watchers).  A confirmed downward crossing of the
    deep rate-gap surface is the enters_A event; one of the deep Z1
    surface with the rate gap not confirmed negative is the enters_C
    event, which shortens the horizon to the crossing time plus the grace
    window instead of stopping outright, so the escape is visible in the
    stored tail.
    """
    cfg = cfg or IntegratorConfig()
    if watchers is None:
        a_depth = cfg.collapse_depth
        if a_depth is None:
            a_depth = collapse_depth(mp)
        watchers = default_watchers(cfg.escape_depth, a_depth)
    seed = np.array(seed, dtype=float)
    if seed.shape != (8,):
        raise ValueError("seed must be an 8-vector")
    if eta0 >= cfg.eta_max:
        raise ValueError("eta0 must lie below eta_max")

    def rhs(_eta, y):
        return np.array(vector_field(tuple(y), mp))

    rk = RK45(
        rhs,
        eta0,
        seed,
        t_bound=cfg.eta_max,
        rtol=cfg.rtol,
        atol=cfg.atol,
        max_step=cfg.max_step,
    )

    band = 2.0 * cfg.event_tol
    trackers = [_WatcherTracker(w, band, eta0, seed) for w in watchers]

    catalog = [cp for cp in critical_points(mp) if cp.id != "p0"]

    etas: list = [eta0]
    states: list = [seed.copy()]
    segments: list = []
    events: list = []

    status = None
    exit_reason = None
    converged_to = None
    exit_eta = None
    exit_state = None
    entered_c = False

    streak = 0
    streak_target = None

    def convergence_update(y, speed) -> bool:
        nonlocal streak, streak_target, status, converged_to
        if speed <= cfg.convergence_speed:
            best_id, best = None, math.inf
            for cp in catalog:
                d = cp.distance(y)
                if d < best:
                    best, best_id = d, cp.id
            if best <= cfg.convergence_dist:
                streak = streak + 1 if best_id == streak_target else 1
                streak_target = best_id
                if streak >= cfg.convergence_streak:
                    status = STATUS_CONVERGED
                    converged_to = best_id
                    return True
                return False
        streak, streak_target = 0, None
        return False

    convergence_update(seed, float(np.max(np.abs(rhs(eta0, seed)))))

    steps = 0
    while rk.status == "running":
        if steps >= cfg.max_steps:
            status = STATUS_NUMERICAL_FAILURE
            exit_reason = "max_steps exhausted"
            break
        steps += 1
        msg = rk.step()
        if rk.status == "failed":
            if entered_c:
                # Finite-eta blowup inside the escape region is the expected
                # end of an enters_C run; the verdict is already recorded.
                status = STATUS_REACHED_HORIZON
                exit_reason = EXIT_ENTERS_C_GRACE
                exit_eta = float(rk.t)
            else:
                status = STATUS_NUMERICAL_FAILURE
                exit_reason = msg or "step size collapsed"
            break
        y = rk.y
        if not np.all(np.isfinite(y)):
            if entered_c:
                status = STATUS_REACHED_HORIZON
                exit_reason = EXIT_ENTERS_C_GRACE
                exit_eta = float(rk.t)
            else:
                status = STATUS_NUMERICAL_FAILURE
                exit_reason = "non-finite state"
                exit_eta, exit_state = float(rk.t), np.array(y)
            break
        seg = rk.dense_output()
        if cfg.renormalize:
            z2, z3 = y[IDX.Z2], y[IDX.Z3]
            if z2 >= 0.0 and z3 >= 0.0:
                rk.y[IDX.Z4] = math.copysign(math.sqrt(z2 * z3), y[IDX.Z4])
                y = rk.y

        etas.append(float(rk.t))
        states.append(y.copy())
        segments.append(seg)

        for trk in trackers:
            crossed, left = trk.update(float(rk.t), y)
            if not crossed:
                continue
            # Localize well below event_tol so the reported eta is limited
            # by the trajectory itself, not by the root finder.
            eta_star = _locate_crossing(
                etas,
                segments,
                trk.watcher.fn,
                left,
                float(rk.t),
                min(cfg.event_tol, 1e-12),
            )
            state_star = segments[-1](eta_star) if eta_star > segments[-1].t_old else None
            if state_star is None:
                idx = np.searchsorted(np.asarray(etas), eta_star, side="right") - 1
                idx = min(max(int(idx), 0), len(segments) - 1)
                state_star = segments[idx](eta_star)
            name = trk.watcher.name
            sign = trk.confirmed_sign
            if name == WATCH_Z1_ESCAPE and sign < 0 and rate_gap(state_star) > -band:
                name = EVENT_ENTERS_C
            elif name == WATCH_RATE_GAP_DEEP and sign < 0:
                name = EVENT_ENTERS_A
            events.append(
                Event(
                    name=name,
                    eta=float(eta_star),
                    sign=int(sign),
                    value_scale=band,
                    state=np.asarray(state_star, dtype=float),
                )
            )
            if name == EVENT_ENTERS_C and not entered_c:
                entered_c = True
                soft = eta_star + cfg.grace
                if soft < rk.t_bound:
                    rk.t_bound = soft
                if float(rk.t) >= soft:
                    status = STATUS_REACHED_HORIZON
                    exit_reason = EXIT_ENTERS_C_GRACE
        if status is not None:
            break

        if not entered_c:
            # Drift policing runs after the trackers so an escape crossing
            # confirmed on this very step wins over a simultaneous budget
            # trip; once the verdict is in, the grace tail exists for
            # diagnostics and may blow up freely.  An offending sample is
            # popped from the arrays and kept in exit_state.
            cone = abs(constraint_residual(y))
            # Positivity faces are hard: the flow can genuinely cross them
            # only through loci the runs never meet, so a small excursion
            # already means the state is unusable.  Q <= 0 and H <= 1 are
            # themselves flow-invariant; a positive value there is
            # accumulated round-off (the s4 = 0 runs sit exactly on
            # {Q = 0}), so they get a loose budget and are otherwise
            # reported by monitor_drift.
            hard = max(-y[IDX.Z1], -y[IDX.Z2], -y[IDX.Z3], -y[IDX.Z4], -y[IDX.W])
            s_now = derived_scalars(tuple(y), mp)
            soft = max(float(s_now.Q), float(s_now.H) - 1.0)
            if cone > 10.0 * cfg.constraint_tol:
                status = STATUS_LEFT_RS
                exit_reason = EXIT_CONE_DRIFT
            elif hard > cfg.rs_exit_tol or soft > cfg.rs_soft_exit_tol:
                status = STATUS_LEFT_RS
                exit_reason = EXIT_DRIFT_BUDGET
            if status is not None:
                exit_eta, exit_state = etas.pop(), states.pop()
                segments.pop()
                break

        speed = float(np.max(np.abs(rk.f)))
        if convergence_update(y, speed):
            break

    if status is None:
        if rk.status == "finished":
            status = STATUS_REACHED_HORIZON
            if entered_c:
                exit_reason = EXIT_ENTERS_C_GRACE
        else:
            status = STATUS_NUMERICAL_FAILURE
            exit_reason = exit_reason or "integrator stopped unexpectedly"

    return Trajectory(
        mp=mp,
        eta0=eta0,
        etas=np.asarray(etas),
        states=np.asarray(states),
        events=events,
        segments=segments,
        status=status,
        exit_reason=exit_reason,
        converged_to=converged_to,
        exit_eta=exit_eta,
        exit_state=exit_state,
        nfev=int(rk.nfev),
    )


integrate = integrate_flow


@dataclass(frozen=True)
class DriftReport:
    cone_max: float
    q_flow_max: float
    q_abs_max: float
    h_gap_max: float
    w_abs_max: float
    n_points: int

    def as_dict(self) -> dict:
        return {
            "cone_max": self.cone_max,
            "q_flow_max": self.q_flow_max,
            "q_abs_max": self.q_abs_max,
            "h_gap_max": self.h_gap_max,
            "w_abs_max": self.w_abs_max,
            "n_points": self.n_points,
        }


def monitor_drift(tr: Trajectory, mp: ModelParams, n_points: int = 10_000) -> DriftReport:
    """Conserved-quantity drift along a finished run, on a dense grid.

    cone_max bounds |Z4^2 - Z2 Z3| (exactly zero in exact arithmetic),
    q_flow_max bounds the Q-transport identity residual, and the q/h
    extrema feed the soliton-locus (s4 = 0) drift checks.
    """
    grid = np.linspace(tr.etas[0], tr.etas[-1], n_points)
    block = tr.interpolate(grid)
    p = tuple(block)
    s = derived_scalars(p, mp)
    return DriftReport(
        cone_max=float(np.max(np.abs(constraint_residual(p)))),
        q_flow_max=float(np.max(np.abs(q_flow_consistency(p, mp)))),
        q_abs_max=float(np.max(np.abs(s.Q))),
        h_gap_max=float(np.max(np.abs(s.H - 1.0))),
        w_abs_max=float(np.max(np.abs(block[IDX.W]))),
        n_points=n_points,
    )


def cross_check_t_system(
    tr: Trajectory,
    mp: ModelParams,
    profile,
    window: float = 1.0,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> dict:
    """Re-integrate the second-order arc-length system over a tail window.

    Starting from the reconstructed metric data at eta_final - window, the
    (a, b, c, f') system is solved in t and compared against the profile at
    every accepted node inside the window.  Agreement is a round-trip check
    of the coordinate change, the quadratures and the flow itself at once.

    Returns per-component max relative deviations plus their overall max.
    """
    etas = tr.etas
    if etas[-1] - etas[0] <= window:
        raise ValueError("trajectory shorter than the comparison window")
    i0 = int(np.searchsorted(etas, etas[-1] - window))
    i0 = min(i0, etas.size - 2)
    sl = slice(i0, etas.size)

    t_nodes = profile.t[sl]
    if not np.all(np.isfinite(profile.c[sl])):
        raise ValueError(
            "reduction-set run (c absent); the t-system check needs finite c"
        )
    m = mp.m
    eps = float(mp.epsilon)

    def rhs(_t, s):
        a, ad, b, bd, c, cd, fd = s
        tr_l = ad / a + 2 * bd / b + 4 * m * cd / c
        ra = ad / a
        rb = bd / b
        rc = cd / c
        curv_a = 2 * a * a / b**4 + 4 * m * a * a / c**4
        curv_b = 4 / (b * b) - 2 * a * a / b**4 + 4 * m * b * b / c**4
        curv_c = (4 * m + 8) / (c * c) - 2 * a * a / c**4 - 4 * b * b / c**4
        add = a * (ra * ra - tr_l * ra + curv_a + ra * fd + 0.5 * eps)
        bdd = b * (rb * rb - tr_l * rb + curv_b + rb * fd + 0.5 * eps)
        cdd = c * (rc * rc - tr_l * rc + curv_c + rc * fd + 0.5 * eps)
        fdd = add / a + 2 * bdd / b + 4 * m * cdd / c - 0.5 * eps
        return [ad, add, bd, bdd, cd, cdd, fdd]

    y0 = [
        profile.a[i0],
        profile.adot[i0],
        profile.b[i0],
        profile.bdot[i0],
        profile.c[i0],
        profile.cdot[i0],
        profile.fdot[i0],
    ]
    sol = solve_ivp(
        rhs,
        (t_nodes[0], t_nodes[-1]),
        y0,
        method="RK45",
        dense_output=True,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise ValueError(f"t-system re-integration failed: {sol.message}")
    ys = sol.sol(t_nodes)

    def rel(dev, ref):
        return float(np.max(np.abs(dev) / (1.0 + np.abs(ref))))

    out = {
        "a": rel(ys[0] - profile.a[sl], profile.a[sl]),
        "b": rel(ys[2] - profile.b[sl], profile.b[sl]),
        "c": rel(ys[4] - profile.c[sl], profile.c[sl]),
        "fdot": rel(ys[6] - profile.fdot[sl], profile.fdot[sl]),
    }
    out["max"] = max(out.values())
    return out
