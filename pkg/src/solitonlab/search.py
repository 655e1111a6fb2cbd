"""Threshold bisections and classification sweeps over shooting parameters.

Three searches matter for the existence statements:

  find_alpha       smallest potential strength s4 whose steady run avoids
                   the escape region (bisect EntersC vs not-EntersC)
  find_beta        the same for expanding runs, uniformly over a grid of
                   s5 values (outer approximation of the inf over s5)
  find_theta_star  the squash angle whose Ricci-flat run threads between
                   the collapsed region and the escape region

Bisection is always on the EntersC / not-EntersC predicate: the thresholds
are defined by avoidance of the escape region, not by which of the other
two verdicts occurs on the far side.  Nothing here assumes the outcome is
monotone in the bisected parameter; a completed bisection is audited at
interior probes and demoted to "smallest probed avoiding value" with a
warning when the pattern is not monotone.

All searches are deterministic: given identical parameters and tolerances
the probe sequence, and hence every reported digit, is reproducible in a
single-threaded run.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from solitonlab.asymptotics import classify
from solitonlab.integrate import IntegratorConfig, integrate_flow
from solitonlab.phase import ModelParams
from solitonlab.regions import (
    OUTCOME_ENTERS_A,
    OUTCOME_ENTERS_C,
    OUTCOME_STAYS_IN_B,
    watch_transitions,
)
from solitonlab.seeding import ShootParams, build_seed, default_eta0

DEFAULT_TOL = 1e-4
DEFAULT_BRACKET = (0.0, 64.0)
AUDIT_PROBES = 8


def default_s5_grid():
    """Eight log-spaced s5 values plus the s5 -> 0 endpoint."""
    return tuple([0.0] + list(np.geomspace(1e-2, 1e2, 8)))


class BracketError(ValueError):
    """Bisection bracket endpoints do not straddle the threshold."""


class ParameterError(ValueError):
    """Search preconditions on (m, k, theta) are not met."""


def run_shoot(
    mp: ModelParams,
    theta: float,
    s4: float,
    s5: float,
    cfg: IntegratorConfig | None = None,
    eta0: float | None = None,
):
    """Seed, integrate and give the (trajectory, shoot params, verdict)."""
    sp = ShootParams(theta=theta, s4=s4, s5=s5, eta0=0.0)
    if eta0 is None:
        eta0 = default_eta0(mp, sp)
    sp = ShootParams(theta=theta, s4=s4, s5=s5, eta0=eta0)
    tr = integrate_flow(build_seed(mp, sp), mp, cfg, eta0=sp.eta0)
    verdict = watch_transitions(tr, mp)
    return tr, sp, verdict


def _outcome(mp, theta, s4, s5, cfg, eta0) -> str:
    return run_shoot(mp, theta, s4, s5, cfg, eta0)[2].outcome


@dataclass(frozen=True)
class ThresholdResult:
    """A bisected avoidance threshold plus its audit trail.

    Unpacks as (value, bracket_width) to keep call sites terse.
    """

    target: str
    value: float
    bracket_width: float
    bracket: tuple
    probes: tuple = ()  # (parameter, outcome) pairs, bisection then audit
    warning: str | None = None
    per_s5: tuple = ()  # find_beta only: (s5, threshold) pairs

    def __iter__(self):
        return iter((self.value, self.bracket_width))

    def as_dict(self) -> dict:
        out = {
            "target": self.target,
            "value": self.value,
            "bracket_width": self.bracket_width,
            "bracket": list(self.bracket),
            "probes": [{"parameter": p, "outcome": o} for p, o in self.probes],
            "warning": self.warning,
        }
        if self.per_s5:
            out["per_s5"] = [
                {"s5": s, "threshold": t} for s, t in self.per_s5
            ]
        return out


def _bisect_escape(mp, theta, s5, bracket, tol, cfg, eta0, target):
    """Shared bisection on s4 for the escape-avoidance threshold."""
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise BracketError(f"bracket ({lo}, {hi}) is empty")
    if eta0 is None:
        # One depth for every probe: with the seed convention tying the
        # shooting coefficients to eta0, probes at different depths sample
        # (slightly) different families and the bisected map stops being a
        # function of the bisected parameter alone.
        eta0 = min(
            default_eta0(mp, ShootParams(theta=theta, s4=s, s5=s5, eta0=0.0))
            for s in (lo, hi)
        )
    probes = []
    oc_lo = _outcome(mp, theta, lo, s5, cfg, eta0)
    probes.append((lo, oc_lo))
    if oc_lo != OUTCOME_ENTERS_C:
        # The low end already avoids the escape region: the threshold is at
        # or below it, reported as 0 (the infimum over an avoidance set
        # containing the whole bracket).
        return ThresholdResult(
            target=target,
            value=0.0,
            bracket_width=0.0,
            bracket=(lo, hi),
            probes=tuple(probes),
        )
    oc_hi = _outcome(mp, theta, hi, s5, cfg, eta0)
    probes.append((hi, oc_hi))
    if oc_hi == OUTCOME_ENTERS_C:
        raise BracketError(
            f"invalid bracket for {target}: outcome({lo}) = {oc_lo}, "
            f"outcome({hi}) = {oc_hi}; both ends escape"
        )
    lo0, hi0 = lo, hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # float resolution exhausted
        oc = _outcome(mp, theta, mid, s5, cfg, eta0)
        probes.append((mid, oc))
        if oc == OUTCOME_ENTERS_C:
            lo = mid
        else:
            hi = mid
    value = 0.5 * (lo + hi)
    width = hi - lo

    # Monotonicity audit: the threshold is an infimum, and nothing proves
    # the verdict is monotone in s4.  Re-probe the original bracket; on a
    # non-monotone pattern report the smallest probed avoiding value.
    audit = np.linspace(lo0, hi0, AUDIT_PROBES + 2)[1:-1]
    audit_outcomes = []
    for s in audit:
        oc = _outcome(mp, theta, float(s), s5, cfg, eta0)
        audit_outcomes.append((float(s), oc))
    probes.extend(audit_outcomes)
    warning = None
    escapes = [s for s, oc in audit_outcomes if oc == OUTCOME_ENTERS_C]
    avoids = [s for s, oc in audit_outcomes if oc != OUTCOME_ENTERS_C]
    if escapes and avoids and max(escapes) > min(avoids):
        value = min(avoids)
        warning = (
            "outcome is not monotone across the bracket; reporting the "
            "smallest probed avoiding value, not a certified infimum"
        )
    return ThresholdResult(
        target=target,
        value=value,
        bracket_width=width,
        bracket=(lo0, hi0),
        probes=tuple(probes),
        warning=warning,
    )


def find_alpha(
    mp: ModelParams,
    k: int | None = None,
    theta: float = math.pi,
    bracket=DEFAULT_BRACKET,
    tol: float = DEFAULT_TOL,
    cfg: IntegratorConfig | None = None,
    eta0: float | None = None,
) -> ThresholdResult:
    """Steady escape-avoidance threshold in s4, as (value, width).

    Bisects the EntersC / not-EntersC boundary at epsilon = 0, s5 = 0.
    Requires k >= 3 and theta in (0, pi] (the small-k families avoid the
    escape region for every s4, so there is nothing to bisect).
    """
    if k is None:
        k = mp.k
    if k < 3:
        raise ParameterError(f"escape threshold needs k >= 3, got k = {k}")
    if not 0.0 < theta <= math.pi:
        raise ParameterError("theta must lie in (0, pi]")
    mp = ModelParams(m=mp.m, k=k, epsilon=0)
    cfg = cfg or IntegratorConfig(eta_max=40.0)
    return _bisect_escape(mp, theta, 0.0, bracket, tol, cfg, eta0, "alpha")


def find_beta(
    mp: ModelParams,
    k: int | None = None,
    theta: float = math.pi,
    s5_grid=None,
    bracket=DEFAULT_BRACKET,
    tol: float = DEFAULT_TOL,
    cfg: IntegratorConfig | None = None,
    eta0: float | None = None,
) -> ThresholdResult:
    """Expanding escape-avoidance threshold, uniform over an s5 grid.

    Per grid value the s4 threshold is bisected with epsilon = 1; the
    reported value is the max over the grid, an outer approximation of the
    uniform-in-s5 infimum.  k <= 2 families stay in the compact invariant
    region for every parameter, so the threshold is 0 with no bisection.
    """
    if k is None:
        k = mp.k
    if k <= 2:
        return ThresholdResult(
            target="beta",
            value=0.0,
            bracket_width=0.0,
            bracket=tuple(bracket),
            probes=(),
            warning=None,
        )
    if not 0.0 < theta <= math.pi:
        raise ParameterError("theta must lie in (0, pi]")
    if s5_grid is None:
        s5_grid = default_s5_grid()
    s5_grid = tuple(float(s) for s in s5_grid)
    if not s5_grid:
        raise ParameterError("s5 grid must be nonempty")
    if any(s < 0 for s in s5_grid):
        raise ParameterError("s5 grid values must be nonnegative")
    mp = ModelParams(m=mp.m, k=k, epsilon=1)
    cfg = cfg or IntegratorConfig(eta_max=40.0)
    per = []
    all_probes = []
    warnings = []
    for s5 in s5_grid:
        res = _bisect_escape(mp, theta, s5, bracket, tol, cfg, eta0, "beta")
        per.append((s5, res.value))
        all_probes.extend((f"s5={s5:g}:{p}", oc) for p, oc in res.probes)
        if res.warning:
            warnings.append(f"s5={s5:g}: {res.warning}")
    values = [v for _, v in per]
    i_max = int(np.argmax(values))
    width = max(tol, 0.0)
    return ThresholdResult(
        target="beta",
        value=values[i_max],
        bracket_width=width,
        bracket=tuple(bracket),
        probes=tuple(all_probes),
        warning="; ".join(warnings) if warnings else None,
        per_s5=tuple(per),
    )


@dataclass(frozen=True)
class ThetaStarResult:
    value: float
    bracket_width: float
    outcome: str
    nu2: float | None
    z1_final: float | None
    classification: dict | None

    def __iter__(self):
        return iter((self.value, self.bracket_width))

    def as_dict(self) -> dict:
        return {
            "target": "theta_star",
            "value": self.value,
            "bracket_width": self.bracket_width,
            "outcome": self.outcome,
            "nu2": self.nu2,
            "z1_final": self.z1_final,
            "classification": self.classification,
        }


def find_theta_star(
    mp: ModelParams,
    k: int | None = None,
    tol: float = DEFAULT_TOL,
    cfg: IntegratorConfig | None = None,
    eta0: float | None = None,
) -> ThetaStarResult:
    """Squash angle of the Ricci-flat run threading to the squashed cone.

    Bisects theta between the collapsed verdict (theta -> 0 side) and the
    escape verdict (theta -> pi side) at s4 = s5 = 0, epsilon = 0.  Needs
    3 <= k <= 2m+1 so both endpoint fates are as stated.  Returns as soon
    as a probe reaches the horizon inside the transit region (a longer
    eta_max therefore buys a sharper angle), else the final midpoint.
    """
    if k is None:
        k = mp.k
    if not 3 <= k <= 2 * mp.m + 1:
        raise ParameterError(
            f"theta_star needs 3 <= k <= 2m+1 = {2 * mp.m + 1}, got k = {k}"
        )
    mp = ModelParams(m=mp.m, k=k, epsilon=0)
    cfg = cfg or IntegratorConfig()
    lo, hi = 1e-8, math.pi - 1e-8
    if eta0 is None:
        # Same depth for every probe; see _bisect_escape.
        eta0 = min(
            default_eta0(mp, ShootParams(theta=float(t), s4=0.0, s5=0.0, eta0=0.0))
            for t in np.linspace(lo, hi, 9)
        )
    oc_lo = _outcome(mp, lo, 0.0, 0.0, cfg, eta0)
    oc_hi = _outcome(mp, hi, 0.0, 0.0, cfg, eta0)
    if oc_lo != OUTCOME_ENTERS_A or oc_hi != OUTCOME_ENTERS_C:
        raise BracketError(
            f"endpoint fates off the expected pattern: theta->0 gives "
            f"{oc_lo} (want {OUTCOME_ENTERS_A}), theta->pi gives {oc_hi} "
            f"(want {OUTCOME_ENTERS_C})"
        )

    def finish(theta, width, tr, sp, verdict):
        c = classify(tr, mp, sp)
        y = tr.states[-1]
        z2, z3 = float(y[4]), float(y[5])
        nu = math.sqrt(z3 / z2) if z2 > 0 and z3 >= 0 else None
        return ThetaStarResult(
            value=theta,
            bracket_width=width,
            outcome=verdict.outcome,
            nu2=nu,
            z1_final=float(y[3]),
            classification=c.as_dict(),
        )

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        tr, sp, verdict = run_shoot(mp, mid, 0.0, 0.0, cfg, eta0)
        if verdict.outcome == OUTCOME_ENTERS_A:
            lo = mid
        elif verdict.outcome == OUTCOME_ENTERS_C:
            hi = mid
        else:
            # Reached the horizon between the two fates: this is the
            # sharpest angle the horizon can distinguish.
            return finish(mid, hi - lo, tr, sp, verdict)
    mid = 0.5 * (lo + hi)
    tr, sp, verdict = run_shoot(mp, mid, 0.0, 0.0, cfg, eta0)
    return finish(mid, hi - lo, tr, sp, verdict)


@dataclass(frozen=True)
class AtlasEntry:
    theta: float
    s4: float
    s5: float
    epsilon: int
    classification: dict | None
    error: str | None = None

    def as_dict(self) -> dict:
        return {
            "theta": self.theta,
            "s4": self.s4,
            "s5": self.s5,
            "epsilon": self.epsilon,
            "classification": self.classification,
            "error": self.error,
        }


def _atlas_node(args):
    m, k, theta, s4, s5, cfg, eta0 = args
    eps = 1 if s5 > 0 else 0
    mp = ModelParams(m=m, k=k, epsilon=eps)
    try:
        tr, sp, _ = run_shoot(mp, theta, s4, s5, cfg, eta0)
        c = classify(tr, mp, sp)
        return AtlasEntry(theta, s4, s5, eps, c.as_dict())
    except Exception as exc:  # per-node failures never abort the sweep
        return AtlasEntry(theta, s4, s5, eps, None, f"{type(exc).__name__}: {exc}")


def atlas(
    mp: ModelParams,
    k: int | None = None,
    theta_grid=(0.0,),
    s4_grid=(0.0,),
    s5_grid=(0.0,),
    cfg: IntegratorConfig | None = None,
    eta0: float | None = None,
    jobs: int = 1,
) -> list:
    """Classify every (theta, s4, s5) grid node; expanding iff s5 > 0.

    Node failures are recorded on the entry, never raised.  With jobs > 1
    nodes evaluate in a process pool; results keep grid order either way.
    """
    if k is None:
        k = mp.k
    nodes = [
        (mp.m, k, float(th), float(s4), float(s5), cfg, eta0)
        for th in theta_grid
        for s4 in s4_grid
        for s5 in s5_grid
    ]
    if jobs <= 1:
        return [_atlas_node(n) for n in nodes]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_atlas_node, nodes))
