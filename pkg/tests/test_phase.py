"""Oracle tests for the phase-space core.

Every numeric expectation in this file was computed by hand (or cross-checked
with an independent symbolic derivation) before the module was written, so
these tests are oracles for the closed-form implementation rather than
regressions captured from its own output.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from solitonlab.phase import (
    IDX,
    ModelParams,
    barrier_F,
    barrier_F_derivative,
    constraint_residual,
    constraint_residual_rate,
    derived_scalars,
    h_flow_consistency,
    q_flow_consistency,
    q_gradient,
    subset_membership,
    vector_field,
)

P0 = (1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
P1_M1 = (1 / 7, 1 / 7, 1 / 7, 1.0, 1 / 49, 1 / 49, 1 / 49, 0.0)
P2_M1 = (1 / 7, 1 / 7, 1 / 7, 1.0, 25 / 441, 1 / 441, 5 / 441, 0.0)
Q1_M1 = (0.0, 1 / 6, 1 / 6, 0.0, 5 / 288, 5 / 288, 5 / 288, 0.0)
Q2_M1 = (0.0, 1 / 6, 1 / 6, 0.0, 4 / 144, 1 / 144, 2 / 144, 0.0)

MP_STEADY = ModelParams(m=1, k=1, epsilon=0)
MP_EXPAND = ModelParams(m=1, k=1, epsilon=1)


def random_points(count, seed=0, scale=1.0):
    """Unconstrained sample of R^8 points (Z, W allowed negative too)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=(count, 8))


class TestModelParams:
    def test_n_is_4m_plus_3(self):
        assert ModelParams(m=0, k=3, epsilon=0).n == 3
        assert ModelParams(m=1, k=1, epsilon=0).n == 7
        assert ModelParams(m=2, k=4, epsilon=1).n == 11

    def test_validation(self):
        with pytest.raises(ValueError):
            ModelParams(m=-1, k=1, epsilon=0)
        with pytest.raises(ValueError):
            ModelParams(m=1, k=0, epsilon=0)
        with pytest.raises(ValueError):
            ModelParams(m=1, k=1, epsilon=2)


class TestDerivedScalars:
    def test_at_p0(self):
        s = derived_scalars(P0, MP_STEADY)
        assert s.G == 1.0
        assert s.H == 1.0
        assert s.Q == 0.0
        assert s.R1 == s.R2 == s.R3 == 0.0

    def test_at_p1(self):
        # Hand evaluation: R1 = 2/49 + 4/49, R2 = 4/49 - 2/49 + 4/49,
        # R3 = 12/49 - 2/49 - 4/49, all equal 6/49; Rs = 7 * 6/49 = 6/7.
        s = derived_scalars(P1_M1, MP_STEADY)
        assert s.G == pytest.approx(1 / 7, abs=1e-15)
        assert s.H == pytest.approx(1.0, abs=1e-15)
        for r in (s.R1, s.R2, s.R3):
            assert r == pytest.approx(6 / 49, abs=1e-15)
        assert s.Rs == pytest.approx(6 / 7, abs=1e-15)
        assert abs(s.Q) < 1e-15

    def test_at_q0_point(self):
        # Q = 1/7 + 0 + 6*(1/2)*(2/7) - 1 = 0 with epsilon = 1, n = 7.
        p = (1 / 7, 1 / 7, 1 / 7, 0.3, 0.0, 0.0, 0.0, 2 / 7)
        s = derived_scalars(p, MP_EXPAND)
        assert s.G == pytest.approx(1 / 7, abs=1e-15)
        assert s.H == pytest.approx(1.0, abs=1e-15)
        assert s.Rs == 0.0
        assert abs(s.Q) < 1e-15

    def test_q_identity_random(self):
        # Q must equal G + Rs + (n-1)(eps/2)W - 1 recomputed independently.
        for mp in (MP_STEADY, MP_EXPAND, ModelParams(m=3, k=2, epsilon=1)):
            pts = random_points(100_000, seed=11)
            x1, x2, x3, z1, z2, z3, z4, w = pts.T
            s = derived_scalars((x1, x2, x3, z1, z2, z3, z4, w), mp)
            m = mp.m
            g = x1**2 + 2 * x2**2 + 4 * m * x3**2
            rs = (
                (2 * z1 * z2 + 4 * m * z1 * z3)
                + 2 * (4 * z2 - 2 * z1 * z2 + 4 * m * z3)
                + 4 * m * ((4 * m + 8) * z4 - 2 * z1 * z3 - 4 * z3)
            )
            q = g + rs + (mp.n - 1) * (mp.epsilon / 2) * w - 1
            scale = 1.0 + np.abs(q)
            assert np.max(np.abs(s.Q - q) / scale) < 1e-14


class TestVectorField:
    def test_vanishes_at_p0(self):
        assert vector_field(P0, MP_STEADY) == pytest.approx((0.0,) * 8, abs=0.0)
        assert vector_field(P0, MP_EXPAND) == pytest.approx((0.0,) * 8, abs=0.0)

    def test_inhomogeneous_example(self):
        # G = 0 so V_i = R_i for the X-rows; each R_i evaluates to 0.06.
        p = (0.0, 0.0, 0.0, 1.0, 0.01, 0.01, 0.01, 0.0)
        v = vector_field(p, MP_STEADY)
        expect = (0.06, 0.06, 0.06, 0.0, 0.0, 0.0, 0.0, 0.0)
        assert v == pytest.approx(expect, abs=1e-16)

    def test_vanishes_at_p1_and_p2(self):
        for p in (P1_M1, P2_M1):
            v = vector_field(p, MP_STEADY)
            assert max(abs(c) for c in v) < 1e-16

    def test_vanishes_at_q1_and_q2(self):
        for p in (Q1_M1, Q2_M1):
            v = vector_field(p, MP_STEADY)
            assert max(abs(c) for c in v) < 1e-16

    def test_vanishes_on_q0_family(self):
        for z1 in (0.0, 0.5, 1.0):
            p = (1 / 7, 1 / 7, 1 / 7, z1, 0.0, 0.0, 0.0, 2 / 7)
            v = vector_field(p, MP_EXPAND)
            assert max(abs(c) for c in v) < 1e-16

    def test_elementwise_on_arrays(self):
        pts = random_points(64, seed=3)
        v_arr = vector_field(tuple(pts.T), MP_EXPAND)
        for i, row in enumerate(pts):
            v = vector_field(tuple(row), MP_EXPAND)
            for j in range(8):
                assert v_arr[j][i] == v[j]


class TestConstraint:
    def test_zero_at_p1(self):
        assert constraint_residual(P1_M1) == 0.0

    def test_seeding_pattern_is_exact_zero(self):
        # Z2 = 2u, Z3 = u/2, Z4 = u gives u^2 - u^2 = 0 exactly.
        for u in (1e-3, 1e-7, 0.25):
            p = (0.1, 0.2, 0.3, 0.4, 2 * u, 0.5 * u, u, 0.0)
            assert constraint_residual(p) == 0.0

    def test_arithmetic_example(self):
        p = (0, 0, 0, 0, 1.0, 1.0, 0.5, 0)
        assert constraint_residual(p) == pytest.approx(-0.75, abs=0.0)

    def test_tangency_on_cone(self):
        # On {Z4^2 = Z2 Z3} the residual's flow derivative is identically 0;
        # the analytic inner product <grad r, V> must vanish to round-off.
        rng = np.random.default_rng(7)
        for mp in (MP_STEADY, MP_EXPAND):
            for _ in range(2000):
                x = rng.uniform(-1, 1, 3)
                u, v = rng.uniform(0.0, 1.0, 2)
                z1, w = rng.uniform(0.0, 1.0, 2)
                p = (x[0], x[1], x[2], z1, u * u, v * v, u * v, w)
                # (u v)^2 and u^2 v^2 round differently; ulp-level is fine
                assert abs(constraint_residual(p)) <= 5e-16
                assert abs(constraint_residual_rate(p, mp)) < 1e-14

    def test_rate_matches_factored_form(self):
        # <grad r, V> = 4 (G - eps W/2 - X3) r off the cone as well.
        pts = random_points(500, seed=5)
        for mp in (MP_STEADY, MP_EXPAND):
            for row in pts:
                p = tuple(row)
                s = derived_scalars(p, mp)
                r = constraint_residual(p)
                expect = 4 * (s.P - p[IDX.X3]) * r
                assert constraint_residual_rate(p, mp) == pytest.approx(
                    expect, rel=1e-12, abs=1e-13
                )


class TestFlowIdentities:
    def test_q_flow_consistency_trivial_points(self):
        assert q_flow_consistency(P0, MP_STEADY) == pytest.approx(0.0, abs=1e-15)
        assert q_flow_consistency(P1_M1, MP_STEADY) == pytest.approx(0.0, abs=1e-15)

    def test_q_flow_consistency_random(self):
        # The identity holds on all of R^8 (not only on the cone).
        for mp in (MP_STEADY, MP_EXPAND, ModelParams(m=2, k=3, epsilon=1)):
            pts = random_points(10_000, seed=23)
            worst = max(q_flow_consistency(tuple(row), mp) for row in pts)
            assert abs(worst) < 1e-12

    def test_h_flow_consistency_random(self):
        for mp in (MP_STEADY, MP_EXPAND):
            pts = random_points(5_000, seed=29)
            worst = max(abs(h_flow_consistency(tuple(row), mp)) for row in pts)
            assert worst < 1e-12

    def test_q_gradient_matches_finite_differences(self):
        mp = ModelParams(m=2, k=1, epsilon=1)
        rng = np.random.default_rng(31)
        for _ in range(50):
            p = rng.uniform(-1, 1, 8)
            grad = q_gradient(tuple(p), mp)
            h = 1e-6
            for i in range(8):
                dp = p.copy()
                dp[i] += h
                dm = p.copy()
                dm[i] -= h
                fd = (
                    derived_scalars(tuple(dp), mp).Q
                    - derived_scalars(tuple(dm), mp).Q
                ) / (2 * h)
                assert grad[i] == pytest.approx(fd, rel=1e-7, abs=1e-7)


class TestSubsetMembership:
    def test_p1_flags(self):
        flags = subset_membership(P1_M1, MP_STEADY)
        assert flags.in_rs
        assert flags.einstein
        assert flags.steady
        assert flags.ricci_flat
        assert flags.fubini_study
        assert flags.round_fiber
        assert not flags.m0_reduction

    def test_p0_flags(self):
        flags = subset_membership(P0, MP_STEADY)
        assert flags.in_rs and flags.einstein and flags.steady
        assert flags.ricci_flat and flags.fubini_study and flags.m0_reduction
        assert not flags.round_fiber  # Z1 = 0 != 1

    def test_q0_point_flags(self):
        p = (1 / 7, 1 / 7, 1 / 7, 0.3, 0.0, 0.0, 0.0, 2 / 7)
        flags = subset_membership(p, MP_EXPAND)
        assert flags.in_rs and flags.einstein
        assert not flags.steady
        assert not flags.ricci_flat

    def test_ricci_flat_is_conjunction(self):
        pts = random_points(200, seed=37, scale=0.5)
        for row in pts:
            p = tuple(np.abs(row))
            flags = subset_membership(p, MP_EXPAND, tol=1e-2)
            assert flags.ricci_flat == (flags.steady and flags.einstein)

    def test_outside_rs(self):
        p = (0.5, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0)  # H = 3.5 > 1
        assert not subset_membership(p, MP_STEADY).in_rs


class TestBarrier:
    def test_f2_vanishes_at_p1(self):
        assert barrier_F(2.0, P1_M1) == pytest.approx(0.0, abs=1e-15)

    def test_value_example(self):
        # F_2 = X2 - X1 + 2(sqrt(Z2/Z1) - sqrt(Z1 Z2))
        p = (0.1, 0.3, 0.0, 0.25, 0.04, 0.0, 0.0, 0.0)
        expect = 0.2 + 2 * (math.sqrt(0.16) - math.sqrt(0.01))
        assert barrier_F(2.0, p) == pytest.approx(expect, abs=1e-15)

    def test_domain_error_on_z1_face(self):
        p = (0.1, 0.3, 0.0, 0.0, 0.04, 0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            barrier_F(2.0, p)
        with pytest.raises(ValueError):
            barrier_F_derivative(2.0, p, MP_STEADY)

    def test_derivative_matches_inner_product(self):
        # The closed-form derivative must equal <grad F_l, V> computed by
        # finite differences along the flow direction.
        rng = np.random.default_rng(41)
        for mp in (MP_STEADY, MP_EXPAND):
            for _ in range(200):
                x = rng.uniform(0.0, 0.6, 3)
                z1 = rng.uniform(0.05, 1.5)
                z2, z3, w = rng.uniform(0.01, 1.0, 3)
                z4 = math.sqrt(z2 * z3)
                p = np.array([x[0], x[1], x[2], z1, z2, z3, z4, w])
                for ell in (2.0, 2 * mp.m + 2.0):
                    closed = barrier_F_derivative(ell, tuple(p), mp)
                    v = np.array(vector_field(tuple(p), mp))
                    h = 1e-7
                    fd = (
                        barrier_F(ell, tuple(p + h * v))
                        - barrier_F(ell, tuple(p - h * v))
                    ) / (2 * h)
                    assert closed == pytest.approx(fd, rel=5e-6, abs=5e-7)


class TestCriticalPointsAcrossM:
    """V vanishes to 1e-12 at all catalog points for m in {1,2,3}."""

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_steady_points(self, m):
        n = 4 * m + 3
        mp = ModelParams(m=m, k=1, epsilon=0)
        zss = (n - 1) / (n**2 * (2 * (2 * m + 3) ** 2 + 4 * m))
        zq1 = (n - 2) / ((n - 1) ** 2 * (n + 1))
        zq2 = (n - 2) / ((n - 1) ** 2 * 4 * (m**2 + 3 * m + 1))
        points = [
            (1 / n, 1 / n, 1 / n, 1.0, 1 / n**2, 1 / n**2, 1 / n**2, 0.0),
            (
                1 / n,
                1 / n,
                1 / n,
                1.0,
                (2 * m + 3) ** 2 * zss,
                zss,
                (2 * m + 3) * zss,
                0.0,
            ),
            (0.0, 1 / (n - 1), 1 / (n - 1), 0.0, zq1, zq1, zq1, 0.0),
            (
                0.0,
                1 / (n - 1),
                1 / (n - 1),
                0.0,
                (m + 1) ** 2 * zq2,
                zq2,
                (m + 1) * zq2,
                0.0,
            ),
        ]
        for p in points:
            v = vector_field(p, mp)
            assert max(abs(c) for c in v) < 1e-12
            assert abs(derived_scalars(p, mp).Q) < 1e-12

    @pytest.mark.parametrize("m", [1, 2, 3])
    @pytest.mark.parametrize("z1", [0.0, 0.5, 1.0])
    def test_q0_family(self, m, z1):
        n = 4 * m + 3
        mp = ModelParams(m=m, k=1, epsilon=1)
        p = (1 / n, 1 / n, 1 / n, z1, 0.0, 0.0, 0.0, 2 / n)
        v = vector_field(p, mp)
        assert max(abs(c) for c in v) < 1e-12
        assert abs(derived_scalars(p, mp).Q) < 1e-12
