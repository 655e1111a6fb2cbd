"""Oracle tests for unstable-manifold seeding.

The exact seed vector for (m,k,theta,s4,s5) = (1,1,pi/2,0.5,0) at eta0 = -8
was combined by hand from the eigenvectors before the module was written:

    s1 = s2 = 1/2, s3 = 1/sqrt(2), s6 = 2
    seed = (1 - 30.5u, 5u, 5u, 2u, 2u, 0.5u, u, 0),   u = e^{-16}
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from solitonlab.phase import ModelParams, constraint_residual, derived_scalars
from solitonlab.seeding import (
    SeedDepthError,
    ShootParams,
    build_seed,
    combined_direction,
    default_eta0,
    eigenbasis,
    jacobian_at_p0,
    validate_seed,
)

MP = ModelParams(m=1, k=1, epsilon=0)


class TestShootParams:
    def test_arc_identities(self):
        for theta in np.linspace(0.0, math.pi, 33):
            sp = ShootParams(theta=float(theta), s4=0.0, s5=0.0, eta0=-8.0)
            assert sp.s1 + sp.s2 == pytest.approx(1.0, abs=1e-15)
            assert sp.s3**2 == pytest.approx(2 * sp.s1 * sp.s2, abs=1e-15)

    def test_s6(self):
        sp = ShootParams(theta=math.pi / 2, s4=0.0, s5=0.0, eta0=-8.0)
        assert sp.s6(k=1) == pytest.approx(2.0, abs=1e-15)
        assert sp.s6(k=3) == pytest.approx(18.0, abs=1e-14)
        sp0 = ShootParams(theta=0.0, s4=0.0, s5=0.0, eta0=-8.0)
        assert sp0.s6(k=2) == pytest.approx(4.0, abs=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            ShootParams(theta=-0.1, s4=0.0, s5=0.0, eta0=-8.0)
        with pytest.raises(ValueError):
            ShootParams(theta=3.5, s4=0.0, s5=0.0, eta0=-8.0)
        with pytest.raises(ValueError):
            ShootParams(theta=1.0, s4=-1.0, s5=0.0, eta0=-8.0)


class TestEigenstructure:
    @pytest.mark.parametrize("m", [0, 1, 2, 3])
    @pytest.mark.parametrize("eps", [0, 1])
    def test_eigenvectors_have_eigenvalue_2(self, m, eps):
        mp = ModelParams(m=m, k=1, epsilon=eps)
        jac = jacobian_at_p0(mp)
        basis = eigenbasis(mp)
        assert basis.shape == (6, 8)
        for w in basis:
            assert np.max(np.abs(jac @ w - 2.0 * w)) < 1e-12

    def test_kernel_directions(self):
        for eps in (0, 1):
            mp = ModelParams(m=2, k=1, epsilon=eps)
            jac = jacobian_at_p0(mp)
            for idx in (1, 2):  # e_X2, e_X3
                e = np.zeros(8)
                e[idx] = 1.0
                assert np.max(np.abs(jac @ e)) == 0.0

    def test_eigenvalue_multiplicities(self):
        mp = ModelParams(m=1, k=1, epsilon=1)
        eigs = np.sort(np.linalg.eigvals(jacobian_at_p0(mp)).real)
        assert np.allclose(eigs[:2], 0.0, atol=1e-12)
        assert np.allclose(eigs[2:], 2.0, atol=1e-12)

    def test_finite_difference_jacobian(self):
        from solitonlab.phase import vector_field

        for mp in (MP, ModelParams(m=2, k=1, epsilon=1)):
            jac = jacobian_at_p0(mp)
            p0 = np.array([1.0, 0, 0, 0, 0, 0, 0, 0])
            h = 1e-5
            for j in range(8):
                dp = p0.copy()
                dp[j] += h
                dm = p0.copy()
                dm[j] -= h
                col = (
                    np.array(vector_field(tuple(dp), mp))
                    - np.array(vector_field(tuple(dm), mp))
                ) / (2 * h)
                assert np.max(np.abs(col - jac[:, j])) < 1e-6


class TestBuildSeed:
    def test_acceptance_example_exact(self):
        sp = ShootParams(theta=math.pi / 2, s4=0.5, s5=0.0, eta0=-8.0)
        seed = build_seed(MP, sp)
        u = math.exp(-16.0)
        expect = np.array(
            [1 - 30.5 * u, 5 * u, 5 * u, 2 * u, 2 * u, 0.5 * u, u, 0.0]
        )
        assert np.max(np.abs(seed - expect)) <= 1e-16

    def test_first_order_scalars(self):
        # Q is quadratic, so at depth u the exact value is
        #   Q/u = -2 s4 + u * quad(d),  quad(d) = X1^2 + 2 X2^2 + 4 X3^2
        #                                         - 2 Z1 Z2 - 4 Z1 Z3
        # evaluated on the direction d = (-30.5, 5, 5, 2, 2, 0.5, 1, 0),
        # giving quad(d) = 930.25 + 50 + 100 - 8 - 4 = 1068.25.
        sp = ShootParams(theta=math.pi / 2, s4=0.5, s5=0.0, eta0=-8.0)
        seed = build_seed(MP, sp)
        u = math.exp(-16.0)
        s = derived_scalars(tuple(seed), MP)
        assert s.Q / u == pytest.approx(-1.0 + 1068.25 * u, rel=1e-8)
        assert (1 - s.H) / u == pytest.approx(0.5, abs=1e-10)

    def test_h_exact_for_einstein_seed(self):
        # H is linear, so the s4 = 0 seed has H = 1 exactly.
        sp = ShootParams(theta=0.7, s4=0.0, s5=0.0, eta0=-9.0)
        seed = build_seed(MP, sp)
        s = derived_scalars(tuple(seed), MP)
        assert 1.0 - s.H == 0.0

    def test_cone_residual_exactly_zero(self):
        for theta in (0.0, 0.3, math.pi / 2, 2.5, math.pi):
            for k in (1, 2, 5):
                mp = ModelParams(m=1, k=k, epsilon=0)
                sp = ShootParams(theta=theta, s4=0.25, s5=0.0, eta0=-9.0)
                seed = build_seed(mp, sp)
                assert abs(constraint_residual(tuple(seed))) < 1e-30

    def test_theta_zero_lands_in_fubini_study(self):
        sp = ShootParams(theta=0.0, s4=0.0, s5=0.0, eta0=-8.0)
        seed = build_seed(MP, sp)
        # Z2 = Z3 and X2 = X3 exactly for the theta = 0 direction.
        assert seed[4] == seed[5]
        assert seed[1] == seed[2]

    def test_theta_pi_lands_in_m0_reduction(self):
        sp = ShootParams(theta=math.pi, s4=0.0, s5=0.0, eta0=-8.0)
        seed = build_seed(MP, sp)
        assert seed[2] == pytest.approx(0.0, abs=1e-21)  # X3 ~ sin(pi) noise
        assert seed[5] == 0.0  # Z3: the only contribution is s1, and s1 == 0
        assert seed[7] == 0.0  # W (steady)

    def test_depth_guard(self):
        sp = ShootParams(theta=math.pi / 2, s4=0.5, s5=0.0, eta0=-2.0)
        with pytest.raises(SeedDepthError):
            build_seed(MP, sp)

    def test_default_eta0_rule(self):
        sp = ShootParams(theta=math.pi / 2, s4=0.5, s5=0.0, eta0=-8.0)
        eta0 = default_eta0(MP, sp)
        direction = combined_direction(MP, sp)
        norm = np.max(np.abs(direction))
        assert math.exp(2 * eta0) * norm == pytest.approx(1e-6, rel=1e-12)

    def test_seed_inequalities_at_first_order(self):
        # Z2 - Z3 >= 0 and all RS inequalities hold at the seed for all theta.
        for theta in np.linspace(0.0, math.pi, 17):
            sp = ShootParams(theta=float(theta), s4=0.1, s5=0.2, eta0=-10.0)
            mp = ModelParams(m=2, k=3, epsilon=1)
            seed = build_seed(mp, sp)
            x1, x2, x3, z1, z2, z3, z4, w = seed
            assert z2 - z3 >= 0.0
            assert min(z1, z2, z3, z4, w) >= 0.0
            s = derived_scalars(tuple(seed), mp)
            assert s.H <= 1.0


class TestValidateSeed:
    def test_report_on_acceptance_example(self):
        sp = ShootParams(theta=math.pi / 2, s4=0.5, s5=0.0, eta0=-8.0)
        seed = build_seed(MP, sp)
        report = validate_seed(seed, MP, sp)
        u = math.exp(-16.0)
        # the second-order tail 1068.25 u is forced; see TestBuildSeed
        assert report.q_over_u == pytest.approx(-1.0 + 1068.25 * u, rel=1e-8)
        assert report.q_residual == pytest.approx(1068.25 * u, abs=1e-8)
        # exact in real arithmetic; float cancellation 1 - H costs ~ulp(1)/u
        assert report.one_minus_h_over_u == pytest.approx(0.5, abs=1e-10)
        assert report.fiber_ratio == pytest.approx(1.0, abs=1e-10)
        assert abs(report.cone_residual) < 1e-30
        assert report.ok

    def test_fiber_ratio_tracks_k(self):
        for k in (2, 3, 7):
            mp = ModelParams(m=1, k=k, epsilon=0)
            sp = ShootParams(theta=1.1, s4=0.0, s5=0.0, eta0=-9.0)
            seed = build_seed(mp, sp)
            report = validate_seed(seed, mp, sp)
            assert report.fiber_ratio == pytest.approx(k, rel=1e-9)

    def test_einstein_seed_first_order(self):
        sp = ShootParams(theta=1.0, s4=0.0, s5=0.0, eta0=-9.0)
        seed = build_seed(MP, sp)
        report = validate_seed(seed, MP, sp)
        assert abs(report.q_over_u) < 1e-4  # O(u) residual at first order
        assert report.one_minus_h_over_u == 0.0


class TestDepthRobustness:
    def test_steady_depth_shift_is_eta_translation(self):
        """Seeding 2 units deeper is an eta-translation of the same orbit.

        The seed at eta0 - 2 lies (to second order) on the same trajectory as
        the seed at eta0, two eta-units earlier. Integrating both with their
        own starting labels and comparing at matched absolute eta therefore
        realizes the shift; agreement to 1e-6 sup-norm is required.
        """
        from solitonlab.integrate import IntegratorConfig, integrate_flow

        mp = ModelParams(m=1, k=1, epsilon=0)
        cfg = IntegratorConfig(eta_max=6.0, rtol=1e-11, atol=1e-13)
        sp_a = ShootParams(theta=math.pi / 2, s4=0.3, s5=0.0, eta0=-9.0)
        sp_b = ShootParams(theta=math.pi / 2, s4=0.3, s5=0.0, eta0=-11.0)
        tr_a = integrate_flow(build_seed(mp, sp_a), mp, cfg, eta0=sp_a.eta0)
        tr_b = integrate_flow(build_seed(mp, sp_b), mp, cfg, eta0=sp_b.eta0)
        probes = np.linspace(0.0, 5.0, 11)
        worst = 0.0
        for eta in probes:
            pa = tr_a.interpolate(eta)
            pb = tr_b.interpolate(eta)
            worst = max(worst, float(np.max(np.abs(pa - pb))))
        assert worst < 1e-6
