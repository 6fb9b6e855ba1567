import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optolqg import (
    CostKind,
    CostSpec,
    DissipationModel,
    PhysicalParams,
    asymptotic_excess_cooling,
    asymptotic_excess_squeezing,
    asymptotic_gain_rwa,
    cooling_spec,
    cost_matrices,
    excess_convergence,
    feedback_strength,
    mech_light_correlation,
    phonon_number,
    squeezing_spec,
    synthesize,
)
from optolqg.observables import MechanicalBlock

from conftest import assert_close


def params(**kw):
    base = dict(omega_m=1e6, q_m=1e4, kappa=1e8, g=1e5, eta=1.0,
                theta=math.pi / 2, temperature=300.0,
                model=DissipationModel.NON_RWA)
    base.update(kw)
    return PhysicalParams(**base)


def mech(v):
    return MechanicalBlock.from_matrix(v)


class TestCostMatrices:
    def test_cooling(self):
        p_mat, q_mat = cost_matrices(
            CostSpec(kind=CostKind.COOLING, p=2.0, q=0.5), omega_m=3.0)
        np.testing.assert_allclose(p_mat, np.diag([6.0, 6.0, 0.0, 0.0]))
        np.testing.assert_allclose(q_mat, np.diag([0.5, 0.5]))

    def test_squeezing_position_target(self):
        p_mat, _ = cost_matrices(squeezing_spec(1.0, nu=0.0), omega_m=1.0)
        np.testing.assert_allclose(p_mat, np.diag([1.0, 0.0, 0.0, 0.0]),
                                   atol=1e-15)

    def test_squeezing_momentum_target(self):
        p_mat, _ = cost_matrices(squeezing_spec(1.0, nu=math.pi / 2),
                                 omega_m=1.0)
        np.testing.assert_allclose(p_mat, np.diag([0.0, 1.0, 0.0, 0.0]),
                                   atol=1e-15)

    @given(st.floats(-1.5, 1.5), st.floats(0.1, 10.0))
    @settings(max_examples=40, deadline=None)
    def test_pi_periodicity(self, nu, p):
        a, _ = cost_matrices(squeezing_spec(p, nu=nu), omega_m=2.0)
        b, _ = cost_matrices(squeezing_spec(p, nu=nu + math.pi), omega_m=2.0)
        np.testing.assert_allclose(a, b, atol=1e-12 * p)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            CostSpec(kind=CostKind.COOLING, p=0.0, q=1.0)
        with pytest.raises(ValueError):
            CostSpec(kind=CostKind.COOLING, p=1.0, q=-1.0)
        with pytest.raises(ValueError):
            CostSpec(kind=CostKind.SQUEEZING, p=1.0, q=1.0)  # nu missing


class TestSynthesize:
    def test_room_temperature_cooling_benchmark(self, room_temp_params):
        for model in DissipationModel:
            sol = synthesize(room_temp_params.replace(model=model),
                             cooling_spec(1e12))
            n = phonon_number(mech(sol.v_total))
            assert n == pytest.approx(1.38, abs=0.03)

    def test_total_is_conditional_plus_excess(self):
        sol = synthesize(params(), cooling_spec(1e8))
        np.testing.assert_allclose(
            sol.v_total, sol.v_conditional + sol.v_excess, rtol=0, atol=1e-14)

    def test_excess_is_psd_and_occupancy_ordering(self):
        sol = synthesize(params(), cooling_spec(1e8))
        assert np.linalg.eigvalsh(sol.v_excess).min() >= -1e-10
        assert (phonon_number(mech(sol.v_total))
                >= phonon_number(mech(sol.v_conditional)))

    def test_zero_coupling_leaves_no_excess_mechanical_noise(self):
        sol = synthesize(params(g=0.0), cooling_spec(1e8))
        assert np.abs(sol.v_excess[:2, :2]).max() < 1e-12
        np.testing.assert_allclose(sol.v_total[:2, :2],
                                   sol.v_conditional[:2, :2], atol=1e-12)

    def test_cheaper_feedback_cools_further(self):
        n_low = phonon_number(mech(synthesize(params(), cooling_spec(1e6)).v_total))
        n_high = phonon_number(mech(synthesize(params(), cooling_spec(1e12)).v_total))
        assert n_high <= n_low

    def test_phase_channel_unused(self):
        for pq in (1e4, 1e8, 1e12):
            for kind in ("cool", "squeeze"):
                spec = (cooling_spec(pq) if kind == "cool"
                        else squeezing_spec(pq, nu=0.3))
                sol = synthesize(params(), spec)
                scale = np.abs(sol.k[0]).max()
                assert np.abs(sol.k[1]).max() <= 1e-9 * scale
                assert abs(sol.k[0, 3]) <= 1e-9 * scale

    def test_reports_attached(self):
        sol = synthesize(params(), cooling_spec(1e8))
        assert sol.filter_report.residual <= 1e-10
        assert sol.control_report.residual <= 1e-10
        assert sol.filter_report.stabilizing and sol.control_report.stabilizing

    def test_p_q_overall_scale_is_irrelevant(self):
        s1 = synthesize(params(), CostSpec(kind=CostKind.COOLING, p=1e8, q=1.0))
        s2 = synthesize(params(), CostSpec(kind=CostKind.COOLING, p=1e3, q=1e-5))
        assert_close(s2.k, s1.k, 1e-8, "gain invariance")
        assert_close(s2.v_total, s1.v_total, 1e-8, "state invariance")


class TestCoolingExcessAsymptotics:
    def test_nonrwa_arithmetic(self):
        # eta kappa / omega = 100, correlation 0.01 -> both entries 0.01
        p = params(eta=1.0, kappa=1e8, omega_m=1e6)
        v = np.zeros((4, 4))
        v[0, 3] = v[3, 0] = 0.01  # only the phase-quadrature correlation
        qq, pp = asymptotic_excess_cooling(p, v)
        assert qq == pytest.approx(100.0 * 1e-4)
        assert pp == pytest.approx(100.0 * 1e-4)

    def test_rwa_prefactors_approach_unity(self):
        p = params(model=DissipationModel.RWA, q_m=1e12)
        v = np.zeros((4, 4))
        v[0, 3] = v[3, 0] = 0.01
        qq, pp = asymptotic_excess_cooling(p, v)
        u = p.eta * p.kappa / p.omega_m * 1e-4
        assert qq == pytest.approx(u, rel=1e-10)
        assert pp == pytest.approx(u, rel=1e-10)

    def test_correlation_projection_uses_measurement_angle(self):
        p = params(theta=0.3)
        v = np.zeros((4, 4))
        v[0, 2] = v[2, 0] = 0.5
        v[0, 3] = v[3, 0] = -0.2
        corr = mech_light_correlation(p, v)
        assert corr == pytest.approx(math.cos(0.3) * 0.5 - math.sin(0.3) * 0.2)

    @pytest.mark.parametrize("model", list(DissipationModel))
    def test_numeric_lyapunov_converges_to_closed_form(self, model):
        p = params(model=model, q_m=1e4, g=2e5)
        _, limit, last = excess_convergence(p, cooling_spec)
        qq, pp = asymptotic_excess_cooling(p, last.v_conditional)
        assert limit[0, 0] == pytest.approx(qq, rel=1e-3)
        assert limit[1, 1] == pytest.approx(pp, rel=1e-3)
        # raw value at p/q = 1e12 is already close, just not extrapolation-close
        assert last.v_excess[0, 0] == pytest.approx(qq, rel=2e-2)


class TestSqueezingExcessAsymptotics:
    def u(self, p, v):
        c = mech_light_correlation(p, v)
        return p.eta * p.kappa / p.omega_m * c * c

    def test_diagonal_target_angles(self):
        p = params()
        v = np.zeros((4, 4))
        v[0, 3] = v[3, 0] = 0.02
        u = self.u(p, v)
        qq, pp, qp = asymptotic_excess_squeezing(p, v, math.pi / 4)
        assert (qq, pp, qp) == (pytest.approx(0.0, abs=1e-15),
                                pytest.approx(2 * u), pytest.approx(0.0, abs=1e-15))
        qq, pp, qp = asymptotic_excess_squeezing(p, v, -math.pi / 4)
        assert (qq, pp, qp) == (pytest.approx(2 * u),
                                pytest.approx(0.0, abs=1e-15),
                                pytest.approx(0.0, abs=1e-15))

    def test_divergent_branches_are_inf_markers(self):
        p = params()
        v = np.zeros((4, 4))
        v[0, 3] = v[3, 0] = 0.02
        u = self.u(p, v)
        qq, pp, qp = asymptotic_excess_squeezing(p, v, 0.0)
        assert qq == 0.0 and pp == math.inf and qp == pytest.approx(-u)
        qq, pp, qp = asymptotic_excess_squeezing(p, v, math.pi / 2)
        assert qq == 0.0 and pp == math.inf and qp == pytest.approx(u)

    def test_pi_periodic_input(self):
        p = params()
        v = np.zeros((4, 4))
        v[0, 3] = v[3, 0] = 0.02
        a = asymptotic_excess_squeezing(p, v, 0.4)
        b = asymptotic_excess_squeezing(p, v, 0.4 + math.pi)
        assert a == pytest.approx(b)

    def test_rwa_model_rejected(self):
        p = params(model=DissipationModel.RWA)
        with pytest.raises(ValueError):
            asymptotic_excess_squeezing(p, np.eye(4) / 2, 0.3)

    def test_numeric_rotated_excess_matches_closed_form(self):
        p = params(q_m=1e8, g=5e6)
        nu = math.pi / 4
        _, limit, last = excess_convergence(
            p, lambda pq: squeezing_spec(pq, nu=nu))
        cs, sn = math.cos(nu), math.sin(nu)
        rot = np.array([[cs, sn], [-sn, cs]])
        lim_rot = rot @ limit[:2, :2] @ rot.T
        qq, pp, qp = asymptotic_excess_squeezing(p, last.v_conditional, nu)
        u = self.u(p, last.v_conditional)
        assert lim_rot[0, 0] == pytest.approx(qq, abs=1e-3 * u)
        assert lim_rot[1, 1] == pytest.approx(pp, rel=1e-3)
        assert lim_rot[0, 1] == pytest.approx(qp, abs=1e-3 * u)


class TestGainAsymptotics:
    def test_zero_pattern_and_large_quality_limit(self):
        p = params(model=DissipationModel.RWA, q_m=1e12)
        k = asymptotic_gain_rwa(p, 1e10)
        np.testing.assert_allclose(k[1], 0.0)
        assert k[0, 3] == 0.0
        assert k[0, 0] == pytest.approx(-math.sqrt(1e10), rel=1e-10)

    def test_nonrwa_rejected(self):
        with pytest.raises(ValueError):
            asymptotic_gain_rwa(params(), 1e10)

    @pytest.mark.parametrize("q_m", [10.0, 1e4])
    def test_numeric_gain_leading_coefficients(self, q_m):
        p = params(model=DissipationModel.RWA, q_m=q_m)
        pqs = (1e10, 1e11, 1e12)
        gains = [synthesize(p, cooling_spec(pq)).k_normalized for pq in pqs]
        xs = np.array(pqs)
        basis = np.vstack([xs**0.5, xs**0.25, np.ones(3)]).T
        ref = asymptotic_gain_rwa(p, 1.0)  # coefficients at p/q = 1
        for col, power, expected in ((0, 0, ref[0, 0]), (1, 0, ref[0, 1]),
                                     (2, 1, ref[0, 2])):
            vals = np.array([g[0, col] for g in gains])
            coeff = np.linalg.solve(basis, vals)[power]
            assert coeff == pytest.approx(expected, rel=0.01), f"column {col}"


class TestFeedbackStrength:
    def test_zero_gain(self):
        assert feedback_strength(np.zeros((2, 4)), np.eye(4)) == 0.0

    def test_bilinear_scaling(self):
        rng = np.random.default_rng(2)
        ve = rng.standard_normal((4, 4))
        ve = ve @ ve.T
        k = np.zeros((2, 4))
        k[0] = rng.standard_normal(4)
        assert feedback_strength(2 * k, ve) == pytest.approx(
            2 * feedback_strength(k, ve))

    def test_phase_channel_violation_rejected(self):
        k = np.zeros((2, 4))
        k[1, 0] = 1.0
        with pytest.raises(ValueError):
            feedback_strength(k, np.eye(4))

    def test_nondecreasing_in_feedback_power(self, room_temp_params):
        sigmas = [synthesize(room_temp_params, cooling_spec(pq)).feedback_strength
                  for pq in (1e5, 1e6, 1e7, 1e8, 1e9)]
        assert all(b >= a for a, b in zip(sigmas, sigmas[1:]))
