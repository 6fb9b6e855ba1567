import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg

from optolqg import (
    DissipationModel,
    InsufficientSamplesError,
    PhysicalParams,
    StepSizeError,
    TrajectoryConfig,
    auto_config,
    build_matrices,
    cooling_spec,
    ensemble_excess_covariance,
    load_records,
    photocurrent_increment,
    save_records,
    simulate_conditional_mean,
    simulate_ensemble,
    solve_filter_are,
    solve_lyapunov,
    synthesize,
)

from conftest import assert_close


def cheap_params(**kw):
    """Well-damped configuration so relaxation is a few hundred steps."""
    base = dict(omega_m=1e6, q_m=200.0, kappa=1e7, g=2e5, eta=0.9,
                theta=math.pi / 2, temperature=300.0,
                model=DissipationModel.NON_RWA)
    base.update(kw)
    return PhysicalParams(**base)


def free_params(**kw):
    """Strong intrinsic damping: fast relaxation without any feedback."""
    base = dict(omega_m=1e6, q_m=20.0, kappa=2e6, g=2e5, eta=0.9,
                theta=math.pi / 2, temperature=300.0,
                model=DissipationModel.NON_RWA)
    base.update(kw)
    return PhysicalParams(**base)


@pytest.fixture(scope="module")
def cheap_solution():
    p = cheap_params()
    return p, synthesize(p, cooling_spec(1e4))


class TestDeterministicLimit:
    def test_vacuum_covariance_freezes_the_noise_gain(self):
        # v_c = I/2 makes the innovation gain vanish, so the mean follows
        # the deterministic linear flow regardless of the noise draws
        p = free_params()
        m = build_matrices(p)
        x0 = np.array([1.0, -0.5, 0.2, 0.0])
        cfg = auto_config(m, None, ensemble=1, seed=3, record_every=1,
                          feedback_enabled=False)
        cfg = replace(cfg, dt=cfg.dt / 8, steps=8 * cfg.steps,
                      burn_in=8 * cfg.burn_in)
        rec = simulate_conditional_mean(m, 0.5 * np.eye(4), None, cfg, x0=x0)
        idx = min(len(rec.times) - 1, int(2.0 / (cfg.dt * p.omega_m)))
        expected = scipy.linalg.expm(m.a * rec.times[idx]) @ x0
        assert_close(rec.means[idx], expected, 6e-3, "free flow")

    def test_feedback_drives_mean_to_zero(self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        cfg = auto_config(m, sol.k, ensemble=1, seed=9, record_every=1)
        x0 = np.array([50.0, 50.0, 0.0, 0.0])
        rec = simulate_conditional_mean(m, 0.5 * np.eye(4), sol.k, cfg, x0=x0)
        assert np.abs(rec.means[-1]).max() < 1e-6 * 50.0

    def test_controls_are_minus_gain_times_mean(self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        cfg = auto_config(m, sol.k, ensemble=1, seed=5, record_every=7)
        rec = simulate_conditional_mean(m, sol.v_conditional, sol.k, cfg)
        np.testing.assert_allclose(
            rec.controls, -(sol.k @ rec.means.T).T, rtol=1e-12, atol=1e-18)


class TestPhotocurrent:
    def test_zero_mean_is_pure_noise(self, cheap_solution):
        p, _ = cheap_solution
        assert photocurrent_increment(np.zeros(4), p, 1e-9, 0.123) == 0.123

    def test_amplitude_quadrature_projection(self):
        p = cheap_params(theta=0.0, eta=1.0, kappa=0.5)
        dq = photocurrent_increment(np.array([0, 0, 1.0, 7.0]), p, 1e-3, 0.0)
        assert dq == pytest.approx(1e-3)

    def test_stationary_mean_charge_rate_vanishes(self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        cfg = auto_config(m, sol.k, ensemble=64, seed=17, record_every=25,
                          sample_relaxations=30.0)
        recs = simulate_ensemble(m, sol.v_conditional, sol.k, cfg)
        burn_records = int(cfg.burn_in / 25) + 1
        charges = np.concatenate(
            [r.charge_increments[burn_records:] for r in recs])
        rate = charges.mean()
        se = charges.std() / math.sqrt(len(charges))
        assert abs(rate) < 4 * se + 1e-12

    def test_innovation_window_charges_are_white(self, cheap_solution):
        # with a vanishing innovation gain the detected charge is exactly
        # the driving noise, so disjoint window sums must be uncorrelated
        # with variance equal to the window length (normalized time)
        p, sol = cheap_solution
        m = sol.matrices
        cfg = auto_config(m, sol.k, ensemble=100, seed=23, record_every=5,
                          sample_relaxations=20.0)
        recs = simulate_ensemble(m, 0.5 * np.eye(4), sol.k, cfg)
        q = np.stack([r.charge_increments[1:] for r in recs])
        a, b = q[:, :-1].ravel(), q[:, 1:].ravel()
        rho = np.corrcoef(a, b)[0, 1]
        assert abs(rho) < 4 / math.sqrt(a.size)
        window = 5 * cfg.dt * p.omega_m
        assert q.var() == pytest.approx(window, rel=0.05)


class TestEnsembleStatistics:
    def test_excess_covariance_matches_lyapunov(self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        cfg = auto_config(m, sol.k, ensemble=300, seed=101,
                          sample_relaxations=25.0)
        recs = simulate_ensemble(m, sol.v_conditional, sol.k, cfg)
        est, se = ensemble_excess_covariance(recs)
        scale = np.trace(sol.v_excess)
        for i in range(4):
            for j in range(4):
                ref = sol.v_excess[i, j]
                if abs(ref) < 1e-3 * scale:
                    continue
                assert est[i, j] == pytest.approx(ref, rel=0.10), (i, j)
                assert abs(est[i, j] - ref) < 5 * se[i, j] + 1e-12 * scale

    def test_no_feedback_ensemble_reproduces_unconditional_state(self):
        # heavy damping plus a small step keep the Euler stationary-variance
        # bias well under the 5% gate
        p = free_params(q_m=5.0)
        m = build_matrices(p)
        v_c, _ = solve_filter_are(m)
        cfg = auto_config(m, None, ensemble=600, seed=7,
                          feedback_enabled=False, sample_relaxations=25.0)
        cfg = replace(cfg, dt=cfg.dt / 8, steps=8 * cfg.steps,
                      burn_in=8 * cfg.burn_in)
        recs = simulate_ensemble(m, v_c, None, cfg)
        est, _ = ensemble_excess_covariance(recs)
        mn = m.normalized()
        v_free = solve_lyapunov(mn.a, mn.d)  # no-measurement steady state
        total = est + v_c
        for i in range(4):
            ref = v_free[i, i]
            if ref < 1e-3 * np.trace(v_free):
                continue
            assert total[i, i] == pytest.approx(ref, rel=0.05), i

    def test_jackknife_shrinks_with_duplication(self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        cfg = auto_config(m, sol.k, ensemble=120, seed=31)
        recs = simulate_ensemble(m, sol.v_conditional, sol.k, cfg)
        est1, se1 = ensemble_excess_covariance(recs)
        est2, se2 = ensemble_excess_covariance(recs + recs)
        np.testing.assert_allclose(est1, est2, rtol=1e-12)
        assert np.all(se2 <= se1 + 1e-18)

    def test_requires_at_least_100_trajectories(self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        cfg = auto_config(m, sol.k, ensemble=4, seed=1)
        recs = simulate_ensemble(m, sol.v_conditional, sol.k, cfg)
        with pytest.raises(InsufficientSamplesError):
            ensemble_excess_covariance(recs)

    def test_halving_dt_changes_estimate_within_monte_carlo_error(
            self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        cfg = auto_config(m, sol.k, ensemble=200, seed=77,
                          sample_relaxations=20.0)
        half = replace(cfg, dt=cfg.dt / 2, steps=2 * cfg.steps,
                       burn_in=2 * cfg.burn_in)
        est1, se1 = ensemble_excess_covariance(
            simulate_ensemble(m, sol.v_conditional, sol.k, cfg))
        est2, se2 = ensemble_excess_covariance(
            simulate_ensemble(m, sol.v_conditional, sol.k, half))
        scale = max(np.trace(est1), 1e-12)
        mask = np.abs(est1) > 1e-3 * scale
        diff = np.abs(est1 - est2)[mask]
        bound = (3 * (se1 + se2))[mask]
        assert np.all(diff <= bound + 1e-12 * scale)


class TestConfigValidation:
    def test_step_size_guard(self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        good = auto_config(m, sol.k, ensemble=1, seed=0)
        bad = replace(good, dt=good.dt * 100)
        with pytest.raises(StepSizeError):
            simulate_ensemble(m, sol.v_conditional, sol.k, bad)

    def test_burn_in_guard(self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        good = auto_config(m, sol.k, ensemble=1, seed=0)
        bad = replace(good, burn_in=1, steps=good.steps)
        with pytest.raises(ValueError):
            simulate_ensemble(m, sol.v_conditional, sol.k, bad)

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            TrajectoryConfig(dt=-1.0, steps=10, burn_in=0)
        with pytest.raises(ValueError):
            TrajectoryConfig(dt=1.0, steps=10, burn_in=10)
        with pytest.raises(ValueError):
            TrajectoryConfig(dt=1.0, steps=10, burn_in=0, ensemble=0)

    def test_feedback_requires_gain(self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        cfg = auto_config(m, sol.k, ensemble=1, seed=0)
        with pytest.raises(ValueError):
            simulate_ensemble(m, sol.v_conditional, None, cfg)


class TestReproducibility:
    def test_bit_identical_reruns(self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        cfg = auto_config(m, sol.k, ensemble=8, seed=12345, record_every=11)
        a = simulate_ensemble(m, sol.v_conditional, sol.k, cfg)
        b = simulate_ensemble(m, sol.v_conditional, sol.k, cfg)
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.means, rb.means)
            assert np.array_equal(ra.charge_increments, rb.charge_increments)
            assert np.array_equal(ra.second_moment, rb.second_moment)

    def test_trajectories_have_independent_streams(self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        cfg = auto_config(m, sol.k, ensemble=2, seed=5, record_every=1)
        a, b = simulate_ensemble(m, sol.v_conditional, sol.k, cfg)
        assert not np.allclose(a.means, b.means)

    def test_seed_changes_draws(self, cheap_solution):
        p, sol = cheap_solution
        m = sol.matrices
        cfg1 = auto_config(m, sol.k, ensemble=1, seed=1, record_every=1)
        cfg2 = replace(cfg1, seed=2)
        r1 = simulate_ensemble(m, sol.v_conditional, sol.k, cfg1)[0]
        r2 = simulate_ensemble(m, sol.v_conditional, sol.k, cfg2)[0]
        assert not np.allclose(r1.means, r2.means)


class TestBinaryDump:
    def test_round_trip(self, cheap_solution, tmp_path):
        p, sol = cheap_solution
        m = sol.matrices
        cfg = auto_config(m, sol.k, ensemble=3, seed=21, record_every=9)
        recs = simulate_ensemble(m, sol.v_conditional, sol.k, cfg)
        path = tmp_path / "records.bin"
        save_records(path, recs)
        loaded = load_records(path)
        assert len(loaded) == len(recs)
        for ra, rb in zip(recs, loaded):
            assert ra.index == rb.index and ra.seed == rb.seed
            assert ra.n_samples == rb.n_samples and ra.dt == rb.dt
            for field in ("times", "means", "controls", "charge_increments",
                          "second_moment"):
                np.testing.assert_array_equal(getattr(ra, field),
                                              getattr(rb, field))

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a dump")
        with pytest.raises(ValueError):
            load_records(path)
