import numpy as np
import pytest

from coneflow.errors import Diverged, LeftDomain, StepSizeUnderflow
from coneflow.integrate import (IntegrateOptions, integrate,
                                order_preservation_trial)
from coneflow.cones import Membership, classify
from coneflow.system import CHEM_CONE_FACETS, make_system

from conftest import closed_form_equilibrium


class TestBasics:
    def test_equilibrium_stays_put(self, chem):
        traj = integrate(chem, [1, 1, 1], 10.0)
        assert np.allclose(traj.states, 1.0, atol=1e-12)
        assert traj.converged

    def test_zero_field_is_exact(self):
        s = make_system(2, ["0", "0"], "x1 + x2", np.eye(2), None, {}, "still")
        traj = integrate(s, [0.3, 0.7], 5.0)
        assert np.all(traj.states == np.array([0.3, 0.7]))

    def test_long_run_convergence(self, chem):
        traj = integrate(chem, [0, 0, 2], 50.0)
        assert np.max(np.abs(traj.final_state() - [1, 1, 1])) < 1e-6
        assert traj.converged and traj.converged_at < 50.0

    def test_requested_sample_times_are_hit(self, chem):
        times = [0.0, 0.25, 1.0, 2.5]
        traj = integrate(chem, [0, 0, 2], 2.5, sample_times=times)
        assert np.allclose(traj.times, times)

    def test_rejects_outside_start(self, chem):
        with pytest.raises(LeftDomain):
            integrate(chem, [-1.0, 0.0, 0.0], 1.0)

    def test_rejects_nonpositive_horizon(self, chem):
        with pytest.raises(ValueError):
            integrate(chem, [1, 1, 1], 0.0)


class TestInvariants:
    def test_linear_integral_drift_roundoff_only(self, chem):
        traj = integrate(chem, [0.5, 1.5, 0.75], 100.0,
                         IntegrateOptions(stop_on_converged=False))
        assert traj.drift <= 1e-9

    def test_state_cone_invariance_100_starts(self, chem):
        rng = np.random.default_rng(17)
        for _ in range(100):
            x0 = rng.uniform(0.0, 2.0, 3)
            traj = integrate(chem, x0, 5.0, sample_times=[0.0, 5.0])
            assert classify(chem.cone_Y, traj.final_state()) is not Membership.OUTSIDE

    def test_time_shift_consistency(self, chem):
        one_shot = integrate(chem, [0, 0, 2], 3.0, sample_times=[0.0, 3.0])
        first = integrate(chem, [0, 0, 2], 1.2, sample_times=[0.0, 1.2])
        second = integrate(chem, first.final_state(), 1.8, sample_times=[0.0, 1.8])
        assert np.max(np.abs(second.final_state() - one_shot.final_state())) < 1e-8

    def test_rk4_agrees_with_adaptive(self, chem):
        a = integrate(chem, [0, 0, 2], 5.0, sample_times=[0.0, 5.0])
        b = integrate(chem, [0, 0, 2], 5.0,
                      IntegrateOptions(method="rk4", fixed_step=1e-3),
                      sample_times=[0.0, 5.0])
        assert np.max(np.abs(a.final_state() - b.final_state())) < 1e-8

    def test_rk4_reproducible(self, chem):
        opts = IntegrateOptions(method="rk4", fixed_step=1e-2)
        a = integrate(chem, [0.1, 0.4, 1.7], 2.0, opts)
        b = integrate(chem, [0.1, 0.4, 1.7], 2.0, opts)
        assert np.array_equal(a.states, b.states)


class TestFailureModes:
    def test_blowup_reports_divergence(self):
        s = make_system(1, ["x1*x1"], "0*x1", np.eye(1), None, {}, "blow")
        with pytest.raises(Diverged):
            integrate(s, [1.0], 2.0, IntegrateOptions(norm_cap=1e6))

    def test_escaping_field_raises_left_domain(self):
        s = make_system(2, ["-1", "0"], "x2 - x2", np.eye(2), None, {}, "leak")
        with pytest.raises(LeftDomain):
            integrate(s, [0.5, 1.0], 2.0)

    def test_finite_time_singularity_underflows(self):
        # the solution slope blows up at t = 0.5; the controller must
        # shrink the step to nothing rather than step across
        s = make_system(1, ["1/(1 - x1)"], "0*x1", np.eye(1), None, {}, "sing")
        with pytest.raises(StepSizeUnderflow):
            integrate(s, [0.0], 1.0, sample_times=[0.0, 1.0])


class TestOrderPreservation:
    def test_margins_strictly_positive(self, chem):
        rep = order_preservation_trial(chem, n_pairs=30, t_check=1.0, seed=5)
        assert rep.passed
        assert rep.worst_margin > 1e-8

    def test_origin_reference_pair(self, chem):
        # 0 is an equilibrium, so ordering against it reduces to interior
        # classification of the comoving state
        traj = integrate(chem, [0.5, 0.5, 0.5], 1.0, sample_times=[0.0, 1.0])
        assert classify(chem.cone_K, traj.final_state()) is Membership.INTERIOR

    def test_conserved_split_is_asserted(self, chem):
        rep = order_preservation_trial(chem, n_pairs=5, t_check=0.5, seed=1)
        assert rep.n_pairs == 5

    def test_specific_ray_increment(self, chem):
        x = integrate(chem, [0, 0, 2], 1.0, sample_times=[0.0, 1.0])
        y = integrate(chem, [1, 0, 2], 1.0, sample_times=[0.0, 1.0])
        d = y.final_state() - x.final_state()
        assert np.min(np.array(CHEM_CONE_FACETS) @ d) > 0.0


class TestAgainstClosedForm:
    @pytest.mark.parametrize("x0", [[0, 0, 2], [4, 0, 0], [1, 3, 0], [2, 2, 0]])
    def test_limit_matches_level_algebra(self, chem, x0):
        h = chem.integral_at(x0)
        traj = integrate(chem, x0, 80.0, sample_times=[0.0, 80.0])
        assert np.max(np.abs(traj.final_state() - closed_form_equilibrium(h))) < 1e-6


class TestAgainstScipy:
    def test_transient_matches_independent_solver(self, chem):
        scipy_int = pytest.importorskip("scipy.integrate")
        times = np.linspace(0.0, 5.0, 11)
        mine = integrate(chem, [0, 0, 2], 5.0, sample_times=times)
        ref = scipy_int.solve_ivp(lambda t, y: chem.field_at(y), (0.0, 5.0),
                                  [0.0, 0.0, 2.0], t_eval=times,
                                  rtol=1e-12, atol=1e-12, method="RK45")
        assert ref.success
        assert np.max(np.abs(mine.states - ref.y.T)) < 1e-8
