import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from impdmp import dmp
from impdmp.errors import IntegrationError, ScalingWarning, ValidationError
from impdmp.quaternion import quat_angle, quat_exp, quat_normalize
from impdmp.stiffness import StiffnessBounds
from impdmp.synthetic import min_jerk


def line_reference(M=400, T=2.0):
    t = np.linspace(0.0, T, M)
    s = min_jerk(t / T)
    p = np.outer(1 - s, [0.1, 0.2, 0.3]) + np.outer(s, [0.4, -0.1, 0.5])
    q = quat_exp(np.outer(s, [0.1, 0.3, 0.2]))
    k = 300.0 + np.outer(s, [100, 150, 200, 2, 3, 4]) + np.array([0, 0, 0, -288, -287, -286])
    return t, p, q, k


class TestPhase:
    def test_start(self):
        assert dmp.phase(dmp.CanonicalSystem(6.0, 11.0), 0.0) == 1.0

    def test_unit_constants(self):
        assert dmp.phase(dmp.CanonicalSystem(1.0, 1.0), 1.0) == pytest.approx(np.exp(-1), abs=1e-15)

    @given(st.floats(0.01, 10.0), st.floats(0.1, 20.0), st.floats(0.0, 3.0))
    def test_doubling_tau_halves_log_phase(self, alpha_x, tau, frac):
        t = frac * tau
        a = dmp.phase(dmp.CanonicalSystem(alpha_x, tau), t)
        b = dmp.phase(dmp.CanonicalSystem(alpha_x, 2 * tau), t)
        assert -np.log(b) == pytest.approx(-0.5 * np.log(a), rel=1e-9)

    def test_negative_time(self):
        with pytest.raises(ValidationError):
            dmp.phase(dmp.CanonicalSystem(), -0.1)

    def test_invalid_constants(self):
        with pytest.raises(ValidationError):
            dmp.CanonicalSystem(alpha_x=0.0)


class TestBasis:
    def test_layout(self):
        b = dmp.BasisSet.uniform_in_time(30, 6.0)
        np.testing.assert_allclose(b.centers, np.exp(-6.0 * np.linspace(0, 1, 30)))
        assert b.centers[0] == 1.0 and np.all(np.diff(b.centers) < 0)
        # neighbour overlap is 0.5 by construction
        psi = dmp.basis_activation(b, b.centers[1:])
        np.testing.assert_allclose(psi[np.arange(29), np.arange(29)], 0.5, rtol=1e-12)

    def test_activation_at_center(self):
        b = dmp.BasisSet.uniform_in_time(10, 6.0)
        np.testing.assert_allclose(np.diag(dmp.basis_activation(b, b.centers)), 1.0)

    def test_activation_range(self):
        b = dmp.BasisSet.uniform_in_time(30, 6.0)
        psi = dmp.basis_activation(b, np.linspace(1e-3, 1, 500))
        assert psi.shape == (500, 30) and np.all(psi <= 1.0) and np.all(psi >= 0.0)

    def test_narrow_limit_is_indicator(self):
        c = np.array([0.9, 0.5, 0.1])
        b = dmp.BasisSet(c, np.full(3, 1e9))
        grid = np.linspace(0.05, 1.0, 96)
        psi = dmp.basis_activation(b, grid)
        for s in range(3):
            on = np.isclose(grid, c[s])
            assert np.all(psi[on, s] == 1.0) and np.all(psi[~on, s] < 1e-12)

    @pytest.mark.parametrize("c,h", [([0.5, 0.9], [1, 1]), ([1.2], [1]), ([0.5], [-1.0])])
    def test_invalid(self, c, h):
        with pytest.raises(ValidationError):
            dmp.BasisSet(c, h)


class TestForcing:
    def test_vanishes_at_zero_phase(self):
        b = dmp.BasisSet.uniform_in_time(20, 6.0)
        w = np.random.default_rng(0).normal(size=(2, 20))
        assert np.all(np.abs(dmp.forcing_term(b, w, np.array([1e-12]))) < 1e-10)
        np.testing.assert_array_equal(dmp.forcing_term(b, w, np.array([0.0])), 0.0)

    def test_constant_weights(self):
        b = dmp.BasisSet.uniform_in_time(20, 6.0)
        x = np.linspace(1e-4, 1.0, 300)
        f = dmp.forcing_term(b, np.full((1, 20), 3.5), x)
        np.testing.assert_allclose(f[:, 0], 3.5 * x, rtol=1e-12)

    @given(arrays(float, (3, 15), elements=st.floats(-100, 100)))
    def test_bounded(self, w):
        b = dmp.BasisSet.uniform_in_time(15, 6.0)
        x = np.linspace(1e-4, 1.0, 1000)
        f = dmp.forcing_term(b, w, x)
        assert np.all(np.abs(f) <= np.abs(w).max(axis=1) + 1e-9)
        # continuity on a dense grid
        assert np.abs(np.diff(f, axis=0)).max() < 0.2 * np.abs(w).max() + 1e-9

    def test_regressors_recover_representable_targets(self):
        b = dmp.BasisSet.uniform_in_time(12, 6.0)
        x = np.exp(-6.0 * np.linspace(0, 1, 400))
        w = np.random.default_rng(1).normal(size=(2, 12))
        f = dmp.forcing_term(b, w, x)
        np.testing.assert_allclose(dmp.ls_weights(b, x, f, ridge=0.0), w, atol=1e-6)
        # the local estimator only approximates overlapping bases
        lwr = dmp.forcing_term(b, dmp.lwr_weights(b, x, f), x)
        assert np.abs(lwr - f).max() < np.abs(f).max()


class TestFit:
    def test_line_reaches_goal(self):
        t, p, q, k = line_reference()
        model = dmp.fit_trajectory(t, p, q, k, n_basis=20)
        out = dmp.rollout(model)
        assert np.linalg.norm(out.positions[-1] - p[-1]) < 1e-3
        assert quat_angle(out.quaternions[-1], q[-1]) < 1e-3
        np.testing.assert_allclose(out.stiffness[-1], k[-1], atol=1e-3 * np.abs(k[-1] - k[0]).max())

    def test_constant_stiffness_goal_equals_start(self):
        t, p, q, k = line_reference()
        k = np.tile([300.0, 300, 300, 15, 15, 15], (len(t), 1))
        with pytest.warns(ScalingWarning):
            model = dmp.fit_trajectory(t, p, q, k, n_basis=20)
        assert model.flags_k.all() and not model.flags_p.any()
        out = dmp.rollout(model)
        np.testing.assert_allclose(out.stiffness, k[:1].repeat(len(out.t), 0), atol=1e-9)

    def test_lwr_option(self):
        t, p, q, k = line_reference()
        model = dmp.fit_trajectory(t, p, q, k, n_basis=20, regression="lwr")
        out = dmp.rollout(model)
        assert np.linalg.norm(out.positions[-1] - p[-1]) < 1e-3
        with pytest.raises(ValidationError):
            dmp.fit_trajectory(t, p, q, k, regression="svm")

    def test_non_uniform_grid_rejected(self):
        t, p, q, k = line_reference()
        t = t ** 1.1
        with pytest.raises(ValidationError):
            dmp.fit_trajectory(t, p, q, k)

    def test_fidelity_improves_with_basis_count(self, pouring_bundle):
        dist, prof = pouring_bundle.distribution, pouring_bundle.profile
        errs = []
        for S in (10, 30, 100):
            model = dmp.fit(dist, prof, n_basis=S)
            e = dmp.reproduction_errors(model, dist, prof)
            errs.append((e["position"], e["orientation"], e["stiffness"].mean()))
        errs = np.array(errs)
        assert np.all(np.diff(errs, axis=0) < 0), errs

    def test_angular_velocity_constant_rate(self):
        t = np.linspace(0, 1, 50)
        q = quat_exp(np.outer(t, [0.0, 0.0, 0.75]))
        np.testing.assert_allclose(dmp.angular_velocity(q, t), np.tile([0, 0, 1.5], (50, 1)),
                                   atol=1e-12)


def attractor(**kw):
    q0 = quat_normalize([1.0, 0.2, -0.1, 0.3])
    qg = quat_normalize([0.8, -0.3, 0.4, 0.1])
    args = dict(p0=[0.0, 1.0, -2.0], pg=[1.0, -0.5, 0.25], q0=q0, qg=qg,
                k0=[200, 250, 300, 10, 12, 14], kg=[550, 400, 250, 20, 18, 11], duration=1.0)
    args.update(kw)
    return dmp.DmpModel.from_anchors(**args)


class TestRollout:
    def test_zero_forcing_converges_without_overshoot(self):
        model = attractor()
        out = dmp.rollout(model, dt=1e-3, goals={"tau": 1.0})
        # natural frequency sqrt(alpha beta) / tau = 24 rad/s, so the run spans
        # 24 time constants; the envelope (1 + w t) exp(-w t) is about 1e-9 there
        np.testing.assert_allclose(out.positions[-1], model.pg, atol=1e-4)
        np.testing.assert_allclose(out.stiffness[-1], model.kg, atol=1e-4 * 350)
        assert quat_angle(out.quaternions[-1], model.qg) < 1e-4
        for traj, start, goal in ((out.positions, model.p0, model.pg),
                                  (out.stiffness, model.k0, model.kg)):
            span = goal - start
            beyond = (traj - goal) * np.sign(span)
            assert np.all(beyond <= 1e-3 * np.abs(span))

    def test_goal_shift_preserves_shape(self):
        t, p, q, k = line_reference()
        model = dmp.fit_trajectory(t, p, q, k, n_basis=25)
        ref = dmp.rollout(model)
        for delta in ([0.1, 0, 0], [0, -0.1, 0.05]):
            pg = model.pg + delta
            out = dmp.rollout(model, goals={"p_g": pg})
            a = (out.positions - model.p0) / (pg - model.p0)
            b = (ref.positions - model.p0) / (model.pg - model.p0)
            assert np.abs(a - b).max() < 0.02
            assert np.linalg.norm(out.positions[-1] - pg) < 1e-3

    def test_tau_scaling_preserves_path(self):
        t, p, q, k = line_reference()
        model = dmp.fit_trajectory(t, p, q, k, n_basis=25)
        slow = dmp.rollout(model, dt=1e-3, goals={"tau": 2 * model.canonical.tau})
        fast = dmp.rollout(model, dt=1e-3)
        assert slow.t[-1] == pytest.approx(2 * fast.t[-1])
        # same phase at slow.t = 2 fast.t
        np.testing.assert_allclose(slow.positions[::2], fast.positions, atol=2e-3)

    def test_quaternion_stays_unit(self):
        t, p, q, k = line_reference()
        out = dmp.rollout(dmp.fit_trajectory(t, p, q, k, n_basis=25))
        np.testing.assert_allclose(np.linalg.norm(out.quaternions, axis=1), 1.0, atol=1e-12)

    def test_rotate_step_drift_detection(self):
        with pytest.raises(IntegrationError):
            dmp._rotate_step(np.array([1.1, 0.0, 0.0, 0.0]), np.zeros(3))

    def test_stiffness_goal_validation(self):
        model = attractor(bounds=StiffnessBounds.from_groups())
        with pytest.raises(ValidationError, match="outside bounds"):
            dmp.rollout(model, goals={"k_g": model.kg * 1.5})
        wide = StiffnessBounds.from_groups(100, 900, 5, 40)
        out = dmp.rollout(model, goals={"k_g": model.kg * 1.5}, bounds=wide)
        np.testing.assert_allclose(out.stiffness[-1], model.kg * 1.5, rtol=1e-3)

    @pytest.mark.parametrize("kwargs", [{"dt": 0.0}, {"goals": {"x_g": 1}}, {"goals": {"tau": -1}}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            dmp.rollout(attractor(), **kwargs)

    def test_antipodal_goal_is_same_rotation(self):
        model = attractor()
        a = dmp.rollout(model)
        b = dmp.rollout(model, goals={"q_g": -model.qg})
        np.testing.assert_allclose(a.quaternions, b.quaternions, atol=1e-12)

    def test_serialization_and_csv(self, tmp_path):
        t, p, q, k = line_reference(M=100, T=1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            model = dmp.fit_trajectory(t, p, q, k, n_basis=10)
        back = dmp.DmpModel.from_dict(model.to_dict())
        a, b = dmp.rollout(model, dt=0.01), dmp.rollout(back, dt=0.01)
        np.testing.assert_array_equal(a.positions, b.positions)
        a.to_csv(tmp_path / "r.csv")
        header = (tmp_path / "r.csv").read_text().splitlines()[0]
        assert header == "t,px,py,pz,qw,qx,qy,qz,kx,ky,kz,krx,kry,krz"
        c = dmp.RolloutResult.from_csv(tmp_path / "r.csv")
        np.testing.assert_array_equal(c.positions, a.positions)
        np.testing.assert_array_equal(c.stiffness, a.stiffness)
