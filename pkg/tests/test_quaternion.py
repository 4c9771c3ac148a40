import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from impdmp.errors import DomainError
from impdmp.quaternion import (IDENTITY, hemisphere_align, quat_angle, quat_canonical,
                               quat_conjugate, quat_error, quat_exp, quat_log, quat_normalize,
                               quat_product, quat_rotate)

finite = st.floats(-10.0, 10.0, allow_nan=False)
quats = arrays(float, 4, elements=finite).filter(lambda q: np.linalg.norm(q) > 1e-3).map(quat_normalize)
small_tangents = arrays(float, 3, elements=st.floats(-1.8, 1.8)).filter(
    lambda u: np.linalg.norm(u) < np.pi - 0.01)


def hamilton(a, b):
    """Reference product written from the component formulas."""
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                     w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                     w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                     w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2])


def axis_angle(axis, angle):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


class TestProduct:
    def test_identity_element(self):
        q = quat_normalize([0.3, -0.2, 0.5, 0.1])
        np.testing.assert_allclose(quat_product(IDENTITY, q), q, atol=1e-15)
        np.testing.assert_allclose(quat_product(q, IDENTITY), q, atol=1e-15)

    def test_unit_basis(self):
        np.testing.assert_allclose(quat_product([0, 1, 0, 0], [0, 0, 1, 0]), [0, 0, 0, 1])
        np.testing.assert_allclose(quat_product([0, 0, 1, 0], [0, 1, 0, 0]), [0, 0, 0, -1])

    @given(quats)
    def test_inverse(self, q):
        np.testing.assert_allclose(quat_product(q, quat_conjugate(q)), IDENTITY, atol=1e-12)

    @given(quats, quats)
    def test_matches_component_formula_and_stays_unit(self, a, b):
        out = quat_product(a, b)
        np.testing.assert_allclose(out, hamilton(a, b), atol=1e-12)
        assert abs(np.linalg.norm(out) - 1.0) < 1e-9

    def test_broadcasts(self):
        a = quat_normalize(np.random.default_rng(0).normal(size=(5, 4)))
        out = quat_product(a, IDENTITY)
        assert out.shape == (5, 4)
        np.testing.assert_allclose(out, a, atol=1e-15)

    def test_composes_rotations(self):
        # 90 deg about z then 90 deg about x maps x-axis to z-axis
        qz = axis_angle([0, 0, 1], np.pi / 2)
        qx = axis_angle([1, 0, 0], np.pi / 2)
        v = quat_rotate(quat_product(qx, qz), [1.0, 0.0, 0.0])
        np.testing.assert_allclose(v, [0, 0, 1], atol=1e-12)


class TestConjugate:
    def test_examples(self):
        np.testing.assert_array_equal(quat_conjugate(IDENTITY), IDENTITY)
        np.testing.assert_array_equal(quat_conjugate([0.7071, 0.7071, 0, 0]), [0.7071, -0.7071, 0, 0])

    @given(quats)
    def test_involution(self, q):
        np.testing.assert_array_equal(quat_conjugate(quat_conjugate(q)), q)

    def test_does_not_mutate(self):
        q = np.array([0.5, 0.5, 0.5, 0.5])
        quat_conjugate(q)
        np.testing.assert_array_equal(q, [0.5, 0.5, 0.5, 0.5])


class TestLog:
    def test_identity(self):
        np.testing.assert_array_equal(quat_log(IDENTITY), [0.0, 0.0, 0.0])

    def test_half_angle(self):
        np.testing.assert_allclose(quat_log([np.cos(0.5), np.sin(0.5), 0, 0]), [0.5, 0, 0], atol=1e-15)

    def test_near_identity_branch(self):
        q = np.array([1.0, 1e-14, 0.0, 0.0])
        np.testing.assert_array_equal(quat_log(q), [0.0, 0.0, 0.0])

    def test_antipodal_identity_rejected(self):
        with pytest.raises(DomainError):
            quat_log([-1.0, 0.0, 0.0, 0.0])

    def test_non_unit_rejected(self):
        with pytest.raises(DomainError):
            quat_log([1.0 + 1e-5, 0.0, 0.0, 0.0])
        quat_log([1.0 + 1e-7, 0.0, 0.0, 0.0])

    @given(quats)
    def test_norm_is_half_angle(self, q):
        if np.linalg.norm(q[1:]) < 1e-6:
            return
        np.testing.assert_allclose(np.linalg.norm(quat_log(q)), np.arccos(np.clip(q[0], -1, 1)),
                                   atol=1e-7)

    def test_vectorized(self):
        u = np.random.default_rng(1).uniform(-1, 1, size=(4, 7, 3))
        assert quat_log(quat_exp(u)).shape == (4, 7, 3)


class TestExp:
    def test_zero(self):
        np.testing.assert_array_equal(quat_exp([0.0, 0.0, 0.0]), IDENTITY)

    def test_quarter_turn(self):
        np.testing.assert_allclose(quat_exp([np.pi / 2, 0, 0]), [0, 1, 0, 0], atol=1e-15)

    @given(small_tangents)
    def test_log_exp_round_trip(self, u):
        np.testing.assert_allclose(quat_log(quat_exp(u)), u, atol=1e-9)

    @given(quats)
    def test_exp_log_round_trip(self, q):
        q = quat_canonical(q)
        if q[0] < 0.01:
            return
        np.testing.assert_allclose(quat_exp(quat_log(q)), q, atol=1e-9)

    @given(arrays(float, 3, elements=finite))
    def test_unit_output(self, u):
        assert abs(np.linalg.norm(quat_exp(u)) - 1.0) < 1e-12


class TestHemisphere:
    def test_antipodal_pair(self):
        out = hemisphere_align([[1, 0, 0, 0], [-1, 0, 0, 0]])
        np.testing.assert_array_equal(out, [[1, 0, 0, 0], [1, 0, 0, 0]])

    def test_first_element_sign(self):
        out = hemisphere_align([[-0.6, 0.8, 0, 0], [-0.6, 0.79, 0.1, 0]])
        assert out[0, 0] > 0
        assert out[0] @ out[1] >= 0

    def test_aligned_unchanged(self):
        seq = quat_exp(np.linspace(0, 1, 20)[:, None] * [0.3, 0.2, -0.1])
        np.testing.assert_array_equal(hemisphere_align(seq), seq)

    def test_injected_flips(self):
        rng = np.random.default_rng(3)
        seq = quat_exp(np.cumsum(rng.normal(0, 0.1, (200, 3)), axis=0) * 0.2)
        flips = np.where(rng.random(200) < 0.3, -1.0, 1.0)
        out = hemisphere_align(seq * flips[:, None])
        assert np.all(np.sum(out[1:] * out[:-1], axis=1) >= 0)
        # each element is the same rotation as its input
        np.testing.assert_allclose(np.abs(np.sum(out * seq, axis=1)), 1.0, atol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        seq = quat_normalize(rng.normal(size=(50, 4)))
        once = hemisphere_align(seq)
        np.testing.assert_array_equal(hemisphere_align(once), once)


def test_error_and_angle():
    q = axis_angle([0, 0, 1], 0.1)
    np.testing.assert_allclose(quat_error(q, IDENTITY), [0, 0, 0.1], atol=1e-15)
    np.testing.assert_allclose(quat_angle(q, IDENTITY), 0.1, atol=1e-15)
    # q and -q are the same rotation
    np.testing.assert_allclose(quat_angle(-q, IDENTITY), 0.1, atol=1e-15)


@settings(max_examples=50)
@given(quats, arrays(float, 3, elements=finite))
def test_rotation_preserves_length(q, v):
    np.testing.assert_allclose(np.linalg.norm(quat_rotate(q, v)), np.linalg.norm(v), atol=1e-9)
