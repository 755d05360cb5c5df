import math

import numpy as np
import pytest

from astrolander import mathcore as mc


def random_unit_quat(seed):
    rng = np.random.default_rng(seed)
    return mc.quat_normalize(rng.normal(size=4))


class TestQuatToDcm:
    def test_identity(self):
        assert np.allclose(mc.quat_to_dcm(mc.IDENTITY_QUAT), np.eye(3))

    def test_90deg_about_x_convention(self):
        # Fixes the active/passive convention: inertial (0,1,0) maps to
        # body (0,0,-1) for a +90 degree rotation about x.
        q = np.array([math.cos(math.pi / 4), math.sin(math.pi / 4), 0.0, 0.0])
        out = mc.quat_to_dcm(q) @ np.array([0.0, 1.0, 0.0])
        assert np.allclose(out, [0.0, 0.0, -1.0], atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_orthonormal(self, seed):
        c = mc.quat_to_dcm(random_unit_quat(seed))
        assert np.abs(c.T @ c - np.eye(3)).max() < 1e-12

    def test_rejects_non_unit(self):
        with pytest.raises(ValueError):
            mc.quat_to_dcm(np.array([1.0, 0.1, 0.0, 0.0]))

    def test_round_trip_with_dcm_to_quat(self):
        for seed in range(20):
            q = random_unit_quat(seed)
            if q[0] < 0:
                q = -q
            back = mc.dcm_to_quat(mc.quat_to_dcm(q))
            assert np.abs(back - q).max() < 1e-12


class TestQuatDerivative:
    def test_zero_rate(self):
        q = random_unit_quat(1)
        assert np.allclose(mc.quat_derivative(q, np.zeros(3)), 0.0)

    def test_hand_evaluated_case(self):
        out = mc.quat_derivative(mc.IDENTITY_QUAT, np.array([0.1, 0.0, 0.0]))
        assert np.allclose(out, [0.0, 0.05, 0.0, 0.0], atol=1e-15)

    @pytest.mark.parametrize("seed", range(8))
    def test_norm_preserving_structure(self, seed):
        rng = np.random.default_rng(seed)
        q = mc.quat_normalize(rng.normal(size=4))
        w = rng.normal(size=3)
        # d/dt |q|^2 = 2 q . qdot = 0 by the skew structure
        assert abs(2.0 * q @ mc.quat_derivative(q, w)) < 1e-15


class TestQuatAlgebra:
    def test_error_identity(self):
        q = random_unit_quat(3)
        dq = mc.quat_error(q, q)
        assert np.allclose(dq, mc.IDENTITY_QUAT, atol=1e-12)

    def test_error_matches_dcm_composition(self):
        q1, q2 = random_unit_quat(4), random_unit_quat(5)
        dq = mc.quat_error(q1, q2)
        expected = mc.quat_to_dcm(q1) @ mc.quat_to_dcm(q2).T
        assert np.abs(mc.quat_to_dcm(dq) - expected).max() < 1e-12

    def test_rotation_between(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = mc.unit(rng.normal(size=3))
            b = mc.unit(rng.normal(size=3))
            r = mc.rotation_between(a, b)
            assert np.abs(r @ a - b).max() < 1e-12
            assert np.abs(r @ r.T - np.eye(3)).max() < 1e-12

    def test_cone_direction_angle_in_range(self):
        rng = mc.make_rng(17)
        axis = mc.unit(np.array([0.3, -0.5, 0.8]))
        lo, hi = math.radians(5.0), math.radians(30.0)
        for _ in range(200):
            v = mc.cone_direction(rng, axis, lo, hi)
            ang = math.acos(np.clip(v @ axis, -1, 1))
            assert lo - 1e-9 <= ang <= hi + 1e-9
            assert abs(np.linalg.norm(v) - 1.0) < 1e-12


class TestRk4:
    def test_constant_state(self):
        out = mc.rk4_step(lambda t, y: np.zeros_like(y), 0.0,
                          np.array([2.0, -1.0]), 0.5)
        assert np.allclose(out, [2.0, -1.0])

    def test_exponential_growth(self):
        out = mc.rk4_step(lambda t, y: y, 0.0, np.array([1.0]), 0.1)
        # 1 + h + h^2/2 + h^3/6 + h^4/24 for h = 0.1
        assert abs(out[0] - 1.1051708333333333) < 1e-15
        assert abs(out[0] - math.exp(0.1)) < 1e-7

    def test_oscillator_energy_drift(self):
        def f(t, y):
            return np.array([y[1], -y[0]])

        y = np.array([1.0, 0.0])
        for k in range(1000):
            y = mc.rk4_step(f, 0.01 * k, y, 0.01)
        energy = 0.5 * (y[0] ** 2 + y[1] ** 2)
        assert abs(energy - 0.5) / 0.5 < 1e-8

    def test_local_truncation_order(self):
        def err(dt):
            return abs(mc.rk4_step(lambda t, y: y, 0.0, np.array([1.0]),
                                   dt)[0] - math.exp(dt))

        ratio = err(0.2) / err(0.1)
        assert abs(ratio - 32.0) < 0.2 * 32.0

    def test_non_finite_raises(self):
        def bad(t, y):
            return np.array([math.inf])

        with pytest.raises(mc.PropagationError):
            mc.rk4_step(bad, 0.0, np.array([1.0]), 0.1)

    def test_rejects_non_positive_dt(self):
        with pytest.raises(ValueError):
            mc.rk4_step(lambda t, y: y, 0.0, np.array([1.0]), 0.0)


class TestLongPropagation:
    def test_quat_norm_and_dcm_orthonormality_over_1e5_steps(self):
        q = random_unit_quat(9)
        w = np.array([0.02, -0.03, 0.01])

        def f(t, y):
            return mc.quat_derivative(y, w)

        for k in range(100_000):
            q = mc.quat_normalize(mc.rk4_step(f, 0.0, q, 0.05))
        assert abs(q @ q - 1.0) < 1e-6
        c = mc.quat_to_dcm(q)
        assert np.abs(c.T @ c - np.eye(3)).max() < 1e-6


class TestRng:
    def test_same_seed_bit_identical(self):
        a = mc.make_rng(1234).normal(size=100)
        b = mc.make_rng(1234).normal(size=100)
        assert (a == b).all()

    def test_stream_keys_differ(self):
        a = mc.make_rng(1234, 0).normal(size=10)
        b = mc.make_rng(1234, 1).normal(size=10)
        assert not np.allclose(a, b)

    def test_counter_based_generator(self):
        assert mc.make_rng(0).bit_generator.state["bit_generator"] == "Philox"
