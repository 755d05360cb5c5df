import math

import numpy as np
import pytest

from astrolander import mathcore as mc
from astrolander import seeker as sk


def make_seeker(q0=None, bias=None, offset=0.0):
    q0 = mc.IDENTITY_QUAT.copy() if q0 is None else q0
    bias = bias or sk.SensorBias()
    return sk.SeekerModel(q0, bias, offset)


class TestSeekerAngles:
    def test_boresight_target_zero_angles(self):
        # boresight is -z of the latched platform
        tu, tv = sk.seeker_angles(np.array([0.0, 0.0, -500.0]),
                                  mc.IDENTITY_QUAT)
        assert tu == 0.0 and tv == 0.0

    def test_unit_x_gives_quarter_pi(self):
        tu, tv = sk.seeker_angles(np.array([123.0, 0.0, 0.0]),
                                  mc.IDENTITY_QUAT)
        assert abs(tu - math.pi / 2) < 1e-15
        assert tv == 0.0

    def test_projection_oracle(self):
        rng = mc.make_rng(4)
        for _ in range(100):
            q0 = mc.quat_normalize(rng.normal(size=4))
            los = rng.normal(size=3) * rng.uniform(1.0, 1e4)
            tu, tv = sk.seeker_angles(los, q0)
            lam = mc.quat_to_dcm(q0) @ (los / np.linalg.norm(los))
            assert abs(tu - math.asin(lam[0])) < 1e-12
            assert abs(tv - math.asin(lam[1])) < 1e-12

    def test_zero_range_rejected(self):
        with pytest.raises(ValueError):
            sk.seeker_angles(np.zeros(3), mc.IDENTITY_QUAT)

    def test_attitude_stabilization_invariance(self):
        # After the platform is latched, the measured angles depend only on
        # geometry: perturbing the current attitude changes nothing.
        rng = mc.make_rng(6)
        q0 = mc.quat_normalize(rng.normal(size=4))
        los = np.array([120.0, -80.0, -900.0])
        model = make_seeker(q0=q0)
        m1 = model.measure(los, q0, np.zeros(3), mc.make_rng(1))
        q_perturbed = mc.quat_multiply(
            q0, mc.quat_from_axis_angle(np.array([0.3, 1.0, -0.2]), 0.5))
        model2 = make_seeker(q0=q0)
        m2 = model2.measure(los, mc.quat_normalize(q_perturbed), np.zeros(3),
                            mc.make_rng(1))
        assert m1.theta_u == m2.theta_u
        assert m1.theta_v == m2.theta_v
        assert m1.range_meas == m2.range_meas


class TestMeasurement:
    def test_zero_bias_equals_truth(self):
        model = make_seeker()
        los = np.array([10.0, -20.0, -400.0])
        m = model.measure(los, mc.IDENTITY_QUAT, np.array([0.01, 0.0, -0.02]),
                          mc.make_rng(0))
        assert m.range_meas == pytest.approx(np.linalg.norm(los))
        assert m.theta_u == pytest.approx(m.true_theta_u)
        assert m.theta_v == pytest.approx(m.true_theta_v)
        assert np.allclose(m.dq, mc.IDENTITY_QUAT)
        assert np.allclose(m.omega, [0.01, 0.0, -0.02])
        assert m.locked

    def test_range_bias(self):
        model = make_seeker(bias=sk.SensorBias(range_bias=0.05))
        los = np.array([0.0, 0.0, -1000.0])
        m = model.measure(los, mc.IDENTITY_QUAT, np.zeros(3), mc.make_rng(0))
        assert m.range_meas == pytest.approx(1050.0)

    def test_angle_noise_statistics(self):
        model = make_seeker(bias=sk.SensorBias(angle_noise_sd=1e-3))
        los = np.array([0.0, 0.0, -1000.0])
        rng = mc.make_rng(10)
        samples = np.array([model.measure(los, mc.IDENTITY_QUAT, np.zeros(3),
                                          rng).theta_u
                            for _ in range(100_000)])
        assert abs(samples.std() - 1e-3) / 1e-3 < 0.02
        assert abs(samples.mean()) < 5e-5

    def test_angle_bias_multiplicative(self):
        model = make_seeker(bias=sk.SensorBias(angle_bias=0.05))
        los = np.array([100.0, 0.0, -1000.0])
        m = model.measure(los, mc.IDENTITY_QUAT, np.zeros(3), mc.make_rng(0))
        assert m.theta_u == pytest.approx(1.05 * m.true_theta_u)

    def test_rate_and_attitude_bias(self):
        bias = sk.SensorBias(attitude_bias=np.full(4, 0.05),
                             rate_bias=np.full(3, 0.05))
        model = make_seeker(bias=bias)
        q = mc.quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), 0.2)
        m = model.measure(np.array([0.0, 0.0, -500.0]), q,
                          np.array([0.02, -0.01, 0.03]), mc.make_rng(0))
        assert np.allclose(m.omega, 1.05 * np.array([0.02, -0.01, 0.03]))
        # attitude bias is applied per component then renormalized; a
        # uniform scale renormalizes back to the true dq
        assert np.allclose(m.dq, mc.quat_error(q, mc.IDENTITY_QUAT))
        assert abs(np.linalg.norm(m.dq) - 1.0) < 1e-12

    def test_field_of_regard_lock(self):
        model = make_seeker()
        # 46 degrees off boresight in the u direction
        ang = math.radians(46.0)
        los = np.array([math.sin(ang), 0.0, -math.cos(ang)]) * 300.0
        m = model.measure(los, mc.IDENTITY_QUAT, np.zeros(3), mc.make_rng(0))
        assert not m.locked
        # behind the platform
        m2 = model.measure(np.array([0.0, 0.0, 800.0]), mc.IDENTITY_QUAT,
                           np.zeros(3), mc.make_rng(0))
        assert not m2.locked


class TestVelocityReference:
    def test_long_range_limit(self):
        v_ref, t_go, _, singular = sk.velocity_reference(1e9, 0.1)
        assert t_go == sk.T_GO_MAX
        assert abs(v_ref - 0.5) < 1e-9
        assert not singular

    def test_zero_range(self):
        v_ref, t_go, v_err, _ = sk.velocity_reference(0.0, 0.3)
        assert v_ref == 0.0 and t_go == 0.0
        assert v_err == pytest.approx(-0.3)

    def test_hand_evaluated_tau(self):
        v_ref, t_go, _, _ = sk.velocity_reference(90.0, 0.3)
        assert t_go == pytest.approx(300.0)
        assert v_ref == pytest.approx(0.5 * (1.0 - math.exp(-1.0)))
        assert v_ref == pytest.approx(0.31606027941427883)

    def test_singularity_guard(self):
        v_ref, t_go, _, singular = sk.velocity_reference(500.0, -0.01)
        assert singular and t_go == sk.T_GO_MAX


class TestObservationAssembly:
    def test_first_step_zero_rates_identity_dq(self):
        model = make_seeker()
        m = model.measure(np.array([0.0, 0.0, -900.0]), mc.IDENTITY_QUAT,
                          np.zeros(3), mc.make_rng(0))
        obs = model.build_observation(m, 6.0)
        assert obs.theta_u_rate == 0.0 and obs.theta_v_rate == 0.0
        assert np.allclose(obs.dq, mc.IDENTITY_QUAT)
        vec = obs.normalized()
        assert vec.shape == (13,)
        assert np.isfinite(vec).all()

    def test_stationary_geometry_zero_rates(self):
        model = make_seeker()
        los = np.array([50.0, -30.0, -700.0])
        for _ in range(2):
            m = model.measure(los, mc.IDENTITY_QUAT, np.zeros(3),
                              mc.make_rng(0))
            obs = model.build_observation(m, 6.0)
        assert obs.theta_u_rate == pytest.approx(0.0)
        assert obs.theta_v_rate == pytest.approx(0.0)

    def test_backward_difference_rate(self):
        model = make_seeker()
        r = 1000.0
        los1 = r * np.array([math.sin(0.1), 0.0, -math.cos(0.1)])
        los2 = r * np.array([math.sin(0.094), 0.0, -math.cos(0.094)])
        m1 = model.measure(los1, mc.IDENTITY_QUAT, np.zeros(3), mc.make_rng(0))
        model.build_observation(m1, 6.0)
        m2 = model.measure(los2, mc.IDENTITY_QUAT, np.zeros(3), mc.make_rng(0))
        obs = model.build_observation(m2, 6.0)
        assert obs.theta_u_rate == pytest.approx(-0.001)

    def test_closing_velocity_filter_converges(self):
        model = make_seeker()
        r = 1000.0
        model.seed_range(np.array([0.0, 0.0, -r]))
        v_true = 0.4
        for k in range(1, 40):
            los = np.array([0.0, 0.0, -(r - v_true * 6.0 * k)])
            m = model.measure(los, mc.IDENTITY_QUAT, np.zeros(3),
                              mc.make_rng(0))
            obs = model.build_observation(m, 6.0)
        assert obs.v_closing == pytest.approx(v_true, rel=1e-6)
        assert obs.v_error == pytest.approx(obs.v_ref - v_true, abs=1e-12)

    def test_adjusted_range_subtracts_offset(self):
        model = make_seeker(offset=10.0)
        m = model.measure(np.array([0.0, 0.0, -500.0]), mc.IDENTITY_QUAT,
                          np.zeros(3), mc.make_rng(0))
        assert m.range_adjusted == pytest.approx(490.0)

    def test_normalization_scales(self):
        obs = sk.Observation(theta_u=0.8, theta_v=-0.4, theta_u_rate=0.01,
                             theta_v_rate=-0.005, v_error=0.5, t_go=2000.0,
                             dq=np.array([1.0, 0.0, 0.0, 0.0]),
                             omega=np.array([0.1, -0.05, 0.0]))
        vec = obs.normalized()
        assert vec[0] == pytest.approx(1.0)
        assert vec[1] == pytest.approx(-0.5)
        assert vec[2] == pytest.approx(1.0)
        assert vec[4] == pytest.approx(1.0)
        assert vec[5] == pytest.approx(1.0)
        assert vec[6] == pytest.approx(1.0)
        assert vec[10] == pytest.approx(1.0)


class TestVelocityErrorSign:
    def test_sign_tracks_reference_without_noise(self):
        model = make_seeker()
        r = 2000.0
        model.seed_range(np.array([0.0, 0.0, -r]))
        rng = mc.make_rng(0)
        for k, v_true in enumerate((0.05, 0.05, 0.05, 0.9, 0.9, 0.9), 1):
            r -= v_true * 6.0
            m = model.measure(np.array([0.0, 0.0, -r]), mc.IDENTITY_QUAT,
                              np.zeros(3), rng)
            obs = model.build_observation(m, 6.0)
            assert (obs.v_error > 0) == (obs.v_ref > obs.v_closing)


class TestBiasSampling:
    def test_ranges(self):
        rng = mc.make_rng(2)
        ranges = sk.AdaptationRanges()
        for _ in range(2000):
            b = sk.sample_sensor_bias(rng, ranges)
            assert -0.05 <= b.range_bias <= 0.05
            assert -0.05 <= b.angle_bias <= 0.05
            assert b.angle_noise_sd == pytest.approx(1e-3)
            assert np.allclose(b.attitude_bias, 0.05)
            assert np.allclose(b.rate_bias, 0.05)

    def test_reproducible(self):
        b1 = sk.sample_sensor_bias(mc.make_rng(9), sk.AdaptationRanges())
        b2 = sk.sample_sensor_bias(mc.make_rng(9), sk.AdaptationRanges())
        assert b1.range_bias == b2.range_bias
        assert np.array_equal(b1.attitude_bias, b2.attitude_bias)
