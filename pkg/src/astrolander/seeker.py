"""Stabilized-seeker measurement model and policy observation assembly.

The seeker platform latches the spacecraft attitude at maneuver start and
stays inertially fixed, so attitude motion during the maneuver does not move
the measured target.  The boresight points along the platform -z axis with a
90 degree total field of regard; seeker angles are the arcsine projections of
the line-of-sight unit vector onto the platform x and y axes.

Per-episode sensor distortion: range and angles are scaled by (1 + bias),
angles get zero-mean Gaussian noise, and the attitude-change quaternion and
body rates are scaled elementwise by (1 + bias).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import mathcore as mc

FIELD_OF_REGARD_HALF = math.radians(45.0)

# Velocity reference profile: v_ref = v0 (1 - exp(-t_go / tau))
V_REF_INITIAL = 0.5         # m/s
V_REF_TAU = 300.0           # s
T_GO_MAX = 1e4              # s, singularity guard when closing velocity <= 0

# Fixed normalization applied to the 13-element observation so every channel
# is O(1) for the tanh layers.
OBS_SCALES = {
    "angle": 0.8,           # rad
    "angle_rate": 0.01,     # rad/s
    "v_error": 0.5,         # m/s
    "t_go": 2000.0,         # s
    "omega": 0.1,           # rad/s
}

OBS_DIM = 13


@dataclass(frozen=True)
class SensorBias:
    """Per-episode multiplicative sensor distortion, constant within an episode."""

    range_bias: float = 0.0
    angle_bias: float = 0.0
    angle_noise_sd: float = 0.0                              # rad
    attitude_bias: np.ndarray = field(default_factory=lambda: np.zeros(4))
    rate_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class AdaptationRanges:
    """Sampling limits for the spacecraft adaptation parameters."""

    p_fail: float = 0.5
    failure_scale: tuple[float, float] = (0.5, 1.0)
    range_bias: tuple[float, float] = (-0.05, 0.05)
    angle_bias: tuple[float, float] = (-0.05, 0.05)
    angle_noise_sd: tuple[float, float] = (1e-3, 1e-3)
    attitude_bias: tuple[float, float] = (0.05, 0.05)
    rate_bias: tuple[float, float] = (0.05, 0.05)


def sample_sensor_bias(rng: np.random.Generator,
                       ranges: AdaptationRanges) -> SensorBias:
    return SensorBias(
        range_bias=rng.uniform(*ranges.range_bias),
        angle_bias=rng.uniform(*ranges.angle_bias),
        angle_noise_sd=rng.uniform(*ranges.angle_noise_sd),
        attitude_bias=rng.uniform(*ranges.attitude_bias, size=4),
        rate_bias=rng.uniform(*ranges.rate_bias, size=3),
    )


def seeker_angles(r_tm_n: np.ndarray, q0: np.ndarray) -> tuple[float, float]:
    """Ground-truth seeker angles for inertial relative position target-minus-spacecraft.

    q0 is the latched platform attitude.  Raises ValueError at zero range.
    """
    los = mc.quat_to_dcm(q0) @ mc.unit(np.asarray(r_tm_n, dtype=float))
    theta_u = math.asin(max(-1.0, min(1.0, los[0])))
    theta_v = math.asin(max(-1.0, min(1.0, los[1])))
    return theta_u, theta_v


def velocity_reference(range_to_go: float, v_closing: float,
                       v0: float = V_REF_INITIAL, tau: float = V_REF_TAU
                       ) -> tuple[float, float, float, bool]:
    """(v_ref, t_go, v_error, singular) for the range-proportional speed profile.

    t_go = range / v_closing; when the closing velocity is non-positive the
    singularity guard clamps t_go to T_GO_MAX and flags it.
    """
    singular = v_closing <= 0.0
    if singular:
        t_go = T_GO_MAX
    else:
        t_go = min(max(range_to_go, 0.0) / v_closing, T_GO_MAX)
    v_ref = v0 * (1.0 - math.exp(-t_go / tau))
    return v_ref, t_go, v_ref - v_closing, singular


@dataclass(frozen=True)
class Measurement:
    """One seeker sample: distorted values plus ground truth for diagnostics."""

    range_meas: float           # m, bias applied, not offset-adjusted
    range_adjusted: float       # m, measured range minus the target offset d
    theta_u: float              # rad, measured
    theta_v: float              # rad, measured
    dq: np.ndarray              # attitude change since maneuver start, measured
    omega: np.ndarray           # rad/s, measured body rates
    locked: bool                # target inside the field of regard
    true_range: float
    true_theta_u: float
    true_theta_v: float


@dataclass(frozen=True)
class Observation:
    """The 13-element policy input before normalization."""

    theta_u: float
    theta_v: float
    theta_u_rate: float
    theta_v_rate: float
    v_error: float
    t_go: float
    dq: np.ndarray
    omega: np.ndarray
    v_closing: float = 0.0      # diagnostics, not part of the vector
    v_ref: float = 0.0
    singular: bool = False

    def normalized(self) -> np.ndarray:
        return np.array([
            self.theta_u / OBS_SCALES["angle"],
            self.theta_v / OBS_SCALES["angle"],
            self.theta_u_rate / OBS_SCALES["angle_rate"],
            self.theta_v_rate / OBS_SCALES["angle_rate"],
            self.v_error / OBS_SCALES["v_error"],
            self.t_go / OBS_SCALES["t_go"],
            self.dq[0], self.dq[1], self.dq[2], self.dq[3],
            self.omega[0] / OBS_SCALES["omega"],
            self.omega[1] / OBS_SCALES["omega"],
            self.omega[2] / OBS_SCALES["omega"],
        ])


class SeekerModel:
    """Per-episode seeker: latched platform, bias state, and rate estimation.

    Closing velocity is estimated by backward-differencing the measured range
    across guidance updates and low-pass filtering with time constant
    vc_filter_tau; angle rates are backward differences over the guidance
    period.  The first observation of an episode reports zero angle rates.
    """

    def __init__(self, q0: np.ndarray, bias: SensorBias, target_offset: float,
                 v0: float = V_REF_INITIAL, tau: float = V_REF_TAU,
                 vc_filter_tau: float = 6.0):
        self.q0 = q0.copy()
        self.platform_dcm = mc.quat_to_dcm(q0)
        self.bias = bias
        self.target_offset = target_offset
        self.v0 = v0
        self.tau = tau
        self.vc_filter_tau = vc_filter_tau
        self._prev_range: float | None = None
        self._prev_angles: tuple[float, float] | None = None
        self._v_closing: float | None = None

    def measure(self, r_tm_n: np.ndarray, q: np.ndarray, omega: np.ndarray,
                rng: np.random.Generator) -> Measurement:
        """Sample the seeker for inertial LOS r_tm_n and current body state."""
        true_range = math.sqrt(float(r_tm_n @ r_tm_n))
        if true_range == 0.0:
            raise ValueError("seeker range is zero")
        los = self.platform_dcm @ (r_tm_n / true_range)
        tu = math.asin(max(-1.0, min(1.0, los[0])))
        tv = math.asin(max(-1.0, min(1.0, los[1])))
        locked = (abs(tu) <= FIELD_OF_REGARD_HALF
                  and abs(tv) <= FIELD_OF_REGARD_HALF
                  and los[2] < 0.0)

        b = self.bias
        noise = rng.normal(0.0, 1.0, size=2)
        range_meas = true_range * (1.0 + b.range_bias)
        theta_u = tu * (1.0 + b.angle_bias) + b.angle_noise_sd * noise[0]
        theta_v = tv * (1.0 + b.angle_bias) + b.angle_noise_sd * noise[1]

        dq_true = mc.quat_error(q, self.q0)
        dq = mc.quat_normalize(dq_true * (1.0 + b.attitude_bias))
        omega_meas = omega * (1.0 + b.rate_bias)

        return Measurement(range_meas=range_meas,
                           range_adjusted=range_meas - self.target_offset,
                           theta_u=theta_u, theta_v=theta_v, dq=dq,
                           omega=omega_meas, locked=locked,
                           true_range=true_range, true_theta_u=tu,
                           true_theta_v=tv)

    def seed_range(self, r_tm_n: np.ndarray) -> None:
        """Record the pre-burn measured range so the burn seeds the v_c filter."""
        true_range = math.sqrt(float(r_tm_n @ r_tm_n))
        self._prev_range = true_range * (1.0 + self.bias.range_bias)

    def update_closing_velocity(self, range_meas: float, dt: float) -> float:
        raw = 0.0 if self._prev_range is None else (self._prev_range - range_meas) / dt
        if self._v_closing is None:
            self._v_closing = raw
        else:
            alpha = 1.0 - math.exp(-dt / self.vc_filter_tau)
            self._v_closing += alpha * (raw - self._v_closing)
        self._prev_range = range_meas
        return self._v_closing

    def build_observation(self, meas: Measurement, dt: float) -> Observation:
        """Assemble the policy observation from a measurement taken dt after the last."""
        if self._prev_angles is None:
            rate_u = rate_v = 0.0
        else:
            rate_u = (meas.theta_u - self._prev_angles[0]) / dt
            rate_v = (meas.theta_v - self._prev_angles[1]) / dt
        self._prev_angles = (meas.theta_u, meas.theta_v)

        v_c = self.update_closing_velocity(meas.range_meas, dt)
        v_ref, t_go, v_error, singular = velocity_reference(
            meas.range_adjusted, v_c, self.v0, self.tau)
        return Observation(theta_u=meas.theta_u, theta_v=meas.theta_v,
                           theta_u_rate=rate_u, theta_v_rate=rate_v,
                           v_error=v_error, t_go=t_go, dq=meas.dq,
                           omega=meas.omega, v_closing=v_c, v_ref=v_ref,
                           singular=singular)
