"""Spacecraft rigid-body model: thrusters, failures, fuel-driven mass properties.

The lander is a uniform-density cube with 12 fixed on/off thrusters, three
pairs per translation axis.  Each thruster pushes along the inward normal of
the face it sits on, so firing the two thrusters that share a face translates
without rotation, while firing offset thrusters on opposite faces rotates
without translation.  Positions follow the geometry pattern below, scaled to
the cube side (shown for the 2 m cube):

    index  position (m)        direction
    0, 1   (-1, 0, +-0.4)      (+1, 0, 0)
    2, 3   (+1, 0, +-0.4)      (-1, 0, 0)
    4, 5   (-+0.4, -1, 0)      (0, +1, 0)
    6, 7   (-+0.4, +1, 0)      (0, -1, 0)
    8, 9   (0, -+0.4, -1)      (0, 0, +1)
    10, 11 (0, -+0.4, +1)      (0, 0, -1)

Positions and velocities of the spacecraft state are asteroid-frame; the
attitude quaternion is inertial-to-body.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import mathcore as mc
from .mathcore import cross

SPECIFIC_IMPULSE = 225.0    # s
G_REF = 9.8                 # m/s^2


@dataclass(frozen=True)
class ThrusterConfig:
    positions: np.ndarray       # (12, 3) body frame, m
    directions: np.ndarray      # (12, 3) unit vectors
    max_thrust: float           # N per thruster
    failure_scale: np.ndarray   # (12,) in [f_min, 1]; at most one element < 1

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def thrusts(self, cmd: np.ndarray) -> np.ndarray:
        """Delivered per-thruster thrust magnitudes for on/off command flags."""
        return self.max_thrust * self.failure_scale * np.asarray(cmd, dtype=float)


_FACE = 0.5     # face coordinate as a fraction of cube side
_OFFSET = 0.2   # lever-arm offset as a fraction of cube side


def cube_thrusters(side: float = 2.0, max_thrust: float = 1.0) -> ThrusterConfig:
    """Nominal 12-thruster layout for a cube of the given side length."""
    f = _FACE * side
    o = _OFFSET * side
    positions = np.array([
        [-f, 0.0, o], [-f, 0.0, -o],
        [f, 0.0, o], [f, 0.0, -o],
        [-o, -f, 0.0], [o, -f, 0.0],
        [-o, f, 0.0], [o, f, 0.0],
        [0.0, -o, -f], [0.0, o, -f],
        [0.0, -o, f], [0.0, o, f],
    ])
    directions = np.array([
        [1.0, 0.0, 0.0], [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0], [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0], [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0], [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0], [0.0, 0.0, -1.0],
    ])
    return ThrusterConfig(positions=positions, directions=directions,
                          max_thrust=max_thrust,
                          failure_scale=np.ones(12))


# Indices of the face pair that pushes along body -z (toward the seeker
# boresight); used for the open-loop burn.
MINUS_Z_TRANSLATION_PAIR = (10, 11)


def apply_actuator_failure(cfg: ThrusterConfig, rng: np.random.Generator,
                           p_fail: float, f_min: float,
                           f_max: float) -> ThrusterConfig:
    """With probability p_fail, degrade one random thruster to U[f_min, f_max]."""
    scale = np.ones(cfg.count)
    if rng.uniform() < p_fail:
        idx = int(rng.integers(cfg.count))
        scale[idx] = rng.uniform(f_min, f_max)
    return replace(cfg, failure_scale=scale)


def body_force_torque(cmd: np.ndarray, cfg: ThrusterConfig,
                      r_com: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Net body-frame force and torque for on/off thruster commands.

    Torque lever arms are taken about the current center of mass r_com.
    """
    t = cfg.thrusts(cmd)
    force_each = cfg.directions * t[:, None]
    f_b = force_each.sum(axis=0)
    arms = cfg.positions - r_com
    l_b = np.array([
        np.sum(arms[:, 1] * force_each[:, 2] - arms[:, 2] * force_each[:, 1]),
        np.sum(arms[:, 2] * force_each[:, 0] - arms[:, 0] * force_each[:, 2]),
        np.sum(arms[:, 0] * force_each[:, 1] - arms[:, 1] * force_each[:, 0]),
    ])
    return f_b, l_b


def body_to_inertial(f_b: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Rotate a body-frame vector to the inertial frame."""
    return mc.quat_to_dcm(q).T @ f_b


def box_inertia(m: float, h: float, w: float, d: float) -> np.ndarray:
    """Inertia tensor of a uniform box: (m/12) diag(h^2+d^2, w^2+d^2, w^2+h^2)."""
    k = m / 12.0
    return np.diag([k * (h * h + d * d), k * (w * w + d * d), k * (w * w + h * h)])


def rotational_dynamics(omega: np.ndarray, inertia: np.ndarray,
                        inertia_rate: np.ndarray, l_body: np.ndarray,
                        l_env: np.ndarray) -> np.ndarray:
    """Euler rotational equations with a changing-inertia term.

    omega_dot = J^-1 (-omega x (J omega) - Jdot omega + L_body + L_env)
    """
    j_w = inertia @ omega
    rhs = -cross(omega, j_w) - inertia_rate @ omega + l_body + l_env
    return np.linalg.solve(inertia, rhs)


def translational_dynamics(r: np.ndarray, v: np.ndarray, f_thrust: np.ndarray,
                           m: float, a_env: np.ndarray, gravity: np.ndarray,
                           omega_a: np.ndarray) -> np.ndarray:
    """Rotating-frame acceleration of the spacecraft.

    All vectors are asteroid-frame: f_thrust is the thrust force already
    rotated into the asteroid frame, gravity is the attraction vector
    (pointing toward the body), and omega_a the asteroid angular velocity.
    The Coriolis and centrifugal terms are 2 v x w_a and (w_a x r) x w_a.
    """
    return (f_thrust / m + a_env + gravity
            + 2.0 * cross(v, omega_a) + cross(cross(omega_a, r), omega_a))


def mass_flow(thrusts: np.ndarray, isp: float = SPECIFIC_IMPULSE,
              g_ref: float = G_REF) -> float:
    """Propellant mass rate (<= 0) for per-thruster delivered thrust magnitudes."""
    return -float(np.sum(np.abs(thrusts))) / (isp * g_ref)


@dataclass
class FuelModel:
    """Simplified fuel-flow bookkeeping: CoM drift and inertia rescaling.

    The center of mass moves linearly with cumulative burned propellant along
    a fixed random direction (com_rate, m per kg burned), on top of the
    episode's initial offset.  Components are clipped to the hull bound.
    """

    r_com0: np.ndarray
    com_rate: np.ndarray
    cube_side: float
    hull_bound: float

    def center_of_mass(self, burned: float) -> np.ndarray:
        r = self.r_com0 + self.com_rate * burned
        return np.clip(r, -self.hull_bound, self.hull_bound)


def fuel_update(fuel: FuelModel, mass: float, burned: float,
                inertia_prev: np.ndarray, dt: float
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mass-property update after burning fuel over a dynamics step.

    Returns (r_com, J, Jdot) with J the cube inertia at the current mass and
    Jdot its backward difference over dt.
    """
    s = fuel.cube_side
    inertia = box_inertia(mass, s, s, s)
    inertia_rate = (inertia - inertia_prev) / dt
    return fuel.center_of_mass(burned), inertia, inertia_rate


@dataclass
class SpacecraftState:
    """Full rigid-body state owned by a single episode worker."""

    r: np.ndarray               # m, asteroid frame
    v: np.ndarray               # m/s, asteroid frame
    q: np.ndarray               # inertial-to-body attitude quaternion
    omega: np.ndarray           # rad/s, body frame
    mass: float                 # kg
    r_com: np.ndarray           # m, body frame
    inertia: np.ndarray         # kg m^2
    inertia_rate: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def copy(self) -> "SpacecraftState":
        return SpacecraftState(r=self.r.copy(), v=self.v.copy(),
                               q=self.q.copy(), omega=self.omega.copy(),
                               mass=self.mass, r_com=self.r_com.copy(),
                               inertia=self.inertia.copy(),
                               inertia_rate=self.inertia_rate.copy())
