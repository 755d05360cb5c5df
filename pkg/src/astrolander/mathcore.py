"""Shared numeric primitives: quaternions, DCMs, RK4 integration, seeded RNG.

Conventions used throughout the package:

* Vec3 / Mat3 are float64 ndarrays of shape ``(3,)`` / ``(3, 3)``.
* Quaternions are scalar-first float64 arrays ``[q0, q1, q2, q3]`` of unit
  norm.  An attitude quaternion encodes the passive rotation taking inertial
  (N) frame components to body (B) frame components: ``v_B = quat_to_dcm(q) @ v_N``.
  A 90 degree rotation about +x therefore maps (0, 1, 0) to (0, 0, -1).
* Frames are right-handed; angular rates are expressed in the body frame.
* All values are immutable by convention once constructed; every function
  here is pure and safe to call from concurrent episode workers.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

QUAT_NORM_TOL = 1e-6

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


class PropagationError(RuntimeError):
    """Raised when integration produces a non-finite state (episode abort)."""


def vec3(x, y, z) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross has ~17us call overhead; this is the dominant op in the
    # dynamics hot path, so write it out.
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def unit(v: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(v @ v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(q @ q))
    if n == 0.0:
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def _check_unit_quat(q: np.ndarray) -> None:
    n2 = float(q @ q)
    if abs(n2 - 1.0) > 2.0 * QUAT_NORM_TOL:
        raise ValueError(f"quaternion is not unit norm: |q| = {math.sqrt(n2):.9f}")


def quat_multiply(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Hamilton product q (x) p, scalar-first."""
    q0, q1, q2, q3 = q
    p0, p1, p2, p3 = p
    return np.array([
        q0 * p0 - q1 * p1 - q2 * p2 - q3 * p3,
        q0 * p1 + q1 * p0 + q2 * p3 - q3 * p2,
        q0 * p2 - q1 * p3 + q2 * p0 + q3 * p1,
        q0 * p3 + q1 * p2 - q2 * p1 + q3 * p0,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_dcm(q: np.ndarray) -> np.ndarray:
    """DCM mapping inertial-frame components to body-frame components.

    Raises ValueError if q is not unit norm to within tolerance.
    """
    _check_unit_quat(q)
    q0, q1, q2, q3 = q
    return np.array([
        [q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3,
         2.0 * (q1 * q2 + q0 * q3),
         2.0 * (q1 * q3 - q0 * q2)],
        [2.0 * (q1 * q2 - q0 * q3),
         q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3,
         2.0 * (q2 * q3 + q0 * q1)],
        [2.0 * (q1 * q3 + q0 * q2),
         2.0 * (q2 * q3 - q0 * q1),
         q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3],
    ])


def dcm_to_quat(c: np.ndarray) -> np.ndarray:
    """Inverse of quat_to_dcm (Shepperd's method, sign chosen so q0 >= 0)."""
    tr = c[0, 0] + c[1, 1] + c[2, 2]
    candidates = [tr, c[0, 0], c[1, 1], c[2, 2]]
    i = int(np.argmax(candidates))
    if i == 0:
        q0 = 0.5 * math.sqrt(1.0 + tr)
        s = 0.25 / q0
        q = np.array([q0,
                      s * (c[1, 2] - c[2, 1]),
                      s * (c[2, 0] - c[0, 2]),
                      s * (c[0, 1] - c[1, 0])])
    elif i == 1:
        q1 = 0.5 * math.sqrt(1.0 + 2.0 * c[0, 0] - tr)
        s = 0.25 / q1
        q = np.array([s * (c[1, 2] - c[2, 1]),
                      q1,
                      s * (c[0, 1] + c[1, 0]),
                      s * (c[2, 0] + c[0, 2])])
    elif i == 2:
        q2 = 0.5 * math.sqrt(1.0 + 2.0 * c[1, 1] - tr)
        s = 0.25 / q2
        q = np.array([s * (c[2, 0] - c[0, 2]),
                      s * (c[0, 1] + c[1, 0]),
                      q2,
                      s * (c[1, 2] + c[2, 1])])
    else:
        q3 = 0.5 * math.sqrt(1.0 + 2.0 * c[2, 2] - tr)
        s = 0.25 / q3
        q = np.array([s * (c[0, 1] - c[1, 0]),
                      s * (c[2, 0] + c[0, 2]),
                      s * (c[1, 2] + c[2, 1]),
                      q3])
    if q[0] < 0.0:
        q = -q
    return quat_normalize(q)


def quat_derivative(q: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Quaternion kinematics for body-frame rate omega: qdot = 0.5 q (x) [0, w]."""
    q0, q1, q2, q3 = q
    w0, w1, w2 = omega
    return 0.5 * np.array([
        -q1 * w0 - q2 * w1 - q3 * w2,
        q0 * w0 - q3 * w1 + q2 * w2,
        q3 * w0 + q0 * w1 - q1 * w2,
        -q2 * w0 + q1 * w1 + q0 * w2,
    ])


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    a = unit(np.asarray(axis, dtype=float))
    half = 0.5 * angle
    s = math.sin(half)
    return np.array([math.cos(half), a[0] * s, a[1] * s, a[2] * s])


def quat_error(q: np.ndarray, q_ref: np.ndarray) -> np.ndarray:
    """Attitude change from q_ref to q: dq with dcm(dq) = dcm(q) @ dcm(q_ref).T."""
    dq = quat_multiply(quat_conjugate(q_ref), q)
    if dq[0] < 0.0:
        dq = -dq
    return dq


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation (as a DCM acting on column vectors) taking unit a to unit b."""
    a = unit(np.asarray(a, dtype=float))
    b = unit(np.asarray(b, dtype=float))
    c = float(a @ b)
    if c > 1.0 - 1e-14:
        return np.eye(3)
    if c < -1.0 + 1e-14:
        # 180 degrees: rotate about any axis perpendicular to a
        perp = cross(a, vec3(1.0, 0.0, 0.0))
        if perp @ perp < 1e-12:
            perp = cross(a, vec3(0.0, 1.0, 0.0))
        perp = unit(perp)
        return 2.0 * np.outer(perp, perp) - np.eye(3)
    v = cross(a, b)
    vx = np.array([[0.0, -v[2], v[1]],
                   [v[2], 0.0, -v[0]],
                   [-v[1], v[0], 0.0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


def cone_direction(rng: np.random.Generator, direction: np.ndarray,
                   angle_min: float, angle_max: float) -> np.ndarray:
    """Random unit vector at an angle U[angle_min, angle_max] off `direction`.

    The cone angle theta is drawn uniformly (not area-uniformly) and the
    azimuth phi uniformly in [-pi, pi]; the vector is built about +z and
    rotated back so it has no preferred orientation about `direction`.
    """
    theta = rng.uniform(angle_min, angle_max)
    phi = rng.uniform(-math.pi, math.pi)
    local = np.array([math.sin(theta) * math.cos(phi),
                      math.sin(theta) * math.sin(phi),
                      math.cos(theta)])
    return rotation_between(vec3(0.0, 0.0, 1.0), direction) @ local


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float,
             y: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of dy/dt = f(t, y).

    Raises PropagationError if the result is non-finite.  Callers that carry
    quaternion components renormalize them after each step.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + (0.5 * dt) * k1)
    k3 = f(t + 0.5 * dt, y + (0.5 * dt) * k2)
    k4 = f(t + dt, y + dt * k3)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(out).all():
        raise PropagationError(f"non-finite state after RK4 step at t={t}")
    return out


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic counter-based generator for (seed, stream...) keys.

    Identical arguments produce bit-identical draw sequences on every
    platform; distinct stream keys give statistically independent streams.
    """
    seq = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1),
                                 spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(seq))
