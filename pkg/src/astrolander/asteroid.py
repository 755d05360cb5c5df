"""Randomized asteroid environment: ellipsoid gravity, tumble, SRP.

The asteroid is a uniform-density ellipsoid with semi-axes a >= b == c,
generally not spinning about a principal axis.  Its body-frame angular
velocity traces a cone about +z at the nutation angle; the asteroid-fixed
frame (A) is the frame all episode positions and velocities live in.

Exterior gravity of the uniform ellipsoid is evaluated with Carlson
symmetric elliptic integrals R_F / R_D over the confocal parameter kappa(r):

    g_i = -G M x_i R_D(...; axis i last),   M = (4/3) pi rho a b c

with kappa the positive root of sum_i x_i^2 / (axis_i^2 + kappa) = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq
from scipy.special import elliprd, elliprf

from . import mathcore as mc

GRAVITATIONAL_CONSTANT = 6.674e-11  # m^3 / (kg s^2)


@dataclass(frozen=True)
class AsteroidModel:
    """Sampled asteroid: geometry, density, tumble state, local SRP."""

    axes: np.ndarray            # semi-axes (a, b, c) m, a >= b == c
    density: float              # kg/m^3
    spin_rate: float            # rad/s
    nutation: float             # rad, angle between spin axis and body z
    phase: float                # rad, tumble phase at t = 0
    srp: np.ndarray             # m/s^2, constant in the asteroid frame

    @cached_property
    def mass(self) -> float:
        a, b, c = self.axes
        return (4.0 / 3.0) * math.pi * a * b * c * self.density

    @cached_property
    def inertia(self) -> np.ndarray:
        return asteroid_inertia(self.mass, *self.axes)

    @cached_property
    def inertia_ratio(self) -> float:
        """(J_z - J_x) / J_x of the ellipsoid inertia tensor."""
        j = self.inertia
        return (j[2, 2] - j[0, 0]) / j[0, 0]

    @cached_property
    def precession_rate(self) -> float:
        return self.inertia_ratio * self.spin_rate * math.cos(self.nutation)


@dataclass(frozen=True)
class AsteroidAttitude:
    """Inertial-to-asteroid-frame attitude at time t; identity at t = 0."""

    q: np.ndarray = field(default_factory=lambda: mc.IDENTITY_QUAT.copy())
    t: float = 0.0


@dataclass(frozen=True)
class AsteroidRanges:
    """Sampling limits for randomly generated asteroids."""

    c_axis: tuple[float, float] = (150.0, 300.0)
    a_axis_max: float = 300.0
    density: tuple[float, float] = (500.0, 5000.0)
    spin_rate: tuple[float, float] = (1e-6, 5e-4)
    nutation: tuple[float, float] = (math.radians(45.0), math.radians(90.0))
    srp_magnitude: float = 100e-6
    phase: tuple[float, float] = (-math.pi, math.pi)


def asteroid_inertia(m: float, a: float, b: float, c: float) -> np.ndarray:
    """Inertia tensor of a uniform ellipsoid: (m/5) diag(b^2+c^2, a^2+c^2, a^2+b^2)."""
    k = m / 5.0
    return np.diag([k * (b * b + c * c), k * (a * a + c * c), k * (a * a + b * b)])


def asteroid_omega(t: float, model: AsteroidModel) -> np.ndarray:
    """Body-frame angular velocity of the tumbling asteroid at time t."""
    wo = model.spin_rate
    theta = model.nutation
    arg = model.precession_rate * t + model.phase
    st = math.sin(theta)
    return np.array([wo * st * math.cos(arg),
                     wo * st * math.sin(arg),
                     wo * math.cos(theta)])


def propagate_asteroid_attitude(att: AsteroidAttitude, model: AsteroidModel,
                                dt: float) -> AsteroidAttitude:
    """RK4 update of the asteroid attitude quaternion over dt seconds."""
    def deriv(t, q):
        return mc.quat_derivative(q, asteroid_omega(t, model))

    q = mc.quat_normalize(mc.rk4_step(deriv, att.t, att.q, dt))
    return AsteroidAttitude(q=q, t=att.t + dt)


def _confocal_kappa(r: np.ndarray, axes: np.ndarray) -> float:
    """Largest root of sum_i r_i^2/(axes_i^2 + kappa) = 1 for an exterior point."""
    a2 = axes * axes
    r2 = r * r

    def f(kappa):
        return float(np.sum(r2 / (a2 + kappa))) - 1.0

    if f(0.0) <= 0.0:
        raise ValueError("point is on or inside the ellipsoid surface")
    hi = float(r @ r) - float(a2[2])  # f(|r|^2 - c^2) <= 0 since c is smallest
    if hi <= 0.0:
        raise ValueError("point is on or inside the ellipsoid surface")
    # Guard the sphere limit where f(hi) == 0 up to rounding.
    for _ in range(64):
        if f(hi) <= 0.0:
            break
        hi *= 1.0 + 1e-12
    else:
        raise ArithmeticError("confocal parameter bracket expansion failed")
    return brentq(f, 0.0, hi, xtol=1e-30, rtol=1e-13, maxiter=200)


def ellipsoid_gravity(r: np.ndarray, model: AsteroidModel) -> np.ndarray:
    """Gravitational attraction of the uniform ellipsoid at exterior point r.

    Returns the acceleration vector pointing toward the body, in the
    asteroid-fixed frame.  Raises ValueError for interior points.
    """
    a, b, c = model.axes
    kappa = _confocal_kappa(np.asarray(r, dtype=float), model.axes)
    gm = GRAVITATIONAL_CONSTANT * model.mass
    x, y, z = r
    ak, bk, ck = a * a + kappa, b * b + kappa, c * c + kappa
    return -gm * np.array([x * elliprd(bk, ck, ak),
                           y * elliprd(ak, ck, bk),
                           z * elliprd(ak, bk, ck)])


def ellipsoid_potential(r: np.ndarray, model: AsteroidModel) -> float:
    """Gravitational potential (negative, g = -grad V) at exterior point r."""
    a, b, c = model.axes
    kappa = _confocal_kappa(np.asarray(r, dtype=float), model.axes)
    gm = GRAVITATIONAL_CONSTANT * model.mass
    x, y, z = r
    ak, bk, ck = a * a + kappa, b * b + kappa, c * c + kappa
    quad = (x * x * elliprd(bk, ck, ak)
            + y * y * elliprd(ak, ck, bk)
            + z * z * elliprd(ak, bk, ck))
    return -gm * (1.5 * elliprf(ak, bk, ck) - 0.5 * quad)


def sphere_gravity(r: np.ndarray, mass: float) -> np.ndarray:
    """Point-mass attraction -GM r / |r|^3."""
    d2 = float(r @ r)
    if d2 == 0.0:
        raise ValueError("gravity is undefined at the body center")
    return (-GRAVITATIONAL_CONSTANT * mass / (d2 * math.sqrt(d2))) * np.asarray(r, dtype=float)


def surface_normal(point: np.ndarray, model: AsteroidModel) -> np.ndarray:
    """Outward unit normal of the ellipsoid surface at a surface point."""
    return mc.unit(np.asarray(point, dtype=float) / (model.axes * model.axes))


def sample_surface_point(rng: np.random.Generator, model: AsteroidModel) -> np.ndarray:
    """Area-uniform random point on the ellipsoid surface (rejection method)."""
    a, b, c = model.axes
    m_max = a * b  # max of the area weight over the unit sphere (c smallest)
    while True:
        n = rng.normal(size=3)
        n /= math.sqrt(float(n @ n))
        weight = math.sqrt((b * c * n[0]) ** 2 + (a * c * n[1]) ** 2
                           + (a * b * n[2]) ** 2)
        if rng.uniform(0.0, m_max) <= weight:
            return np.array([a * n[0], b * n[1], c * n[2]])


def sample_asteroid(rng: np.random.Generator,
                    ranges: AsteroidRanges | None = None) -> AsteroidModel:
    """Draw a random asteroid; b == c and a >= b by construction."""
    ranges = ranges or AsteroidRanges()
    c = rng.uniform(*ranges.c_axis)
    b = c
    a = rng.uniform(b, ranges.a_axis_max)
    density = rng.uniform(*ranges.density)
    spin = rng.uniform(*ranges.spin_rate)
    nutation = rng.uniform(*ranges.nutation)
    srp = rng.uniform(-ranges.srp_magnitude, ranges.srp_magnitude, size=3)
    phase = rng.uniform(*ranges.phase)
    return AsteroidModel(axes=np.array([a, b, c]), density=density,
                         spin_rate=spin, nutation=nutation, phase=phase,
                         srp=srp)
