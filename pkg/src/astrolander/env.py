"""Episode orchestration: initial conditions, open-loop burn, guidance steps.

An episode begins with the spacecraft hovering 0.8-1.0 km from a landing
site drawn on the ellipsoid surface, the seeker locked and its platform
attitude latched.  A 10 s open-loop burn along the boresight pair
establishes a positive closing velocity; afterwards the policy commands the
twelve thrusters once per 6 s guidance period, which the environment
integrates as three 2 s RK4 substeps of the coupled rotational/translational
dynamics while the asteroid tumbles underneath.

Rewards combine velocity-profile tracking, seeker-angle nulling, control
effort, a constant alive bonus, a terminal good-landing bonus, and a
constraint penalty (rate limit exceeded or seeker lock lost), using the
measured quantities the policy itself observes.  Ground truth is used only
for terminal landing classification and diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import mathcore as mc
from . import asteroid as ast
from . import spacecraft as sc
from . import seeker as sk
from .mathcore import cross

TRAJECTORY_COLUMNS = (
    ["t"]
    + [f"r_{c}" for c in "xyz"] + [f"v_{c}" for c in "xyz"]
    + [f"q_{i}" for i in range(4)] + [f"w_{c}" for c in "xyz"]
    + ["m"]
    + [f"obs_{i}" for i in range(sk.OBS_DIM)]
    + [f"thruster_{i}" for i in range(12)]
    + ["reward", "theta_bv", "done"]
)


@dataclass(frozen=True)
class InitialConditionRanges:
    """Sampling limits for spacecraft initial conditions."""

    range_m: tuple[float, float] = (800.0, 1000.0)
    offset_angle: tuple[float, float] = (0.0, math.radians(45.0))
    heading_error: tuple[float, float] = (0.0, math.radians(22.5))
    attitude_error: tuple[float, float] = (0.0, math.radians(11.3))
    omega: tuple[float, float] = (-0.05, 0.05)
    mass: tuple[float, float] = (450.0, 500.0)
    com_offset: tuple[float, float] = (-0.10, 0.10)


@dataclass(frozen=True)
class RewardWeights:
    """Weights of the per-step reward terms."""

    velocity: float = -0.5          # x |v_error|
    seeker: float = -0.5            # x ||(theta_u, theta_v)||
    effort: float = -0.05           # x sum(delivered thrust) / max_thrust
    alive: float = 0.01
    landing_bonus: float = 10.0
    violation_penalty: float = -50.0


@dataclass(frozen=True)
class LandingThresholds:
    """A landing is good when all three terminal limits hold."""

    miss: float = 1.0               # m
    speed: float = 0.1              # m/s
    omega: float = 0.025            # rad/s per axis


@dataclass(frozen=True)
class EpisodeConfig:
    ic: InitialConditionRanges = field(default_factory=InitialConditionRanges)
    asteroid_ranges: ast.AsteroidRanges = field(default_factory=ast.AsteroidRanges)
    adaptation: sk.AdaptationRanges = field(default_factory=sk.AdaptationRanges)
    reward: RewardWeights = field(default_factory=RewardWeights)
    good_landing: LandingThresholds = field(default_factory=LandingThresholds)
    gravity: str = "ellipsoid"                      # "ellipsoid" | "sphere"
    training_mass: tuple[float, float] = (1e10, 15e10)  # kg, sphere-gravity mode
    target_offset: float = 10.0                     # m above the site (test)
    guidance_period: float = 6.0                    # s
    dynamics_step: float = 2.0                      # s
    burn_duration: float = 10.0                     # s
    t_max: float = 6000.0                           # s
    cube_side: float = 2.0                          # m
    thrust: float = 1.0                             # N per thruster
    dry_mass: float = 400.0                         # kg
    isp: float = sc.SPECIFIC_IMPULSE
    g_ref: float = sc.G_REF
    com_drift_max: float = 0.10                     # m over a full fuel load
    hull_bound: float = 1.0                         # m, CoM containment
    torque_env: tuple[float, float, float] = (0.0, 0.0, 0.0)
    v_ref_initial: float = sk.V_REF_INITIAL
    v_ref_tau: float = sk.V_REF_TAU
    vc_filter_tau: float = 6.0
    omega_limit: float = 0.10                       # rad/s constraint
    terminal_range: float = 1.0                     # m adjusted range
    reversal_range: float = 5.0                     # m adjusted range

    def validate(self) -> list[str]:
        problems = []
        n_sub = self.guidance_period / self.dynamics_step
        if abs(n_sub - round(n_sub)) > 1e-9:
            problems.append("guidance_period must be an integer multiple of dynamics_step")
        if self.gravity not in ("ellipsoid", "sphere"):
            problems.append(f"unknown gravity mode {self.gravity!r}")
        for name in ("range_m", "offset_angle", "heading_error",
                     "attitude_error", "omega", "mass", "com_offset"):
            lo, hi = getattr(self.ic, name)
            if lo > hi:
                problems.append(f"ic.{name}: min > max")
        if self.ic.mass[0] <= self.dry_mass:
            problems.append("initial mass range must exceed dry mass")
        if self.training_mass[0] > self.training_mass[1]:
            problems.append("training_mass: min > max")
        return problems


def small_lander_config(**overrides) -> EpisodeConfig:
    """Miniature variant: 20 cm cube, 5 kg nominal mass, 10 mN thrusters."""
    base = EpisodeConfig(
        ic=InitialConditionRanges(mass=(4.5, 5.0), com_offset=(-0.01, 0.01)),
        cube_side=0.2,
        thrust=0.01,
        dry_mass=4.0,
        com_drift_max=0.01,
        hull_bound=0.1,
    )
    return replace(base, **overrides) if overrides else base


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def discretize_action(u: np.ndarray) -> np.ndarray:
    """Map policy outputs to on/off flags: strictly positive fires."""
    return np.asarray(u) > 0.0


def classify_landing(r: np.ndarray, v: np.ndarray, omega: np.ndarray,
                     target_point: np.ndarray,
                     thresholds: LandingThresholds) -> bool:
    """Good landing: terminal miss, speed, and per-axis rate all within limits."""
    miss = float(np.linalg.norm(r - target_point))
    speed = float(np.linalg.norm(v))
    return (miss <= thresholds.miss and speed <= thresholds.speed
            and float(np.max(np.abs(omega))) <= thresholds.omega)


def sample_initial_conditions(rng: np.random.Generator, cfg: EpisodeConfig,
                              model: ast.AsteroidModel, site: np.ndarray
                              ) -> sc.SpacecraftState:
    """Draw the spacecraft state of a fresh episode, in the asteroid frame at t=0.

    Position: range U[...] from the site along a direction within the offset
    cone about the site's outward radial; velocity within the heading-error
    cone about the line of sight; attitude with body -z within the
    attitude-error cone of the line of sight and random roll.
    """
    radial = mc.unit(site)
    for _ in range(100):
        away = mc.cone_direction(rng, radial, *cfg.ic.offset_angle)
        rng_m = rng.uniform(*cfg.ic.range_m)
        r = site + rng_m * away
        if float(np.sum((r / model.axes) ** 2)) > 1.0:
            break
    else:
        raise RuntimeError("could not sample an exterior initial position")

    los = -away  # unit vector from spacecraft toward the site
    speed = rng.uniform(0.05, 0.10)
    v = speed * mc.cone_direction(rng, los, *cfg.ic.heading_error)

    minus_z = mc.cone_direction(rng, los, *cfg.ic.attitude_error)
    roll = rng.uniform(-math.pi, math.pi)
    z_axis = -minus_z
    base = mc.rotation_between(mc.vec3(0.0, 0.0, 1.0), z_axis)
    cr, sr = math.cos(roll), math.sin(roll)
    x_axis = cr * (base @ mc.vec3(1.0, 0.0, 0.0)) + sr * (base @ mc.vec3(0.0, 1.0, 0.0))
    y_axis = cross(z_axis, x_axis)
    bn = np.vstack([x_axis, y_axis, z_axis])  # rows: body axes in frame coords
    q = mc.dcm_to_quat(bn)

    omega = rng.uniform(*cfg.ic.omega, size=3)
    mass = rng.uniform(*cfg.ic.mass)
    r_com = rng.uniform(*cfg.ic.com_offset, size=3)
    s = cfg.cube_side
    return sc.SpacecraftState(r=r, v=v, q=q, omega=omega, mass=mass,
                              r_com=r_com, inertia=sc.box_inertia(mass, s, s, s))


class LandingEnv:
    """One close-proximity landing episode at a time; owns all episode state."""

    def __init__(self, cfg: EpisodeConfig | None = None):
        self.cfg = cfg or EpisodeConfig()
        self._base_thrusters = sc.cube_thrusters(self.cfg.cube_side, self.cfg.thrust)
        self._recording = False
        self.trajectory: list[list[float]] = []
        self._active = False

    # -- episode setup ------------------------------------------------------

    def enable_recording(self) -> None:
        self._recording = True

    def reset(self, rng: np.random.Generator,
              initial_asteroid_attitude: np.ndarray | None = None) -> np.ndarray:
        cfg = self.cfg
        self.rng = rng
        self.asteroid = ast.sample_asteroid(rng, cfg.asteroid_ranges)
        if cfg.gravity == "sphere":
            self.gravity_mass = rng.uniform(*cfg.training_mass)
        else:
            self.gravity_mass = self.asteroid.mass

        self.site = ast.sample_surface_point(rng, self.asteroid)
        normal = ast.surface_normal(self.site, self.asteroid)
        self.target_point = self.site + cfg.target_offset * normal

        self.state = sample_initial_conditions(rng, cfg, self.asteroid, self.site)
        self.thrusters = sc.apply_actuator_failure(
            self._base_thrusters, rng, cfg.adaptation.p_fail,
            *cfg.adaptation.failure_scale)
        bias = sk.sample_sensor_bias(rng, cfg.adaptation)

        drift_dir = rng.normal(size=3)
        drift_dir /= math.sqrt(float(drift_dir @ drift_dir))
        excursion = rng.uniform(0.0, cfg.com_drift_max)
        fuel_load = self.state.mass - cfg.dry_mass
        self.fuel = sc.FuelModel(r_com0=self.state.r_com.copy(),
                                 com_rate=excursion * drift_dir / fuel_load,
                                 cube_side=cfg.cube_side,
                                 hull_bound=cfg.hull_bound)

        self.t = 0.0
        self.q_asteroid = (mc.IDENTITY_QUAT.copy()
                           if initial_asteroid_attitude is None
                           else mc.quat_normalize(initial_asteroid_attitude))
        if initial_asteroid_attitude is not None:
            # Re-express the inertial-frame attitude for the rotated scene so
            # the physical body orientation relative to the asteroid is kept.
            self.state.q = mc.quat_normalize(
                mc.quat_multiply(self.q_asteroid, self.state.q))

        self.seeker = sk.SeekerModel(self.state.q, bias, cfg.target_offset,
                                     cfg.v_ref_initial, cfg.v_ref_tau,
                                     cfg.vc_filter_tau)
        self.seeker.seed_range(self._los_inertial())

        self.initial_mass = self.state.mass
        self._initial_velocity = self.state.v.copy()
        self.burned = 0.0
        self.exhausted = False
        self.steps = 0
        self._last_adjusted: float | None = None
        self._done_info: dict | None = None
        self._active = True
        self.trajectory = []

        burn_cmd = np.zeros(12, dtype=bool)
        for i in sc.MINUS_Z_TRANSLATION_PAIR:
            burn_cmd[i] = True
        n_sub = int(round(cfg.burn_duration / cfg.dynamics_step))
        for _ in range(n_sub):
            self._substep(burn_cmd)

        meas = self.seeker.measure(self._los_inertial(), self.state.q,
                                   self.state.omega, rng)
        obs = self.seeker.build_observation(meas, cfg.burn_duration)
        self._last_adjusted = meas.range_adjusted
        self._last_obs = obs
        self._last_meas = meas
        return obs.normalized()

    # -- frame helpers ------------------------------------------------------

    def _los_inertial(self) -> np.ndarray:
        """Inertial-frame relative position of the site (target minus spacecraft)."""
        rel_a = self.site - self.state.r
        return mc.quat_to_dcm(self.q_asteroid).T @ rel_a

    def _gravity(self, r: np.ndarray) -> np.ndarray:
        if self.cfg.gravity == "sphere":
            return ast.sphere_gravity(r, self.gravity_mass)
        return ast.ellipsoid_gravity(r, self.asteroid)

    def _inside_surface(self, r: np.ndarray) -> bool:
        return float(np.sum((r / self.asteroid.axes) ** 2)) <= 1.0

    # -- dynamics -----------------------------------------------------------

    def _substep(self, cmd: np.ndarray) -> None:
        """Propagate one dynamics step with the thruster command held."""
        cfg = self.cfg
        st = self.state
        if self.exhausted:
            cmd = np.zeros(12, dtype=bool)
        thrusts = self.thrusters.thrusts(cmd)
        f_b, l_b = sc.body_force_torque(cmd, self.thrusters, st.r_com)
        mdot = sc.mass_flow(thrusts, cfg.isp, cfg.g_ref)
        self._step_thrusts = thrusts

        inertia = st.inertia
        inertia_inv = np.linalg.inv(inertia)
        inertia_rate = st.inertia_rate
        a_env = self.asteroid.srp
        l_env = np.asarray(cfg.torque_env, dtype=float)
        model = self.asteroid
        has_thrust = bool(np.any(thrusts))

        def deriv(t, y):
            r, v, q, w = y[0:3], y[3:6], y[6:10], y[10:13]
            qa = y[14:18]
            qn = q / math.sqrt(float(q @ q))
            qan = qa / math.sqrt(float(qa @ qa))
            if has_thrust:
                f_n = mc.quat_to_dcm(qn).T @ f_b
                f_a = mc.quat_to_dcm(qan) @ f_n
            else:
                f_a = np.zeros(3)
            w_a = ast.asteroid_omega(t, model)
            vdot = sc.translational_dynamics(r, v, f_a, y[13], a_env,
                                             self._gravity(r), w_a)
            # same as spacecraft.rotational_dynamics with the inverse hoisted
            wdot = inertia_inv @ (-cross(w, inertia @ w) - inertia_rate @ w
                                  + l_b + l_env)
            out = np.empty(18)
            out[0:3] = v
            out[3:6] = vdot
            out[6:10] = mc.quat_derivative(qn, w)
            out[10:13] = wdot
            out[13] = mdot
            out[14:18] = mc.quat_derivative(qan, w_a)
            return out

        y = np.empty(18)
        y[0:3], y[3:6], y[6:10] = st.r, st.v, st.q
        y[10:13], y[13], y[14:18] = st.omega, st.mass, self.q_asteroid

        y = mc.rk4_step(deriv, self.t, y, cfg.dynamics_step)
        self.t += cfg.dynamics_step

        m_prev = st.mass
        st.r, st.v = y[0:3], y[3:6]
        st.q = mc.quat_normalize(y[6:10])
        st.omega = y[10:13]
        st.mass = float(y[13])
        self.q_asteroid = mc.quat_normalize(y[14:18])
        if st.mass <= cfg.dry_mass:
            st.mass = cfg.dry_mass
            self.exhausted = True
        self.burned += max(0.0, m_prev - st.mass)
        st.r_com, st.inertia, st.inertia_rate = sc.fuel_update(
            self.fuel, st.mass, self.burned, st.inertia, cfg.dynamics_step)

    # -- guidance step ------------------------------------------------------

    def step(self, action: np.ndarray) -> StepResult:
        if not self._active:
            raise RuntimeError("episode is done; call reset() first")
        cfg = self.cfg
        flags = discretize_action(np.asarray(action, dtype=float))
        n_sub = int(round(cfg.guidance_period / cfg.dynamics_step))

        reason = None
        try:
            for _ in range(n_sub):
                self._substep(flags)
                if cfg.gravity == "ellipsoid" and self._inside_surface(self.state.r):
                    reason = "impact"
                    break
        except ValueError:
            # gravity evaluated on/inside the surface mid-step
            reason = "impact"
        except mc.PropagationError as exc:
            return self._finish("aborted", cfg.reward.violation_penalty,
                                diagnostic=str(exc))

        st = self.state
        meas = self.seeker.measure(self._los_inertial(), st.q, st.omega, self.rng)
        obs = self.seeker.build_observation(meas, cfg.guidance_period)
        self._last_obs = obs
        self._last_meas = meas

        w = cfg.reward
        s_error = math.hypot(meas.theta_u, meas.theta_v)
        effort = float(np.sum(self._step_thrusts)) / self.thrusters.max_thrust
        reward = (w.velocity * abs(obs.v_error) + w.seeker * s_error
                  + w.effort * effort + w.alive)

        if reason is None:
            if float(np.max(np.abs(st.omega))) > cfg.omega_limit:
                reason = "rate_violation"
            elif not meas.locked:
                reason = "seeker_lost"
        if reason in ("impact", "rate_violation", "seeker_lost"):
            return self._finish(reason, reward + w.violation_penalty, obs=obs)

        landed = meas.range_adjusted <= cfg.terminal_range
        if (not landed and self._last_adjusted is not None
                and meas.range_adjusted < cfg.reversal_range
                and meas.range_adjusted > self._last_adjusted):
            landed = True
        self._last_adjusted = meas.range_adjusted

        if landed:
            good = classify_landing(st.r, st.v, st.omega, self.target_point,
                                    cfg.good_landing)
            if good:
                reward += w.landing_bonus
            return self._finish("landed", reward, obs=obs, good=good)

        if self.t >= cfg.t_max:
            return self._finish("timeout", reward, obs=obs)

        self.steps += 1
        self._record(flags, reward, done=False)
        return StepResult(observation=obs.normalized(), reward=reward,
                          done=False, info=self._info())

    def _finish(self, reason: str, reward: float, obs=None, good: bool = False,
                diagnostic: str | None = None) -> StepResult:
        self._active = False
        self.steps += 1
        st = self.state
        miss = float(np.linalg.norm(st.r - self.target_point))
        self._done_info = {
            "reason": reason,
            "good": bool(good),
            "miss": miss,
            "speed": float(np.linalg.norm(st.v)),
            "max_omega": float(np.max(np.abs(st.omega))),
            "fuel": self.initial_mass - st.mass,
            "steps": self.steps,
            "t": self.t,
            "diagnostic": diagnostic,
        }
        obs_vec = (obs.normalized() if obs is not None
                   else np.zeros(sk.OBS_DIM))
        flags = getattr(self, "_step_thrusts", np.zeros(12)) > 0.0
        self._record(flags, reward, done=True)
        info = self._info()
        info.update(self._done_info)
        return StepResult(observation=obs_vec, reward=float(reward),
                          done=True, info=info)

    # -- reporting ----------------------------------------------------------

    def episode_summary(self) -> dict:
        if self._done_info is None:
            raise RuntimeError("episode has not terminated")
        return dict(self._done_info)

    def theta_bv(self) -> float:
        """Angle between the body -z axis and the velocity, asteroid frame."""
        st = self.state
        speed = float(np.linalg.norm(st.v))
        if speed < 1e-12:
            return 0.0
        minus_z_n = mc.quat_to_dcm(st.q).T @ mc.vec3(0.0, 0.0, -1.0)
        minus_z_a = mc.quat_to_dcm(self.q_asteroid) @ minus_z_n
        c = float(minus_z_a @ st.v) / speed
        return math.acos(max(-1.0, min(1.0, c)))

    def _info(self) -> dict:
        st = self.state
        return {
            "t": self.t,
            "r": st.r.copy(),
            "v": st.v.copy(),
            "omega": st.omega.copy(),
            "mass": st.mass,
            "range_adjusted": self._last_meas.range_adjusted,
            "true_range": self._last_meas.true_range,
            "v_closing": self._last_obs.v_closing,
            "v_error": self._last_obs.v_error,
        }

    def _record(self, flags: np.ndarray, reward: float, done: bool) -> None:
        if not self._recording:
            return
        st = self.state
        row = ([self.t] + list(st.r) + list(st.v) + list(st.q) + list(st.omega)
               + [st.mass] + list(self._last_obs.normalized())
               + [float(f) for f in flags] + [reward, self.theta_bv(),
                                              float(done)])
        self.trajectory.append(row)
