"""Batch harness: config ingestion, training, Monte Carlo evaluation, checks.

Configs are JSON files whose sections mirror the dataclasses in env/ppo;
unspecified fields keep the nominal values.  All tabular outputs are CSV
with a header row, reproducible byte-for-byte from (config, seed,
checkpoint).  Evaluation episodes fan out over a process pool with
per-episode seeds derived as seed XOR episode-index and are merged in index
order, so worker count never changes results.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from functools import partial
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import asteroid, env, mathcore as mc, neural, ppo, seeker, spacecraft
from .env import EpisodeConfig, LandingEnv, TRAJECTORY_COLUMNS
from .neural import (CheckpointError, GaussianPolicy, ValueFunction,
                     load_checkpoint, save_checkpoint)
from .ppo import OptimizerState

OUTPUT_DIR_ENV_VAR = "ASTROLANDER_OUTPUT_DIR"

TRAINING_LOG_COLUMNS = [
    "update", "episodes", "steps", "mean_reward", "min_reward", "max_reward",
    "mean_miss", "max_miss", "mean_speed", "good_rate", "kl", "kl_exact",
    "clip_eps", "lr_scale", "policy_loss", "value_loss", "logstd_mean",
]

EVAL_ROW_COLUMNS = ["episode", "seed", "miss", "speed", "max_omega", "fuel",
                    "good", "reason", "steps", "duration"]


class ConfigError(ValueError):
    """Raised for unreadable or inconsistent run configuration."""


@dataclass(frozen=True)
class TrainingSettings:
    updates: int = 100
    episodes_per_batch: int = 30
    checkpoint_every: int = 25
    workers: int = 1
    gravity: str = "sphere"         # per-paper simplification during training
    target_offset: float = 0.0      # optimization targets the site directly
    init_std: float = 0.5           # initial exploration standard deviation
    init_action_bias: float = 0.0   # initial output bias (negative = coast)
    init_boresight_bias: float = 0.0  # extra bias on the -z translation pair


@dataclass(frozen=True)
class EvalSettings:
    episodes: int = 500
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    variant: str = "spacecraft"     # or "small_lander"
    output_dir: str = "runs/default"
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    ppo: OptimizerState = field(default_factory=OptimizerState)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def training_episode_config(self) -> EpisodeConfig:
        """Episode config with the training-time gravity/target overrides."""
        return replace(self.episode, gravity=self.training.gravity,
                       target_offset=self.training.target_offset)

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_DIR_ENV_VAR, self.output_dir))


def _merge_dataclass(obj, overrides: dict, path: str):
    """Recursively apply a dict of overrides to a (possibly nested) dataclass."""
    if not isinstance(overrides, dict):
        raise ConfigError(f"{path}: expected an object")
    kwargs = {}
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, val in overrides.items():
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown field")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(val, dict):
            kwargs[key] = _merge_dataclass(current, val, f"{path}.{key}")
        elif isinstance(current, tuple) and isinstance(val, list):
            kwargs[key] = tuple(val)
        else:
            kwargs[key] = val
    return replace(obj, **kwargs)


def load_config(path) -> RunConfig:
    """Read a JSON run config, apply it over the variant defaults, validate."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw, str(path))


def config_from_dict(raw: dict, origin: str = "<dict>") -> RunConfig:
    variant = raw.get("variant", "spacecraft")
    if variant == "small_lander":
        base_episode = env.small_lander_config()
    elif variant == "spacecraft":
        base_episode = EpisodeConfig()
    else:
        raise ConfigError(f"{origin}: unknown variant {variant!r}")

    cfg = RunConfig(variant=variant, episode=base_episode)
    top = {k: v for k, v in raw.items() if k != "variant"}
    cfg = _merge_dataclass(cfg, top, origin)
    problems = cfg.episode.validate()
    a = cfg.episode.adaptation
    for name in ("failure_scale", "range_bias", "angle_bias",
                 "angle_noise_sd", "attitude_bias", "rate_bias"):
        lo, hi = getattr(a, name)
        if lo > hi:
            problems.append(f"adaptation.{name}: min > max")
    if not 0.0 <= a.p_fail <= 1.0:
        problems.append("adaptation.p_fail must be within [0, 1]")
    if cfg.training.updates < 0 or cfg.training.episodes_per_batch < 1:
        problems.append("training: updates must be >= 0, episodes_per_batch >= 1")
    if problems:
        raise ConfigError(f"{origin}: " + "; ".join(problems))
    return cfg


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Rollout collection (training)
# ---------------------------------------------------------------------------

def _policy_blob(policy: GaussianPolicy) -> dict:
    return {"sizes": policy.net.sizes,
            "params": {k: v for k, v in policy.net.p.items()},
            "logstd": policy.logstd}


def _value_blob(value: ValueFunction) -> dict:
    return {"sizes": value.net.sizes,
            "params": {k: v for k, v in value.net.p.items()},
            "mean": value.out_mean, "std": value.out_std}


def _rebuild_policy(blob: dict) -> GaussianPolicy:
    net = neural.GruNet.__new__(neural.GruNet)
    net.sizes = tuple(blob["sizes"])
    net.p = dict(blob["params"])
    return GaussianPolicy(net=net, logstd=blob["logstd"])


def _rebuild_value(blob: dict) -> ValueFunction:
    net = neural.GruNet.__new__(neural.GruNet)
    net.sizes = tuple(blob["sizes"])
    net.p = dict(blob["params"])
    return ValueFunction(net=net, out_mean=blob["mean"], out_std=blob["std"])


def _train_episode_task(policy_blob, value_blob, ep_cfg, seed_key):
    policy = _rebuild_policy(policy_blob)
    value = _rebuild_value(value_blob)
    rng = mc.make_rng(*seed_key)
    episode = ppo.run_episode(LandingEnv(ep_cfg), policy, value, rng,
                              stochastic=True, seed=seed_key[-1])
    return episode


def collect_training_batch(cfg: RunConfig, policy: GaussianPolicy,
                           value: ValueFunction, update_idx: int,
                           pool=None) -> ppo.RolloutBatch:
    """One batch of episodes with per-episode streams (seed, update, index)."""
    ep_cfg = cfg.training_episode_config()
    n = cfg.training.episodes_per_batch
    keys = [(cfg.seed, update_idx, i) for i in range(n)]
    if pool is None:
        episodes = [_train_episode_task(_policy_blob(policy),
                                        _value_blob(value), ep_cfg, key)
                    for key in keys]
    else:
        task = partial(_train_episode_task, _policy_blob(policy),
                       _value_blob(value), ep_cfg)
        episodes = pool.map(task, keys)
    return ppo.RolloutBatch(episodes, logstd=policy.logstd.copy())


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def run_train(cfg: RunConfig, resume: str | None = None,
              plots: bool = False, progress=print) -> dict:
    """Train a policy; returns paths of the final checkpoint and training log."""
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    log_path = out / "training_log.csv"

    if resume is not None:
        state = load_checkpoint(resume)
        policy, value = state["policy"], state["value"]
        opt = replace(cfg.ppo)
        opt.ensure_optimizers(policy, value)
        opt.adam_policy.load_state_dict(state["opt_state"]["policy"])
        opt.adam_value.load_state_dict(state["opt_state"]["value"])
        opt.load_scalar_state(state["opt_state"]["scalars"])
        start_update = state["update_count"]
        log_mode = "a" if log_path.exists() else "w"
    else:
        policy = GaussianPolicy.create(seeker.OBS_DIM, 12,
                                       mc.make_rng(cfg.seed, 0),
                                       init_std=cfg.training.init_std)
        policy.net.p["b4"] += cfg.training.init_action_bias
        for idx in spacecraft.MINUS_Z_TRANSLATION_PAIR:
            policy.net.p["b4"][idx] += cfg.training.init_boresight_bias
        value = ValueFunction.create(seeker.OBS_DIM, mc.make_rng(cfg.seed, 1))
        opt = replace(cfg.ppo)
        opt.ensure_optimizers(policy, value)
        start_update = 0
        log_mode = "w"

    with open(out / "resolved_config.json", "w") as f:
        json.dump(config_to_dict(cfg), f, indent=2, sort_keys=True)

    ctx = get_context("spawn" if os.name == "nt" else "fork")
    pool = (ctx.Pool(cfg.training.workers)
            if cfg.training.workers > 1 else None)
    t0 = time.time()
    try:
        with open(log_path, log_mode, newline="") as logf:
            writer = csv.writer(logf)
            if log_mode == "w":
                writer.writerow(TRAINING_LOG_COLUMNS)
            for update_idx in range(start_update, cfg.training.updates):
                batch = collect_training_batch(cfg, policy, value, update_idx,
                                               pool)
                diag = ppo.update(batch, policy, value, opt)
                row = [update_idx, len(batch.episodes), batch.n_steps,
                       diag["mean_reward"], diag["min_reward"],
                       diag["max_reward"], diag["mean_miss"], diag["max_miss"],
                       diag["mean_speed"], diag["good_rate"], diag["kl"],
                       diag["kl_exact"], diag["clip_eps"], opt.lr_scale,
                       diag["policy_loss"], diag["value_loss"],
                       diag["logstd_mean"]]
                writer.writerow(row)
                logf.flush()
                if progress and (update_idx % 10 == 0
                                 or update_idx == cfg.training.updates - 1):
                    progress(f"update {update_idx}: reward "
                             f"{diag['mean_reward']:.2f} good "
                             f"{diag['good_rate']:.2f} kl "
                             f"{diag['kl_exact']:.5f} "
                             f"[{time.time() - t0:.0f}s]")
                done_count = update_idx + 1
                if (done_count % cfg.training.checkpoint_every == 0
                        or done_count == cfg.training.updates):
                    _save_training_checkpoint(
                        ckpt_dir / f"ckpt_{done_count:06d}.npz",
                        policy, value, opt, done_count)
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    final = ckpt_dir / "final.npz"
    _save_training_checkpoint(final, policy, value, opt, cfg.training.updates)
    if plots:
        emit_learning_curves(log_path, out / "learning_curves.svg")
    return {"checkpoint": final, "log": log_path}


def _save_training_checkpoint(path, policy, value, opt: OptimizerState,
                              update_count: int) -> None:
    save_checkpoint(path, policy, value,
                    {"policy": opt.adam_policy.state_dict(),
                     "value": opt.adam_value.state_dict(),
                     "scalars": opt.scalar_state()},
                    update_count)


def load_policy(checkpoint_path) -> tuple[GaussianPolicy, ValueFunction, dict]:
    state = load_checkpoint(checkpoint_path)
    return state["policy"], state["value"], state


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    rows: list[dict]
    aggregates: dict

    @property
    def good_percent(self) -> float:
        return self.aggregates.get("good_percent", math.nan)


def _eval_episode_task(policy_blob, ep_cfg, seed: int) -> dict:
    policy = _rebuild_policy(policy_blob)
    e = LandingEnv(ep_cfg)
    rng = mc.make_rng(seed)
    obs = e.reset(rng)
    h = policy.net.zero_hidden()
    done = False
    while not done:
        u, h = policy.mean_action(obs, h)
        result = e.step(u)
        obs = result.observation
        done = result.done
    summary = e.episode_summary()
    summary["seed"] = seed
    return summary


def _aggregate(rows: list[dict]) -> dict:
    agg: dict = {"episodes": len(rows)}
    if not rows:
        agg["good_percent"] = math.nan
        return agg
    for key in ("miss", "speed", "max_omega", "fuel"):
        vals = np.array([r[key] for r in rows])
        agg[f"{key}_mean"] = float(vals.mean())
        agg[f"{key}_std"] = float(vals.std())
        agg[f"{key}_max"] = float(vals.max())
    agg["good_percent"] = 100.0 * float(np.mean([r["good"] for r in rows]))
    return agg


def run_eval(cfg: RunConfig, checkpoint_path, n_episodes: int | None = None,
             progress=print) -> EvalReport:
    """Monte Carlo evaluation of a checkpoint with exploration off."""
    policy, _, _ = load_policy(checkpoint_path)
    n = cfg.eval.episodes if n_episodes is None else n_episodes
    seeds = [cfg.seed ^ i for i in range(n)]
    blob = _policy_blob(policy)
    task = partial(_eval_episode_task, blob, cfg.episode)
    if cfg.eval.workers > 1 and n > 1:
        ctx = get_context("spawn" if os.name == "nt" else "fork")
        with ctx.Pool(cfg.eval.workers) as pool:
            summaries = pool.map(task, seeds)
    else:
        summaries = [task(s) for s in seeds]

    rows = []
    for i, s in enumerate(summaries):
        rows.append({"episode": i, "seed": s["seed"], "miss": s["miss"],
                     "speed": s["speed"], "max_omega": s["max_omega"],
                     "fuel": s["fuel"], "good": bool(s["good"]),
                     "reason": s["reason"], "steps": s["steps"], "duration": s["t"]})
    report = EvalReport(rows=rows, aggregates=_aggregate(rows))

    out = cfg.resolved_output_dir()
    _write_csv(out / "eval_episodes.csv", EVAL_ROW_COLUMNS,
               [[r[c] for c in EVAL_ROW_COLUMNS] for r in rows])
    agg_rows = [[k, repr(v)] for k, v in sorted(report.aggregates.items())]
    _write_csv(out / "eval_summary.csv", ["metric", "value"], agg_rows)
    if progress:
        progress(f"eval: {len(rows)} episodes, good "
                 f"{report.aggregates['good_percent']:.2f}%")
    return report


# ---------------------------------------------------------------------------
# Single-episode simulation
# ---------------------------------------------------------------------------

def run_simulate(cfg: RunConfig, checkpoint_path, seed: int,
                 plots: bool = False) -> dict:
    """Full-resolution single-episode log under the deployed (mean) policy."""
    policy, _, _ = load_policy(checkpoint_path)
    e = LandingEnv(cfg.episode)
    e.enable_recording()
    rng = mc.make_rng(seed)
    obs = e.reset(rng)
    h = policy.net.zero_hidden()
    done = False
    while not done:
        u, h = policy.mean_action(obs, h)
        result = e.step(u)
        obs = result.observation
        done = result.done

    out = cfg.resolved_output_dir()
    traj_path = out / f"trajectory_{seed}.csv"
    _write_csv(traj_path, TRAJECTORY_COLUMNS,
               [[repr(float(x)) for x in row] for row in e.trajectory])
    if plots:
        emit_trajectory_plot(traj_path, out / f"trajectory_{seed}.svg")
    return {"trajectory": traj_path, "summary": e.episode_summary()}


# ---------------------------------------------------------------------------
# Validation oracle suite
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    measured: float
    tolerance: float
    passed: bool


def run_validate(cfg: RunConfig | None = None) -> list[CheckResult]:
    """Execute the physics/gradient oracle suite; all checks must pass."""
    del cfg  # checks are config-independent
    checks: list[CheckResult] = []

    def add(name, measured, tol):
        checks.append(CheckResult(name, float(measured), tol,
                                  bool(measured < tol)))

    rng = mc.make_rng(20240901)

    # Sphere-limit gravity oracle
    radius, rho = 230.0, 2100.0
    sphere = asteroid.AsteroidModel(axes=np.array([radius] * 3), density=rho,
                                    spin_rate=0.0, nutation=0.0, phase=0.0,
                                    srp=np.zeros(3))
    worst = 0.0
    for _ in range(100):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        point = rng.uniform(1.05 * radius, 20 * radius) * direction
        g_ell = asteroid.ellipsoid_gravity(point, sphere)
        g_sph = asteroid.sphere_gravity(point, sphere.mass)
        worst = max(worst, np.linalg.norm(g_ell - g_sph)
                    / np.linalg.norm(g_sph))
    add("gravity_sphere_limit", worst, 1e-9)

    tri = asteroid.AsteroidModel(axes=np.array([300.0, 150.0, 150.0]),
                                 density=2000.0, spin_rate=0.0, nutation=0.0,
                                 phase=0.0, srp=np.zeros(3))
    far = np.array([0.0, 0.0, 100.0 * 300.0])
    rel = (np.linalg.norm(asteroid.ellipsoid_gravity(far, tri)
                          - asteroid.sphere_gravity(far, tri.mass))
           / np.linalg.norm(asteroid.sphere_gravity(far, tri.mass)))
    add("gravity_far_field", rel, 1e-3)

    h = 0.1
    worst = 0.0
    for _ in range(10):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        point = rng.uniform(400.0, 2000.0) * direction
        div = 0.0
        for i in range(3):
            step = np.zeros(3)
            step[i] = h
            div += (asteroid.ellipsoid_gravity(point + step, tri)[i]
                    - asteroid.ellipsoid_gravity(point - step, tri)[i]) / (2 * h)
        gmag = np.linalg.norm(asteroid.ellipsoid_gravity(point, tri))
        worst = max(worst, abs(div) / (gmag / h))
    add("gravity_divergence", worst, 1e-6)

    # Rotating-frame circular balance
    gm = asteroid.GRAVITATIONAL_CONSTANT * 4e10
    point = np.array([500.0, 0.0, 0.0])
    w_bal = math.sqrt(gm / 500.0 ** 3)
    vdot = spacecraft.translational_dynamics(
        point, np.zeros(3), np.zeros(3), 500.0, np.zeros(3),
        asteroid.sphere_gravity(point, 4e10), np.array([0.0, 0.0, w_bal]))
    add("circular_balance", np.linalg.norm(vdot), 1e-9)

    # Torque-free momentum conservation over 1000 s at dt = 2 s
    inertia = np.diag([8.0, 13.0, 13.0])
    q = mc.quat_normalize(np.array([0.9, 0.2, -0.3, 0.1]))
    w0 = np.array([0.02, -0.014, 0.008])

    def tumble(t, y):
        wdot = spacecraft.rotational_dynamics(y[4:7], inertia,
                                              np.zeros((3, 3)), np.zeros(3),
                                              np.zeros(3))
        qn = y[0:4] / math.sqrt(float(y[0:4] @ y[0:4]))
        return np.concatenate([mc.quat_derivative(qn, y[4:7]), wdot])

    y = np.concatenate([q, w0])
    h_start = mc.quat_to_dcm(q).T @ (inertia @ w0)
    for k in range(500):
        y = mc.rk4_step(tumble, 2.0 * k, y, 2.0)
        y[0:4] = mc.quat_normalize(y[0:4])
    h_end = mc.quat_to_dcm(y[0:4]).T @ (inertia @ y[4:7])
    add("momentum_conservation",
        np.linalg.norm(h_end - h_start) / np.linalg.norm(h_start), 1e-5)

    # Seeker projection against a brute-force oracle
    worst = 0.0
    for _ in range(50):
        q0 = mc.quat_normalize(rng.normal(size=4))
        los = rng.normal(size=3) * rng.uniform(1.0, 1e4)
        tu, tv = seeker.seeker_angles(los, q0)
        lam = mc.quat_to_dcm(q0) @ (los / np.linalg.norm(los))
        worst = max(worst, abs(tu - math.asin(lam[0])),
                    abs(tv - math.asin(lam[1])))
    add("seeker_projection", worst, 1e-12)

    # RK4 local truncation order: halving dt scales the one-step
    # xdot = x error by ~2^5
    def growth(t, y):
        return y

    def one_step_err(dt):
        return abs(mc.rk4_step(growth, 0.0, np.array([1.0]), dt)[0]
                   - math.exp(dt))

    ratio = one_step_err(0.2) / one_step_err(0.1)
    add("rk4_order_ratio_error", abs(ratio - 32.0), 0.2 * 32.0)

    # Gradient checks on reduced networks
    checks.extend(_gradient_checks())

    return checks


def _gradient_checks() -> list[CheckResult]:
    rng = mc.make_rng(99)
    policy = GaussianPolicy.create(3, 2, rng)
    policy.net.p["W4"] *= 100.0  # undo the small output gain for strong signal
    value = ValueFunction(net=neural.GruNet(neural.value_sizes(3), rng,
                                            out_gain=1.0))
    episodes = []
    for t_len in (5, 8, 3):
        obs = rng.normal(size=(t_len, 3))
        actions = rng.normal(size=(t_len, 2))
        episodes.append(ppo.EpisodeRollout(
            obs=obs, actions=actions,
            logps=neural.gaussian_logp(actions, 0.9 * actions,
                                       np.zeros(2)),
            rewards=rng.normal(size=t_len), values=0.1 * rng.normal(size=t_len),
            policy_hidden=np.zeros((t_len, policy.net.hidden_dim)),
            value_hidden=np.zeros((t_len, value.net.hidden_dim)),
            summary={}, means=0.9 * actions))
    batch = ppo.RolloutBatch(episodes, logstd=np.zeros(2))
    data = batch.padded()
    returns, advantages, _ = ppo.compute_advantages(batch, 0.99)
    data["returns"] = returns
    data["advantages"] = advantages

    # eps = 0.5 keeps the finite-difference probes away from the clip kink
    _, grads, _ = ppo.policy_surrogate(policy, data, 0.5, trunc=None)
    params = {**policy.net.p, "logstd": policy.logstd}
    err_policy = ppo.gradient_check(
        params,
        lambda: ppo.policy_surrogate(policy, data, 0.5, trunc=None,
                                     compute_grads=False)[0],
        grads, mc.make_rng(11), n_probes=100)
    _, gv = ppo.value_objective(value, data, trunc=None)
    err_value = ppo.gradient_check(
        value.p,
        lambda: ppo.value_objective(value, data, trunc=None,
                                    compute_grads=False)[0],
        gv, mc.make_rng(12), n_probes=100)
    return [CheckResult("gradient_check_policy", float(err_policy), 1e-4,
                        bool(err_policy < 1e-4)),
            CheckResult("gradient_check_value", float(err_value), 1e-4,
                        bool(err_value < 1e-4))]


# ---------------------------------------------------------------------------
# Config serialization and optional plots
# ---------------------------------------------------------------------------

def config_to_dict(cfg: RunConfig) -> dict:
    def conv(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: conv(getattr(obj, f.name))
                    for f in dataclasses.fields(obj)
                    if f.name not in ("adam_policy", "adam_value")}
        if isinstance(obj, tuple):
            return list(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        return obj

    return conv(cfg)


def emit_learning_curves(log_path, out_path) -> None:
    """Reward / terminal-miss / terminal-speed curves from a training log."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = list(csv.DictReader(open(log_path)))
    if not rows:
        return
    upd = [int(r["update"]) for r in rows]
    fig, axes = plt.subplots(3, 1, figsize=(8, 10), sharex=True)
    axes[0].plot(upd, [float(r["mean_reward"]) for r in rows], label="mean")
    axes[0].plot(upd, [float(r["min_reward"]) for r in rows], alpha=0.5,
                 label="min")
    axes[0].plot(upd, [float(r["max_reward"]) for r in rows], alpha=0.5,
                 label="max")
    axes[0].set_ylabel("batch reward")
    axes[0].legend()
    axes[1].semilogy(upd, [max(float(r["mean_miss"]), 1e-3) for r in rows])
    axes[1].set_ylabel("terminal miss (m)")
    axes[2].semilogy(upd, [max(float(r["mean_speed"]), 1e-4) for r in rows])
    axes[2].set_ylabel("terminal speed (m/s)")
    axes[2].set_xlabel("batch update")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def emit_trajectory_plot(traj_path, out_path) -> None:
    """Position, pointing-angle, and thrust traces of one episode."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = list(csv.DictReader(open(traj_path)))
    if not rows:
        return
    t = [float(r["t"]) for r in rows]
    fig, axes = plt.subplots(4, 1, figsize=(8, 12), sharex=True)
    for c in "xyz":
        axes[0].plot(t, [float(r[f"r_{c}"]) for r in rows], label=c)
    axes[0].set_ylabel("position (m)")
    axes[0].legend()
    for c in "xyz":
        axes[1].plot(t, [float(r[f"v_{c}"]) for r in rows], label=c)
    axes[1].set_ylabel("velocity (m/s)")
    axes[2].plot(t, [float(r["theta_bv"]) for r in rows])
    axes[2].set_ylabel("theta_bv (rad)")
    axes[3].plot(t, [sum(float(r[f"thruster_{i}"]) for i in range(12))
                     for r in rows])
    axes[3].set_ylabel("thrusters firing")
    axes[3].set_xlabel("t (s)")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
