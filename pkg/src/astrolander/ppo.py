"""Recurrent proximal policy optimization on 30-episode rollout batches.

Advantages are empirical discounted returns minus a recurrent value-function
baseline, normalized per batch.  The policy maximizes the clipped surrogate

    J = E[ min(p A, clip(p, 1 - eps, 1 + eps) A) ],   p = exp(logp - logp_old)

by adaptive-moment gradient ascent; the clip parameter eps is adjusted after
every update to keep the measured KL divergence between consecutive policies
near the target (halved above 2x the target with epoch early-stop, grown
below half the target).  The value function is regressed on the returns
concurrently.  Deployed policies use the mean action with exploration off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import mathcore as mc
from .neural import GaussianPolicy, ValueFunction, gaussian_logp

RATIO_CLAMP = 1e6


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------

@dataclass
class EpisodeRollout:
    """Per-step records of one complete episode."""

    obs: np.ndarray             # (T, obs_dim)
    actions: np.ndarray         # (T, act_dim)
    logps: np.ndarray           # (T,) under the collection policy
    rewards: np.ndarray         # (T,)
    values: np.ndarray          # (T,) collection-time value estimates
    policy_hidden: np.ndarray   # (T, h2) hidden state fed at each step
    value_hidden: np.ndarray    # (T, h2v)
    summary: dict               # terminal diagnostics from the environment
    seed: int = 0
    means: np.ndarray | None = None  # (T, act_dim) collection-policy means

    @property
    def length(self) -> int:
        return self.obs.shape[0]

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())


@dataclass
class RolloutBatch:
    episodes: list[EpisodeRollout]
    logstd: np.ndarray | None = None    # collection-policy log std

    @property
    def n_steps(self) -> int:
        return sum(ep.length for ep in self.episodes)

    def padded(self) -> dict[str, np.ndarray]:
        """Stack episodes into padded (episode, time, ...) arrays with a mask."""
        n_ep = len(self.episodes)
        t_max = max(ep.length for ep in self.episodes)
        obs_dim = self.episodes[0].obs.shape[1]
        act_dim = self.episodes[0].actions.shape[1]
        out = {
            "obs": np.zeros((n_ep, t_max, obs_dim)),
            "actions": np.zeros((n_ep, t_max, act_dim)),
            "logps": np.zeros((n_ep, t_max)),
            "rewards": np.zeros((n_ep, t_max)),
            "values": np.zeros((n_ep, t_max)),
            "mask": np.zeros((n_ep, t_max)),
        }
        if all(ep.means is not None for ep in self.episodes):
            out["means_old"] = np.zeros((n_ep, t_max, act_dim))
        for i, ep in enumerate(self.episodes):
            t = ep.length
            out["obs"][i, :t] = ep.obs
            out["actions"][i, :t] = ep.actions
            out["logps"][i, :t] = ep.logps
            out["rewards"][i, :t] = ep.rewards
            out["values"][i, :t] = ep.values
            out["mask"][i, :t] = 1.0
            if "means_old" in out:
                out["means_old"][i, :t] = ep.means
        if self.logstd is not None:
            out["logstd_old"] = self.logstd
        return out

    def mean_reward(self) -> float:
        return float(np.mean([ep.total_reward for ep in self.episodes]))


def run_episode(env, policy: GaussianPolicy, value: ValueFunction,
                rng: np.random.Generator, stochastic: bool = True,
                seed: int = 0) -> EpisodeRollout:
    """Roll one episode; the hidden states start at zero and carry across steps."""
    obs = env.reset(rng)
    h_p = policy.net.zero_hidden()
    h_v = value.zero_hidden()
    records: list[tuple] = []
    done = False
    while not done:
        v_pred, h_v_next = value.step(obs, h_v)
        if stochastic:
            u, logp, mean, h_p_next = policy.act(obs, h_p, rng)
        else:
            u, h_p_next = policy.mean_action(obs, h_p)
            mean = u
            logp = float(gaussian_logp(u, u, policy.logstd))
        result = env.step(u)
        records.append((obs, u, logp, result.reward, v_pred, h_p, h_v, mean))
        obs = result.observation
        h_p, h_v = h_p_next, h_v_next
        done = result.done
    return EpisodeRollout(
        obs=np.array([r[0] for r in records]),
        actions=np.array([r[1] for r in records]),
        logps=np.array([r[2] for r in records]),
        rewards=np.array([r[3] for r in records]),
        values=np.array([r[4] for r in records]),
        policy_hidden=np.array([r[5] for r in records]),
        value_hidden=np.array([r[6] for r in records]),
        summary=env.episode_summary(),
        seed=seed,
        means=np.array([r[7] for r in records]),
    )


def collect_rollouts(make_env, policy: GaussianPolicy, value: ValueFunction,
                     seeds: list[int], stochastic: bool = True) -> RolloutBatch:
    """Sequential rollout collection; merge order is the seed-list order."""
    episodes = []
    for seed in seeds:
        env = make_env()
        episodes.append(run_episode(env, policy, value, mc.make_rng(seed),
                                    stochastic=stochastic, seed=seed))
    return RolloutBatch(episodes, logstd=policy.logstd.copy())


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Within-episode discounted reward-to-go."""
    out = np.empty_like(rewards, dtype=float)
    acc = 0.0
    for k in range(len(rewards) - 1, -1, -1):
        acc = rewards[k] + gamma * acc
        out[k] = acc
    return out


def compute_advantages(batch: RolloutBatch, gamma: float,
                       normalize: bool = True
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Padded (returns, advantages, mask); advantages are batch-normalized."""
    n_ep = len(batch.episodes)
    t_max = max(ep.length for ep in batch.episodes)
    returns = np.zeros((n_ep, t_max))
    adv = np.zeros((n_ep, t_max))
    mask = np.zeros((n_ep, t_max))
    for i, ep in enumerate(batch.episodes):
        t = ep.length
        ret = discounted_returns(ep.rewards, gamma)
        returns[i, :t] = ret
        adv[i, :t] = ret - ep.values
        mask[i, :t] = 1.0
    if normalize:
        vals = adv[mask > 0]
        adv = (adv - vals.mean()) / (vals.std() + 1e-8)
        adv *= mask
    return returns, adv, mask


def prob_ratio(logp_new: np.ndarray, logp_old: np.ndarray) -> np.ndarray:
    """exp(logp_new - logp_old), clamped at 1e6 against overflow."""
    return np.exp(np.minimum(logp_new - logp_old, math.log(RATIO_CLAMP)))


def clipped_objective(p: np.ndarray, advantages: np.ndarray,
                      eps: float) -> float:
    """Mean clipped surrogate min(p A, clip(p, 1-eps, 1+eps) A), to be maximized."""
    s1 = p * advantages
    s2 = np.clip(p, 1.0 - eps, 1.0 + eps) * advantages
    return float(np.mean(np.minimum(s1, s2)))


def gaussian_kl_exact(means_old: np.ndarray, logstd_old: np.ndarray,
                      means_new: np.ndarray, logstd_new: np.ndarray,
                      mask: np.ndarray) -> float:
    """Mean over batch states of the closed-form diagonal-Gaussian KL(old||new)."""
    var_ratio = np.exp(2.0 * (logstd_old - logstd_new))
    delta = (means_old - means_new) / np.exp(logstd_new)
    per_step = np.sum(logstd_new - logstd_old
                      + 0.5 * (var_ratio + delta * delta) - 0.5, axis=-1)
    return float((per_step * mask).sum() / mask.sum())


def policy_surrogate(policy: GaussianPolicy, data: dict, eps: float,
                     trunc: int | None = 64, compute_grads: bool = True
                     ) -> tuple[float, dict | None, dict]:
    """Surrogate loss (negated objective), gradients, and KL measures.

    data holds padded obs/actions/logps/advantages/mask arrays.  The KL
    between the collection policy and the current one is estimated two ways:
    "est" is mean(logp_old - logp_new) over batch actions (logged), and
    "exact" the closed-form Gaussian KL averaged over batch states (used by
    the adaptive clip/step-size servo; available when the batch carries the
    collection means).
    """
    obs, actions = data["obs"], data["actions"]
    logp_old, advantages, mask = data["logps"], data["advantages"], data["mask"]
    n_valid = mask.sum()

    means, cache = policy.net.forward_seq(obs, mask)
    std = np.exp(policy.logstd)
    logp_new = gaussian_logp(actions, means, policy.logstd)

    log_ratio = np.minimum(logp_new - logp_old, math.log(RATIO_CLAMP))
    unclamped = (logp_new - logp_old) < math.log(RATIO_CLAMP)
    p = np.exp(log_ratio)
    s1 = p * advantages
    p_clip = np.clip(p, 1.0 - eps, 1.0 + eps)
    s2 = p_clip * advantages
    surr = np.minimum(s1, s2)
    objective = float((surr * mask).sum() / n_valid)
    kl = {"est": float(((logp_old - logp_new) * mask).sum() / n_valid)}
    if "means_old" in data and "logstd_old" in data:
        kl["exact"] = gaussian_kl_exact(data["means_old"], data["logstd_old"],
                                        means, policy.logstd, mask)
    if not compute_grads:
        return -objective, None, kl

    inside_clip = (p > 1.0 - eps) & (p < 1.0 + eps)
    d_surr_dlogp = np.where(s1 <= s2, p * advantages,
                            np.where(inside_clip, p * advantages, 0.0))
    d_loss_dlogp = -(d_surr_dlogp * unclamped * mask) / n_valid

    z = (actions - means) / std
    d_means = d_loss_dlogp[:, :, None] * z / std
    grads = policy.net.backward_seq(cache, d_means, trunc=trunc)
    grads["logstd"] = np.einsum("et,etk->k", d_loss_dlogp, z * z - 1.0)
    return -objective, grads, kl


def value_objective(value: ValueFunction, data: dict, trunc: int | None = 64,
                    compute_grads: bool = True) -> tuple[float, dict | None]:
    """Mean squared error of the value predictions against empirical returns."""
    obs, returns, mask = data["obs"], data["returns"], data["mask"]
    n_valid = mask.sum()
    raw, cache = value.net.forward_seq(obs, mask)
    pred = value.out_mean + value.out_std * raw[:, :, 0]
    err = (pred - returns) * mask
    loss = float((err * err).sum() / n_valid)
    if not compute_grads:
        return loss, None
    d_raw = (2.0 * value.out_std * err / n_valid)[:, :, None]
    return loss, value.net.backward_seq(cache, d_raw, trunc=trunc)


def gradient_check(params: dict[str, np.ndarray], loss_fn, grads: dict,
                   rng: np.random.Generator, n_probes: int = 100,
                   h: float = 1e-6) -> float:
    """Worst guarded relative error of analytic grads vs central differences.

    Probes n_probes random parameter coordinates (all coordinates when
    n_probes is None).  The denominator is floored at 1e-4 of the largest
    finite-difference magnitude seen, which keeps coordinates whose true
    gradient sits at the h=1e-6 roundoff floor from dominating while still
    flagging any error that is material at the scale of the gradient.
    """
    keys = sorted(params)
    if n_probes is None:
        probes = [(k, idx) for k in keys
                  for idx in np.ndindex(params[k].shape)]
    else:
        probes = []
        for _ in range(n_probes):
            k = keys[rng.integers(len(keys))]
            probes.append((k, tuple(int(rng.integers(s))
                                    for s in params[k].shape)))
    pairs = []
    for k, idx in probes:
        orig = params[k][idx]
        params[k][idx] = orig + h
        lp = loss_fn()
        params[k][idx] = orig - h
        lm = loss_fn()
        params[k][idx] = orig
        pairs.append((float(grads[k][idx]), (lp - lm) / (2.0 * h)))
    floor = 1e-4 * max(abs(fd) for _, fd in pairs)
    return max(abs(a - fd) / max(abs(a) + abs(fd), floor, 1e-12)
               for a, fd in pairs)


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------

def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale gradients in place to a global norm bound; returns the raw norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


class Adam:
    """Adaptive-moment estimation over a named parameter dict, in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / bc1) / (
                np.sqrt(self.v[k] / bc2) + self.eps)

    def state_dict(self) -> dict:
        return {"m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()},
                "t": self.t}

    def load_state_dict(self, state: dict) -> None:
        for k in self.m:
            self.m[k] = np.asarray(state["m"][k])
            self.v[k] = np.asarray(state["v"][k])
        self.t = int(state["t"])


@dataclass
class OptimizerState:
    """PPO hyperparameters and per-run mutable optimizer state.

    Besides the clip parameter, the policy learning rate is scaled toward the
    KL target: the clip alone can only shrink updates, so targeting a KL of
    0.001 needs the step size itself to track it from both sides.
    """

    clip_eps: float = 0.1
    kl_target: float = 0.001
    clip_eps_min: float = 1e-3
    clip_eps_max: float = 0.5
    policy_lr: float = 2e-4
    value_lr: float = 2.5e-3
    lr_scale: float = 1.0
    lr_scale_bounds: tuple[float, float] = (0.01, 100.0)
    policy_epochs: int = 3
    value_epochs: int = 10
    gamma: float = 0.99
    bptt_trunc: int = 64
    max_grad_norm: float = 5.0
    adam_policy: Adam | None = field(default=None, repr=False)
    adam_value: Adam | None = field(default=None, repr=False)

    def ensure_optimizers(self, policy: GaussianPolicy,
                          value: ValueFunction) -> None:
        if self.adam_policy is None:
            self.adam_policy = Adam(_policy_params(policy), self.policy_lr)
        if self.adam_value is None:
            self.adam_value = Adam(value.p, self.value_lr)

    def scalar_state(self) -> dict:
        return {"clip_eps": self.clip_eps, "lr_scale": self.lr_scale}

    def load_scalar_state(self, state: dict) -> None:
        self.clip_eps = float(state["clip_eps"])
        self.lr_scale = float(state["lr_scale"])


def _policy_params(policy: GaussianPolicy) -> dict[str, np.ndarray]:
    return {**policy.net.p, "logstd": policy.logstd}


def update(batch: RolloutBatch, policy: GaussianPolicy, value: ValueFunction,
           opt: OptimizerState) -> dict:
    """One PPO update on a complete batch; adapts clip and step size by KL."""
    opt.ensure_optimizers(policy, value)
    data = batch.padded()
    returns, advantages, mask = compute_advantages(batch, opt.gamma)
    data["returns"] = returns
    data["advantages"] = advantages

    policy_params = _policy_params(policy)
    opt.adam_policy.lr = opt.policy_lr * opt.lr_scale
    kl = {"est": 0.0}
    policy_loss = 0.0
    skipped = 0
    for _ in range(opt.policy_epochs):
        policy_loss, grads, kl = policy_surrogate(policy, data, opt.clip_eps,
                                                  trunc=opt.bptt_trunc)
        if not all(np.isfinite(g).all() for g in grads.values()):
            skipped += 1
            continue
        clip_gradients(grads, opt.max_grad_norm)
        opt.adam_policy.step(policy_params, grads)
        _, _, kl = policy_surrogate(policy, data, opt.clip_eps,
                                    compute_grads=False)
        if kl.get("exact", kl["est"]) > 2.0 * opt.kl_target:
            break

    value.update_scaling(returns[mask > 0])
    value_loss = 0.0
    for _ in range(opt.value_epochs):
        value_loss, grads = value_objective(value, data, trunc=opt.bptt_trunc)
        if not all(np.isfinite(g).all() for g in grads.values()):
            skipped += 1
            continue
        clip_gradients(grads, opt.max_grad_norm)
        opt.adam_value.step(value.p, grads)

    kl_servo = kl.get("exact", kl["est"])
    if kl_servo > 2.0 * opt.kl_target:
        opt.clip_eps = max(opt.clip_eps * 0.5, opt.clip_eps_min)
    elif kl_servo < 0.5 * opt.kl_target:
        opt.clip_eps = min(opt.clip_eps * 1.5, opt.clip_eps_max)
    # Proportional step-size servo: clipping alone cannot raise the KL toward
    # the target, so the effective learning rate tracks it from both sides.
    ratio = math.sqrt(opt.kl_target / max(kl_servo, 1e-8))
    lo, hi = opt.lr_scale_bounds
    opt.lr_scale = min(max(opt.lr_scale * min(max(ratio, 1.0 / 1.5), 1.5), lo), hi)

    rewards = [ep.total_reward for ep in batch.episodes]
    misses = [ep.summary.get("miss", math.nan) for ep in batch.episodes]
    speeds = [ep.summary.get("speed", math.nan) for ep in batch.episodes]
    return {
        "kl": kl["est"],
        "kl_exact": kl.get("exact", math.nan),
        "clip_eps": opt.clip_eps,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "mean_reward": float(np.mean(rewards)),
        "min_reward": float(np.min(rewards)),
        "max_reward": float(np.max(rewards)),
        "mean_miss": float(np.mean(misses)),
        "max_miss": float(np.max(misses)),
        "mean_speed": float(np.mean(speeds)),
        "logstd_mean": float(np.mean(policy.logstd)),
        "good_rate": float(np.mean([ep.summary.get("good", False)
                                    for ep in batch.episodes])),
        "skipped_steps": skipped,
    }
