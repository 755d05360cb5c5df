"""Minimal recurrent network engine with analytic backpropagation through time.

Both the policy and value function are four-layer networks whose second
hidden layer is a gated recurrent unit:

    y = W4 tanh(W3 h + b3) + b4,   h = GRU(tanh(W1 x + b1), h_prev)

with the GRU gates

    z = sigmoid(Wz a + Uz h + bz)
    r = sigmoid(Wr a + Ur h + br)
    c = tanh(Wc a + Uc (r * h) + bc)
    h' = (1 - z) * h + z * c

Hidden states are reset to zero at episode boundaries and carried across
guidance steps within an episode.  Training uses truncated backpropagation
through time over padded (episode, time, feature) arrays; gradients are
exact within each truncation segment.

Everything is float64 numpy; no autodiff framework is involved, so every
gradient here is checked against central finite differences in the tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import mathcore as mc

LOG_2PI = math.log(2.0 * math.pi)


def hidden_layer_sizes(n_h1: int, n_h3: int) -> int:
    """Recurrent layer width: nearest integer to sqrt(h1 * h3)."""
    return int(round(math.sqrt(n_h1 * n_h3)))


def policy_sizes(obs_dim: int, act_dim: int) -> tuple[int, int, int, int, int]:
    h1, h3 = 10 * obs_dim, 10 * act_dim
    return obs_dim, h1, hidden_layer_sizes(h1, h3), h3, act_dim


def value_sizes(obs_dim: int) -> tuple[int, int, int, int, int]:
    h1, h3 = 10 * obs_dim, 5
    return obs_dim, h1, hidden_layer_sizes(h1, h3), h3, 1


def _orthogonal(rng: np.random.Generator, rows: int, cols: int,
                gain: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(rows, cols))
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    w = u if u.shape == (rows, cols) else vt
    return gain * w


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


class GruNet:
    """tanh -> GRU -> tanh -> linear network with manual gradients."""

    WEIGHT_KEYS = ("W1", "b1", "Wz", "Uz", "bz", "Wr", "Ur", "br",
                   "Wc", "Uc", "bc", "W3", "b3", "W4", "b4")

    def __init__(self, sizes: tuple[int, int, int, int, int],
                 rng: np.random.Generator, out_gain: float = 0.01):
        n_in, h1, h2, h3, n_out = sizes
        self.sizes = sizes
        self.p: dict[str, np.ndarray] = {
            "W1": _orthogonal(rng, h1, n_in),
            "b1": np.zeros(h1),
            "Wz": _orthogonal(rng, h2, h1),
            "Uz": _orthogonal(rng, h2, h2),
            "bz": np.zeros(h2),
            "Wr": _orthogonal(rng, h2, h1),
            "Ur": _orthogonal(rng, h2, h2),
            "br": np.zeros(h2),
            "Wc": _orthogonal(rng, h2, h1),
            "Uc": _orthogonal(rng, h2, h2),
            "bc": np.zeros(h2),
            "W3": _orthogonal(rng, h3, h2),
            "b3": np.zeros(h3),
            "W4": _orthogonal(rng, n_out, h3, gain=out_gain),
            "b4": np.zeros(n_out),
        }

    @property
    def hidden_dim(self) -> int:
        return self.sizes[2]

    def zero_hidden(self, n: int | None = None) -> np.ndarray:
        if n is None:
            return np.zeros(self.hidden_dim)
        return np.zeros((n, self.hidden_dim))

    def gru_step(self, a: np.ndarray, h: np.ndarray) -> np.ndarray:
        """One recurrent update for layer-1 activation a and hidden state h."""
        p = self.p
        z = _sigmoid(a @ p["Wz"].T + h @ p["Uz"].T + p["bz"])
        r = _sigmoid(a @ p["Wr"].T + h @ p["Ur"].T + p["br"])
        c = np.tanh(a @ p["Wc"].T + (r * h) @ p["Uc"].T + p["bc"])
        return (1.0 - z) * h + z * c

    def step(self, x: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Single-sample forward pass; returns (output, next hidden state)."""
        if not np.isfinite(x).all():
            raise ValueError("non-finite network input")
        p = self.p
        a = np.tanh(p["W1"] @ x + p["b1"])
        h_new = self.gru_step(a, h)
        l3 = np.tanh(p["W3"] @ h_new + p["b3"])
        return p["W4"] @ l3 + p["b4"], h_new

    def forward_seq(self, x: np.ndarray, mask: np.ndarray,
                    h0: np.ndarray | None = None) -> tuple[np.ndarray, dict]:
        """Batched forward over padded sequences.

        x is (episodes, steps, n_in), mask (episodes, steps) with 1 for valid
        steps; the hidden state carries through padded steps unchanged.
        Returns (outputs, cache) where cache feeds backward_seq.
        """
        p = self.p
        n_ep, n_t, _ = x.shape
        h2 = self.hidden_dim
        l1 = np.tanh(np.einsum("etj,ij->eti", x, p["W1"]) + p["b1"])
        h = np.zeros((n_ep, h2)) if h0 is None else h0.copy()

        zs = np.empty((n_ep, n_t, h2))
        rs = np.empty((n_ep, n_t, h2))
        cs = np.empty((n_ep, n_t, h2))
        h_prev = np.empty((n_ep, n_t, h2))
        hs = np.empty((n_ep, n_t, h2))
        wz_a = l1 @ p["Wz"].T + p["bz"]
        wr_a = l1 @ p["Wr"].T + p["br"]
        wc_a = l1 @ p["Wc"].T + p["bc"]
        for t in range(n_t):
            z = _sigmoid(wz_a[:, t] + h @ p["Uz"].T)
            r = _sigmoid(wr_a[:, t] + h @ p["Ur"].T)
            c = np.tanh(wc_a[:, t] + (r * h) @ p["Uc"].T)
            h_new = (1.0 - z) * h + z * c
            m = mask[:, t][:, None]
            zs[:, t], rs[:, t], cs[:, t], h_prev[:, t] = z, r, c, h
            h = m * h_new + (1.0 - m) * h
            hs[:, t] = h

        l3 = np.tanh(np.einsum("eti,ji->etj", hs, p["W3"]) + p["b3"])
        y = np.einsum("etj,kj->etk", l3, p["W4"]) + p["b4"]
        cache = {"x": x, "l1": l1, "z": zs, "r": rs, "c": cs,
                 "h_prev": h_prev, "h": hs, "l3": l3, "mask": mask}
        return y, cache

    def backward_seq(self, cache: dict, dy: np.ndarray,
                     trunc: int | None = 64) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss with upstream dy = dLoss/dy.

        Backpropagation through time runs across the full sequence but stops
        at truncation-segment boundaries every `trunc` steps (hidden state
        carried forward as a constant), matching how long-episode training
        batches are processed.
        """
        p = self.p
        x, l1, mask = cache["x"], cache["l1"], cache["mask"]
        zs, rs, cs, h_prev, hs, l3 = (cache["z"], cache["r"], cache["c"],
                                      cache["h_prev"], cache["h"], cache["l3"])
        n_ep, n_t, _ = x.shape
        dy = dy * mask[:, :, None]

        g = {k: np.zeros_like(v) for k, v in self.p.items()}
        g["W4"] = np.einsum("etk,etj->kj", dy, l3)
        g["b4"] = dy.sum(axis=(0, 1))
        ga3 = np.einsum("etk,kj->etj", dy, p["W4"]) * (1.0 - l3 * l3)
        g["W3"] = np.einsum("etj,eti->ji", ga3, hs)
        g["b3"] = ga3.sum(axis=(0, 1))
        gh_out = np.einsum("etj,ji->eti", ga3, p["W3"])

        gl1 = np.zeros_like(l1)
        carry = np.zeros((n_ep, self.hidden_dim))
        for t in range(n_t - 1, -1, -1):
            m = mask[:, t][:, None]
            gh = gh_out[:, t] * m + carry
            z, r, c, hp = zs[:, t], rs[:, t], cs[:, t], h_prev[:, t]

            gz = gh * (c - hp)
            gaz = gz * z * (1.0 - z) * m
            gc = gh * z
            gac = gc * (1.0 - c * c) * m
            ghp = gh * (1.0 - z)
            grh = gac @ p["Uc"]
            gar = grh * hp * r * (1.0 - r) * m
            ghp = ghp + grh * r + gaz @ p["Uz"] + gar @ p["Ur"]

            a = l1[:, t]
            g["Wz"] += gaz.T @ a
            g["Uz"] += gaz.T @ hp
            g["bz"] += gaz.sum(axis=0)
            g["Wr"] += gar.T @ a
            g["Ur"] += gar.T @ hp
            g["br"] += gar.sum(axis=0)
            g["Wc"] += gac.T @ a
            g["Uc"] += gac.T @ (r * hp)
            g["bc"] += gac.sum(axis=0)
            gl1[:, t] = gaz @ p["Wz"] + gar @ p["Wr"] + gac @ p["Wc"]

            carry = m * ghp + (1.0 - m) * gh
            if trunc is not None and t % trunc == 0:
                carry = np.zeros_like(carry)

        ga1 = gl1 * (1.0 - l1 * l1)
        g["W1"] = np.einsum("eti,etj->ij", ga1, x)
        g["b1"] = ga1.sum(axis=(0, 1))
        return g


def sample_action(mean: np.ndarray, logstd: np.ndarray,
                  rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Draw from the diagonal Gaussian and return (action, log-probability)."""
    std = np.exp(logstd)
    u = mean + std * rng.normal(size=mean.shape)
    return u, float(gaussian_logp(u, mean, logstd))


def gaussian_logp(u: np.ndarray, mean: np.ndarray,
                  logstd: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log density, summed over the action dimension."""
    z = (u - mean) / np.exp(logstd)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(logstd) \
        - 0.5 * LOG_2PI * mean.shape[-1]


@dataclass
class GaussianPolicy:
    """Action-mean network plus a learned diagonal log standard deviation."""

    net: GruNet
    logstd: np.ndarray

    @classmethod
    def create(cls, obs_dim: int, act_dim: int, rng: np.random.Generator,
               init_std: float = 0.5) -> "GaussianPolicy":
        net = GruNet(policy_sizes(obs_dim, act_dim), rng)
        return cls(net=net, logstd=np.full(act_dim, math.log(init_std)))

    def act(self, obs: np.ndarray, h: np.ndarray, rng: np.random.Generator
            ) -> tuple[np.ndarray, float, np.ndarray, np.ndarray]:
        mean, h_new = self.net.step(obs, h)
        u, logp = sample_action(mean, self.logstd, rng)
        return u, logp, mean, h_new

    def mean_action(self, obs: np.ndarray,
                    h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic action (exploration off) for the deployed policy."""
        return self.net.step(obs, h)


@dataclass
class ValueFunction:
    """Recurrent state-value estimator with an affine output transform.

    The network regresses standardized returns; out_mean/out_std track the
    batch return statistics so the raw network output stays O(1) regardless
    of the reward scale.  V(o) = out_mean + out_std * net(o).
    """

    net: GruNet
    out_mean: float = 0.0
    out_std: float = 1.0

    @classmethod
    def create(cls, obs_dim: int, rng: np.random.Generator) -> "ValueFunction":
        return cls(net=GruNet(value_sizes(obs_dim), rng, out_gain=0.1))

    @property
    def sizes(self):
        return self.net.sizes

    @property
    def p(self) -> dict[str, np.ndarray]:
        return self.net.p

    def zero_hidden(self, n: int | None = None) -> np.ndarray:
        return self.net.zero_hidden(n)

    def step(self, obs: np.ndarray, h: np.ndarray) -> tuple[float, np.ndarray]:
        y, h_new = self.net.step(obs, h)
        return self.out_mean + self.out_std * float(y[0]), h_new

    def update_scaling(self, returns: np.ndarray) -> None:
        """Re-anchor the output transform on a batch of returns.

        The existing weights are rescaled so predictions are unchanged at the
        moment of re-anchoring.
        """
        new_mean = float(np.mean(returns))
        new_std = max(float(np.std(returns)), 1e-4)
        # net_new * new_std + new_mean == net_old * old_std + old_mean
        self.net.p["W4"] *= self.out_std / new_std
        self.net.p["b4"] *= self.out_std / new_std
        self.net.p["b4"] += (self.out_mean - new_mean) / new_std
        self.out_mean = new_mean
        self.out_std = new_std


def create_value_net(obs_dim: int, rng: np.random.Generator) -> ValueFunction:
    return ValueFunction.create(obs_dim, rng)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised when a checkpoint file is missing, corrupt, or incompatible."""


def _flatten(prefix: str, d: dict[str, np.ndarray],
             out: dict[str, np.ndarray]) -> None:
    for k, v in d.items():
        out[f"{prefix}.{k}"] = v


def save_checkpoint(path, policy: GaussianPolicy, value: ValueFunction,
                    opt_state: dict, update_count: int,
                    rng_state: dict | None = None,
                    extra: dict | None = None) -> None:
    """Write a versioned binary checkpoint with a bit-exact round trip."""
    arrays: dict[str, np.ndarray] = {}
    _flatten("policy", policy.net.p, arrays)
    arrays["policy.logstd"] = policy.logstd
    _flatten("value", value.p, arrays)
    arrays["value.out_scaling"] = np.array([value.out_mean, value.out_std])
    for opt_name, slots in opt_state.items():
        for slot_name, slot in slots.items():
            if isinstance(slot, dict):
                _flatten(f"opt.{opt_name}.{slot_name}", slot, arrays)
            else:
                arrays[f"opt.{opt_name}.{slot_name}"] = np.asarray(slot)
    meta = {
        "version": CHECKPOINT_VERSION,
        "update_count": int(update_count),
        "policy_sizes": list(policy.net.sizes),
        "value_sizes": list(value.sizes),
        "rng_state": _encode_rng(rng_state),
        "extra": extra or {},
    }
    arrays["meta_json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8).copy()
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path) -> dict:
    """Load a checkpoint into {policy, value, opt_state, update_count, ...}."""
    try:
        data = np.load(path)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "meta_json" not in data:
        raise CheckpointError(f"{path} is not an astrolander checkpoint")
    meta = json.loads(bytes(data["meta_json"].tobytes()).decode())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')}")

    rng = mc.make_rng(0)
    policy = GaussianPolicy.create(meta["policy_sizes"][0],
                                   meta["policy_sizes"][-1], rng)
    value = ValueFunction(net=GruNet(tuple(meta["value_sizes"]), rng))
    for k in policy.net.p:
        policy.net.p[k] = data[f"policy.{k}"]
    policy.logstd = data["policy.logstd"]
    for k in value.p:
        value.p[k] = data[f"value.{k}"]
    value.out_mean, value.out_std = (float(x) for x in data["value.out_scaling"])

    opt_state: dict = {}
    for key in data.files:
        if not key.startswith("opt."):
            continue
        parts = key.split(".")
        node = opt_state
        for part in parts[1:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = data[key]
    return {
        "policy": policy,
        "value": value,
        "opt_state": opt_state,
        "update_count": meta["update_count"],
        "rng_state": _decode_rng(meta["rng_state"]),
        "extra": meta["extra"],
    }


def _encode_rng(state: dict | None):
    if state is None:
        return None

    def enc(obj):
        if isinstance(obj, dict):
            return {k: enc(v) for k, v in obj.items()}
        if isinstance(obj, np.ndarray):
            return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
        if isinstance(obj, (np.integer,)):
            return int(obj)
        return obj

    return enc(state)


def _decode_rng(state):
    if state is None:
        return None

    def dec(obj):
        if isinstance(obj, dict):
            if "__ndarray__" in obj:
                return np.array(obj["__ndarray__"], dtype=obj["dtype"])
            return {k: dec(v) for k, v in obj.items()}
        return obj

    return dec(state)
