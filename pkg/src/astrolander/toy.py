"""One-dimensional double-integrator environment for trainer sanity checks.

State (x, v) with dynamics x' = v, v' = a where the action is clipped to
[-1, 1] and scaled.  The reward peaks at the origin, so a competent policy
drives the mass to x = 0 and holds it there; a random policy drifts and
collects far less.  Kept deliberately tiny so a few hundred PPO updates run
in minutes.
"""

from __future__ import annotations

import math

import numpy as np

from .env import StepResult

OBS_DIM = 2
ACT_DIM = 1


class DoubleIntegratorEnv:
    def __init__(self, dt: float = 0.2, horizon: int = 60,
                 accel: float = 1.0):
        self.dt = dt
        self.horizon = horizon
        self.accel = accel

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.rng = rng
        self.x = rng.uniform(-1.0, 1.0)
        self.v = rng.uniform(-0.5, 0.5)
        self.k = 0
        self._total = 0.0
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.array([self.x, self.v])

    def step(self, action: np.ndarray) -> StepResult:
        a = self.accel * float(np.clip(action[0], -1.0, 1.0))
        self.x += self.v * self.dt
        self.v += a * self.dt
        self.k += 1
        reward = math.exp(-(self.x / 0.25) ** 2 - (self.v / 0.5) ** 2)
        self._total += reward
        done = self.k >= self.horizon
        return StepResult(observation=self._obs(), reward=reward, done=done,
                          info={})

    def episode_summary(self) -> dict:
        return {"miss": abs(self.x), "speed": abs(self.v), "good": False,
                "reason": "timeout", "fuel": 0.0, "max_omega": 0.0,
                "steps": self.k, "t": self.k * self.dt}
