"""6-DOF asteroid close-proximity landing laboratory.

High-fidelity randomized asteroid/spacecraft simulation, a stabilized-seeker
observation model, a recurrent-policy PPO trainer built on manual
backpropagation through time, and a Monte Carlo evaluation harness.
"""

from .asteroid import AsteroidModel, ellipsoid_gravity, sphere_gravity
from .env import EpisodeConfig, LandingEnv, StepResult
from .harness import RunConfig, load_config, run_eval, run_simulate, run_train, run_validate
from .neural import GaussianPolicy, GruNet, ValueFunction
from .ppo import OptimizerState, RolloutBatch

__version__ = "0.1.0"

__all__ = [
    "AsteroidModel", "EpisodeConfig", "GaussianPolicy", "GruNet",
    "LandingEnv", "OptimizerState", "RolloutBatch", "RunConfig",
    "StepResult", "ValueFunction", "ellipsoid_gravity", "load_config",
    "run_eval", "run_simulate", "run_train", "run_validate",
    "sphere_gravity", "__version__",
]
