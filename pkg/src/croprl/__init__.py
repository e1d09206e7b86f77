"""croprl: a daily-timestep maize management workbench.

Ships a small process-based crop simulator, a sequential-decision
environment on a 25-way fertilizer/irrigation action grid, token and
sentence serializers for observations, from-scratch tensor autodiff with
transformer and MLP Q-agents, a DQN trainer, and an evaluation suite with
baseline comparisons, ablations, and measurement-noise protocols.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    CropRLError,
    DivergenceError,
    InputError,
    NumericsError,
    ProtocolError,
    ShapeError,
    SimulationError,
    UsageError,
)
from .simulator import SiteProfile, florida_like, zaragoza_like
from .env import (
    CropEnv,
    ManagementAction,
    NoiseEntry,
    NoiseSpec,
    Observation,
    REWARD_PRESETS,
    RewardWeights,
    decode_action,
    reward_preset,
)
from .agents import AgentConfig, build_agent
from .dqn import TrainConfig, train
from .evaluation import (
    BaselineSchedule,
    GreedyPolicy,
    SchedulePolicy,
    ablate_architecture,
    ablate_separate,
    baseline_for,
    evaluate_policy,
    noise_robustness,
)
from .config import RunConfig, load_run_config

__all__ = [
    "AgentConfig",
    "BaselineSchedule",
    "ConfigurationError",
    "CropEnv",
    "CropRLError",
    "DivergenceError",
    "GreedyPolicy",
    "InputError",
    "ManagementAction",
    "NoiseEntry",
    "NoiseSpec",
    "NumericsError",
    "Observation",
    "ProtocolError",
    "REWARD_PRESETS",
    "RewardWeights",
    "RunConfig",
    "SchedulePolicy",
    "ShapeError",
    "SimulationError",
    "SiteProfile",
    "TrainConfig",
    "UsageError",
    "__version__",
    "ablate_architecture",
    "ablate_separate",
    "baseline_for",
    "build_agent",
    "decode_action",
    "evaluate_policy",
    "florida_like",
    "load_run_config",
    "noise_robustness",
    "reward_preset",
    "train",
    "zaragoza_like",
]
