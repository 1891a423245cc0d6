"""Joint computing, pushing, and caching control for a single-user edge system."""

from .codec import (ActionMask, ContinuousAction, FULL_ACTION_SPACE,
                    NormalizationSpec, correct, quantize)
from .env import (ActionError, ConfigError, CostBreakdown, SystemAction,
                  SystemConfig, SystemState, Task, TransitionModel,
                  build_transition_matrix, cost_breakdown, default_config,
                  default_transition_model, initial_state, push_bandwidth,
                  reactive_bandwidth, reactive_energy,
                  sample_request_trace, stationary_distribution, step,
                  validate_action)
from .sac import SacAgent, SacHyper, TrainSchedule, evaluate_agent, train

__version__ = "0.1.0"

__all__ = [
    "ActionError", "ActionMask", "ConfigError", "ContinuousAction",
    "CostBreakdown", "FULL_ACTION_SPACE", "NormalizationSpec", "SacAgent",
    "SacHyper", "SystemAction", "SystemConfig", "SystemState", "Task",
    "TrainSchedule", "TransitionModel", "build_transition_matrix", "correct",
    "cost_breakdown", "default_config", "default_transition_model",
    "evaluate_agent", "initial_state", "push_bandwidth", "quantize",
    "reactive_bandwidth", "reactive_energy", "sample_request_trace",
    "stationary_distribution", "step", "train", "validate_action",
]
