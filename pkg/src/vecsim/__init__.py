"""Discrete-time simulator and solvers for task offloading and heterogeneous
resource allocation in NOMA-based vehicular edge computing.

The package is organized bottom-up: scenario configuration and value types
(`config`), vehicle mobility and coverage (`mobility`), uplink channel and
interference (`channel`), transmission power allocation (`power`), CPU-share
allocation and task timing (`compute`), the offloading game and its solvers
(`game`), episode orchestration and baselines (`engine`), an environment
service for external learners (`bridge`), and the operator CLI (`cli`).
"""

from vecsim.config import EdgeNode, ScenarioConfig, TaskSpec, VehicleState, validate_config

__all__ = [
    "EdgeNode",
    "ScenarioConfig",
    "TaskSpec",
    "VehicleState",
    "validate_config",
]

__version__ = "0.1.0"
