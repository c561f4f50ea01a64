"""Multi-agent distributed deterministic policy gradient learner.

Trains edge-node offloading policies against the vecsim environment service:
distributed actors generate experience through the line-delimited bridge
protocol, a replay buffer stores joint transitions, and a central learner
fits a critic to N-step targets and ascends the deterministic policy
gradient, with soft target updates and periodic actor weight replication.
"""

from mad4pg.client import BridgeClient
from mad4pg.learner import Hyperparams, Learner
from mad4pg.replay import ReplayBuffer, Transition, n_step_target

__all__ = [
    "BridgeClient",
    "Hyperparams",
    "Learner",
    "ReplayBuffer",
    "Transition",
    "n_step_target",
]
