"""Policy and critic networks plus observation/action encodings.

The bridge exposes raw SI observations and absolute-edge-indexed action
logits. The learner re-encodes both: edge identity becomes a one-hot block,
and each task slot's logits are indexed relative to the acting edge (offset
0 means "execute locally", offset k means "migrate to edge (e+k) mod E").
The relative indexing makes the local/migrate structure shared across edges
instead of hiding it behind the identity feature.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn


class ObsEncoder:
    """Raw bridge observations to network inputs.

    Raw layout per edge row: [edge id, slot, then per task slot: distance
    (m), size (bits), total cycles, deadline (s)]. Encoded layout: [one-hot
    edge id (E), slot fraction, then the task features scaled to unit-ish
    ranges].
    """

    def __init__(self, n_edges: int, horizon: int, obs_cap: int = 10):
        self.n_edges = n_edges
        self.horizon = max(horizon, 1)
        self.obs_cap = obs_cap
        self.task_scale = np.asarray([1000.0, 4e7, 2e10, 10.0] * obs_cap)
        self.width = n_edges + 1 + 4 * obs_cap

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        rows = obs.shape[0]
        out = np.zeros((rows, self.width))
        ids = obs[:, 0].astype(int)
        out[np.arange(rows), ids] = 1.0
        out[:, self.n_edges] = obs[:, 1] / self.horizon
        out[:, self.n_edges + 1 :] = obs[:, 2:] / self.task_scale
        return out


def to_bridge_actions(rel_actions: np.ndarray, n_edges: int, obs_cap: int = 10) -> np.ndarray:
    """Relative-indexed logits to the bridge's absolute edge indexing."""
    E = n_edges
    out = np.zeros_like(rel_actions)
    for e in range(rel_actions.shape[0]):
        for i in range(obs_cap):
            for r in range(E):
                out[e, i * E + (e + r) % E] = rel_actions[e, i * E + r]
    return out


def mlp(widths: tuple[int, ...], out_dim: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    for a, b in zip(widths, widths[1:]):
        layers += [nn.Linear(a, b), nn.ReLU()]
    layers.append(nn.Linear(widths[-1], out_dim))
    return nn.Sequential(*layers)


class PolicyNet(nn.Module):
    """Per-edge deterministic policy: encoded observation to relative task
    target logits, shared across edges.

    Outputs are bounded to [-action_range, action_range]; with the range
    matched to the exploration noise scale the decoded argmax keeps being
    perturbed throughout training instead of saturating early.
    """

    def __init__(self, obs_width: int, action_width: int, hidden=(256, 256, 256), action_range: float = 0.5):
        super().__init__()
        self.net = mlp((obs_width, *hidden), action_width)
        self.action_range = action_range

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.action_range * torch.tanh(self.net(obs))


class CriticNet(nn.Module):
    """State-action value of one edge's observation with the joint action."""

    def __init__(self, obs_width: int, joint_action_width: int, hidden=(512, 512, 256)):
        super().__init__()
        self.net = mlp((obs_width + joint_action_width, *hidden), 1)

    def forward(self, obs: torch.Tensor, joint_action: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([obs, joint_action], dim=-1)).squeeze(-1)
