"""Replay buffer and N-step bootstrapped targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass
class Transition:
    """One slot of joint experience.

    Action vectors are masked: logits of padded task slots are zero, both as
    sent to the environment and as stored here.
    """

    obs: np.ndarray  # (E, W)
    mask: np.ndarray  # (E, OBS_CAP) valid task slots of obs
    actions: np.ndarray  # (E, A)
    rewards: np.ndarray  # (E,)
    next_obs: np.ndarray  # (E, W)
    next_mask: np.ndarray  # (E, OBS_CAP)
    done: bool
    episode: int
    slot: int
    debug: dict | None = None


def expand_mask(mask: np.ndarray, n_edges: int) -> np.ndarray:
    """Per-task-slot mask to per-logit mask: each task slot owns E logits."""
    return np.repeat(mask.astype(float), n_edges, axis=-1)


class ReplayBuffer:
    """Ring buffer of transitions; at capacity the oldest entries go first."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._data: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._data)

    def add(self, tr: Transition) -> None:
        if len(self._data) < self.capacity:
            self._data.append(tr)
        else:
            self._data[self._next] = tr
            self._next = (self._next + 1) % self.capacity

    def get(self, idx: int) -> Transition:
        """Transitions in age order, oldest first."""
        if len(self._data) < self.capacity:
            return self._data[idx]
        return self._data[(self._next + idx) % self.capacity]

    def window(self, start: int, n_step: int) -> list[Transition]:
        """Contiguous same-episode window of up to n_step transitions."""
        first = self.get(start)
        out = [first]
        for i in range(start + 1, min(start + n_step, len(self._data))):
            tr = self.get(i)
            if tr.episode != first.episode or tr.slot != out[-1].slot + 1:
                break
            out.append(tr)
            if tr.done:
                break
        return out

    def sample_windows(self, batch: int, n_step: int, rng: np.random.Generator) -> list[list[Transition]]:
        if not self._data:
            raise ValueError("buffer is empty")
        starts = rng.integers(0, len(self._data), size=batch)
        return [self.window(int(s), n_step) for s in starts]


def n_step_target(
    window: list[Transition],
    target_policy,
    target_critic,
    gamma: float,
    scaler,
) -> np.ndarray:
    """Discounted reward sum over the window plus a bootstrapped tail.

    The tail value uses the target policy's (masked) action at the
    observation after the window; it is dropped when the window ends its
    episode (the caller passes windows already cut at episode boundaries).
    """
    n = len(window)
    E = window[0].rewards.shape[0]
    target = np.zeros(E)
    for i, tr in enumerate(window):
        target += (gamma**i) * tr.rewards
    if window[-1].done:
        return target
    with torch.no_grad():
        last = window[-1]
        obs = torch.as_tensor(scaler(last.next_obs), dtype=torch.float32)
        lmask = torch.as_tensor(expand_mask(last.next_mask, E), dtype=torch.float32)
        actions = target_policy(obs) * lmask  # (E, A)
        joint = actions.reshape(-1).expand(E, -1)
        values = target_critic(obs, joint).numpy()
    return target + (gamma**n) * values
