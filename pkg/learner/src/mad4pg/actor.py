"""Distributed actors: each owns a bridge session and a replicated copy of
the policy, explores with Gaussian noise, and emits transitions."""

from __future__ import annotations

import queue
import threading

import numpy as np
import torch

from mad4pg.client import BridgeError
from mad4pg.nets import ObsEncoder, PolicyNet, to_bridge_actions
from mad4pg.replay import Transition, expand_mask


class Actor:
    """One experience generator with its own policy weights."""

    def __init__(
        self,
        actor_id: int,
        client,
        policy: PolicyNet,
        scaler: ObsEncoder,
        epsilon: float,
        seed: int,
    ):
        self.actor_id = actor_id
        self.client = client
        self.policy = policy
        self.scaler = scaler
        self.epsilon = epsilon
        self.rng = np.random.Generator(np.random.PCG64([seed, actor_id]))

    def load_weights(self, state_dict) -> None:
        self.policy.load_state_dict(state_dict)

    def select_actions(self, obs: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Policy output plus exploration noise, zeroed on padded task slots."""
        with torch.no_grad():
            base = self.policy(torch.as_tensor(self.scaler(obs), dtype=torch.float32)).numpy()
        if self.epsilon > 0:
            base = base + self.epsilon * self.rng.standard_normal(base.shape)
        return base * expand_mask(mask, base.shape[0])

    def run_episode(self, seed: int, episode_id: int) -> tuple[list[Transition], dict]:
        obs, mask = self.client.reset(seed=seed)
        transitions = []
        slot = 0
        while True:
            actions = self.select_actions(obs, mask)
            res = self.client.step(to_bridge_actions(actions, actions.shape[0]))
            transitions.append(
                Transition(
                    obs=obs,
                    mask=mask,
                    actions=actions,
                    rewards=res.rewards,
                    next_obs=res.obs,
                    next_mask=res.mask,
                    done=res.done,
                    episode=episode_id,
                    slot=slot,
                    debug=res.debug,
                )
            )
            obs, mask = res.obs, res.mask
            slot += 1
            if res.done:
                return transitions, res.metrics


def actor_loop(
    actor: Actor,
    episode_seeds,
    out_queue: "queue.Queue",
    stop_event: threading.Event,
    weight_box: dict,
) -> None:
    """Generate episodes until stopped, restarting the episode on bridge
    errors and picking up replicated weights between episodes."""
    for episode_id, seed in enumerate(episode_seeds):
        if stop_event.is_set():
            break
        snapshot = weight_box.get("weights")
        if snapshot is not None:
            actor.load_weights(snapshot)
        try:
            transitions, metrics = actor.run_episode(seed, episode_id)
        except BridgeError:
            continue  # abandon the broken episode, start the next one
        out_queue.put((actor.actor_id, transitions, metrics))
