"""Central learner: critic regression to N-step targets, deterministic
policy gradient, soft target updates, and actor weight replication."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from mad4pg.nets import CriticNet, ObsEncoder, PolicyNet
from mad4pg.replay import ReplayBuffer, Transition, n_step_target


@dataclass
class Hyperparams:
    """Training constants; defaults follow the reference configuration."""

    gamma: float = 0.996
    batch: int = 256
    buffer: int = 1_000_000
    epsilon: float = 0.3  # exploration noise scale
    lr: float = 1e-4  # critic learning rate (beta)
    policy_lr: float | None = None  # policy learning rate (alpha); defaults to lr
    t_tgt: int = 100  # target soft-update period (learner steps)
    t_act: int = 1000  # actor weight replication period (learner steps)
    n_actors: int = 10
    soft_rate: float = 1e-3  # n << 1
    n_step: int = 5
    policy_hidden: tuple = (256, 256, 256)
    critic_hidden: tuple = (512, 512, 256)


class Learner:
    """Owns the four networks, the replay buffer, and the update rule."""

    def __init__(
        self,
        obs_width: int,
        n_edges: int,
        action_width: int,
        hp: Hyperparams,
        scaler: ObsEncoder,
        seed: int = 0,
    ):
        torch.manual_seed(seed)
        self.hp = hp
        self.n_edges = n_edges
        self.action_width = action_width
        self.scaler = scaler
        self.policy = PolicyNet(obs_width, action_width, hp.policy_hidden)
        self.critic = CriticNet(obs_width, n_edges * action_width, hp.critic_hidden)
        self.target_policy = copy.deepcopy(self.policy)
        self.target_critic = copy.deepcopy(self.critic)
        self.policy_opt = torch.optim.Adam(
            self.policy.parameters(), lr=hp.lr if hp.policy_lr is None else hp.policy_lr
        )
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=hp.lr)
        self.buffer = ReplayBuffer(hp.buffer)
        self.updates_done = 0
        self.replication_requests = 0
        self._rng = np.random.Generator(np.random.PCG64(seed))

    # ---- acting ------------------------------------------------------------

    def act(
        self, obs: np.ndarray, mask: np.ndarray, noise_scale: float, rng: np.random.Generator
    ) -> np.ndarray:
        """Per-edge logits from the policy plus Gaussian exploration noise,
        zeroed on padded task slots."""
        from mad4pg.replay import expand_mask

        with torch.no_grad():
            base = self.policy(torch.as_tensor(self.scaler(obs), dtype=torch.float32)).numpy()
        if noise_scale > 0:
            base = base + noise_scale * rng.standard_normal(base.shape)
        return base * expand_mask(mask, self.n_edges)

    # ---- updates -----------------------------------------------------------

    def learner_update(self, windows: list[list[Transition]] | None = None) -> dict:
        """One gradient step on the critic and the policy from a minibatch of
        replay windows; runs the periodic target/actor synchronizations."""
        hp = self.hp
        if windows is None:
            windows = self.buffer.sample_windows(hp.batch, hp.n_step, self._rng)
        M = len(windows)
        E = self.n_edges

        targets = np.stack(
            [
                n_step_target(w, self.target_policy, self.target_critic, hp.gamma, self.scaler)
                for w in windows
            ]
        )  # (M, E)
        obs = torch.as_tensor(
            np.stack([self.scaler(w[0].obs) for w in windows]), dtype=torch.float32
        )  # (M, E, W)
        joint = torch.as_tensor(
            np.stack([w[0].actions.reshape(-1) for w in windows]), dtype=torch.float32
        )  # (M, E*A)
        y = torch.as_tensor(targets, dtype=torch.float32)

        joint_rep = joint.unsqueeze(1).expand(-1, E, -1)
        q = self.critic(obs, joint_rep)  # (M, E)
        critic_loss = ((y - q) ** 2).mean()
        if not torch.isfinite(critic_loss):
            logging.getLogger(__name__).warning("non-finite critic loss; update skipped")
            return {"skipped": True, "critic_loss": float("nan"), "policy_loss": float("nan")}
        self.critic_opt.zero_grad()
        critic_loss.backward()
        self.critic_opt.step()

        # deterministic policy gradient: each edge's action slice is replaced
        # by the differentiable (masked) policy output, other edges stay at
        # the batch values
        from mad4pg.replay import expand_mask

        masks = torch.as_tensor(
            np.stack([expand_mask(w[0].mask, E) for w in windows]), dtype=torch.float32
        )  # (M, E, A)
        policy_losses = []
        actions_new = self.policy(obs) * masks  # (M, E, A)
        for e in range(E):
            joint_e = joint_rep[:, e, :].clone()
            joint_e = torch.cat(
                [
                    joint_e[:, : e * self.action_width],
                    actions_new[:, e, :],
                    joint_e[:, (e + 1) * self.action_width :],
                ],
                dim=1,
            )
            policy_losses.append(-self.critic(obs[:, e, :], joint_e).mean())
        policy_loss = torch.stack(policy_losses).mean()
        if not torch.isfinite(policy_loss):
            logging.getLogger(__name__).warning("non-finite policy loss; update skipped")
            return {"skipped": True, "critic_loss": float(critic_loss.detach()), "policy_loss": float("nan")}
        self.policy_opt.zero_grad()
        policy_loss.backward()
        self.policy_opt.step()

        self.updates_done += 1
        if self.updates_done % hp.t_tgt == 0:
            self.soft_update(hp.soft_rate)
        if self.updates_done % hp.t_act == 0:
            self.replication_requests += 1
        return {
            "skipped": False,
            "critic_loss": float(critic_loss.detach()),
            "policy_loss": float(policy_loss.detach()),
        }

    def soft_update(self, rate: float) -> None:
        """theta' <- rate*theta + (1-rate)*theta'."""
        for target, local in (
            (self.target_policy, self.policy),
            (self.target_critic, self.critic),
        ):
            with torch.no_grad():
                for tp, lp in zip(target.parameters(), local.parameters()):
                    tp.mul_(1.0 - rate).add_(rate * lp)

    def policy_snapshot(self) -> dict:
        """Weights to replicate into the distributed actors."""
        return copy.deepcopy(self.policy.state_dict())


def evaluate_policy(client, learner: Learner, seeds: list[int]) -> float:
    """Mean cumulative reward of the noise-free policy over eval episodes."""
    from mad4pg.actor import Actor

    actor = Actor(0, client, copy.deepcopy(learner.policy), learner.scaler, epsilon=0.0, seed=0)
    actor.load_weights(learner.policy_snapshot())
    crs = []
    for i, seed in enumerate(seeds):
        _, metrics = actor.run_episode(seed, episode_id=-1 - i)
        crs.append(metrics["cr"])
    return float(np.mean(crs))


def train(
    make_client,
    obs_width: int,
    n_edges: int,
    action_width: int,
    hp: Hyperparams,
    scaler: ObsScaler,
    n_updates: int,
    train_seed: int,
    warmup_transitions: int = 1000,
    episodes_per_round: int = 1,
    updates_per_round: int = 10,
    train_seed_base: int = 10_000,
) -> Learner:
    """Desk-scale training driver.

    The learner owns the buffer; actors (each with its own bridge session
    and a replicated policy snapshot) are scheduled round-robin and their
    transitions are drained into the buffer. Weights replicate to the actors
    every t_act learner steps.
    """
    from mad4pg.actor import Actor

    learner = Learner(obs_width, n_edges, action_width, hp, scaler, seed=train_seed)
    actors = [
        Actor(
            j,
            make_client(),
            copy.deepcopy(learner.policy),
            scaler,
            epsilon=hp.epsilon,
            seed=train_seed,
        )
        for j in range(max(1, hp.n_actors))
    ]
    snapshot = learner.policy_snapshot()
    for actor in actors:
        actor.load_weights(snapshot)
    replicated_at = learner.replication_requests
    episode = 0

    def collect_one():
        nonlocal episode
        actor = actors[episode % len(actors)]
        trs, metrics = actor.run_episode(train_seed_base + episode, episode)
        for tr in trs:
            learner.buffer.add(tr)
        episode += 1
        return metrics

    try:
        while len(learner.buffer) < warmup_transitions:
            collect_one()
        while learner.updates_done < n_updates:
            for _ in range(episodes_per_round):
                collect_one()
            for _ in range(min(updates_per_round, n_updates - learner.updates_done)):
                learner.learner_update()
            if learner.replication_requests != replicated_at:
                replicated_at = learner.replication_requests
                snapshot = learner.policy_snapshot()
                for actor in actors:
                    actor.load_weights(snapshot)
    finally:
        for actor in actors:
            actor.client.close()
    return learner
