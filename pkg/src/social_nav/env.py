"""Episode-level environment: world stepping composed with the reward engine."""

from __future__ import annotations

import numpy as np

from .configs import RewardConfig, WorldConfig
from .rewards import compute_rewards, make_predictor
from .sim import reset as world_reset
from .sim.world import Observation, StepResult, World


class NavEnv:
    """Owns one episode at a time; rewards follow the active stage config."""

    def __init__(self, world_config: WorldConfig, reward_config: RewardConfig):
        self.world_config = world_config
        self.world: World | None = None
        self.set_reward_config(reward_config)

    def set_reward_config(self, reward_config: RewardConfig) -> None:
        self.reward_config = reward_config
        self._predictor = make_predictor(reward_config) if reward_config.use_k_step else None

    def reset(self, seed: int) -> list[Observation]:
        self.world = world_reset(self.world_config, seed)
        return [self.world.sense(i) for i in range(self.world.n_robots)]

    def step(self, actions: np.ndarray) -> StepResult:
        result = self.world.step(actions)
        rewards, team = compute_rewards(self.world, actions, self.reward_config,
                                        self._predictor)
        result.rewards = rewards
        result.team_reward = team
        return result
