"""Experiment configuration: typed sections, YAML loading, validation.

Every tunable of the simulator, reward shaping, networks, training loop and
evaluation battery lives here.  Config files are YAML with one mapping per
section; unknown keys are rejected with the offending key named so typos
never fail silently.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from typing import Any

import yaml


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration."""


@dataclass
class WorldConfig:
    """Simulation scene parameters (circle-crossing crowd scenario)."""

    scenario_radius: float = 6.0
    n_pedestrians: int = 5
    n_robots: int = 3
    fov_range: float = 10.0
    fov_angle: float = 2.0 * math.pi
    dt: float = 0.25
    max_timesteps: int = 150
    radius_noise_scale: float = 0.05   # uniform radius sensing noise, +/- this many metres
    d_comfort: float = 0.25            # social comfort margin around pedestrian safety zone

    # pedestrian sampling ranges
    ped_radius_range: tuple[float, float] = (0.5, 1.3)
    ped_v_pref_range: tuple[float, float] = (0.5, 1.5)
    goal_change_prob_range: tuple[float, float] = (0.2, 0.3)
    goal_decision_window: int = 25     # steps per goal-change decision window

    # robot parameters
    robot_radius: float = 0.6
    robot_v_pref: float = 1.0

    # social-force constants (pedestrian dynamics)
    sf_tau: float = 0.5                # velocity relaxation time (s)
    sf_repulsion_strength: float = 2.0  # A (m/s^2)
    sf_repulsion_range: float = 0.3    # B (m)
    sf_speed_cap: float = 1.3          # max speed as a multiple of v_pref
    sf_dist_floor: float = 1e-3        # pairwise distance floor (m)

    placement_margin: float = 0.2      # required surface clearance at spawn (m)
    placement_attempts: int = 100      # rejection-sampling cap per agent

    def validate(self) -> None:
        if self.dt <= 0:
            raise ConfigError("world.dt must be positive")
        if self.max_timesteps <= 0:
            raise ConfigError("world.max_timesteps must be positive")
        if self.fov_range <= 0:
            raise ConfigError("world.fov_range must be positive")
        if self.n_pedestrians < 0 or self.n_robots < 0:
            raise ConfigError("agent counts must be non-negative")
        if self.ped_radius_range[0] <= 0 or self.ped_radius_range[0] > self.ped_radius_range[1]:
            raise ConfigError("world.ped_radius_range must be an increasing positive pair")
        lo, hi = self.goal_change_prob_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigError("world.goal_change_prob_range must lie within [0, 1]")
        if self.goal_decision_window < 1:
            raise ConfigError("world.goal_decision_window must be >= 1")


@dataclass
class RewardConfig:
    """Reward shaping constants for one training stage."""

    collision_penalty: float = -1.0
    r_time: float = -0.001
    comfort_penalty: float = 0.5       # applied as -comfort_penalty * indicator
    d_comfort: float = 0.25
    k_lookahead: int = 5
    r_env: float = 6.0                 # scenario radius; f_scale = 1 / r_env^2
    use_k_step: bool = False
    predictor: str = "constant_velocity"  # constant_velocity | oracle_sf
    stage: str = "I"

    @property
    def f_scale(self) -> float:
        return 1.0 / (self.r_env ** 2)

    def validate(self) -> None:
        if self.k_lookahead < 1:
            raise ConfigError("reward.k_lookahead must be >= 1")
        if self.r_env <= 0:
            raise ConfigError("reward.r_env must be positive")
        if self.collision_penalty >= 0:
            raise ConfigError("reward.collision_penalty must be negative")
        if self.predictor not in ("constant_velocity", "oracle_sf"):
            raise ConfigError(f"unknown reward.predictor '{self.predictor}'")

    def for_stage(self, stage: str, stage2_collision_penalty: float = -5.0,
                  k_step_in_stage2: bool = True) -> "RewardConfig":
        """Stage-II variant: larger collision penalty, lookahead term switched on."""
        cfg = dataclasses.replace(self)
        cfg.stage = stage
        if stage == "II":
            cfg.collision_penalty = stage2_collision_penalty
            cfg.use_k_step = k_step_in_stage2
        return cfg


@dataclass
class ModelConfig:
    """Network sizes for the social encoder, critics and policy."""

    ego_dim: int = 9
    edge_embed_dim: int = 64
    rnn_hidden_dim: int = 256
    attn_dim: int = 128
    attn_heads: int = 4
    node_pre_dim: int = 128
    feature_dim: int = 256
    critic_embed_dim: int = 128
    critic_hidden_dim: int = 128
    critic_attn_heads: int = 4
    policy_hidden_dim: int = 128
    action_dim: int = 2
    log_std_min: float = -20.0
    log_std_max: float = 2.0
    critic_aggregation: str = "attention"  # attention | concat

    def validate(self) -> None:
        if self.attn_dim % self.attn_heads != 0:
            raise ConfigError("model.attn_dim must be divisible by model.attn_heads")
        if self.critic_embed_dim % self.critic_attn_heads != 0:
            raise ConfigError("model.critic_embed_dim must be divisible by model.critic_attn_heads")
        if self.critic_aggregation not in ("attention", "concat"):
            raise ConfigError(f"unknown model.critic_aggregation '{self.critic_aggregation}'")


@dataclass
class TrainConfig:
    """Off-policy training loop parameters."""

    episodes: int = 50_000
    stage2_start_episode: int = 25_000
    stage2_collision_penalty: float = -5.0
    rollout_len: int = 10
    buffer_capacity: int = 200_000
    batch_size: int = 256
    lr: float = 5e-4
    gamma: float = 0.99
    tau: float = 0.01
    policy_delay: int = 2
    alpha_init: float = 0.02
    target_entropy: float = -2.0
    grad_clip: float = 10.0
    update_every: int = 8              # env steps between gradient updates
    warmup_random_steps: int = 2_000
    seed: int = 0
    checkpoint_every: int = 500        # episodes between checkpoints
    eval_every: int = 0                # episodes between eval snapshots, 0 = off
    eval_episodes: int = 20

    def validate(self) -> None:
        if self.rollout_len < 1:
            raise ConfigError("train.rollout_len must be >= 1")
        if not (0.0 <= self.gamma <= 1.0):
            raise ConfigError("train.gamma must lie within [0, 1]")
        if not (0.0 <= self.tau <= 1.0):
            raise ConfigError("train.tau must lie within [0, 1]")
        if self.policy_delay < 1:
            raise ConfigError("train.policy_delay must be >= 1")
        if self.alpha_init <= 0:
            raise ConfigError("train.alpha_init must be positive")


@dataclass
class OrcaConfig:
    """Reciprocal collision-avoidance baseline parameters."""

    time_horizon: float = 2.0          # robot-robot horizon (s)
    time_horizon_static: float = 2.0   # robot-pedestrian horizon (s)
    neighbor_range: float = 10.0       # sensing range (m), kept equal to FOV
    max_speed: float = 1.0
    safety_margin: float = 0.05        # radius inflation against float grazing (m)

    def validate(self) -> None:
        if self.time_horizon <= 0 or self.time_horizon_static <= 0:
            raise ConfigError("orca horizons must be positive")
        if self.safety_margin < 0:
            raise ConfigError("orca.safety_margin must be non-negative")


@dataclass
class EvalConfig:
    """Seeded evaluation battery parameters."""

    n_episodes: int = 500
    seed: int = 7_000                  # episode i uses seed + i, shared across policies
    keep_trajectories: bool = True

    def validate(self) -> None:
        if self.n_episodes < 1:
            raise ConfigError("eval.n_episodes must be >= 1")


@dataclass
class ExperimentConfig:
    """Top-level bundle mirroring the YAML config file."""

    world: WorldConfig = field(default_factory=WorldConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    orca: OrcaConfig = field(default_factory=OrcaConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    policy: str = "msa3c_pred"         # msa3c | msa3c_pred | orca | sf | random
    seed: int = 42

    KNOWN_POLICIES = ("msa3c", "msa3c_pred", "orca", "sf", "random")

    def validate(self) -> None:
        for section in (self.world, self.reward, self.model, self.train, self.orca, self.eval):
            section.validate()
        if self.policy not in self.KNOWN_POLICIES:
            raise ConfigError(
                f"unknown policy '{self.policy}', expected one of {self.KNOWN_POLICIES}")

    def resolved(self) -> "ExperimentConfig":
        """Copy with cross-section defaults tied together.

        The reward scale follows the scenario radius, the comfort margin is
        shared between simulator and reward engine, and ORCA's neighbour
        range tracks the FOV.  The msa3c/msa3c_pred split maps onto the
        lookahead-reward switch.
        """
        cfg = copy_config(self)
        cfg.reward.r_env = cfg.world.scenario_radius
        cfg.reward.d_comfort = cfg.world.d_comfort
        cfg.orca.neighbor_range = cfg.world.fov_range
        cfg.orca.max_speed = cfg.world.robot_v_pref
        if cfg.policy == "msa3c":
            cfg.reward.use_k_step = False
        cfg.validate()
        return cfg


def _from_mapping(cls, data: dict, path: str):
    """Build a dataclass from a mapping, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"config section '{path}' must be a mapping")
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key '{path}.{key}'")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


_SECTION_TYPES = {
    "world": WorldConfig,
    "reward": RewardConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "orca": OrcaConfig,
    "eval": EvalConfig,
}


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("top-level config must be a mapping")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _from_mapping(_SECTION_TYPES[key], value, key)
        elif key in ("policy", "seed"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key '{key}'")
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def save_config(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)


def copy_config(cfg: ExperimentConfig) -> ExperimentConfig:
    return config_from_dict(json.loads(json.dumps(config_to_dict(cfg))))


def config_fingerprint(cfg: ExperimentConfig) -> str:
    """Short hash of the canonicalized config, stamped into reports."""
    canon = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]
