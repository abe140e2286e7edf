"""Shared fixtures: miniature model configs and synthetic rollout segments."""

import numpy as np
import pytest
import torch

from social_nav.configs import ModelConfig, TrainConfig
from social_nav.replay import RobotSegment


def mini_model_config(**overrides) -> ModelConfig:
    cfg = ModelConfig(edge_embed_dim=4, rnn_hidden_dim=8, attn_dim=8,
                      attn_heads=2, node_pre_dim=8, feature_dim=8,
                      critic_embed_dim=8, critic_hidden_dim=8,
                      critic_attn_heads=2, policy_hidden_dim=8)
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def mini_train_config(**overrides) -> TrainConfig:
    cfg = TrainConfig(batch_size=4, warmup_random_steps=0)
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def random_segment(rng: np.random.Generator, rollout_len=5, hidden_dim=8,
                   max_agents=4, n_real=None, occupancy=None) -> RobotSegment:
    """Synthetic one-robot segment with n_real real steps, rest padded."""
    t = rollout_len
    f = t + 1
    if n_real is None:
        n_real = int(rng.integers(1, t + 1))
    ego = np.zeros((f, 9), dtype=np.float32)
    deltas = np.zeros((f, 2), dtype=np.float32)
    others = []
    frame_mask = np.zeros(f, dtype=bool)
    for i in range(f):
        if i <= n_real:
            ego[i] = rng.normal(size=9).astype(np.float32)
            deltas[i] = rng.normal(size=2).astype(np.float32)
            frame_mask[i] = True
            m = int(rng.integers(0, max_agents + 1)) if occupancy is None else occupancy
            others.append(rng.normal(size=(m, 2)).astype(np.float32))
        else:
            others.append(np.zeros((0, 2), dtype=np.float32))
    a0 = max(len(o) for o in others)
    actions = np.zeros((t, 2), dtype=np.float32)
    rewards = np.zeros(t, dtype=np.float32)
    dones = np.ones(t, dtype=bool)
    step_mask = np.zeros(t, dtype=bool)
    actions[:n_real] = rng.uniform(-1, 1, size=(n_real, 2)).astype(np.float32)
    rewards[:n_real] = rng.normal(size=n_real).astype(np.float32)
    dones[:n_real] = False
    if n_real < t or rng.uniform() < 0.3:
        dones[n_real - 1] = True  # segment ends the episode
    step_mask[:n_real] = True
    return RobotSegment(
        ego=ego, deltas=deltas, others=others, actions=actions, rewards=rewards,
        dones=dones, step_mask=step_mask, frame_mask=frame_mask,
        h_spatial=rng.normal(size=(a0, hidden_dim)).astype(np.float32),
        h_temporal=rng.normal(size=hidden_dim).astype(np.float32),
        h_node=rng.normal(size=hidden_dim).astype(np.float32),
        padding_indices=np.arange(n_real, t))


@pytest.fixture(autouse=True)
def _torch_deterministic():
    torch.manual_seed(0)
    yield
