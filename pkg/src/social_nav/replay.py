"""Off-policy storage of joint experience as fixed-length rollout segments.

Episodes are cut into non-overlapping segments of ``rollout_len`` steps.
The trailing segment is padded to full length; padded steps carry zero
sentinels, are flagged in the step mask and recorded by index so they can
never contribute to a loss.  Each segment stores the encoder hidden state
captured at its first step, so training resumes recurrence mid-episode
without burn-in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sim.world import Observation


class BufferNotReady(RuntimeError):
    """Sampling was requested before the buffer held a full batch."""


@dataclass
class RobotSegment:
    """One robot's slice of a joint rollout segment (numpy storage)."""

    ego: np.ndarray            # (F, 9) float32, F = rollout_len + 1 frames
    deltas: np.ndarray         # (F, 2) ego position deltas
    others: list               # F entries of (m_f, 2) relative positions
    actions: np.ndarray        # (T, 2)
    rewards: np.ndarray        # (T,)
    dones: np.ndarray          # (T,) bool
    step_mask: np.ndarray      # (T,) bool, False on padded pseudo-steps
    frame_mask: np.ndarray     # (F,) bool
    h_spatial: np.ndarray      # (A0, H) hidden rows at segment start
    h_temporal: np.ndarray     # (H,)
    h_node: np.ndarray         # (H,)
    padding_indices: np.ndarray  # indices of the padded pseudo-steps

    @property
    def rollout_len(self) -> int:
        return self.actions.shape[0]


class EpisodeTrajectory:
    """Accumulates one episode of joint experience during rollout."""

    def __init__(self, n_robots: int):
        self.n_robots = n_robots
        self.observations: list[list[Observation]] = []
        self.deltas: list[np.ndarray] = []
        self.actions: list[np.ndarray] = []
        self.rewards: list[np.ndarray] = []
        self.dones: list[bool] = []
        self.hiddens: dict[int, list] = {}
        self.final_observations: list[Observation] | None = None
        self.final_deltas: np.ndarray | None = None
        self.episode_return: float = 0.0

    def __len__(self) -> int:
        return len(self.actions)

    def append(self, observations, deltas, actions, rewards, done,
               hiddens=None) -> None:
        """Record one step; ``hiddens`` is required at segment boundaries."""
        if hiddens is not None:
            self.hiddens[len(self.actions)] = hiddens
        self.observations.append(observations)
        self.deltas.append(np.asarray(deltas, dtype=np.float32))
        self.actions.append(np.asarray(actions, dtype=np.float32))
        self.rewards.append(np.asarray(rewards, dtype=np.float32))
        self.dones.append(bool(done))
        self.episode_return += float(np.sum(rewards))

    def finish(self, observations, deltas) -> None:
        self.final_observations = observations
        self.final_deltas = np.asarray(deltas, dtype=np.float32)


def _zero_hidden(hidden_dim: int):
    return (np.zeros((0, hidden_dim), dtype=np.float32),
            np.zeros(hidden_dim, dtype=np.float32),
            np.zeros(hidden_dim, dtype=np.float32))


def split_episode(traj: EpisodeTrajectory, rollout_len: int,
                  hidden_dim: int) -> list[tuple[RobotSegment, ...]]:
    """Cut an episode into padded joint segments (the push_episode core)."""
    t_total = len(traj)
    if t_total == 0:
        return []
    if traj.final_observations is None:
        raise ValueError("trajectory is missing its final observation")
    n_segments = math.ceil(t_total / rollout_len)
    ego_dim = traj.observations[0][0].ego.shape[0]
    segments = []
    for s in range(n_segments):
        start = s * rollout_len
        n_real = min(rollout_len, t_total - start)
        boundary = traj.hiddens.get(start)
        robot_segs = []
        for r in range(traj.n_robots):
            f_len = rollout_len + 1
            ego = np.zeros((f_len, ego_dim), dtype=np.float32)
            deltas = np.zeros((f_len, 2), dtype=np.float32)
            others: list[np.ndarray] = []
            frame_mask = np.zeros(f_len, dtype=bool)
            for f in range(f_len):
                g = start + f
                if g < t_total:
                    obs = traj.observations[g][r]
                    delta = traj.deltas[g][r]
                elif g == t_total:
                    obs = traj.final_observations[r]
                    delta = traj.final_deltas[r]
                else:
                    others.append(np.zeros((0, 2), dtype=np.float32))
                    continue
                ego[f] = obs.ego
                deltas[f] = delta
                frame_mask[f] = True
                rel = (np.array([o.rel_position for o in obs.others], dtype=np.float32)
                       if obs.others else np.zeros((0, 2), dtype=np.float32))
                others.append(rel)

            actions = np.zeros((rollout_len, 2), dtype=np.float32)
            rewards = np.zeros(rollout_len, dtype=np.float32)
            dones = np.ones(rollout_len, dtype=bool)  # padding sentinel: done
            step_mask = np.zeros(rollout_len, dtype=bool)
            for t in range(n_real):
                actions[t] = traj.actions[start + t][r]
                rewards[t] = traj.rewards[start + t][r]
                dones[t] = traj.dones[start + t]
                step_mask[t] = True

            if boundary is not None:
                h_sp, h_tmp, h_node = boundary[r]
            else:
                h_sp, h_tmp, h_node = _zero_hidden(hidden_dim)
            a_seg = max((len(o) for o in others), default=0)
            h_sp = np.asarray(h_sp, dtype=np.float32)[:a_seg]

            robot_segs.append(RobotSegment(
                ego=ego, deltas=deltas, others=others, actions=actions,
                rewards=rewards, dones=dones, step_mask=step_mask,
                frame_mask=frame_mask, h_spatial=h_sp,
                h_temporal=np.asarray(h_tmp, dtype=np.float32),
                h_node=np.asarray(h_node, dtype=np.float32),
                padding_indices=np.arange(n_real, rollout_len)))
        segments.append(tuple(robot_segs))
    return segments


class ReplayBuffer:
    """FIFO ring of joint rollout segments with uniform sampling."""

    def __init__(self, capacity: int, rollout_len: int = 10,
                 hidden_dim: int = 256, seed: int = 0):
        self.capacity = int(capacity)
        self.rollout_len = rollout_len
        self.hidden_dim = hidden_dim
        self.rng = np.random.default_rng(seed)
        self._storage: list[tuple[RobotSegment, ...]] = []
        self._next = 0
        self.total_pushed = 0

    def __len__(self) -> int:
        return len(self._storage)

    def push_episode(self, traj: EpisodeTrajectory) -> int:
        """Split a finished episode into segments and store them FIFO."""
        segments = split_episode(traj, self.rollout_len, self.hidden_dim)
        for seg in segments:
            if len(self._storage) < self.capacity:
                self._storage.append(seg)
            else:
                self._storage[self._next] = seg
                self._next = (self._next + 1) % self.capacity
        self.total_pushed += len(segments)
        return len(segments)

    def ready(self, batch_size: int) -> bool:
        return len(self._storage) >= batch_size

    def sample(self, batch_size: int) -> list[list[RobotSegment]]:
        """Uniform draw without replacement; returns per-robot segment lists.

        Joint alignment is preserved: ``result[r][b]`` for every robot r
        comes from the same environment steps of the same episode.
        """
        if not self.ready(batch_size):
            raise BufferNotReady(
                f"buffer holds {len(self._storage)} segments, need {batch_size}")
        idx = self.rng.choice(len(self._storage), size=batch_size, replace=False)
        joint = [self._storage[i] for i in idx]
        n_robots = len(joint[0])
        return [[seg[r] for seg in joint] for r in range(n_robots)]

    # -- persistence ---------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "rollout_len": self.rollout_len,
            "hidden_dim": self.hidden_dim,
            "next": self._next,
            "total_pushed": self.total_pushed,
            "rng_state": self.rng.bit_generator.state,
            "storage": self._storage,
        }

    def load_state_dict(self, state: dict) -> None:
        self.capacity = state["capacity"]
        self.rollout_len = state["rollout_len"]
        self.hidden_dim = state["hidden_dim"]
        self._next = state["next"]
        self.total_pushed = state["total_pushed"]
        self.rng.bit_generator.state = state["rng_state"]
        self._storage = list(state["storage"])
