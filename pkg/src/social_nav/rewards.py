"""Per-robot navigation rewards with a K-step social-comfort lookahead.

The basic term trades off goal progress, time and comfort-zone intrusion,
and collapses to a flat penalty on collision.  The lookahead term rolls a
pedestrian predictor K steps forward, holds the robot's evaluated velocity
constant over the same horizon, and penalises the earliest predicted
comfort intrusion with weight e^(-k), so imminent intrusions hurt most.
All distances here use true safety radii; sensing noise only affects what
the policies observe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .configs import RewardConfig
from .sim import social_force
from .sim.world import AgentState, World


@dataclass
class PredictedTrajectories:
    """K future positions per pedestrian, with safety radii."""

    agent_ids: np.ndarray      # (n,)
    positions: np.ndarray      # (n, K, 2)
    radii: np.ndarray          # (n,)

    @property
    def horizon(self) -> int:
        return self.positions.shape[1]

    def select(self, agent_ids) -> "PredictedTrajectories":
        """Restrict to the given pedestrian ids (e.g. one robot's FOV)."""
        wanted = set(int(a) for a in agent_ids)
        keep = np.array([i for i, a in enumerate(self.agent_ids) if int(a) in wanted],
                        dtype=int)
        return PredictedTrajectories(
            agent_ids=self.agent_ids[keep],
            positions=self.positions[keep] if len(keep) else np.zeros((0, self.horizon, 2)),
            radii=self.radii[keep],
        )


def predict_constant_velocity(pedestrians, K: int, dt: float,
                              agent_ids=None) -> PredictedTrajectories:
    """Linear extrapolation of each pedestrian: p_k = p + v * k * dt."""
    if K < 1:
        raise ValueError("lookahead horizon K must be >= 1")
    n = len(pedestrians)
    ids = np.arange(n) if agent_ids is None else np.asarray(agent_ids)
    positions = np.zeros((n, K, 2))
    ks = np.arange(1, K + 1)[:, None] * dt
    for i, ped in enumerate(pedestrians):
        positions[i] = ped.position[None, :] + ks * ped.velocity[None, :]
    radii = np.array([p.radius for p in pedestrians])
    return PredictedTrajectories(agent_ids=ids, positions=positions, radii=radii)


def predict_oracle_sf(world: World, K: int) -> PredictedTrajectories:
    """Roll the true pedestrian dynamics K steps forward, without goal changes.

    Works on a clone; the live world is never mutated.
    """
    if K < 1:
        raise ValueError("lookahead horizon K must be >= 1")
    shadow = world.clone()
    n = shadow.n_pedestrians
    positions = np.zeros((n, K, 2))
    for k in range(K):
        social_force.pedestrian_step(shadow)
        for i, ped in enumerate(shadow.pedestrians):
            positions[i, k] = ped.position
    radii = np.array([p.radius for p in world.pedestrians])
    return PredictedTrajectories(agent_ids=np.arange(n), positions=positions, radii=radii)


def k_step_reward(robot: AgentState, action: np.ndarray,
                  predictions: PredictedTrajectories, config: RewardConfig,
                  dt: float) -> float:
    """Earliest-intrusion comfort penalty over the lookahead horizon.

    The robot's virtual track holds the evaluated action's velocity
    constant: p_k = p + (action * v_pref) * k * dt.  For each pedestrian,
    if any predicted surface distance drops below the comfort margin the
    pedestrian contributes -e^(-k*) with k* the first intruding step;
    otherwise 0.  The result is the minimum over pedestrians (so the most
    imminent intrusion dominates), always within [-e^(-1), 0].
    """
    K = predictions.horizon
    if K != config.k_lookahead:
        raise ValueError(
            f"prediction horizon {K} does not match configured K={config.k_lookahead}")
    if predictions.positions.shape[0] == 0:
        return 0.0
    velocity = np.asarray(action, dtype=float) * robot.v_pref
    ks = np.arange(1, K + 1)
    robot_track = robot.position[None, :] + ks[:, None] * dt * velocity[None, :]

    worst = 0.0
    for p_idx in range(predictions.positions.shape[0]):
        gaps = (np.linalg.norm(robot_track - predictions.positions[p_idx], axis=1)
                - robot.radius - predictions.radii[p_idx])
        intruding = np.nonzero(gaps < config.d_comfort)[0]
        if len(intruding):
            k_first = int(intruding[0]) + 1
            worst = min(worst, -math.exp(-k_first))
    return worst


def basic_reward(robot_index: int, world: World, k_step_term: float,
                 config: RewardConfig) -> float:
    """Single-step reward: collision penalty, else shaped progress terms.

    Non-collision value is -|d_g| / r_env^2 + r_time
    - comfort_penalty * [comfort intrusion now] + k_step_term.
    """
    d_rrs, d_rps, comfort = world.collision_check(robot_index)
    if (len(d_rrs) and np.any(d_rrs < 0)) or (len(d_rps) and np.any(d_rps < 0)):
        return config.collision_penalty
    d_g = world.robots[robot_index].dist_to_goal()
    reward = -config.f_scale * d_g + config.r_time + k_step_term
    if comfort:
        reward -= config.comfort_penalty
    return reward


def joint_reward(per_robot_rewards) -> float:
    """Team reward: plain sum of the per-robot contributions."""
    return float(np.sum(per_robot_rewards))


def make_predictor(config: RewardConfig):
    """Resolve the configured pedestrian predictor to a callable(world) -> preds."""
    if config.predictor == "constant_velocity":
        def predict(world: World) -> PredictedTrajectories:
            return predict_constant_velocity(
                world.pedestrians, config.k_lookahead, world.config.dt)
    elif config.predictor == "oracle_sf":
        def predict(world: World) -> PredictedTrajectories:
            return predict_oracle_sf(world, config.k_lookahead)
    else:
        raise ValueError(f"unknown predictor '{config.predictor}'")
    return predict


def compute_rewards(world: World, actions: np.ndarray, config: RewardConfig,
                    predictor=None) -> tuple[np.ndarray, float]:
    """Per-robot rewards plus team sum for the state just reached.

    ``actions`` are the commands that produced the current state; they
    anchor the lookahead term's virtual robot tracks.  The predictor is
    invoked once and FOV-filtered per robot.
    """
    n = world.n_robots
    rewards = np.zeros(n)
    predictions = None
    if config.use_k_step:
        predictions = (predictor or make_predictor(config))(world)
    for i in range(n):
        k_term = 0.0
        if predictions is not None:
            obs = world.sense(i)
            fov_ids = [o.agent_id for o in obs.others if o.kind == "pedestrian"]
            k_term = k_step_reward(world.robots[i], actions[i],
                                   predictions.select(fov_ids), config,
                                   world.config.dt)
        rewards[i] = basic_reward(i, world, k_term, config)
    return rewards, joint_reward(rewards)
