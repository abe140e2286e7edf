"""Reward engine tests: predictors, lookahead comfort penalty, shaping terms.

The lookahead implementation is checked against an independent brute-force
oracle that scans every (pedestrian, step) pair.
"""

import dataclasses
import math

import numpy as np
import pytest

from social_nav.configs import RewardConfig, WorldConfig
from social_nav.rewards import (
    PredictedTrajectories,
    basic_reward,
    compute_rewards,
    joint_reward,
    k_step_reward,
    predict_constant_velocity,
    predict_oracle_sf,
)
from social_nav.sim import PedestrianState, reset
from social_nav.sim.world import AgentState, World

DT = 0.25


def reward_config(**overrides) -> RewardConfig:
    cfg = RewardConfig(r_env=6.0, d_comfort=0.25, k_lookahead=5, use_k_step=True)
    return dataclasses.replace(cfg, **overrides)


def robot_at(position, v_pref=1.0, radius=0.6, goal=(0.0, 0.0)) -> AgentState:
    return AgentState(position=np.array(position, dtype=float),
                      velocity=np.zeros(2), radius=radius,
                      goal=np.array(goal, dtype=float), v_pref=v_pref, heading=0.0)


def static_ped(position, radius=0.5):
    return PedestrianState(position=np.array(position, dtype=float),
                           velocity=np.zeros(2), radius=radius,
                           goal=np.array(position, dtype=float), v_pref=1.0,
                           heading=0.0, goal_change_prob=0.0,
                           comfort_radius=radius + 0.25)


def k_step_oracle(robot, action, preds: PredictedTrajectories,
                  cfg: RewardConfig, dt: float) -> float:
    """Exhaustive (pedestrian, step) scan; independent of the implementation."""
    velocity = np.asarray(action, dtype=float) * robot.v_pref
    worst = 0.0
    for j in range(preds.positions.shape[0]):
        for k in range(1, preds.horizon + 1):
            virtual = robot.position + velocity * (k * dt)
            gap = (np.linalg.norm(virtual - preds.positions[j, k - 1])
                   - robot.radius - preds.radii[j])
            if gap < cfg.d_comfort:
                worst = min(worst, -math.exp(-k))
                break
    return worst


def random_predictions(rng, n_peds, K=5) -> PredictedTrajectories:
    return PredictedTrajectories(
        agent_ids=np.arange(n_peds),
        positions=rng.uniform(-4, 4, size=(n_peds, K, 2)),
        radii=rng.uniform(0.3, 1.3, size=n_peds),
    )


# -- predictors ---------------------------------------------------------------

def test_constant_velocity_static_ped():
    preds = predict_constant_velocity([static_ped((1.0, 2.0))], K=5, dt=DT)
    assert np.allclose(preds.positions, [1.0, 2.0])


def test_constant_velocity_offsets():
    ped = static_ped((0.0, 0.0))
    ped.velocity = np.array([1.0, 0.0])
    preds = predict_constant_velocity([ped], K=5, dt=DT)
    assert np.allclose(preds.positions[0, :, 0], [0.25, 0.5, 0.75, 1.0, 1.25])
    assert np.allclose(preds.positions[0, :, 1], 0.0)


def test_constant_velocity_matches_interaction_free_rollout():
    # A lone pedestrian cruising at v_pref has zero net social force, so
    # the true rollout is exactly linear.
    cfg = WorldConfig(n_pedestrians=1, n_robots=0)
    w = World(cfg, seed=0)
    ped = static_ped((0.0, 0.0))
    ped.goal = np.array([100.0, 0.0])
    ped.velocity = np.array([1.0, 0.0])
    w.pedestrians = [ped]
    w.goal_reached = []
    w.draw_perceived_radii()

    cv = predict_constant_velocity(w.pedestrians, K=5, dt=cfg.dt)
    sf = predict_oracle_sf(w, K=5)
    assert np.allclose(cv.positions, sf.positions, atol=1e-12)


def test_oracle_sf_matches_live_simulation():
    cfg = WorldConfig(n_pedestrians=6, n_robots=0)
    w = reset(cfg, seed=13)
    for _ in range(4):  # get pedestrians moving
        w.step(np.zeros((0, 2)))
    for p in w.pedestrians:
        p.goal_change_prob = 0.0  # no goal changes in the live rollout either
    preds = predict_oracle_sf(w, K=5)
    live = w.clone()
    for k in range(5):
        live.step(np.zeros((0, 2)))
        actual = np.array([p.position for p in live.pedestrians])
        assert np.allclose(preds.positions[:, k], actual, atol=1e-12)


def test_oracle_sf_is_pure():
    w = reset(WorldConfig(n_pedestrians=5, n_robots=2), seed=3)
    before = w.state_hash()
    predict_oracle_sf(w, K=5)
    assert w.state_hash() == before


def test_oracle_sf_static_ped_at_goal():
    cfg = WorldConfig(n_pedestrians=1, n_robots=0)
    w = World(cfg, seed=0)
    w.pedestrians = [static_ped((2.0, 2.0))]
    w.goal_reached = []
    w.draw_perceived_radii()
    preds = predict_oracle_sf(w, K=1)
    assert np.allclose(preds.positions[0, 0], [2.0, 2.0])


# -- k-step lookahead ---------------------------------------------------------

def test_k_step_no_intrusion_is_zero():
    cfg = reward_config()
    robot = robot_at((0.0, 0.0))
    preds = predict_constant_velocity([static_ped((10.0, 10.0))], K=5, dt=DT)
    assert k_step_reward(robot, np.array([1.0, 0.0]), preds, cfg, DT) == 0.0


def test_k_step_first_intrusion_at_two():
    # Robot advances 0.25 m per virtual step; a pedestrian parked 1.7 m
    # ahead first enters the comfort margin at step 2.  Expected value
    # computed with the brute-force oracle and frozen here.
    cfg = reward_config()
    robot = robot_at((0.0, 0.0))
    preds = predict_constant_velocity([static_ped((1.7, 0.0))], K=5, dt=DT)
    action = np.array([1.0, 0.0])
    got = k_step_reward(robot, action, preds, cfg, DT)
    assert got == k_step_oracle(robot, action, preds, cfg, DT)
    assert got == pytest.approx(-math.exp(-2))
    assert got == pytest.approx(-0.1353352832366127)


def test_k_step_two_pedestrians_takes_minimum():
    cfg = reward_config()
    robot = robot_at((0.0, 0.0))
    preds = predict_constant_velocity(
        [static_ped((1.0, 0.0)), static_ped((2.2, 0.0))], K=5, dt=DT)
    action = np.array([1.0, 0.0])
    got = k_step_reward(robot, action, preds, cfg, DT)
    assert got == k_step_oracle(robot, action, preds, cfg, DT)
    assert got == pytest.approx(-math.exp(-1))


def test_k_step_oracle_equivalence_sweep():
    # 1000 random configurations: vectorized implementation must agree
    # exactly with the exhaustive scan.
    cfg = reward_config()
    rng = np.random.default_rng(99)
    for _ in range(1000):
        robot = robot_at(rng.uniform(-3, 3, size=2),
                         v_pref=rng.uniform(0.5, 1.5),
                         radius=rng.uniform(0.3, 0.9))
        action = rng.uniform(-1, 1, size=2)
        preds = random_predictions(rng, rng.integers(0, 6))
        assert (k_step_reward(robot, action, preds, cfg, DT)
                == k_step_oracle(robot, action, preds, cfg, DT))


def test_k_step_range_property():
    cfg = reward_config()
    rng = np.random.default_rng(7)
    for _ in range(300):
        robot = robot_at(rng.uniform(-3, 3, size=2))
        r = k_step_reward(robot, rng.uniform(-1, 1, size=2),
                          random_predictions(rng, 4), cfg, DT)
        assert -math.exp(-1) - 1e-15 <= r <= 0.0


def test_k_step_monotone_safety():
    # Pushing every predicted pedestrian radially away from the robot's
    # virtual track can only weaken the penalty.
    cfg = reward_config()
    rng = np.random.default_rng(17)
    for _ in range(200):
        robot = robot_at(rng.uniform(-3, 3, size=2))
        action = rng.uniform(-1, 1, size=2)
        preds = random_predictions(rng, 3)
        base = k_step_reward(robot, action, preds, cfg, DT)

        velocity = action * robot.v_pref
        ks = np.arange(1, preds.horizon + 1)
        track = robot.position[None, :] + ks[:, None] * DT * velocity[None, :]
        moved = PredictedTrajectories(
            agent_ids=preds.agent_ids,
            positions=track[None, :, :] + (preds.positions - track[None, :, :]) * 1.5,
            radii=preds.radii)
        assert k_step_reward(robot, action, moved, cfg, DT) >= base


def test_k_step_horizon_mismatch_rejected():
    cfg = reward_config()
    preds = random_predictions(np.random.default_rng(0), 2, K=3)
    with pytest.raises(ValueError):
        k_step_reward(robot_at((0, 0)), np.zeros(2), preds, cfg, DT)


# -- basic reward -------------------------------------------------------------

def overlap_world() -> World:
    w = reset(WorldConfig(n_pedestrians=1, n_robots=1), seed=3)
    w.pedestrians[0].position = w.robots[0].position + np.array([0.3, 0.0])
    return w


def test_basic_reward_collision_stage1_and_stage2():
    w = overlap_world()
    assert basic_reward(0, w, 0.0, reward_config()) == -1.0
    stage2 = reward_config().for_stage("II")
    assert basic_reward(0, w, 0.0, stage2) == -5.0
    # collision branch dominates any other term
    assert basic_reward(0, w, -0.3, stage2) == -5.0


def test_basic_reward_progress_term():
    # d_g = 3 m in a radius-6 scenario: -3/36 - 0.001, no other terms.
    w = reset(WorldConfig(n_pedestrians=0, n_robots=1), seed=3)
    w.robots[0].goal = w.robots[0].position + np.array([3.0, 0.0])
    got = basic_reward(0, w, 0.0, reward_config())
    assert got == pytest.approx(-(3.0 / 36.0) - 0.001, abs=1e-12)


def test_basic_reward_comfort_intrusion_adds_half():
    w = reset(WorldConfig(n_pedestrians=1, n_robots=1), seed=3)
    robot, ped = w.robots[0], w.pedestrians[0]
    ped.position = robot.position + np.array([robot.radius + ped.radius + 0.2, 0.0])
    with_intrusion = basic_reward(0, w, 0.0, reward_config())
    ped.position = robot.position + np.array([4.0, 0.0])
    without = basic_reward(0, w, 0.0, reward_config())
    assert with_intrusion - without == pytest.approx(-0.5)


def test_basic_reward_branch_table_sweep():
    # 1000 random states against a direct evaluation of the formula.
    cfg = reward_config(use_k_step=False)
    rng = np.random.default_rng(123)
    for _ in range(1000):
        w = reset(WorldConfig(n_pedestrians=2, n_robots=2), seed=int(rng.integers(1e6)))
        for p in w.pedestrians:
            p.position = rng.uniform(-4, 4, size=2)
        for r in w.robots:
            r.position = rng.uniform(-4, 4, size=2)
        k_term = float(rng.uniform(-math.exp(-1), 0))
        got = basic_reward(0, w, k_term, cfg)

        d_rrs, d_rps, comfort = w.collision_check(0)
        collided = (len(d_rrs) and min(d_rrs) < 0) or (len(d_rps) and min(d_rps) < 0)
        if collided:
            assert got == cfg.collision_penalty
        else:
            d_g = np.linalg.norm(w.robots[0].goal - w.robots[0].position)
            expected = -d_g / 36.0 - 0.001 - (0.5 if comfort else 0.0) + k_term
            assert got == pytest.approx(expected, abs=1e-12)


# -- joint reward -------------------------------------------------------------

def test_joint_reward_cases():
    assert joint_reward([0.0, 0.0, 0.0]) == 0.0
    assert joint_reward([-1.0, -0.05, 0.0]) == pytest.approx(-1.05)
    rng = np.random.default_rng(5)
    vals = rng.normal(size=6)
    assert joint_reward(vals) == pytest.approx(joint_reward(vals[::-1]))
    # linearity
    assert joint_reward(2.0 * vals) == pytest.approx(2.0 * joint_reward(vals))


def test_compute_rewards_team_is_sum():
    w = reset(WorldConfig(n_pedestrians=3, n_robots=3), seed=8)
    actions = np.zeros((3, 2))
    per_robot, team = compute_rewards(w, actions, reward_config())
    assert team == pytest.approx(float(np.sum(per_robot)))
    assert per_robot.shape == (3,)
