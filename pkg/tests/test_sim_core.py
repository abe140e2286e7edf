"""Simulator tests: placement, social-force dynamics, sensing, collisions."""

import dataclasses
import math

import numpy as np
import pytest

from social_nav.configs import ConfigError, WorldConfig
from social_nav.sim import ContractViolation, PedestrianState, reset, social_force
from social_nav.sim.world import World


def small_config(**overrides) -> WorldConfig:
    cfg = WorldConfig(scenario_radius=6.0, n_pedestrians=5, n_robots=3)
    return dataclasses.replace(cfg, **overrides)


def world_arrays(world: World) -> np.ndarray:
    rows = []
    for _, _, a in world.agents():
        rows.append(np.concatenate([a.position, a.velocity, a.goal,
                                    [a.radius, a.v_pref, a.heading]]))
    return np.array(rows)


def lone_ped_world(position, velocity, goal, v_pref=1.0, radius=0.5) -> World:
    world = World(small_config(n_pedestrians=1, n_robots=0), seed=0)
    world.pedestrians = [PedestrianState(
        position=np.array(position, dtype=float),
        velocity=np.array(velocity, dtype=float),
        radius=radius, goal=np.array(goal, dtype=float), v_pref=v_pref,
        heading=0.0, goal_change_prob=0.0, comfort_radius=radius + 0.25)]
    world.goal_reached = []
    world.draw_perceived_radii()
    return world


# -- reset ------------------------------------------------------------------

def test_reset_is_deterministic():
    cfg = small_config()
    w1 = reset(cfg, seed=42)
    w2 = reset(cfg, seed=42)
    assert np.array_equal(world_arrays(w1), world_arrays(w2))
    assert w1.state_hash() == w2.state_hash()


def test_reset_sampling_ranges():
    # Table-backed ranges: ped radius 0.5-1.3 m, ped v_pref 0.5-1.5 m/s,
    # robot radius 0.6 m and v_pref 1 m/s.
    cfg = small_config()
    for seed in range(200):
        w = reset(cfg, seed=seed)
        for p in w.pedestrians:
            assert 0.5 <= p.radius <= 1.3
            assert 0.5 <= p.v_pref <= 1.5
            assert 0.2 <= p.goal_change_prob <= 0.3
        for r in w.robots:
            assert r.radius == 0.6
            assert r.v_pref == 1.0


def test_reset_layout_geometry():
    cfg = small_config()
    w = reset(cfg, seed=3)
    for _, _, a in w.agents():
        assert np.linalg.norm(a.position) == pytest.approx(cfg.scenario_radius)
        # approximately antipodal goal
        assert np.linalg.norm(a.goal + a.position) < 0.5
    # non-overlapping spawns
    states = [a for _, _, a in w.agents()]
    for i in range(len(states)):
        for j in range(i + 1, len(states)):
            gap = (np.linalg.norm(states[i].position - states[j].position)
                   - states[i].radius - states[j].radius)
            assert gap >= cfg.placement_margin - 1e-12


def test_reset_rejects_overcrowded_scene():
    # 200 pedestrians cannot fit on a radius-6 circle: the rejection
    # sampler must exhaust its attempts and raise a configuration error.
    with pytest.raises(ConfigError):
        reset(small_config(n_pedestrians=200, n_robots=0), seed=0)


# -- social force -----------------------------------------------------------

def test_lone_pedestrian_at_goal_stays():
    w = lone_ped_world(position=(2.0, -1.0), velocity=(0.0, 0.0), goal=(2.0, -1.0))
    before = w.pedestrians[0].position.copy()
    for _ in range(20):
        social_force.pedestrian_step(w)
    assert np.allclose(w.pedestrians[0].position, before)
    assert np.allclose(w.pedestrians[0].velocity, 0.0)


def test_lone_pedestrian_relaxes_to_preferred_speed():
    w = lone_ped_world(position=(-10.0, 0.0), velocity=(0.0, 0.0), goal=(0.0, 0.0))
    speeds = []
    for _ in range(20):
        social_force.pedestrian_step(w)
        speeds.append(float(np.linalg.norm(w.pedestrians[0].velocity)))
        assert w.pedestrians[0].velocity[0] > 0  # moves along +x toward goal
        assert abs(w.pedestrians[0].velocity[1]) < 1e-12
    diffs = np.diff([abs(s - 1.0) for s in speeds])
    assert np.all(diffs <= 1e-12)  # gap to v_pref shrinks monotonically
    assert speeds[-1] == pytest.approx(1.0, abs=1e-3)


def test_head_on_repulsion_antisymmetric():
    # Oracle: mirror the scene through the origin; forces must be exactly
    # opposite at every step.
    cfg = small_config(n_pedestrians=2, n_robots=0)
    w = World(cfg, seed=0)
    mk = lambda sgn: PedestrianState(
        position=np.array([3.0 * sgn, 0.0]), velocity=np.array([-1.0 * sgn, 0.0]),
        radius=0.6, goal=np.array([-4.0 * sgn, 0.0]), v_pref=1.0, heading=0.0,
        goal_change_prob=0.0, comfort_radius=0.85)
    w.pedestrians = [mk(1.0), mk(-1.0)]
    w.goal_reached = []
    w.draw_perceived_radii()
    for _ in range(30):
        positions = np.array([p.position for p in w.pedestrians])
        radii = np.array([p.radius for p in w.pedestrians])
        forces = social_force.repulsion_forces(
            positions, radii, cfg.sf_repulsion_strength,
            cfg.sf_repulsion_range, cfg.sf_dist_floor)
        assert np.all(np.abs(forces[0] + forces[1]) < 1e-12)
        social_force.pedestrian_step(w)


def test_speed_cap_never_exceeded():
    cfg = small_config(n_pedestrians=8)
    w = reset(cfg, seed=11)
    for _ in range(100):
        social_force.pedestrian_step(w)
        for p in w.pedestrians:
            assert np.linalg.norm(p.velocity) <= cfg.sf_speed_cap * p.v_pref + 1e-12


# -- goal resampling --------------------------------------------------------

def test_goal_resample_prob_zero_and_one():
    w = reset(small_config(), seed=5)
    for p in w.pedestrians:
        p.goal_change_prob = 0.0
    goals = [p.goal.copy() for p in w.pedestrians]
    for _ in range(50):
        assert social_force.resample_goals(w) == 0
    assert all(np.array_equal(g, p.goal) for g, p in zip(goals, w.pedestrians))

    for p in w.pedestrians:
        p.goal_change_prob = 1.0
    for _ in range(10):
        old = [p.goal.copy() for p in w.pedestrians]
        assert social_force.resample_goals(w) == w.n_pedestrians
        assert all(not np.array_equal(o, p.goal) for o, p in zip(old, w.pedestrians))
        for p in w.pedestrians:
            assert np.linalg.norm(p.goal) == pytest.approx(w.config.scenario_radius)


def test_goal_resample_empirical_rate():
    # Binomial oracle: 1e4 events at p=0.25 has sigma ~ 0.0043, so the
    # observed rate must land within 0.25 +/- 0.02.
    w = reset(small_config(n_pedestrians=1, n_robots=0), seed=9)
    w.pedestrians[0].goal_change_prob = 0.25
    changes = sum(social_force.resample_goals(w) for _ in range(10_000))
    assert abs(changes / 10_000 - 0.25) < 0.02


# -- robot stepping ---------------------------------------------------------

def test_robot_zero_action_stays():
    w = reset(small_config(), seed=1)
    before = [r.position.copy() for r in w.robots]
    w.apply_robot_actions(np.zeros((3, 2)))
    assert all(np.array_equal(b, r.position) for b, r in zip(before, w.robots))


def test_robot_unit_action_advances_quarter_metre():
    # v_pref 1 m/s at dt 0.25 s: one full-speed step covers 0.25 m.
    w = reset(small_config(), seed=1)
    x0 = w.robots[0].position[0]
    actions = np.zeros((3, 2))
    actions[0] = [1.0, 0.0]
    w.apply_robot_actions(actions)
    assert w.robots[0].position[0] - x0 == pytest.approx(0.25)
    assert w.robots[0].heading == pytest.approx(0.0)


def test_robot_action_out_of_range_rejected():
    w = reset(small_config(), seed=1)
    actions = np.zeros((3, 2))
    actions[0] = [1.5, 0.0]
    with pytest.raises(ContractViolation):
        w.apply_robot_actions(actions)


# -- sensing ----------------------------------------------------------------

def test_sense_excludes_beyond_fov():
    w = reset(small_config(n_pedestrians=1, fov_range=10.0), seed=2)
    w.pedestrians[0].position = w.robots[0].position + np.array([20.0, 0.0])
    obs = w.sense(0)
    assert all(o.agent_id != 0 for o in obs.others)


def test_sense_empty_scene():
    w = reset(small_config(n_pedestrians=0, n_robots=1), seed=2)
    obs = w.sense(0)
    assert obs.others == []
    assert obs.ego.shape == (9,)


def test_sense_ego_layout_and_goal_relative():
    w = reset(small_config(), seed=4)
    r = w.robots[1]
    obs = w.sense(1)
    assert np.allclose(obs.ego[:2], r.position)
    assert obs.ego[2] == r.radius
    assert np.allclose(obs.ego[3:5], r.goal - r.position)
    assert obs.ego[5] == r.v_pref
    assert np.allclose(obs.ego[6:8], r.velocity)
    assert obs.ego[8] == r.heading


def test_sense_noise_scale_zero_gives_true_radii():
    w = reset(small_config(radius_noise_scale=0.0), seed=6)
    obs = w.sense(0)
    for o in obs.others:
        if o.kind == "pedestrian":
            assert o.perceived_radius == pytest.approx(w.pedestrians[o.agent_id].radius)


def test_sense_noise_within_scale_and_redrawn():
    cfg = small_config(radius_noise_scale=0.05)
    w = reset(cfg, seed=6)
    seen = []
    for _ in range(50):
        for j, p in enumerate(w.pedestrians):
            err = w.perceived_radii[j] - p.radius
            assert abs(err) <= 0.05 + 1e-12
            seen.append(err)
        w.step(np.zeros((3, 2)))
    assert np.std(seen) > 0.01  # actually redrawn over time


def test_fov_soundness_property():
    cfg = small_config(fov_range=5.0, n_pedestrians=10)
    w = reset(cfg, seed=8)
    for _ in range(30):
        res = w.step(np.clip(np.sin(np.arange(6)).reshape(3, 2), -1, 1))
        for i, obs in enumerate(res.observations):
            for o in obs.others:
                assert np.linalg.norm(o.rel_position) <= cfg.fov_range + 1e-12


# -- collision geometry -----------------------------------------------------

def test_collision_check_touching_robots():
    w = reset(small_config(n_pedestrians=0, n_robots=2), seed=3)
    w.robots[0].position = np.array([0.0, 0.0])
    w.robots[1].position = np.array([1.2, 0.0])
    d_rrs, d_rps, comfort = w.collision_check(0)
    assert d_rps.size == 0
    assert d_rrs[0] == pytest.approx(0.0, abs=1e-12)
    assert not comfort


def test_collision_check_overlap_and_comfort():
    w = reset(small_config(n_pedestrians=1, n_robots=1), seed=3)
    ped = w.pedestrians[0]
    robot = w.robots[0]
    ped.position = robot.position + np.array([0.3, 0.0])
    d_rrs, d_rps, comfort = w.collision_check(0)
    assert d_rps[0] < 0 and comfort

    # robot surface 0.2 m from pedestrian surface with d_comfort 0.25:
    # comfort intrusion but no collision.
    ped.position = robot.position + np.array([robot.radius + ped.radius + 0.2, 0.0])
    d_rrs, d_rps, comfort = w.collision_check(0)
    assert d_rps[0] == pytest.approx(0.2)
    assert comfort and d_rps[0] > 0


def test_collision_symmetry():
    w = reset(small_config(n_pedestrians=0, n_robots=3), seed=7)
    w.robots[0].position = np.array([0.0, 0.0])
    w.robots[1].position = np.array([2.0, 1.0])
    w.robots[2].position = np.array([-3.0, 0.5])
    d0, _, _ = w.collision_check(0)
    d1, _, _ = w.collision_check(1)
    d01 = (np.linalg.norm(w.robots[0].position - w.robots[1].position)
           - w.robots[0].radius - w.robots[1].radius)
    assert d01 in d0 and d01 in d1


# -- episode lifecycle ------------------------------------------------------

def test_step_determinism_and_done_flags():
    cfg = small_config()
    rng = np.random.default_rng(0)
    actions = rng.uniform(-1, 1, size=(40, 3, 2))

    def rollout():
        w = reset(cfg, seed=12)
        hashes = []
        for a in actions:
            res = w.step(a)
            hashes.append(w.state_hash())
            if res.done:
                break
        return hashes, res

    h1, res1 = rollout()
    h2, res2 = rollout()
    assert h1 == h2
    assert res1.done == ((all(res1.goal_reached)) or res1.collision or res1.timeout)


def test_timeout_done():
    cfg = small_config(max_timesteps=5, n_pedestrians=0)
    w = reset(cfg, seed=1)
    res = None
    for _ in range(5):
        res = w.step(np.zeros((3, 2)))
    assert res.timeout and res.done


def test_pedestrians_invariant_to_robot_deletion():
    # Influencer/reactor: removing all robots leaves every pedestrian
    # trajectory bit-identical.
    cfg_with = small_config()
    cfg_without = small_config(n_robots=0)
    w_with = reset(cfg_with, seed=21)
    w_without = reset(cfg_without, seed=21)
    rng = np.random.default_rng(5)
    for _ in range(60):
        w_with.step(rng.uniform(-1, 1, size=(3, 2)))
        w_without.step(np.zeros((0, 2)))
        for p, q in zip(w_with.pedestrians, w_without.pedestrians):
            assert np.array_equal(p.position, q.position)
            assert np.array_equal(p.velocity, q.velocity)
            assert np.array_equal(p.goal, q.goal)


def test_goal_reached_latches():
    cfg = small_config(n_pedestrians=0, n_robots=1)
    w = reset(cfg, seed=2)
    w.robots[0].goal = w.robots[0].position + np.array([0.3, 0.0])
    res = w.step(np.array([[1.0, 0.0]]))
    assert res.goal_reached == [True] and res.done
