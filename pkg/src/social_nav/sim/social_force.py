"""Pedestrian dynamics: goal attraction plus exponential interpersonal repulsion.

Pedestrians react only to each other.  Robots are invisible to them, which
keeps the crowd an autonomous influencer the robots must yield to.
"""

from __future__ import annotations

import math

import numpy as np


def desired_velocity(position: np.ndarray, goal: np.ndarray, v_pref: float,
                     dt: float) -> np.ndarray:
    """Goal-directed desired velocity with a one-step arrival taper.

    Speed is v_pref except within one step's reach of the goal, where it
    tapers to d/dt so the fixed point sits exactly on the goal.
    """
    offset = goal - position
    dist = np.linalg.norm(offset)
    if dist < 1e-12:
        return np.zeros(2)
    speed = min(v_pref, dist / dt)
    return offset / dist * speed


def repulsion_forces(positions: np.ndarray, radii: np.ndarray, strength: float,
                     interaction_range: float, dist_floor: float) -> np.ndarray:
    """Pairwise exponential surface repulsion, summed per agent.

    force on i from j = A * exp((r_i + r_j - d_ij) / B) * unit(p_i - p_j),
    with the centre distance clamped below by ``dist_floor``.
    """
    n = len(positions)
    forces = np.zeros((n, 2))
    if n < 2:
        return forces
    diff = positions[:, None, :] - positions[None, :, :]        # i minus j
    d = np.linalg.norm(diff, axis=-1)
    np.fill_diagonal(d, np.inf)
    d = np.maximum(d, dist_floor)
    r_sum = radii[:, None] + radii[None, :]
    mag = strength * np.exp((r_sum - d) / interaction_range)
    np.fill_diagonal(mag, 0.0)
    forces = np.sum((mag / d)[:, :, None] * diff, axis=1)
    return forces


def pedestrian_step(world) -> None:
    """Advance every pedestrian by one Euler step of the social-force model."""
    peds = world.pedestrians
    if not peds:
        return
    cfg = world.config
    positions = np.array([p.position for p in peds])
    velocities = np.array([p.velocity for p in peds])
    radii = np.array([p.radius for p in peds])

    drive = np.array([
        (desired_velocity(p.position, p.goal, p.v_pref, cfg.dt) - p.velocity) / cfg.sf_tau
        for p in peds])
    rep = repulsion_forces(positions, radii, cfg.sf_repulsion_strength,
                           cfg.sf_repulsion_range, cfg.sf_dist_floor)

    new_v = velocities + (drive + rep) * cfg.dt
    speeds = np.linalg.norm(new_v, axis=1)
    caps = cfg.sf_speed_cap * np.array([p.v_pref for p in peds])
    over = speeds > caps
    new_v[over] *= (caps[over] / speeds[over])[:, None]

    for p, v in zip(peds, new_v):
        p.velocity = v
        p.position = p.position + v * cfg.dt
        speed = np.linalg.norm(v)
        if speed > 0:
            p.heading = math.atan2(v[1], v[0])


def resample_goals(world, prob_scale: float = 1.0) -> int:
    """Give each pedestrian a fresh goal on the scenario circle, randomly.

    Each pedestrian changes independently with probability
    ``goal_change_prob * prob_scale`` for this decision event.  Returns the
    number of goals changed.  Draws come from the world's pedestrian stream
    in agent order, one uniform per pedestrian per event.
    """
    changed = 0
    radius = world.config.scenario_radius
    for ped in world.pedestrians:
        u = world.rng.uniform()
        if u < ped.goal_change_prob * prob_scale:
            angle = world.rng.uniform(0.0, 2.0 * math.pi)
            ped.goal = radius * np.array([math.cos(angle), math.sin(angle)])
            changed += 1
    return changed
