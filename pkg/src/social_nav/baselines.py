"""Classical decentralized baselines: reciprocal collision avoidance and a
social-force controller.

Both are pure functions of the current world snapshot (perfect sensing
within the neighbour range) and return a velocity command that the caller
rescales into the robot action space.

The reciprocal planner follows the standard construction: each neighbour
induces a half-plane of permitted velocities derived from the truncated
velocity-obstacle cone, and the commanded velocity is the point of the
half-plane intersection (within the speed disk) closest to the preferred
velocity.  Infeasible intersections fall back to a least-penetration
program over the constraint distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .configs import OrcaConfig
from .sim.world import PEDESTRIAN, World

_EPS = 1e-10


def _det(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


@dataclass
class Line:
    """Directed line; the permitted half-plane lies to its left."""

    point: np.ndarray
    direction: np.ndarray


def _linear_program1(lines, line_no, radius, opt_velocity, direction_opt,
                     result):
    """Optimize along one line segment clipped by the speed disk and
    the previously satisfied half-planes."""
    line = lines[line_no]
    dot = float(line.point @ line.direction)
    discriminant = dot * dot + radius * radius - float(line.point @ line.point)
    if discriminant < 0.0:
        return False, result  # speed disk misses this line entirely
    sqrt_disc = math.sqrt(discriminant)
    t_left = -dot - sqrt_disc
    t_right = -dot + sqrt_disc

    for i in range(line_no):
        denominator = _det(line.direction, lines[i].direction)
        numerator = _det(lines[i].direction, line.point - lines[i].point)
        if abs(denominator) <= _EPS:
            if numerator < 0.0:
                return False, result  # parallel and fully excluded
            continue
        t = numerator / denominator
        if denominator >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return False, result

    if direction_opt:
        if float(opt_velocity @ line.direction) > 0.0:
            t = t_right
        else:
            t = t_left
    else:
        t = float(line.direction @ (opt_velocity - line.point))
        t = min(max(t, t_left), t_right)
    return True, line.point + t * line.direction


def _linear_program2(lines, radius, opt_velocity, direction_opt):
    """Project the preferred velocity into the constrained speed disk.

    Returns (index of first failing line or len(lines), result).
    """
    if direction_opt:
        result = opt_velocity * radius
    elif float(opt_velocity @ opt_velocity) > radius * radius:
        result = opt_velocity / np.linalg.norm(opt_velocity) * radius
    else:
        result = opt_velocity.copy()

    for i, line in enumerate(lines):
        if _det(line.direction, line.point - result) > 0.0:
            temp = result.copy()
            ok, result = _linear_program1(lines, i, radius, opt_velocity,
                                          direction_opt, result)
            if not ok:
                return i, temp
    return len(lines), result


def _linear_program3(lines, begin_line, radius, result):
    """Least-penetration fallback when the half-planes are jointly infeasible."""
    distance = 0.0
    for i in range(begin_line, len(lines)):
        if _det(lines[i].direction, lines[i].point - result) > distance:
            proj_lines: list[Line] = []
            for j in range(i):
                determinant = _det(lines[i].direction, lines[j].direction)
                if abs(determinant) <= _EPS:
                    if float(lines[i].direction @ lines[j].direction) > 0.0:
                        continue  # same direction: j is redundant
                    point = 0.5 * (lines[i].point + lines[j].point)
                else:
                    point = lines[i].point + (
                        _det(lines[j].direction, lines[i].point - lines[j].point)
                        / determinant) * lines[i].direction
                direction = lines[j].direction - lines[i].direction
                direction = direction / np.linalg.norm(direction)
                proj_lines.append(Line(point, direction))
            temp = result.copy()
            fail, result = _linear_program2(
                proj_lines, radius,
                np.array([-lines[i].direction[1], lines[i].direction[0]]), True)
            if fail < len(proj_lines):
                result = temp
            distance = _det(lines[i].direction, lines[i].point - result)
    return result


def _avoidance_line(rel_pos, rel_vel, combined_radius, horizon, dt,
                    responsibility, velocity) -> Line:
    """Half-plane induced by one neighbour's truncated velocity obstacle."""
    dist_sq = float(rel_pos @ rel_pos)
    r_sq = combined_radius * combined_radius

    if dist_sq > r_sq:
        w = rel_vel - rel_pos / horizon
        w_len_sq = float(w @ w)
        dot1 = float(w @ rel_pos)
        if dot1 < 0.0 and dot1 * dot1 > r_sq * w_len_sq:
            # closest to the cut-off circle
            w_len = math.sqrt(w_len_sq)
            unit_w = w / w_len
            direction = np.array([unit_w[1], -unit_w[0]])
            u = (combined_radius / horizon - w_len) * unit_w
        else:
            # closest to one of the cone legs
            leg = math.sqrt(dist_sq - r_sq)
            if _det(rel_pos, w) > 0.0:
                direction = np.array([
                    rel_pos[0] * leg - rel_pos[1] * combined_radius,
                    rel_pos[0] * combined_radius + rel_pos[1] * leg]) / dist_sq
            else:
                direction = -np.array([
                    rel_pos[0] * leg + rel_pos[1] * combined_radius,
                    -rel_pos[0] * combined_radius + rel_pos[1] * leg]) / dist_sq
            u = float(rel_vel @ direction) * direction - rel_vel
    else:
        # already overlapping: resolve within one timestep
        w = rel_vel - rel_pos / dt
        w_len = float(np.linalg.norm(w))
        if w_len < _EPS:
            unit_w = np.array([1.0, 0.0])
            w_len = 0.0
        else:
            unit_w = w / w_len
        direction = np.array([unit_w[1], -unit_w[0]])
        u = (combined_radius / dt - w_len) * unit_w

    return Line(point=velocity + responsibility * u, direction=direction)


def preferred_velocity(position, goal, v_pref, dt) -> np.ndarray:
    """Goal-directed preferred velocity with a one-step arrival taper."""
    offset = goal - position
    dist = float(np.linalg.norm(offset))
    if dist < 1e-12:
        return np.zeros(2)
    return offset / dist * min(v_pref, dist / dt)


def orca_step(robot_index: int, world: World, config: OrcaConfig) -> np.ndarray:
    """Velocity command for one robot under reciprocal avoidance.

    Robot-robot constraints split responsibility evenly; pedestrians are
    treated as non-reciprocating (the robot absorbs the full avoidance
    effort) over the ``time_horizon_static`` horizon.  Perfect sensing:
    true state, no radius noise, limited to ``neighbor_range``.
    """
    config.validate()
    robot = world.robots[robot_index]
    dt = world.config.dt
    lines: list[Line] = []
    for agent_id, kind, other in world.agents():
        if kind != PEDESTRIAN and agent_id == world.robot_agent_id(robot_index):
            continue
        rel_pos = other.position - robot.position
        if np.linalg.norm(rel_pos) > config.neighbor_range:
            continue
        rel_vel = robot.velocity - other.velocity
        if kind == PEDESTRIAN:
            responsibility, horizon = 1.0, config.time_horizon_static
        else:
            responsibility, horizon = 0.5, config.time_horizon
        combined = robot.radius + other.radius + config.safety_margin
        lines.append(_avoidance_line(rel_pos, rel_vel, combined, horizon, dt,
                                     responsibility, robot.velocity))

    pref = preferred_velocity(robot.position, robot.goal, robot.v_pref, dt)
    fail, velocity = _linear_program2(lines, config.max_speed, pref, False)
    if fail < len(lines):
        velocity = _linear_program3(lines, fail, config.max_speed, velocity)
    return velocity


def sf_robot_step(robot_index: int, world: World) -> np.ndarray:
    """Velocity command from the same social-force law the pedestrians use.

    The robot is attracted to its goal and repelled by every agent within
    FOV range (pedestrians and robots alike); the resulting velocity is
    clamped to the robot's preferred speed.
    """
    cfg = world.config
    robot = world.robots[robot_index]
    drive = (preferred_velocity(robot.position, robot.goal, robot.v_pref, cfg.dt)
             - robot.velocity) / cfg.sf_tau
    repulsion = np.zeros(2)
    for agent_id, kind, other in world.agents():
        if kind != PEDESTRIAN and agent_id == world.robot_agent_id(robot_index):
            continue
        diff = robot.position - other.position
        dist = max(float(np.linalg.norm(diff)), cfg.sf_dist_floor)
        if dist > cfg.fov_range:
            continue
        magnitude = cfg.sf_repulsion_strength * math.exp(
            (robot.radius + other.radius - dist) / cfg.sf_repulsion_range)
        repulsion += magnitude * diff / dist
    velocity = robot.velocity + (drive + repulsion) * cfg.dt
    speed = float(np.linalg.norm(velocity))
    if speed > robot.v_pref:
        velocity = velocity * (robot.v_pref / speed)
    return velocity


def velocity_to_action(velocity: np.ndarray, v_pref: float) -> np.ndarray:
    """Map a velocity command into the [-1, 1]^2 action box."""
    return np.clip(np.asarray(velocity, dtype=float) / v_pref, -1.0, 1.0)
