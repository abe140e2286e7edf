"""Seedable 2-D crowd world: pedestrians, holonomic robots, collision geometry.

Coordinate frame: origin at the scenario centre, metres, x right / y up.
Agents live on a circle-crossing layout: everyone spawns on a circle of
radius ``scenario_radius`` and walks to an approximately antipodal goal.

Determinism contract: all randomness flows through one ``numpy`` generator
owned by the world, and every pedestrian draw happens before any robot
draw.  Removing the robots from a scene therefore leaves the pedestrian
trajectories bit-identical (pedestrians are influencers, robots reactors).
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ..configs import ConfigError, WorldConfig

PEDESTRIAN = "pedestrian"
ROBOT = "robot"


class ContractViolation(ValueError):
    """An operation was called outside its stated contract."""


@dataclass
class AgentState:
    """Kinematic state of one agent (robot or pedestrian)."""

    position: np.ndarray       # (2,) m
    velocity: np.ndarray       # (2,) m/s
    radius: float              # safety-zone radius, m
    goal: np.ndarray           # (2,) m
    v_pref: float              # preferred speed, m/s
    heading: float             # rad

    def dist_to_goal(self) -> float:
        return float(np.linalg.norm(self.goal - self.position))


@dataclass
class PedestrianState(AgentState):
    """Pedestrian with social parameters on top of the kinematic state."""

    goal_change_prob: float = 0.25   # per goal-decision window
    comfort_radius: float = 0.0      # safety radius + comfort margin


@dataclass
class ObservedAgent:
    """One FOV entry: identity tag plus noisy geometry relative to the ego robot."""

    agent_id: int
    kind: str
    rel_position: np.ndarray   # (2,) other minus ego, m
    perceived_radius: float    # noisy for pedestrians, exact for robots


@dataclass
class Observation:
    """Local observation of one robot: fixed ego vector + variable FOV list."""

    ego: np.ndarray            # (9,) [px, py, r, gx-px, gy-py, v_pref, vx, vy, heading]
    others: list[ObservedAgent]
    timestamp: int


@dataclass
class StepResult:
    """Outcome of one simulation step for all robots."""

    observations: list[Observation]
    rewards: np.ndarray | None         # per robot, filled by the reward engine
    team_reward: float | None
    goal_reached: list[bool]           # latched per robot
    collision: bool
    timeout: bool
    done: bool
    info: dict = field(default_factory=dict)


class World:
    """Mutable simulation state with a single owning stepper.

    Use :func:`reset` to build one.  Concurrent read-only snapshots (via
    :meth:`clone`) are safe; stepping is single-writer.
    """

    def __init__(self, config: WorldConfig, seed: int):
        config.validate()
        self.config = config
        self.seed = seed
        # Separate streams so robot placement never shifts pedestrian draws:
        # pedestrian trajectories must be invariant to robot deletion.
        ped_seq, robot_seq = np.random.SeedSequence(seed).spawn(2)
        self.rng = np.random.default_rng(ped_seq)
        self.robot_rng = np.random.default_rng(robot_seq)
        self.clock = 0
        self.pedestrians: list[PedestrianState] = []
        self.robots: list[AgentState] = []
        self.perceived_radii = np.zeros(0)
        self.goal_reached: list[bool] = []
        self.collision = False

    # -- identity helpers ---------------------------------------------------

    @property
    def n_pedestrians(self) -> int:
        return len(self.pedestrians)

    @property
    def n_robots(self) -> int:
        return len(self.robots)

    def robot_agent_id(self, robot_index: int) -> int:
        return self.n_pedestrians + robot_index

    def agents(self) -> list[tuple[int, str, AgentState]]:
        """All agents as (agent_id, kind, state), pedestrians first."""
        out = [(i, PEDESTRIAN, p) for i, p in enumerate(self.pedestrians)]
        out += [(self.n_pedestrians + i, ROBOT, r) for i, r in enumerate(self.robots)]
        return out

    # -- lifecycle ----------------------------------------------------------

    def clone(self) -> "World":
        return copy.deepcopy(self)

    def state_hash(self) -> str:
        """Hash of the full dynamic state, for purity checks."""
        h = hashlib.sha256()
        for _, _, a in self.agents():
            h.update(a.position.tobytes())
            h.update(a.velocity.tobytes())
            h.update(a.goal.tobytes())
            h.update(np.float64([a.radius, a.v_pref, a.heading]).tobytes())
        h.update(self.perceived_radii.tobytes())
        h.update(str(self.rng.bit_generator.state).encode())
        h.update(str(self.robot_rng.bit_generator.state).encode())
        h.update(np.int64([self.clock]).tobytes())
        return h.hexdigest()

    # -- sensing ------------------------------------------------------------

    def sense(self, robot_index: int) -> Observation:
        """Local observation of one robot: all agents within FOV range.

        FOV angle is the full circle, so only the range cut applies.  The
        entry order is deterministic (ascending agent id, pedestrians
        first).  Pedestrian radii are reported with the current per-step
        sensing noise; positions are exact.
        """
        if not 0 <= robot_index < self.n_robots:
            raise ContractViolation(f"robot index {robot_index} out of range")
        robot = self.robots[robot_index]
        ego = np.array([
            robot.position[0], robot.position[1], robot.radius,
            robot.goal[0] - robot.position[0], robot.goal[1] - robot.position[1],
            robot.v_pref, robot.velocity[0], robot.velocity[1], robot.heading,
        ])
        others: list[ObservedAgent] = []
        for agent_id, kind, state in self.agents():
            if kind == ROBOT and agent_id == self.robot_agent_id(robot_index):
                continue
            rel = state.position - robot.position
            if np.linalg.norm(rel) <= self.config.fov_range:
                perceived = (self.perceived_radii[agent_id]
                             if kind == PEDESTRIAN else state.radius)
                others.append(ObservedAgent(agent_id, kind, rel.copy(), float(perceived)))
        return Observation(ego=ego, others=others, timestamp=self.clock)

    def collision_check(self, robot_index: int) -> tuple[np.ndarray, np.ndarray, bool]:
        """Surface distances from one robot to FOV robots and pedestrians.

        Entries are centre distance minus both safety radii (true radii,
        not sensed).  The comfort flag is set when any pedestrian surface
        lies closer than the comfort margin.
        """
        robot = self.robots[robot_index]
        d_rrs, d_rps = [], []
        comfort = False
        for agent_id, kind, state in self.agents():
            if kind == ROBOT and agent_id == self.robot_agent_id(robot_index):
                continue
            center = float(np.linalg.norm(state.position - robot.position))
            if center > self.config.fov_range:
                continue
            surface = center - robot.radius - state.radius
            if kind == ROBOT:
                d_rrs.append(surface)
            else:
                d_rps.append(surface)
                if surface < self.config.d_comfort:
                    comfort = True
        return np.array(d_rrs), np.array(d_rps), comfort

    def any_collision(self) -> bool:
        """True if any robot overlaps any other agent (all pairs, no FOV cut)."""
        for i, robot in enumerate(self.robots):
            for agent_id, kind, state in self.agents():
                if kind == ROBOT and agent_id == self.robot_agent_id(i):
                    continue
                if kind == ROBOT and agent_id < self.robot_agent_id(i):
                    continue  # each robot pair once
                d = np.linalg.norm(state.position - robot.position)
                if d - robot.radius - state.radius < 0:
                    return True
        return False

    # -- stepping -----------------------------------------------------------

    def apply_robot_actions(self, actions: np.ndarray) -> None:
        """Advance robots holonomically: velocity = action * v_pref.

        Actions must lie in [-1, 1]^2 per robot; heading follows the new
        velocity when it is nonzero.
        """
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.n_robots, 2):
            raise ContractViolation(
                f"expected actions of shape {(self.n_robots, 2)}, got {actions.shape}")
        if np.any(np.abs(actions) > 1.0 + 1e-12):
            raise ContractViolation("action component outside [-1, 1]")
        for robot, act in zip(self.robots, actions):
            robot.velocity = act * robot.v_pref
            robot.position = robot.position + robot.velocity * self.config.dt
            speed = np.linalg.norm(robot.velocity)
            if speed > 0:
                robot.heading = math.atan2(robot.velocity[1], robot.velocity[0])

    def draw_perceived_radii(self) -> None:
        """Redraw per-pedestrian radius sensing noise for the current step."""
        scale = self.config.radius_noise_scale
        noise = self.rng.uniform(-scale, scale, size=self.n_pedestrians)
        true_radii = np.array([p.radius for p in self.pedestrians])
        self.perceived_radii = np.maximum(true_radii + noise, 1e-3)

    def step(self, actions: np.ndarray) -> StepResult:
        """One simulation tick: robots, then pedestrians, then bookkeeping.

        Rewards are left for the caller to fill in; flags follow the
        episode contract (done iff all robots reached their goals at some
        point, or any robot collides, or the step cap is hit).
        """
        from . import social_force

        self.apply_robot_actions(actions)
        social_force.pedestrian_step(self)
        self.clock += 1
        per_step = 1.0 / self.config.goal_decision_window
        social_force.resample_goals(self, prob_scale=per_step)
        self.draw_perceived_radii()

        for i, robot in enumerate(self.robots):
            if robot.dist_to_goal() < robot.radius:
                self.goal_reached[i] = True
        self.collision = self.any_collision()
        timeout = self.clock >= self.config.max_timesteps
        done = all(self.goal_reached) or self.collision or timeout

        observations = [self.sense(i) for i in range(self.n_robots)]
        info = {"collision_check": [self.collision_check(i) for i in range(self.n_robots)]}
        return StepResult(
            observations=observations,
            rewards=None,
            team_reward=None,
            goal_reached=list(self.goal_reached),
            collision=self.collision,
            timeout=timeout,
            done=done,
            info=info,
        )

    # -- logging ------------------------------------------------------------

    def step_records(self) -> list[dict]:
        """Per-agent trajectory records for the current step (stable order)."""
        records = []
        for agent_id, kind, a in self.agents():
            records.append({
                "step": self.clock,
                "agent_id": agent_id,
                "kind": kind,
                "x": float(a.position[0]),
                "y": float(a.position[1]),
                "vx": float(a.velocity[0]),
                "vy": float(a.velocity[1]),
                "radius": float(a.radius),
            })
        return records


def _place_on_circle(rng: np.random.Generator, config: WorldConfig, radius: float,
                     placed: list[tuple[np.ndarray, float]]) -> np.ndarray:
    """Rejection-sample a spawn point on the scenario circle."""
    for _ in range(config.placement_attempts):
        angle = rng.uniform(0.0, 2.0 * math.pi)
        pos = config.scenario_radius * np.array([math.cos(angle), math.sin(angle)])
        clear = all(
            np.linalg.norm(pos - q) - radius - r >= config.placement_margin
            for q, r in placed)
        if clear:
            return pos
    raise ConfigError(
        f"could not place agent of radius {radius:.2f} after "
        f"{config.placement_attempts} attempts: scene too dense")


def reset(config: WorldConfig, seed: int) -> World:
    """Build a fresh world on the circle-crossing layout.

    Pedestrian radii, preferred speeds and goal-change probabilities are
    drawn from the configured ranges; goals sit approximately antipodal to
    the spawn point.  Identical (config, seed) pairs produce bit-identical
    worlds.
    """
    world = World(config, seed)
    rng = world.rng
    placed: list[tuple[np.ndarray, float]] = []

    for _ in range(config.n_pedestrians):
        radius = rng.uniform(*config.ped_radius_range)
        v_pref = rng.uniform(*config.ped_v_pref_range)
        change_prob = rng.uniform(*config.goal_change_prob_range)
        pos = _place_on_circle(rng, config, radius, placed)
        goal = -pos + rng.uniform(-0.25, 0.25, size=2)
        placed.append((pos, radius))
        world.pedestrians.append(PedestrianState(
            position=pos, velocity=np.zeros(2), radius=radius, goal=goal,
            v_pref=v_pref, heading=math.atan2(goal[1] - pos[1], goal[0] - pos[0]),
            goal_change_prob=change_prob,
            comfort_radius=radius + config.d_comfort,
        ))

    for _ in range(config.n_robots):
        pos = _place_on_circle(world.robot_rng, config, config.robot_radius, placed)
        goal = -pos + world.robot_rng.uniform(-0.25, 0.25, size=2)
        placed.append((pos, config.robot_radius))
        world.robots.append(AgentState(
            position=pos, velocity=np.zeros(2), radius=config.robot_radius,
            goal=goal, v_pref=config.robot_v_pref,
            heading=math.atan2(goal[1] - pos[1], goal[0] - pos[0]),
        ))

    world.goal_reached = [False] * config.n_robots
    world.draw_perceived_radii()
    return world
