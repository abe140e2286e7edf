"""Evaluation metrics computed purely from persisted trajectory logs.

Definitions (aggregated over a seeded battery):

* CSR  — percent of episodes in which every robot reached its goal within
  the step cap (reaching means the robot centre comes within its own
  radius of the goal at some logged step).
* CR   — collision events per 100 robot-episodes.  Every overlapping
  (robot, agent) pair at every logged step counts one event, so the value
  can exceed 100 even though an episode ends at its first collision.
* CR_episodes — percent of robot-episodes whose robot was involved in at
  least one collision (the capped companion counter).
* APL  — mean per-robot path length over all robot-episodes (m).
* NTC  — mean steps until all robots have reached their goals; episodes
  that never finish contribute the step cap.
* CIR  — percent of robot-timesteps with a comfort-zone intrusion.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .sim import trajlog
from .sim.world import PEDESTRIAN, ROBOT


@dataclass
class MetricsReport:
    csr: float
    cr: float
    cr_episodes: float
    apl: float
    ntc: float
    cir: float
    episodes: int
    robot_episodes: int
    collision_events: int
    config_fingerprint: str = ""

    def validate(self) -> None:
        assert 0.0 <= self.csr <= 100.0
        assert self.cr >= 0.0
        assert 0.0 <= self.cr_episodes <= 100.0
        assert 0.0 <= self.cir <= 100.0
        assert self.apl >= 0.0

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))


def _track_positions(track: list[dict]) -> np.ndarray:
    return np.array([[rec["x"], rec["y"]] for rec in track])


def episode_stats(episode: trajlog.EpisodeLog) -> dict:
    """Per-episode raw counters used by the aggregate report."""
    header = episode.header
    d_comfort = header["d_comfort"]
    max_steps = header["max_timesteps"]
    goals = {int(k): np.asarray(v, dtype=float) for k, v in header["goals"].items()}
    kinds = episode.kinds()
    robot_ids = sorted(a for a, k in kinds.items() if k == ROBOT)
    ped_ids = sorted(a for a, k in kinds.items() if k == PEDESTRIAN)
    tracks = {a: _track_positions(t) for a, t in episode.tracks.items()}
    radii = {a: episode.tracks[a][0]["radius"] for a in episode.tracks}
    t_logged = max(len(t) for t in tracks.values()) - 1  # steps after t=0

    reach_step = {}
    for rid in robot_ids:
        dist = np.linalg.norm(tracks[rid] - goals[rid][None, :], axis=1)
        hit = np.nonzero(dist < radii[rid])[0]
        reach_step[rid] = int(hit[0]) if len(hit) else None

    success = all(reach_step[rid] is not None for rid in robot_ids)
    finish_step = (max(reach_step[rid] for rid in robot_ids)
                   if success else max_steps)

    collision_events = 0
    colliding_robots = set()
    intrusion_steps = 0
    path_lengths = {}
    for ri, rid in enumerate(robot_ids):
        track = tracks[rid]
        path_lengths[rid] = float(np.sum(np.linalg.norm(np.diff(track, axis=0),
                                                        axis=1)))
        for t in range(1, len(track)):
            intruded = False
            for pid in ped_ids:
                gap = (np.linalg.norm(track[t] - tracks[pid][t])
                       - radii[rid] - radii[pid])
                if gap < 0:
                    collision_events += 1
                    colliding_robots.add(rid)
                if gap < d_comfort:
                    intruded = True
            for other in robot_ids[ri + 1:]:
                gap = (np.linalg.norm(track[t] - tracks[other][t])
                       - radii[rid] - radii[other])
                if gap < 0:
                    collision_events += 1
                    colliding_robots.add(rid)
                    colliding_robots.add(other)
            if intruded:
                intrusion_steps += 1

    return {
        "n_robots": len(robot_ids),
        "success": success,
        "finish_step": finish_step,
        "collision_events": collision_events,
        "colliding_robots": len(colliding_robots),
        "intrusion_steps": intrusion_steps,
        "robot_timesteps": len(robot_ids) * t_logged,
        "path_lengths": list(path_lengths.values()),
    }


def compute_metrics(episodes, config_fingerprint: str = "") -> MetricsReport:
    """Aggregate a battery of episodes into one report.

    ``episodes`` is a trajectory-log path or a parsed episode list.
    """
    if isinstance(episodes, (str, bytes)) or hasattr(episodes, "__fspath__"):
        episodes = trajlog.read_episodes(episodes)
    if not episodes:
        raise ValueError("no episodes in trajectory log")
    stats = [episode_stats(ep) for ep in episodes]

    n_episodes = len(stats)
    robot_episodes = sum(s["n_robots"] for s in stats)
    events = sum(s["collision_events"] for s in stats)
    report = MetricsReport(
        csr=100.0 * sum(s["success"] for s in stats) / n_episodes,
        cr=100.0 * events / robot_episodes,
        cr_episodes=100.0 * sum(s["colliding_robots"] for s in stats) / robot_episodes,
        apl=float(np.mean([p for s in stats for p in s["path_lengths"]])),
        ntc=float(np.mean([s["finish_step"] for s in stats])),
        cir=100.0 * sum(s["intrusion_steps"] for s in stats)
            / max(sum(s["robot_timesteps"] for s in stats), 1),
        episodes=n_episodes,
        robot_episodes=robot_episodes,
        collision_events=events,
        config_fingerprint=config_fingerprint,
    )
    report.validate()
    return report
