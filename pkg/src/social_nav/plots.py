"""Top-down trajectory plots from persisted logs.

One PNG per episode: pedestrian tracks red, robot tracks black, goals as
stars.  Renderer settings are pinned so identical logs produce identical
image bytes.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .sim import trajlog
from .sim.world import ROBOT


def plot_episode(episode: trajlog.EpisodeLog, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 6), dpi=100)
    kinds = episode.kinds() if episode.tracks else {}
    for agent_id, track in sorted(episode.tracks.items()):
        xy = np.array([[r["x"], r["y"]] for r in track])
        color = "black" if kinds[agent_id] == ROBOT else "red"
        ax.plot(xy[:, 0], xy[:, 1], color=color, linewidth=1.2,
                zorder=3 if color == "black" else 2)
        ax.plot(xy[0, 0], xy[0, 1], marker="o", color=color, markersize=4)
    for agent_id, goal in episode.header.get("goals", {}).items():
        color = "black" if kinds.get(int(agent_id)) == ROBOT else "red"
        ax.plot(goal[0], goal[1], marker="*", color=color, markersize=10,
                zorder=4)
    radius = episode.header.get("scenario_radius")
    if radius:
        ax.add_patch(plt.Circle((0, 0), radius, fill=False, color="gray",
                                linestyle=":", linewidth=0.8))
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    seed = episode.header.get("seed")
    ax.set_title(f"episode seed {seed}" if seed is not None else "episode")
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def emit_plots(log_path: str, out_dir: str, max_episodes: int | None = None
               ) -> list[str]:
    """Render every episode of a log; returns the written file paths."""
    episodes = trajlog.read_episodes(log_path)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for i, ep in enumerate(episodes):
        if max_episodes is not None and i >= max_episodes:
            break
        path = os.path.join(out_dir, f"episode_{i:04d}.png")
        plot_episode(ep, path)
        written.append(path)
    return written
