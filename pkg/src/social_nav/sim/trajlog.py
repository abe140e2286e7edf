"""Trajectory logs: newline-delimited JSON records with a stable field order.

Two record shapes share a file:

* episode header  — ``{"episode_header": {...}}`` with seed, goals, the
  comfort margin and the step cap, written once per episode so metrics can
  be recomputed from the log alone;
* step record     — ``{"step", "agent_id", "kind", "x", "y", "vx", "vy",
  "radius"}``, one per agent per step, in that key order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

STEP_FIELDS = ("step", "agent_id", "kind", "x", "y", "vx", "vy", "radius")


class TrajectoryParseError(ValueError):
    """Raised with the offending line number on malformed log records."""


@dataclass
class EpisodeLog:
    """One parsed episode: header plus per-agent tracks."""

    header: dict
    # agent_id -> list of step records, in step order
    tracks: dict[int, list[dict]] = field(default_factory=dict)

    def kinds(self) -> dict[int, str]:
        return {aid: recs[0]["kind"] for aid, recs in self.tracks.items()}


def format_step_record(record: dict) -> str:
    ordered = {k: record[k] for k in STEP_FIELDS}
    return json.dumps(ordered)


def format_episode_header(header: dict) -> str:
    return json.dumps({"episode_header": header})


class TrajectoryWriter:
    """Appends episodes to a newline-delimited trajectory log."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w")

    def begin_episode(self, header: dict) -> None:
        self._fh.write(format_episode_header(header) + "\n")

    def write_step_records(self, records: list[dict]) -> None:
        for rec in records:
            self._fh.write(format_step_record(rec) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_episodes(path) -> list[EpisodeLog]:
    """Parse a trajectory log into per-episode tracks.

    Raises :class:`TrajectoryParseError` naming the first malformed line.
    """
    episodes: list[EpisodeLog] = []
    current: EpisodeLog | None = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise TrajectoryParseError(f"line {lineno}: invalid JSON ({e.msg})") from e
            if "episode_header" in record:
                current = EpisodeLog(header=record["episode_header"])
                episodes.append(current)
                continue
            missing = [k for k in STEP_FIELDS if k not in record]
            if missing:
                raise TrajectoryParseError(
                    f"line {lineno}: step record missing fields {missing}")
            if current is None:
                raise TrajectoryParseError(
                    f"line {lineno}: step record before any episode header")
            current.tracks.setdefault(record["agent_id"], []).append(record)
    return episodes
