"""Newline-delimited JSON episode logs and published-obstacle streams.

An episode log is a header record followed by one record per tick::

    {"kind": "header", "schema": 1, "seed": 7, "sim_config": {...}, "scenario": {...}}
    {"kind": "tick", "tick": 0, "t": 0.0, "ranges": [...], "observations": [...], "truth": {...}}

Ray angles are not stored; they follow from the robot pose and ``n_rays``.
Floats are written with ``repr`` precision so a round trip is exact.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import IO, Iterable, Iterator

from .clearing import LidarScan
from .core import AgentObservation, Pose2, Vec2
from .costmap import CostedObstacle
from .sim import Agent, EpisodeLog, Obstacle, Scenario, SimConfig, TickRecord, WorldTruth, ray_angles

SCHEMA_VERSION = 1


class LogFormatError(ValueError):
    """A record could not be decoded; ``index`` is its 0-based line number."""

    def __init__(self, index: int, message: str):
        super().__init__(f"record {index}: {message}")
        self.index = index


class SchemaVersionError(LogFormatError):
    pass


def _vec(v: Vec2) -> list[float]:
    return [v.x, v.y]


def _pose(p: Pose2) -> dict:
    return {"position": _vec(p.position), "heading": p.heading}


def _unvec(d) -> Vec2:
    x, y = d
    return Vec2(float(x), float(y))


def _unpose(d) -> Pose2:
    return Pose2(_unvec(d["position"]), float(d["heading"]))


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "seed": sc.seed,
        "bounds": list(sc.bounds),
        "robot": _pose(sc.robot),
        "robot_radius": sc.robot_radius,
        "static_obstacles": [{"center": _vec(o.center), "radius": o.radius} for o in sc.static_obstacles],
        "agents": [
            {
                "id": a.agent_id,
                "position": _vec(a.position),
                "velocity": _vec(a.velocity),
                "heading": a.heading,
                "preferred_speed": a.preferred_speed,
                "goals": [_vec(g) for g in a.goals],
                "radius": a.radius,
            }
            for a in sc.agents
        ],
    }


def scenario_from_dict(d: dict) -> Scenario:
    return Scenario(
        static_obstacles=tuple(Obstacle(_unvec(o["center"]), float(o["radius"])) for o in d["static_obstacles"]),
        agents=tuple(
            Agent(
                a["id"],
                _unvec(a["position"]),
                _unvec(a["velocity"]),
                float(a["heading"]),
                float(a["preferred_speed"]),
                tuple(_unvec(g) for g in a["goals"]),
                float(a["radius"]),
            )
            for a in d["agents"]
        ),
        robot=_unpose(d["robot"]),
        bounds=tuple(float(b) for b in d["bounds"]),
        seed=int(d["seed"]),
        robot_radius=float(d["robot_radius"]),
    )


def header_record(episode: EpisodeLog) -> dict:
    return {
        "kind": "header",
        "schema": SCHEMA_VERSION,
        "seed": episode.seed,
        "n_ticks": len(episode.records),
        "sim_config": dataclasses.asdict(episode.sim_config),
        "scenario": scenario_to_dict(episode.scenario),
    }


def tick_record(rec: TickRecord) -> dict:
    tr = rec.truth
    return {
        "kind": "tick",
        "tick": rec.tick,
        "t": rec.t,
        "ranges": [float(r) for r in rec.scan.ranges],
        "observations": [
            {"id": o.agent_id, "t": o.t, "position": _vec(o.position), "velocity": _vec(o.velocity)}
            for o in rec.observations
        ],
        "truth": {
            "agent_ids": list(tr.agent_ids),
            "agent_positions": [_vec(p) for p in tr.agent_positions],
            "agent_velocities": [_vec(v) for v in tr.agent_velocities],
            "agent_visible": list(tr.agent_visible),
            "obstacle_centers": [_vec(c) for c in tr.obstacle_centers],
            "obstacle_visible": list(tr.obstacle_visible),
            "robot": _pose(tr.robot),
            "footprint_radius": tr.footprint_radius,
        },
    }


def tick_from_dict(d: dict, robot: Pose2, cfg: SimConfig) -> TickRecord:
    t = float(d["t"])
    ranges = d["ranges"]
    if len(ranges) != cfg.n_rays:
        raise ValueError(f"expected {cfg.n_rays} ranges, got {len(ranges)}")
    scan = LidarScan(robot, ray_angles(robot, cfg.n_rays), ranges, t, cfg.max_ray)
    obs = tuple(
        AgentObservation(o["id"], float(o["t"]), _unvec(o["position"]), _unvec(o["velocity"]))
        for o in d["observations"]
    )
    tr = d["truth"]
    truth = WorldTruth(
        agent_ids=tuple(tr["agent_ids"]),
        agent_positions=tuple(_unvec(p) for p in tr["agent_positions"]),
        agent_velocities=tuple(_unvec(v) for v in tr["agent_velocities"]),
        agent_visible=tuple(bool(v) for v in tr["agent_visible"]),
        obstacle_centers=tuple(_unvec(c) for c in tr["obstacle_centers"]),
        obstacle_visible=tuple(bool(v) for v in tr["obstacle_visible"]),
        robot=_unpose(tr["robot"]),
        footprint_radius=float(tr["footprint_radius"]),
    )
    return TickRecord(int(d["tick"]), t, scan, obs, truth)


def write_episode(episode: EpisodeLog, fh: IO[str]) -> None:
    fh.write(dumps(header_record(episode)) + "\n")
    for rec in episode.records:
        fh.write(dumps(tick_record(rec)) + "\n")


def save_episode(episode: EpisodeLog, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        write_episode(episode, fh)
    return path


def _records(lines: Iterable[str]) -> Iterator[tuple[int, dict]]:
    for i, line in enumerate(lines):
        if not line.endswith("\n"):
            raise LogFormatError(i, "truncated record (missing newline)")
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogFormatError(i, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(rec, dict):
            raise LogFormatError(i, "record is not an object")
        yield i, rec


def read_episode(lines: Iterable[str]) -> EpisodeLog:
    """Decode an episode log; any malformed record raises with its index."""
    it = _records(lines)
    try:
        _, head = next(it)
    except StopIteration:
        raise LogFormatError(0, "empty log (missing header)") from None
    if head.get("kind") != "header":
        raise LogFormatError(0, "first record must be the header")
    if head.get("schema") != SCHEMA_VERSION:
        raise SchemaVersionError(0, f"schema version {head.get('schema')!r} is not supported (expected {SCHEMA_VERSION})")
    try:
        sim_cfg = SimConfig(**head["sim_config"])
        scenario = scenario_from_dict(head["scenario"])
        expected = int(head["n_ticks"])
    except (KeyError, TypeError, ValueError) as exc:
        raise LogFormatError(0, f"bad header: {exc}") from exc

    episode = EpisodeLog(int(head["seed"]), scenario, sim_cfg)
    for i, rec in it:
        if rec.get("kind") != "tick":
            raise LogFormatError(i, f"unexpected record kind {rec.get('kind')!r}")
        try:
            tick = tick_from_dict(rec, scenario.robot, sim_cfg)
        except (KeyError, TypeError, ValueError) as exc:
            raise LogFormatError(i, f"bad tick record: {exc}") from exc
        if tick.tick != len(episode.records):
            raise LogFormatError(i, f"tick {tick.tick} out of sequence")
        episode.records.append(tick)
    if len(episode.records) != expected:
        raise LogFormatError(len(episode.records) + 1, f"log ends after {len(episode.records)} of {expected} ticks")
    return episode


def load_episode(path: str | Path) -> EpisodeLog:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        return read_episode(fh)


def published_record(tick: int, t: float, entries: Iterable[CostedObstacle]) -> dict:
    return {
        "tick": tick,
        "t": t,
        "obstacles": [
            {
                "track_id": e.track_id,
                "mean": _vec(e.obstacle.mean),
                "cov": list(e.obstacle.cov.flat()),
                "t_occ": e.obstacle.t_occ,
                "cost": e.cost,
                "expires_at": e.expires_at,
                "sources": sorted(e.obstacle.contributors, key=repr),
            }
            for e in entries
        ],
    }


def write_published(stream: Iterable[tuple[int, float, Iterable[CostedObstacle]]], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for tick, t, entries in stream:
            fh.write(dumps(published_record(tick, t, entries)) + "\n")
    return path
