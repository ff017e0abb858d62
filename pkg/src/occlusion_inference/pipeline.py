"""Per-tick orchestration: predict -> clear -> fuse -> publish."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .clearing import LidarScan, build_sector_profile, clear_obstacles, retains
from .core import AgentObservation, GaussianObstacle, PipelineConfig
from .costmap import CostedObstacle, OcclusionMap
from .fusion import FusionTrack, fuse_frame
from .predictor import WindowTracker, predict_window


@dataclass(frozen=True)
class TickOutput:
    t: float
    raw: tuple[GaussianObstacle, ...]
    cleared: tuple[GaussianObstacle, ...]
    published: tuple[CostedObstacle, ...]


class OcclusionPipeline:
    def __init__(self, cfg: PipelineConfig | None = None):
        self.cfg = cfg or PipelineConfig()
        self.windows = WindowTracker(self.cfg.window_duration)
        self.tracks: list[FusionTrack] = []
        self.map = OcclusionMap(self.cfg)
        self._next_id = 0

    def step(self, scan: LidarScan, observations: Iterable[AgentObservation]) -> TickOutput:
        cfg = self.cfg
        now = scan.stamp
        raw = []
        for window in self.windows.update(observations, now):
            raw.extend(predict_window(window, cfg))
        profile = build_sector_profile(scan, cfg)
        cleared = clear_obstacles(raw, profile, scan.robot_pose)
        tracks = self.tracks
        if cfg.clear_tracks:
            pos = scan.robot_pose.position
            tracks = [t for t in tracks if retains(t.as_obstacle(), profile, pos)]

        frame = fuse_frame(tracks, cleared, now, cfg, self._next_id)
        self._next_id += len(frame.spawned)
        published = self.map.refresh(frame.tracks, now)
        live = {p.track_id for p in published}
        self.tracks = [t for t in frame.tracks if t.track_id in live]
        return TickOutput(now, tuple(raw), tuple(cleared), published)
