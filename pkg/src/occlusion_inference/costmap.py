"""Published occlusion regions with timestamp-derived costs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import GaussianObstacle, PipelineConfig
from .fusion import FusionTrack


def cost_of(t_occ: float, now: float, cfg: PipelineConfig) -> float:
    """Threat value in [cost_floor, cost_ceiling].

    Before the occupancy time the cost is 1/(1 + remaining); afterwards it
    decays linearly from the ceiling at ``decay_rate`` per second.
    """
    remaining = t_occ - now
    if remaining > 0.0:
        return min(max(1.0 / (1.0 + remaining), cfg.cost_floor), cfg.cost_ceiling)
    return max(cfg.cost_floor, cfg.cost_ceiling - cfg.decay_rate * (now - t_occ))


def floor_reached_at(t_occ: float, cfg: PipelineConfig) -> float:
    """Time at which the post-occupancy decay hits the floor."""
    return t_occ + (cfg.cost_ceiling - cfg.cost_floor) / cfg.decay_rate


@dataclass(frozen=True)
class CostedObstacle:
    obstacle: GaussianObstacle
    cost: float
    expires_at: float
    track_id: int = -1


def track_expires_at(track: FusionTrack, cfg: PipelineConfig) -> float:
    return max(track.t_occ, track.last_update) + cfg.retention


def publish(tracks: Iterable[FusionTrack], now: float, cfg: PipelineConfig) -> list[CostedObstacle]:
    out = []
    for trk in tracks:
        expires = track_expires_at(trk, cfg)
        if now > expires:
            continue
        out.append(CostedObstacle(trk.as_obstacle(), cost_of(trk.t_occ, now, cfg), expires, trk.track_id))
    return out


def is_stale(entry: CostedObstacle, now: float, cfg: PipelineConfig) -> bool:
    if now > entry.expires_at:
        return True
    return now - floor_reached_at(entry.obstacle.t_occ, cfg) > cfg.retention


def prune(entries: Sequence[CostedObstacle], now: float, cfg: PipelineConfig) -> list[CostedObstacle]:
    return [e for e in entries if not is_stale(e, now, cfg)]


class OcclusionMap:
    """Single-writer holder of the latest published snapshot."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self._snapshot: tuple[CostedObstacle, ...] = ()
        self.stamp: float | None = None

    def refresh(self, tracks: Iterable[FusionTrack], now: float) -> tuple[CostedObstacle, ...]:
        # built fully before the swap so readers never see a partial frame
        snap = tuple(prune(publish(tracks, now, self.cfg), now, self.cfg))
        self._snapshot = snap
        self.stamp = now
        return snap

    def snapshot(self) -> tuple[CostedObstacle, ...]:
        return self._snapshot

    def __len__(self):
        return len(self._snapshot)
