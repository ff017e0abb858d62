"""LiDAR-sector clearing of obstacle estimates.

The 360 degree scan is split into equal angular sectors. Each sector's ray
value is the mean range of its rays and its clearing threshold is the mean
of its own ray value and its two circular neighbours. An estimate survives
only if it lies at or beyond the threshold of its sector and strictly
inside the sensor range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import GaussianObstacle, PipelineConfig, Pose2, Vec2

_TWO_PI = 2.0 * math.pi
_EDGE_SNAP = 1e-9


@dataclass(frozen=True)
class LidarScan:
    robot_pose: Pose2
    angles: np.ndarray
    ranges: np.ndarray
    stamp: float
    max_ray: float = 3.0

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float)
        ranges = np.asarray(self.ranges, dtype=float)
        if angles.shape != ranges.shape or angles.ndim != 1:
            raise ValueError("angles and ranges must be 1-D arrays of equal length")
        if ranges.size and (np.any(ranges <= 0.0) or np.any(ranges > self.max_ray)):
            raise ValueError("every range must lie in (0, max_ray]")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "ranges", ranges)


@dataclass(frozen=True)
class SectorProfile:
    n_sectors: int
    ray_value: np.ndarray
    threshold: np.ndarray
    empty: np.ndarray
    max_ray: float

    def sector_of(self, angle: float) -> int:
        return sector_index(angle, self.n_sectors)


def sector_index(angle, n_sectors: int):
    """Half-open bins [lo, hi) starting at -pi; works on scalars and arrays."""
    width = _TWO_PI / n_sectors
    q = np.mod(np.asarray(angle, dtype=float) + math.pi, _TWO_PI) / width
    # boundary angles that round just below an edge still go to the higher sector
    q = np.where(np.abs(q - np.rint(q)) < _EDGE_SNAP, np.rint(q), q)
    idx = np.mod(np.floor(q).astype(int), n_sectors)
    return int(idx) if idx.ndim == 0 else idx


def neighbour_threshold(ray_value: Sequence[float]) -> np.ndarray:
    ray = np.asarray(ray_value, dtype=float)
    return (np.roll(ray, 1) + ray + np.roll(ray, -1)) / 3.0


def build_sector_profile(scan: LidarScan, cfg: PipelineConfig) -> SectorProfile:
    n = cfg.n_sectors
    idx = sector_index(scan.angles, n)
    sums = np.bincount(idx, weights=scan.ranges, minlength=n)
    counts = np.bincount(idx, minlength=n)
    empty = counts == 0
    ray = np.where(empty, cfg.max_ray, sums / np.maximum(counts, 1))
    return SectorProfile(n, ray, neighbour_threshold(ray), empty, cfg.max_ray)


def retains(obstacle: GaussianObstacle, profile: SectorProfile, robot_position: Vec2) -> bool:
    dx = obstacle.mean.x - robot_position.x
    dy = obstacle.mean.y - robot_position.y
    d = math.hypot(dx, dy)
    sector = profile.sector_of(math.atan2(dy, dx))
    return profile.threshold[sector] <= d < profile.max_ray


def clear_obstacles(
    obstacles: Iterable[GaussianObstacle], profile: SectorProfile, robot_pose: Pose2 | Vec2
) -> list[GaussianObstacle]:
    pos = robot_pose.position if isinstance(robot_pose, Pose2) else robot_pose
    return [ob for ob in obstacles if retains(ob, profile, pos)]
