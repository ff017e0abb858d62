"""Kalman fusion of cleared obstacle estimates into persistent tracks.

State layout: [dt, c_xx, c_xy, c_yx, c_yy, x, y] where dt is the time
remaining until occupancy, measured from ``ref_time``. The transition is
the identity and every estimate observes the full state, so fusion only
ever tightens or inflates the covariance around a stationary region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import Cov2, GaussianObstacle, ObstacleKind, PipelineConfig, Vec2, cov_eigenvalues

STATE_DIM = 7
EIG_TOL = 1e-9


class TimeRegressionError(ValueError):
    pass


def covariance_scale(t_occ: float, now: float, cfg: PipelineConfig) -> float:
    dt = t_occ - now
    return cfg.c1 - math.exp(-cfg.c2 * dt * dt)


@dataclass(frozen=True, eq=False)
class FusionTrack:
    track_id: int
    x: np.ndarray
    P: np.ndarray
    stamp: float  # time P was last propagated to
    ref_time: float  # time x[0] is measured from
    last_update: float  # time of the latest fused estimate
    sources: frozenset = frozenset()
    n_updates: int = 0

    @property
    def position(self) -> Vec2:
        return Vec2(float(self.x[5]), float(self.x[6]))

    @property
    def t_occ(self) -> float:
        return self.ref_time + float(self.x[0])

    def shape(self) -> Cov2:
        c_xy = 0.5 * float(self.x[2] + self.x[3])
        return Cov2(float(self.x[1]), c_xy, c_xy, float(self.x[4]))

    def as_obstacle(self) -> GaussianObstacle:
        return GaussianObstacle(
            mean=self.position,
            cov=self.shape(),
            t_occ=self.t_occ,
            kind=ObstacleKind.FUSED,
            created_at=self.last_update,
            sources=self.sources,
        )


def measurement_vector(obs: GaussianObstacle, now: float) -> np.ndarray:
    return np.array([obs.t_occ - now, *obs.cov.flat(), obs.mean.x, obs.mean.y], dtype=float)


def _symmetrize(P: np.ndarray) -> np.ndarray:
    P = 0.5 * (P + P.T)
    if np.linalg.eigvalsh(P)[0] < -EIG_TOL * max(1.0, float(np.max(np.abs(P)))):
        raise FloatingPointError("track covariance lost positive semi-definiteness")
    return P


def _sanitize_shape(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    c_xy = 0.5 * (x[2] + x[3])
    x[2] = x[3] = c_xy
    lo, _ = cov_eigenvalues(x[1], c_xy, x[4])
    if lo < 0.0:
        # shift onto the PSD cone; only reachable through rounding
        x[1] -= lo
        x[4] -= lo
    return x


def init_track(obs: GaussianObstacle, now: float, cfg: PipelineConfig, track_id: int = 0) -> FusionTrack:
    return FusionTrack(
        track_id=track_id,
        x=measurement_vector(obs, now),
        P=np.diag(np.asarray(cfg.p_init, dtype=float)),
        stamp=now,
        ref_time=now,
        last_update=now,
        sources=obs.contributors,
        n_updates=1,
    )


def rereference(track: FusionTrack, now: float) -> FusionTrack:
    """Express the remaining time relative to ``now``; absolute occupancy time is unchanged."""
    if track.ref_time == now:
        return track
    x = track.x.copy()
    x[0] -= now - track.ref_time
    return replace(track, x=x, ref_time=now)


def predict_step(track: FusionTrack, now: float, cfg: PipelineConfig) -> FusionTrack:
    if now < track.stamp:
        raise TimeRegressionError(f"track {track.track_id}: predict at {now} < stamp {track.stamp}")
    elapsed = now - track.stamp
    scale = covariance_scale(track.t_occ, now, cfg)
    P = track.P + (scale * elapsed) * np.diag(np.asarray(cfg.q_base, dtype=float))
    return replace(track, P=_symmetrize(P), stamp=now)


def _kalman_update(x: np.ndarray, P: np.ndarray, z: np.ndarray, R: np.ndarray):
    S = P + R
    K = np.linalg.solve(S.T, P.T).T  # P S^-1
    x_new = x + K @ (z - x)
    I_K = np.eye(STATE_DIM) - K
    P_new = I_K @ P @ I_K.T + K @ R @ K.T
    return x_new, _symmetrize(P_new)


def correct_step(
    track: FusionTrack, measurements: Sequence[GaussianObstacle], now: float, cfg: PipelineConfig
) -> FusionTrack:
    """Sequentially fuse each estimate with noise scaled by its own timestamp."""
    if not measurements:
        return track
    track = rereference(track, now)
    x, P = track.x, track.P
    r_base = np.diag(np.asarray(cfg.r_base, dtype=float))
    sources = set(track.sources)
    for obs in measurements:
        R = covariance_scale(obs.t_occ, now, cfg) * r_base
        x, P = _kalman_update(x, P, measurement_vector(obs, now), R)
        sources |= obs.contributors
    return replace(
        track,
        x=_sanitize_shape(x),
        P=P,
        last_update=now,
        sources=frozenset(sources),
        n_updates=track.n_updates + len(measurements),
    )


class SpatialIndex:
    """Radius queries over obstacle means backed by a KD-tree."""

    def __init__(self, obstacles: Iterable[GaussianObstacle]):
        self.obstacles = list(obstacles)
        self._pts = np.array([[o.mean.x, o.mean.y] for o in self.obstacles], dtype=float).reshape(-1, 2)
        self._tree = cKDTree(self._pts) if self.obstacles else None

    def __len__(self):
        return len(self.obstacles)

    def query_indices(self, position: Vec2, radius: float) -> list[tuple[float, int]]:
        """(distance, index) pairs within ``radius``, ascending by distance then index."""
        if self._tree is None:
            return []
        # widen the tree query slightly, then apply the exact inclusive bound
        cand = self._tree.query_ball_point([position.x, position.y], radius * (1.0 + 1e-9) + 1e-12)
        hits = []
        for i in cand:
            d = math.hypot(self._pts[i, 0] - position.x, self._pts[i, 1] - position.y)
            if d <= radius:
                hits.append((d, i))
        hits.sort()
        return hits

    def query(self, position: Vec2, radius: float) -> list[GaussianObstacle]:
        return [self.obstacles[i] for _, i in self.query_indices(position, radius)]


def gather_measurements(index: SpatialIndex, position: Vec2, cfg: PipelineConfig) -> list[GaussianObstacle]:
    return index.query(position, cfg.assoc_radius)


@dataclass
class FrameResult:
    updated: list[FusionTrack]
    spawned: list[FusionTrack]
    corrections: dict[int, int] = field(default_factory=dict)  # track_id -> measurements fused

    @property
    def tracks(self) -> list[FusionTrack]:
        return self.updated + self.spawned


def fuse_frame(
    tracks: Sequence[FusionTrack],
    cleared_obstacles: Sequence[GaussianObstacle],
    now: float,
    cfg: PipelineConfig,
    next_track_id: int | None = None,
) -> FrameResult:
    """Predict every track, fuse nearby estimates, and spawn tracks for the rest.

    Each estimate corrects at most one track: the nearest one, with ties
    going to the lower track id. Unclaimed estimates start new tracks.
    """
    if next_track_id is None:
        next_track_id = max((t.track_id for t in tracks), default=-1) + 1
    index = SpatialIndex(cleared_obstacles)
    predicted = [predict_step(t, now, cfg) for t in tracks]

    claims: dict[int, tuple[float, int, int]] = {}  # meas idx -> (dist, track_id, slot)
    for slot, trk in enumerate(predicted):
        for d, i in index.query_indices(trk.position, cfg.assoc_radius):
            key = (d, trk.track_id, slot)
            if i not in claims or key < claims[i]:
                claims[i] = key

    per_track: dict[int, list[tuple[float, int]]] = {}
    for i, (d, _, slot) in claims.items():
        per_track.setdefault(slot, []).append((d, i))

    updated, corrections = [], {}
    for slot, trk in enumerate(predicted):
        mine = sorted(per_track.get(slot, []))
        if mine:
            trk = correct_step(trk, [index.obstacles[i] for _, i in mine], now, cfg)
            corrections[trk.track_id] = len(mine)
        updated.append(trk)

    spawned = []
    for i, obs in enumerate(index.obstacles):
        if i not in claims:
            spawned.append(init_track(obs, now, cfg, next_track_id))
            next_track_id += 1
    return FrameResult(updated, spawned, corrections)
