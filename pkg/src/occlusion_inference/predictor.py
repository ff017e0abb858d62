"""Reaction-triggered obstacle estimates from short windows of agent motion.

A visible agent that swerves suddenly is assumed to be avoiding something.
Each triggered window yields up to three Gaussian estimates: one in the
region the agent was heading toward before the swerve, and two beside the
agent at the turning radius (the instantaneous centre of rotation and its
mirror image).
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass
from typing import Hashable, Iterable

from .core import (
    AgentObservation,
    Cov2,
    GaussianObstacle,
    ObstacleKind,
    PipelineConfig,
    Vec2,
    rotate_cov,
    wrap_angle,
)

# window span may exceed window_duration by up to one sample period
_SPAN_SLACK = 1e-9


class InsufficientDataError(ValueError):
    pass


class NoFrontPrediction(ValueError):
    """Front timestamp is undefined for a stationary agent."""


class TurnSign(str, enum.Enum):
    CW = "cw"
    CCW = "ccw"


@dataclass(frozen=True)
class TrajectoryWindow:
    agent_id: Hashable
    samples: tuple[AgentObservation, ...]

    def __post_init__(self):
        for a, b in zip(self.samples, self.samples[1:]):
            if not b.t > a.t:
                raise ValueError(f"window samples for {self.agent_id!r} are not time-ordered")

    @property
    def now(self) -> float:
        return self.samples[-1].t

    @property
    def span(self) -> float:
        return self.samples[-1].t - self.samples[0].t


@dataclass(frozen=True)
class TurnStats:
    avg_turning_angle: float
    max_turning_angle: float
    turn_sign: TurnSign
    avg_speed: float
    heading_now: float
    heading_prev: float
    gradient_m: float

    @property
    def turning_angle(self) -> float:
        """Window turning angle signed by the dominant turn direction."""
        if self.turn_sign is TurnSign.CCW:
            return self.avg_turning_angle
        return -self.avg_turning_angle


class WindowTracker:
    """Keeps the most recent window_duration seconds of samples per agent."""

    def __init__(self, window_duration: float = 1.0):
        self.window_duration = window_duration
        self._samples: dict[Hashable, deque] = {}

    def __len__(self):
        return len(self._samples)

    def add(self, obs: AgentObservation) -> None:
        buf = self._samples.setdefault(obs.agent_id, deque())
        if buf and not obs.t > buf[-1].t:
            raise ValueError(f"non-increasing timestamp for agent {obs.agent_id!r}")
        buf.append(obs)

    def evict(self, now: float) -> None:
        horizon = now - self.window_duration - _SPAN_SLACK
        for agent_id in list(self._samples):
            buf = self._samples[agent_id]
            while buf and buf[0].t < horizon:
                buf.popleft()
            if not buf:
                del self._samples[agent_id]

    def windows(self) -> list[TrajectoryWindow]:
        return [TrajectoryWindow(a, tuple(buf)) for a, buf in self._samples.items() if len(buf) >= 2]

    def update(self, observations: Iterable[AgentObservation], now: float) -> list[TrajectoryWindow]:
        for obs in observations:
            self.add(obs)
        self.evict(now)
        # only agents observed at this tick carry a current trigger
        return [w for w in self.windows() if w.now == now]


def _heading(v: Vec2, eps: float) -> float:
    return math.atan2(v.y, v.x + eps)


def velocity_gradient(v_now: Vec2, v_prev: Vec2) -> float:
    """Slope of the velocity change between two samples; +inf when vx is unchanged."""
    dvx = v_now.x - v_prev.x
    if dvx == 0.0:
        return math.inf
    return (v_now.y - v_prev.y) / dvx


def turn_stats(window: TrajectoryWindow, cfg: PipelineConfig) -> TurnStats:
    samples = window.samples
    if len(samples) < 2:
        raise InsufficientDataError(f"agent {window.agent_id!r}: need >= 2 samples, have {len(samples)}")
    eps = cfg.epsilon
    headings = [_heading(s.velocity, eps) for s in samples]
    turns = [wrap_angle(b - a) for a, b in zip(headings, headings[1:])]
    abs_turns = [abs(t) for t in turns]
    return TurnStats(
        avg_turning_angle=sum(abs_turns) / len(abs_turns),
        max_turning_angle=max(abs_turns),
        turn_sign=TurnSign.CCW if sum(turns) >= 0.0 else TurnSign.CW,
        avg_speed=sum(s.velocity.norm() for s in samples) / len(samples),
        heading_now=headings[-1],
        heading_prev=headings[0],
        gradient_m=velocity_gradient(samples[-1].velocity, samples[-2].velocity),
    )


def is_triggered(stats: TurnStats, cfg: PipelineConfig) -> bool:
    return stats.avg_turning_angle >= cfg.avg_turn_trigger and stats.max_turning_angle >= cfg.max_turn_trigger


def patch_thresh(avg_speed: float) -> float:
    return 1.5 * avg_speed if avg_speed < 0.2 else 0.3


def base_patch_cov(avg_speed: float) -> Cov2:
    th = patch_thresh(avg_speed)
    return Cov2(th, th / 2.0, th / 2.0, th)


def patch_angle(stats: TurnStats, front: bool) -> float:
    # math.atan(inf) == pi/2, which is the vertical-gradient limit
    slope_angle = math.atan(stats.gradient_m)
    if front:
        return slope_angle + math.pi / 4.0 - stats.turning_angle
    return slope_angle - math.pi / 4.0


def build_patch_cov(stats: TurnStats, kind: ObstacleKind | str, cfg: PipelineConfig | None = None) -> Cov2:
    """Speed-scaled covariance patch, oriented by the motion gradient and turn."""
    front = kind is ObstacleKind.FRONT or (isinstance(kind, str) and kind.lower() == "front")
    return rotate_cov(base_patch_cov(stats.avg_speed), patch_angle(stats, front))


def front_distance(turning_angle: float, cfg: PipelineConfig) -> float:
    """Unclamped distance ahead of the agent to the avoided region."""
    return abs(cfg.obstacle_clearance / (math.tan(turning_angle) + cfg.epsilon))


def predict_front(window: TrajectoryWindow, stats: TurnStats, cfg: PipelineConfig) -> GaussianObstacle:
    if stats.avg_speed <= 0.0:
        raise NoFrontPrediction(f"agent {window.agent_id!r} has zero average speed")
    now = window.now
    rel = min(max(front_distance(stats.turning_angle, cfg), 0.0), cfg.max_ray)
    alpha = stats.heading_prev
    origin = window.samples[0 if cfg.front_anchor == "window_start" else -1].position
    mean = Vec2(origin.x + rel * math.cos(alpha), origin.y + rel * math.sin(alpha))
    return GaussianObstacle(
        mean=mean,
        cov=build_patch_cov(stats, ObstacleKind.FRONT, cfg),
        t_occ=now + rel / stats.avg_speed,
        kind=ObstacleKind.FRONT,
        source_agent=window.agent_id,
        created_at=now,
    )


def side_radius(step_distance: float, turning_angle: float, cfg: PipelineConfig) -> float:
    return step_distance / (abs(turning_angle) + cfg.epsilon)


def predict_sides(window: TrajectoryWindow, stats: TurnStats, cfg: PipelineConfig) -> list[GaussianObstacle]:
    last, prev = window.samples[-1], window.samples[-2]
    radius = side_radius(last.position.dist(prev.position), stats.turning_angle, cfg)
    if radius > cfg.max_ray:
        return []
    v = last.velocity
    beta = math.atan2(-v.x, v.y + cfg.epsilon)
    off = Vec2(radius * math.cos(beta), radius * math.sin(beta))
    cov = build_patch_cov(stats, ObstacleKind.SIDE_LEFT, cfg)
    now = window.now
    out = []
    for center in (last.position + off, last.position - off):
        rel = center - last.position
        cross = v.x * rel.y - v.y * rel.x
        kind = ObstacleKind.SIDE_LEFT if cross > 0 else ObstacleKind.SIDE_RIGHT
        out.append(GaussianObstacle(center, cov, now, kind, window.agent_id, now))
    return out


def predict_window(window: TrajectoryWindow, cfg: PipelineConfig) -> list[GaussianObstacle]:
    """All estimates for one window; empty unless the window is triggered."""
    if len(window.samples) < 2:
        return []
    if cfg.require_full_window and window.span < cfg.window_duration - 1e-6:
        return []
    stats = turn_stats(window, cfg)
    if not is_triggered(stats, cfg):
        return []
    out = predict_sides(window, stats, cfg)
    try:
        out.insert(0, predict_front(window, stats, cfg))
    except NoFrontPrediction:
        pass
    return out
