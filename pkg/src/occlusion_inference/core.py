"""Shared 2D geometric and Gaussian types used by every pipeline stage."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from typing import Hashable, Optional

PSD_TOL = 1e-9
SYM_TOL = 1e-9


class InvalidValueError(ValueError):
    """Raised when a value violates a domain invariant (NaN, asymmetry, ...)."""


def _check_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self):
        _check_finite("Vec2", self.x, self.y)

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def scaled(self, k: float) -> "Vec2":
        return Vec2(self.x * k, self.y * k)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def dist(self, other: "Vec2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


def cov_eigenvalues(c_xx: float, c_xy: float, c_yy: float) -> tuple[float, float]:
    """Eigenvalues (ascending) of the symmetric matrix [[c_xx, c_xy], [c_xy, c_yy]]."""
    half_tr = 0.5 * (c_xx + c_yy)
    disc = math.hypot(0.5 * (c_xx - c_yy), c_xy)
    return half_tr - disc, half_tr + disc


@dataclass(frozen=True)
class Cov2:
    """Row-major 2x2 covariance, validated symmetric PSD on construction."""

    c_xx: float
    c_xy: float
    c_yx: float
    c_yy: float

    def __post_init__(self):
        _check_finite("Cov2", self.c_xx, self.c_xy, self.c_yx, self.c_yy)
        scale = max(1.0, abs(self.c_xx), abs(self.c_yy))
        if abs(self.c_xy - self.c_yx) > SYM_TOL * scale:
            raise InvalidValueError(f"covariance not symmetric: c_xy={self.c_xy} c_yx={self.c_yx}")
        lo, _ = cov_eigenvalues(self.c_xx, 0.5 * (self.c_xy + self.c_yx), self.c_yy)
        if lo < -PSD_TOL * scale:
            raise InvalidValueError(f"covariance not PSD: min eigenvalue {lo}")

    @classmethod
    def from_matrix(cls, m) -> "Cov2":
        return cls(float(m[0][0]), float(m[0][1]), float(m[1][0]), float(m[1][1]))

    def as_rows(self) -> list[list[float]]:
        return [[self.c_xx, self.c_xy], [self.c_yx, self.c_yy]]

    def flat(self) -> tuple[float, float, float, float]:
        return (self.c_xx, self.c_xy, self.c_yx, self.c_yy)

    def trace(self) -> float:
        return self.c_xx + self.c_yy

    def det(self) -> float:
        return self.c_xx * self.c_yy - self.c_xy * self.c_yx


@dataclass(frozen=True)
class AgentObservation:
    agent_id: Hashable
    t: float
    position: Vec2
    velocity: Vec2


class ObstacleKind(str, enum.Enum):
    FRONT = "front"
    SIDE_LEFT = "side_left"
    SIDE_RIGHT = "side_right"
    FUSED = "fused"


@dataclass(frozen=True)
class GaussianObstacle:
    mean: Vec2
    cov: Cov2
    t_occ: float
    kind: ObstacleKind
    source_agent: Optional[Hashable] = None
    created_at: float = 0.0
    # contributing agents of a fused region; empty for raw estimates
    sources: frozenset = frozenset()

    def __post_init__(self):
        _check_finite("GaussianObstacle.t_occ", self.t_occ, self.created_at)
        if self.kind is ObstacleKind.FRONT and self.t_occ < self.created_at:
            raise InvalidValueError("front obstacle occupancy time precedes its creation")
        if self.kind in (ObstacleKind.SIDE_LEFT, ObstacleKind.SIDE_RIGHT) and self.t_occ != self.created_at:
            raise InvalidValueError("side obstacle occupancy time must equal its creation time")

    @property
    def contributors(self) -> frozenset:
        if self.sources:
            return self.sources
        if self.source_agent is not None:
            return frozenset([self.source_agent])
        return frozenset()


_DIAG7 = tuple[float, float, float, float, float, float, float]


@dataclass(frozen=True)
class PipelineConfig:
    epsilon: float = 1e-6
    obstacle_clearance: float = 0.2
    window_duration: float = 1.0
    avg_turn_trigger: float = 0.15
    max_turn_trigger: float = 0.40
    max_ray: float = 3.0
    n_sectors: int = 36
    assoc_radius: float = 1.0
    c1: float = 1.1
    c2: float = 0.3
    cost_floor: float = 0.1
    cost_ceiling: float = 1.0
    decay_rate: float = 0.09
    retention: float = 5.0
    q_base: _DIAG7 = (0.05, 0.01, 0.01, 0.01, 0.01, 0.04, 0.04)
    r_base: _DIAG7 = (0.1, 0.02, 0.02, 0.02, 0.02, 0.05, 0.05)
    p_init: _DIAG7 = (0.5, 0.1, 0.1, 0.1, 0.1, 0.25, 0.25)
    # "window_start": front ray starts where the pre-turn heading was sampled
    front_anchor: str = "window_start"
    # trigger only on windows covering the full window_duration
    require_full_window: bool = True
    # re-test live tracks against every new scan, not just fresh estimates
    clear_tracks: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidValueError("epsilon must be > 0")
        if not 0 < self.cost_floor < self.cost_ceiling <= 1:
            raise InvalidValueError("need 0 < cost_floor < cost_ceiling <= 1")
        if self.n_sectors < 3:
            raise InvalidValueError("n_sectors must be >= 3")
        if not self.max_ray > 0:
            raise InvalidValueError("max_ray must be > 0")
        if self.window_duration <= 0 or self.assoc_radius <= 0:
            raise InvalidValueError("window_duration and assoc_radius must be > 0")
        if self.front_anchor not in ("window_start", "current"):
            raise InvalidValueError("front_anchor must be 'window_start' or 'current'")
        for name in ("q_base", "r_base", "p_init"):
            diag = getattr(self, name)
            if len(diag) != 7 or any(v < 0 for v in diag):
                raise InvalidValueError(f"{name} must be 7 non-negative values")
            object.__setattr__(self, name, tuple(float(v) for v in diag))

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def wrap_angle(theta: float) -> float:
    """Map an angle onto (-pi, pi]."""
    if not math.isfinite(theta):
        raise InvalidValueError(f"angle must be finite, got {theta!r}")
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def rotate_cov(c: Cov2, theta: float) -> Cov2:
    """Return R(theta) C R(theta)^T."""
    if not isinstance(c, Cov2):
        c = Cov2.from_matrix(c)
    cs, sn = math.cos(theta), math.sin(theta)
    a, b, d = c.c_xx, 0.5 * (c.c_xy + c.c_yx), c.c_yy
    # expanded product keeps the result exactly symmetric
    r_xx = cs * cs * a - 2.0 * cs * sn * b + sn * sn * d
    r_yy = sn * sn * a + 2.0 * cs * sn * b + cs * cs * d
    r_xy = cs * sn * (a - d) + (cs * cs - sn * sn) * b
    return Cov2(r_xx, r_xy, r_xy, r_yy)


@dataclass(frozen=True)
class Pose2:
    position: Vec2
    heading: float = 0.0

    def __post_init__(self):
        _check_finite("Pose2.heading", self.heading)
