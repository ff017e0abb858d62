"""Seedable reaction-based crowd simulator with a fixed robot and 2D LiDAR.

Agents steer gently toward their current goal and swerve sharply away from
anything that enters a short look-ahead cone. Static obstacles, agents and
the robot all share the same circular footprint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Hashable, Sequence

import numpy as np

from .clearing import LidarScan
from .core import AgentObservation, Pose2, Vec2, wrap_angle


class ScenarioTooDenseError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    max_ray: float = 3.0
    n_rays: int = 360
    arena_size: float = 8.0
    robot_x: float = 4.0
    robot_y: float = 4.0
    robot_heading: float = 0.0
    footprint_radius: float = 0.2
    min_agents: int = 4
    max_agents: int = 8
    min_obstacles: int = 3
    max_obstacles: int = 6
    static_agent_prob: float = 0.25
    min_speed: float = 0.5
    max_speed: float = 1.2
    goals_per_agent: int = 3
    min_goal_distance: float = 2.5
    goal_tolerance: float = 0.15
    spawn_gap: float = 0.3
    lookahead: float = 0.8
    cone_half_angle: float = 0.3
    evade_turn_rate: float = 6.0
    goal_turn_rate: float = 1.5
    evade_speed_factor: float = 0.7
    max_placement_attempts: int = 2000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.max_ray > 0:
            raise ValueError("max_ray must be > 0")
        if self.n_rays < 1:
            raise ValueError("n_rays must be >= 1")
        if not (0 <= self.min_agents <= self.max_agents and 0 <= self.min_obstacles <= self.max_obstacles):
            raise ValueError("entity count ranges must satisfy 0 <= min <= max")

    @property
    def robot_pose(self) -> Pose2:
        return Pose2(Vec2(self.robot_x, self.robot_y), self.robot_heading)


@dataclass(frozen=True)
class Obstacle:
    center: Vec2
    radius: float = 0.2


@dataclass(frozen=True)
class Agent:
    agent_id: int
    position: Vec2
    velocity: Vec2
    heading: float
    preferred_speed: float
    goals: tuple[Vec2, ...] = ()
    radius: float = 0.2

    @property
    def goal(self) -> Vec2 | None:
        return self.goals[0] if self.goals else None


@dataclass(frozen=True)
class Scenario:
    static_obstacles: tuple[Obstacle, ...]
    agents: tuple[Agent, ...]
    robot: Pose2
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    seed: int = 0
    robot_radius: float = 0.2


def _inside(p: Vec2, r: float, bounds) -> bool:
    xmin, ymin, xmax, ymax = bounds
    return xmin + r <= p.x <= xmax - r and ymin + r <= p.y <= ymax - r


def generate_scenario(seed: int, cfg: SimConfig) -> Scenario:
    """Rejection-sample non-overlapping obstacles, agents and goals from ``seed``."""
    rng = np.random.default_rng(seed)
    r = cfg.footprint_radius
    size = cfg.arena_size
    bounds = (0.0, 0.0, size, size)
    robot = cfg.robot_pose
    occupied: list[tuple[Vec2, float]] = [(robot.position, r)]

    def sample_free(min_gap: float, taken) -> Vec2:
        for _ in range(cfg.max_placement_attempts):
            x, y = rng.uniform(r, size - r, size=2)
            p = Vec2(float(x), float(y))
            if all(p.dist(c) >= rc + r + min_gap for c, rc in taken):
                return p
        raise ScenarioTooDenseError(
            f"seed {seed}: no free placement after {cfg.max_placement_attempts} attempts"
        )

    n_obs = int(rng.integers(cfg.min_obstacles, cfg.max_obstacles + 1))
    n_agents = int(rng.integers(cfg.min_agents, cfg.max_agents + 1))

    obstacles = []
    for _ in range(n_obs):
        c = sample_free(cfg.spawn_gap, occupied)
        obstacles.append(Obstacle(c, r))
        occupied.append((c, r))
    static_only = [(o.center, o.radius) for o in obstacles] + [(robot.position, r)]

    agents = []
    for i in range(n_agents):
        start = sample_free(cfg.spawn_gap, occupied)
        occupied.append((start, r))
        static_agent = rng.uniform() < cfg.static_agent_prob
        speed = 0.0 if static_agent else float(rng.uniform(cfg.min_speed, cfg.max_speed))
        goals = []
        if not static_agent:
            prev = start
            for _ in range(cfg.goals_per_agent):
                for _ in range(cfg.max_placement_attempts):
                    g = sample_free(cfg.spawn_gap, static_only)
                    if g.dist(prev) >= cfg.min_goal_distance:
                        break
                else:
                    raise ScenarioTooDenseError(f"seed {seed}: cannot place goal for agent {i}")
                goals.append(g)
                prev = g
        heading = math.atan2(goals[0].y - start.y, goals[0].x - start.x) if goals else 0.0
        vel = Vec2(speed * math.cos(heading), speed * math.sin(heading))
        agents.append(Agent(i, start, vel, heading, speed, tuple(goals), r))

    return Scenario(tuple(obstacles), tuple(agents), robot, bounds, seed, r)


def _entities(scenario: Scenario, exclude_agent: int | None = None) -> list[tuple[Vec2, float]]:
    ents = [(o.center, o.radius) for o in scenario.static_obstacles]
    ents += [(a.position, a.radius) for a in scenario.agents if a.agent_id != exclude_agent]
    ents.append((scenario.robot.position, scenario.robot_radius))
    return ents


def _nearest_threat(agent: Agent, scenario: Scenario, cfg: SimConfig) -> float | None:
    """Bearing (relative to heading) of the closest entity inside the look-ahead cone."""
    best = None
    for c, rc in _entities(scenario, agent.agent_id):
        dx, dy = c.x - agent.position.x, c.y - agent.position.y
        gap = math.hypot(dx, dy) - rc - agent.radius
        if gap > cfg.lookahead + 1e-9:
            continue
        bearing = wrap_angle(math.atan2(dy, dx) - agent.heading)
        if abs(bearing) > cfg.cone_half_angle:
            continue
        if best is None or gap < best[0]:
            best = (gap, bearing)
    return None if best is None else best[1]


def _penetrates(p: Vec2, r: float, solids) -> bool:
    return any(p.dist(c) < rc + r for c, rc in solids)


def step_agent(agent: Agent, scenario: Scenario, cfg: SimConfig) -> Agent:
    """Advance one agent by ``cfg.dt`` against a frozen snapshot of the world."""
    goals = agent.goals
    while goals and agent.position.dist(goals[0]) <= cfg.goal_tolerance:
        goals = goals[1:]
    if not goals or agent.preferred_speed <= 0.0:
        return replace(agent, velocity=Vec2(0.0, 0.0), goals=goals)

    goal = goals[0]
    heading = agent.heading
    speed = agent.preferred_speed
    threat = _nearest_threat(replace(agent, goals=goals), scenario, cfg)
    if threat is not None:
        away = -1.0 if threat >= 0.0 else 1.0
        heading = wrap_angle(heading + away * cfg.evade_turn_rate * cfg.dt)
        speed *= cfg.evade_speed_factor
    else:
        desired = math.atan2(goal.y - agent.position.y, goal.x - agent.position.x)
        limit = cfg.goal_turn_rate * cfg.dt
        heading = wrap_angle(heading + min(max(wrap_angle(desired - heading), -limit), limit))
        speed = min(speed, agent.position.dist(goal) / cfg.dt)

    step = speed * cfg.dt
    p = agent.position
    cand = Vec2(p.x + step * math.cos(heading), p.y + step * math.sin(heading))
    solids = [(o.center, o.radius) for o in scenario.static_obstacles]
    solids.append((scenario.robot.position, scenario.robot_radius))
    for c, rc in solids:
        d = cand.dist(c)
        need = rc + agent.radius
        if d < need:
            # slide: push radially back onto the footprint boundary
            k = (need + 1e-9) / d if d > 0 else 0.0
            cand = Vec2(c.x + (cand.x - c.x) * k, c.y + (cand.y - c.y) * k) if d > 0 else p
    xmin, ymin, xmax, ymax = scenario.bounds
    r = agent.radius
    cand = Vec2(min(max(cand.x, xmin + r), xmax - r), min(max(cand.y, ymin + r), ymax - r))
    if _penetrates(cand, agent.radius, solids):
        cand = p
    vel = Vec2((cand.x - p.x) / cfg.dt, (cand.y - p.y) / cfg.dt)
    return replace(agent, position=cand, velocity=vel, heading=heading, goals=goals)


def step_world(scenario: Scenario, cfg: SimConfig) -> Scenario:
    return replace(scenario, agents=tuple(step_agent(a, scenario, cfg) for a in scenario.agents))


def ray_angles(robot: Pose2, n_rays: int) -> np.ndarray:
    k = np.arange(n_rays, dtype=float)
    ang = robot.heading + k * (2.0 * math.pi / n_rays)
    # wrap onto (-pi, pi]
    ang = np.mod(ang + math.pi, 2.0 * math.pi) - math.pi
    return np.where(ang == -math.pi, math.pi, ang)


def raycast_ranges(origin: Vec2, angles: np.ndarray, centers: np.ndarray, radii: np.ndarray, max_ray: float) -> np.ndarray:
    """Nearest forward ray-circle intersection per ray, capped at ``max_ray``."""
    ranges = np.full(angles.shape, max_ray, dtype=float)
    if len(centers) == 0:
        return ranges
    ux, uy = np.cos(angles)[:, None], np.sin(angles)[:, None]
    ox = origin.x - centers[None, :, 0]
    oy = origin.y - centers[None, :, 1]
    b = ux * ox + uy * oy
    c = ox * ox + oy * oy - radii[None, :] ** 2
    disc = b * b - c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = -b - sq
    t_far = -b + sq
    # origin inside a footprint: the exit point is the first surface seen
    t = np.where(t_near > 0.0, t_near, t_far)
    t = np.where(hit & (t > 0.0), t, np.inf)
    return np.minimum(ranges, t.min(axis=1))


def _circle_arrays(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    circles = [(o.center.x, o.center.y, o.radius) for o in scenario.static_obstacles]
    circles += [(a.position.x, a.position.y, a.radius) for a in scenario.agents]
    arr = np.array(circles, dtype=float).reshape(-1, 3)
    return arr[:, :2], arr[:, 2]


def raycast(scenario: Scenario, cfg: SimConfig, stamp: float = 0.0) -> LidarScan:
    angles = ray_angles(scenario.robot, cfg.n_rays)
    centers, radii = _circle_arrays(scenario)
    ranges = raycast_ranges(scenario.robot.position, angles, centers, radii, cfg.max_ray)
    return LidarScan(scenario.robot, angles, ranges, stamp, cfg.max_ray)


def segment_blocked(a: Vec2, b: Vec2, c: Vec2, r: float) -> bool:
    """True if the segment a-b passes strictly within ``r`` of ``c``."""
    dx, dy = b.x - a.x, b.y - a.y
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return a.dist(c) < r
    s = min(max(((c.x - a.x) * dx + (c.y - a.y) * dy) / L2, 0.0), 1.0)
    return math.hypot(a.x + s * dx - c.x, a.y + s * dy - c.y) < r


def line_of_sight(scenario: Scenario, target: Vec2, occluders: Sequence[tuple[Vec2, float]]) -> bool:
    origin = scenario.robot.position
    return not any(segment_blocked(origin, target, c, r) for c, r in occluders)


def visibility(scenario: Scenario, cfg: SimConfig) -> tuple[list[bool], list[bool]]:
    """Visibility flags for (static obstacles, agents) as seen from the robot."""
    origin = scenario.robot.position
    obs = [(o.center, o.radius) for o in scenario.static_obstacles]
    ags = [(a.position, a.radius) for a in scenario.agents]
    everything = obs + ags

    def seen(k: int) -> bool:
        target = everything[k][0]
        if origin.dist(target) > cfg.max_ray:
            return False
        others = everything[:k] + everything[k + 1:]
        return line_of_sight(scenario, target, others)

    n = len(obs)
    return [seen(k) for k in range(n)], [seen(n + k) for k in range(len(ags))]


def visible_agents(scenario: Scenario, cfg: SimConfig, t: float = 0.0) -> list[AgentObservation]:
    _, agent_flags = visibility(scenario, cfg)
    return [
        AgentObservation(a.agent_id, t, a.position, a.velocity)
        for a, seen in zip(scenario.agents, agent_flags)
        if seen
    ]


@dataclass(frozen=True)
class WorldTruth:
    """Ground-truth snapshot of one tick."""

    agent_ids: tuple[Hashable, ...]
    agent_positions: tuple[Vec2, ...]
    agent_velocities: tuple[Vec2, ...]
    agent_visible: tuple[bool, ...]
    obstacle_centers: tuple[Vec2, ...]
    obstacle_visible: tuple[bool, ...]
    robot: Pose2
    footprint_radius: float = 0.2


@dataclass(frozen=True)
class TickRecord:
    tick: int
    t: float
    scan: LidarScan
    observations: tuple[AgentObservation, ...]
    truth: WorldTruth


@dataclass
class EpisodeLog:
    seed: int
    scenario: Scenario
    sim_config: SimConfig
    records: list[TickRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)


def tick_time(tick: int, dt: float) -> float:
    return round(tick * dt, 9)


def snapshot(scenario: Scenario, cfg: SimConfig, tick: int) -> TickRecord:
    t = tick_time(tick, cfg.dt)
    obs_flags, agent_flags = visibility(scenario, cfg)
    observations = tuple(
        AgentObservation(a.agent_id, t, a.position, a.velocity)
        for a, seen in zip(scenario.agents, agent_flags)
        if seen
    )
    truth = WorldTruth(
        agent_ids=tuple(a.agent_id for a in scenario.agents),
        agent_positions=tuple(a.position for a in scenario.agents),
        agent_velocities=tuple(a.velocity for a in scenario.agents),
        agent_visible=tuple(agent_flags),
        obstacle_centers=tuple(o.center for o in scenario.static_obstacles),
        obstacle_visible=tuple(obs_flags),
        robot=scenario.robot,
        footprint_radius=cfg.footprint_radius,
    )
    return TickRecord(tick, t, raycast(scenario, cfg, t), observations, truth)


def run_episode(scenario: Scenario, cfg: SimConfig, horizon: int) -> EpisodeLog:
    """Record ``horizon`` ticks; each record is taken before the world is stepped."""
    log = EpisodeLog(scenario.seed, scenario, cfg)
    world = scenario
    for tick in range(max(0, int(horizon))):
        log.records.append(snapshot(world, cfg, tick))
        world = step_world(world, cfg)
    return log
