import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occlusion_inference.core import Pose2, Vec2, wrap_angle
from occlusion_inference.logs import write_episode
from occlusion_inference.sim import (
    Agent,
    Obstacle,
    Scenario,
    ScenarioTooDenseError,
    SimConfig,
    generate_scenario,
    ray_angles,
    raycast,
    raycast_ranges,
    run_episode,
    segment_blocked,
    step_agent,
    visibility,
    visible_agents,
)

CFG = SimConfig()
ROBOT = Pose2(Vec2(4.0, 4.0), 0.0)
BOUNDS = (0.0, 0.0, 8.0, 8.0)


def world(obstacles=(), agents=()):
    return Scenario(tuple(Obstacle(Vec2(*c)) for c in obstacles), tuple(agents), ROBOT, BOUNDS)


def agent(i, x, y, goal=None, speed=1.0, heading=0.0):
    goals = (Vec2(*goal),) if goal else ()
    return Agent(i, Vec2(x, y), Vec2(0, 0), heading, speed, goals)


def test_generation_deterministic():
    a, b = generate_scenario(11, CFG), generate_scenario(11, CFG)
    assert a == b
    assert generate_scenario(12, CFG) != a


def test_empty_and_dense_configs():
    empty = SimConfig(min_agents=0, max_agents=0, min_obstacles=0, max_obstacles=0)
    sc = generate_scenario(0, empty)
    assert sc.agents == () and sc.static_obstacles == ()
    dense = SimConfig(min_obstacles=400, max_obstacles=400, max_placement_attempts=50)
    with pytest.raises(ScenarioTooDenseError):
        generate_scenario(0, dense)


@pytest.mark.parametrize("seed", range(5))
def test_generated_scenario_invariants(seed):
    sc = generate_scenario(seed, CFG)
    ents = [o.center for o in sc.static_obstacles] + [a.position for a in sc.agents] + [sc.robot.position]
    for i, p in enumerate(ents):
        assert 0.2 <= p.x <= 7.8 and 0.2 <= p.y <= 7.8
        for q in ents[i + 1:]:
            assert p.dist(q) >= 0.4


def test_raycast_examples():
    sc = world()
    assert np.all(raycast(sc, CFG).ranges == CFG.max_ray)
    one = world([(5.0, 4.0)])
    scan = raycast(one, CFG)
    k = int(np.argmin(np.abs(scan.angles)))
    assert scan.angles[k] == 0.0
    assert scan.ranges[k] == pytest.approx(0.8, abs=1e-12)


def _brute_range(origin, angle, circles, max_ray):
    # march along the ray in 1 mm steps
    s = np.arange(0.0, max_ray + 1e-4, 1e-3)
    px = origin.x + s * math.cos(angle)
    py = origin.y + s * math.sin(angle)
    inside = np.zeros_like(s, dtype=bool)
    for cx, cy, r in circles:
        inside |= (px - cx) ** 2 + (py - cy) ** 2 <= r * r
    hits = np.nonzero(inside)[0]
    return max_ray if len(hits) == 0 else float(s[hits[0]])


def test_occluded_circle_reports_nearer_hit():
    circles = [(5.0, 4.0, 0.2), (6.0, 4.0, 0.2)]
    r = raycast_ranges(Vec2(4, 4), np.array([0.0]), np.array([c[:2] for c in circles]), np.array([0.2, 0.2]), 3.0)
    assert r[0] == pytest.approx(_brute_range(Vec2(4, 4), 0.0, circles, 3.0), abs=1.1e-3)
    assert r[0] == pytest.approx(0.8)


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(1.2, 6.8), st.floats(1.2, 6.8)), min_size=1, max_size=5))
def test_raycast_matches_brute_force_marching(centres):
    circles = [(x, y, 0.2) for x, y in centres if math.hypot(x - 4, y - 4) > 0.25]
    if not circles:
        return
    angles = ray_angles(ROBOT, 72)
    got = raycast_ranges(ROBOT.position, angles, np.array([c[:2] for c in circles]), np.full(len(circles), 0.2), 3.0)
    for a, g in zip(angles, got):
        assert g == pytest.approx(_brute_range(ROBOT.position, a, circles, 3.0), abs=1.1e-3)


@settings(max_examples=100)
@given(st.floats(0.5, 7.5), st.floats(0.5, 7.5), st.floats(-math.pi, math.pi), st.floats(0.05, 0.6))
def test_raycast_exact_against_quadratic(cx, cy, angle, r):
    # closed-form nearest root of |o + t u - c|^2 = r^2
    o = ROBOT.position
    ux, uy = math.cos(angle), math.sin(angle)
    fx, fy = o.x - cx, o.y - cy
    b = ux * fx + uy * fy
    c = fx * fx + fy * fy - r * r
    disc = b * b - c
    want = 3.0
    if disc >= 0 and c > 0:
        t = -b - math.sqrt(disc)
        if 0 < t < 3.0:
            want = t
    got = raycast_ranges(o, np.array([angle]), np.array([[cx, cy]]), np.array([r]), 3.0)[0]
    if c > 0:
        assert got == pytest.approx(want, abs=1e-6)


def test_visibility_examples():
    near = world(agents=[agent(0, 5.0, 4.0)])
    assert [o.agent_id for o in visible_agents(near, CFG)] == [0]
    far = world(agents=[agent(0, 7.5, 4.0)])
    assert visible_agents(far, CFG) == []
    hidden = world([(5.0, 4.0)], [agent(0, 6.0, 4.0)])
    assert visible_agents(hidden, CFG) == []
    assert segment_blocked(ROBOT.position, Vec2(6, 4), Vec2(5, 4), 0.2)


def _dense_segment_hit(a, b, c, r, n=20000):
    s = np.linspace(0.0, 1.0, n)
    x = a.x + s * (b.x - a.x)
    y = a.y + s * (b.y - a.y)
    return bool(np.any(np.hypot(x - c.x, y - c.y) < r))


@given(st.floats(0, 8), st.floats(0, 8), st.floats(0, 8), st.floats(0, 8))
def test_segment_test_matches_sampling(bx, by, cx, cy):
    a, b, c = ROBOT.position, Vec2(bx, by), Vec2(cx, cy)
    exact = segment_blocked(a, b, c, 0.2)
    # sampling can only miss a graze, never invent one
    if _dense_segment_hit(a, b, c, 0.2):
        assert exact
    if exact:
        assert _dense_segment_hit(a, b, c, 0.2 + 1e-3)


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.floats(1.0, 7.0), st.floats(1.0, 7.0))
def test_adding_occluder_never_reveals(seed, ox, oy):
    sc = generate_scenario(seed, CFG)
    _, before = visibility(sc, CFG)
    more = Scenario(sc.static_obstacles + (Obstacle(Vec2(ox, oy)),), sc.agents, sc.robot, sc.bounds, sc.seed)
    _, after = visibility(more, CFG)
    assert all(b or not a for a, b in zip(after, before))


def test_clear_path_heading_error_decreases():
    a = agent(0, 1.0, 1.0, goal=(7.0, 1.5), heading=1.2)
    sc = world(agents=[a])
    errs = []
    for _ in range(10):
        a = step_agent(a, sc, CFG)
        g = a.goals[0]
        errs.append(abs(wrap_angle(math.atan2(g.y - a.position.y, g.x - a.position.x) - a.heading)))
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]) if e1 > 1e-6)


def test_obstacle_ahead_causes_turn():
    a = agent(0, 1.0, 1.0, goal=(7.0, 1.0))
    sc = world([(1.0 + 0.4 + CFG.lookahead, 1.0)], [a])
    nxt = step_agent(a, sc, CFG)
    assert abs(wrap_angle(nxt.heading - a.heading)) > 0


def test_agent_at_goal_stops():
    a = agent(0, 2.0, 2.0, goal=(2.0, 2.05))
    nxt = step_agent(a, world(agents=[a]), CFG)
    assert nxt.velocity == Vec2(0.0, 0.0)


def _log_bytes(ep):
    buf = io.StringIO()
    write_episode(ep, buf)
    return buf.getvalue().encode()


def test_episode_determinism_and_horizon():
    sc = generate_scenario(4, CFG)
    assert len(run_episode(sc, CFG, 0)) == 0
    assert _log_bytes(run_episode(sc, CFG, 60)) == _log_bytes(run_episode(sc, CFG, 60))


@pytest.mark.parametrize("seed", range(3))
def test_agents_never_enter_obstacles(seed):
    sc = generate_scenario(seed, CFG)
    ep = run_episode(sc, CFG, 200)
    for rec in ep.records:
        for p in rec.truth.agent_positions:
            for c in rec.truth.obstacle_centers:
                assert p.dist(c) >= 0.4 - 1e-9
            assert p.dist(rec.truth.robot.position) >= 0.4 - 1e-9
