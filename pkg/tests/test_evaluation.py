import math
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from occlusion_inference.core import Cov2, GaussianObstacle, ObstacleKind, Pose2, Vec2
from occlusion_inference.costmap import CostedObstacle
from occlusion_inference.evaluation import (
    CATEGORIES,
    Category,
    EvalConfig,
    ExperimentConfig,
    ScoredPrediction,
    bin_report,
    classify,
    cost_decile,
    prediction_error,
    run_trials,
    scatter_data,
    score_prediction,
)
from occlusion_inference.sim import SimConfig, WorldTruth

PATCH = Cov2(0.3, 0.0, 0.0, 0.3)
ROBOT = Pose2(Vec2(0.0, 0.0))


def truth(agents=(), obstacles=(), agent_vis=None, obs_vis=None):
    agent_vis = agent_vis if agent_vis is not None else [True] * len(agents)
    obs_vis = obs_vis if obs_vis is not None else [True] * len(obstacles)
    return WorldTruth(
        agent_ids=tuple(range(len(agents))),
        agent_positions=tuple(Vec2(*p) for p in agents),
        agent_velocities=tuple(Vec2(0, 0) for _ in agents),
        agent_visible=tuple(agent_vis),
        obstacle_centers=tuple(Vec2(*p) for p in obstacles),
        obstacle_visible=tuple(obs_vis),
        robot=ROBOT,
    )


def pred(x, y, cost=0.5, sources=frozenset()):
    ob = GaussianObstacle(Vec2(x, y), PATCH, 0.0, ObstacleKind.FUSED, sources=frozenset(sources))
    return CostedObstacle(ob, cost, 5.0)


def scored(cat, dist=1.0, cost=0.5, error=0.1):
    return ScoredPrediction(pred(dist, 0.0, cost), error, cat, dist, 0)


def test_error_examples():
    assert prediction_error(pred(1, 1), truth(obstacles=[(1, 1)])) == 0.0
    assert prediction_error(pred(0, 0), truth(agents=[(0.3, 0)], obstacles=[(0.7, 0)])) == pytest.approx(0.3)
    assert prediction_error(pred(0, 0), truth()) == math.inf
    assert classify(pred(0, 0), truth()) is Category.INCORRECT


def test_classify_examples():
    assert classify(pred(0, 0), truth(obstacles=[(0.41, 0)])) is Category.INCORRECT
    assert classify(pred(0, 0), truth(obstacles=[(0.40, 0)])) is Category.OBSTACLE
    assert classify(pred(0, 0), truth(agents=[(0.1, 0)], agent_vis=[False])) is Category.UNSEEN
    assert classify(pred(0, 0), truth(obstacles=[(0.2, 0)])) is Category.OBSTACLE
    assert classify(pred(0, 0), truth(agents=[(0.2, 0)])) is Category.AGENT


def test_source_agents_are_skipped():
    t = truth(agents=[(0.1, 0), (0.3, 0)], agent_vis=[True, False])
    s = score_prediction(pred(0, 0, sources={0}), t, 0, EvalConfig())
    assert s.error == pytest.approx(0.3) and s.category is Category.UNSEEN
    s = score_prediction(pred(0, 0, sources={0}), t, 0, EvalConfig(exclude_sources=False))
    assert s.error == pytest.approx(0.1) and s.category is Category.AGENT


def test_boundary_mode():
    s = score_prediction(pred(0, 0), truth(obstacles=[(0.5, 0)]), 0, EvalConfig(error_mode="boundary"))
    assert s.error == pytest.approx(0.3)


world_pts = st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), max_size=8)


@given(world_pts, world_pts, st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
def test_error_is_brute_force_minimum(agents, obstacles, p):
    t = truth(agents, obstacles)
    want = min((math.hypot(p[0] - x, p[1] - y) for x, y in agents + obstacles), default=math.inf)
    assert prediction_error(pred(*p), t) == want


def test_error_on_random_snapshots():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        pts = rng.uniform(-3, 3, size=(int(rng.integers(0, 12)), 2))
        split = int(rng.integers(0, len(pts) + 1))
        t = truth([tuple(p) for p in pts[:split]], [tuple(p) for p in pts[split:]])
        q = rng.uniform(-3, 3, size=2)
        want = min((float(np.hypot(*(q - x))) for x in pts), default=math.inf)
        assert prediction_error(pred(*q), t) == pytest.approx(want, abs=1e-12)


@given(world_pts, world_pts, st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
def test_partition_and_all_visible_never_unseen(agents, obstacles, p):
    t = truth(agents, obstacles)
    cat = classify(pred(*p), t)
    assert cat in CATEGORIES
    assert cat is not Category.UNSEEN
    err = prediction_error(pred(*p), t)
    assert (cat is Category.INCORRECT) == (err > 0.40)


def test_bin_examples():
    rep = bin_report([scored(Category.UNSEEN, 1.2) for _ in range(4)])
    row = rep.rows[2]
    assert (row.pct(Category.AGENT), row.pct(Category.OBSTACLE), row.pct(Category.INCORRECT)) == (0, 0, 0)
    assert row.pct(Category.UNSEEN) == 100.0
    assert len(rep.rows) == 6
    empty = bin_report([])
    assert all(r.n == 0 and r.pct(Category.AGENT) is None for r in empty.rows)


def test_bin_edges_half_open_last_closed():
    rep = bin_report([scored(Category.AGENT, d) for d in (0.0, 0.5, 2.99, 3.0, 3.01)])
    assert [r.n for r in rep.rows] == [1, 1, 0, 0, 0, 2]
    assert rep.out_of_range == 1


@given(st.lists(st.tuples(st.sampled_from(list(CATEGORIES)), st.floats(0, 3)), min_size=1, max_size=60))
def test_bin_rows_sum_to_100(items):
    rep = bin_report([scored(c, d) for c, d in items])
    for r in rep.rows:
        if r.n:
            assert sum(r.pct(c) for c in CATEGORIES) == pytest.approx(100.0, abs=0.01)


def test_scatter_single_record():
    s = scored(Category.OBSTACLE, 1.5, 0.37, 0.12)
    data = scatter_data([s])
    [r] = data.records
    assert (r.cost, r.error, r.category, r.robot_distance) == (0.37, 0.12, Category.OBSTACLE, 1.5)
    assert data.decile_means[Category.OBSTACLE][3] == pytest.approx(0.12)


def test_uniform_deciles_equal_overall_mean():
    items = [scored(Category.UNSEEN, 1.0, c / 10 + 0.05, e) for c in range(10) for e in (0.1, 0.2, 0.3)]
    means = scatter_data(items).decile_means[Category.UNSEEN]
    assert means == pytest.approx([0.2] * 10)


@given(st.lists(st.tuples(st.sampled_from(list(CATEGORIES)), st.floats(0.1, 1.0), st.floats(0, 2)), max_size=80))
def test_deciles_match_group_by(items):
    data = scatter_data([scored(c, 1.0, cost, err) for c, cost, err in items])
    groups = defaultdict(list)
    for c, cost, err in items:
        groups[(c, min(int(cost * 10), 9))].append(err)
    for c in CATEGORIES:
        for k in range(10):
            vals = groups.get((c, k))
            got = data.decile_means[c][k]
            if vals:
                assert got == pytest.approx(sum(vals) / len(vals))
            else:
                assert got is None
    assert cost_decile(1.0) == 9 and cost_decile(0.1) == 1


def _tiny(**sim):
    return ExperimentConfig(sim=SimConfig(**sim), eval=EvalConfig(horizon_s=3.0, workers=1))


def test_trials_empty_world_and_determinism():
    cfg = _tiny(min_agents=0, max_agents=0, min_obstacles=0, max_obstacles=0)
    rep = run_trials(1, cfg)
    assert rep.summary["total_predictions"] == 0
    cfg = _tiny()
    a, b = run_trials(3, cfg), run_trials(3, cfg)
    assert a.summary == b.summary
    assert [(s.error, s.category) for s in a.scored] == [(s.error, s.category) for s in b.scored]


def test_trials_isolate_failing_seeds():
    cfg = _tiny(min_obstacles=400, max_obstacles=400, max_placement_attempts=20)
    rep = run_trials(2, cfg)
    assert [s for s, _ in rep.failures] == [0, 1]
    assert rep.summary["failed_seeds"] == [0, 1]


def test_trials_parallel_matches_serial():
    serial = run_trials(3, _tiny())
    par = run_trials(3, ExperimentConfig(eval=EvalConfig(horizon_s=3.0, workers=2)))
    assert serial.summary == par.summary


def test_trials_need_a_seed():
    with pytest.raises(ValueError):
        run_trials(0, _tiny())
