import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occlusion_inference.core import (
    Cov2,
    GaussianObstacle,
    InvalidValueError,
    ObstacleKind,
    PipelineConfig,
    Vec2,
    rotate_cov,
    wrap_angle,
)
from occlusion_inference.predictor import base_patch_cov

angles = st.floats(-math.pi, math.pi, allow_nan=False)


@st.composite
def covs(draw):
    # L L^T is PSD by construction
    a = draw(st.floats(0.01, 3.0))
    b = draw(st.floats(-2.0, 2.0))
    c = draw(st.floats(0.01, 3.0))
    return Cov2(a * a, a * b, a * b, b * b + c * c)


def test_wrap_angle_examples():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-1.5 * math.pi) == pytest.approx(math.pi / 2)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


@given(st.floats(-100, 100))
def test_wrap_angle_range(theta):
    w = wrap_angle(theta)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(theta), abs_tol=1e-9)


def test_wrap_angle_rejects_nan():
    with pytest.raises(InvalidValueError):
        wrap_angle(float("nan"))


def test_rotate_identity_and_axis_swap():
    c = Cov2(0.3, 0.15, 0.15, 0.3)
    assert rotate_cov(c, 0.0) == c
    r = rotate_cov(Cov2(2.0, 0.0, 0.0, 5.0), math.pi / 2)
    assert r.c_xx == pytest.approx(5.0)
    assert r.c_yy == pytest.approx(2.0)
    assert r.c_xy == pytest.approx(0.0, abs=1e-12)


def _mp_rotate(c: Cov2, theta: float):
    mpmath.mp.dps = 50
    cs, sn = mpmath.cos(theta), mpmath.sin(theta)
    R = mpmath.matrix([[cs, -sn], [sn, cs]])
    C = mpmath.matrix(c.as_rows())
    return R * C * R.T


def test_rotate_patch_against_high_precision_product():
    c = base_patch_cov(0.5)  # thresh 0.3
    got = rotate_cov(c, math.pi / 4)
    want = _mp_rotate(c, math.pi / 4)
    for i in range(2):
        for j in range(2):
            assert got.as_rows()[i][j] == pytest.approx(float(want[i, j]), abs=1e-14)


@settings(max_examples=300)
@given(covs(), angles)
def test_rotate_matches_oracle(c, theta):
    got = rotate_cov(c, theta)
    want = _mp_rotate(c, theta)
    for i in range(2):
        for j in range(2):
            assert got.as_rows()[i][j] == pytest.approx(float(want[i, j]), abs=1e-12)


@given(covs(), angles)
def test_rotate_invariants(c, theta):
    r = rotate_cov(c, theta)
    assert r.trace() == pytest.approx(c.trace(), abs=1e-9)
    assert r.det() == pytest.approx(c.det(), abs=1e-9)
    back = rotate_cov(r, -theta)
    for x, y in zip(back.flat(), c.flat()):
        assert x == pytest.approx(y, abs=1e-9)
    assert r.c_xy == r.c_yx


def test_cov_validation():
    with pytest.raises(InvalidValueError):
        Cov2(1.0, 0.5, 0.4, 1.0)
    with pytest.raises(InvalidValueError):
        Cov2(1.0, 2.0, 2.0, 1.0)
    with pytest.raises(InvalidValueError):
        Cov2(float("nan"), 0.0, 0.0, 1.0)
    # tiny negative eigenvalue from rounding is tolerated
    Cov2(1.0, 1.0, 1.0, 1.0 - 1e-12)


def test_vec_rejects_non_finite():
    with pytest.raises(InvalidValueError):
        Vec2(float("inf"), 0.0)


def test_obstacle_time_invariants():
    c = Cov2(0.3, 0.0, 0.0, 0.3)
    GaussianObstacle(Vec2(0, 0), c, 2.0, ObstacleKind.FRONT, 1, created_at=1.0)
    with pytest.raises(InvalidValueError):
        GaussianObstacle(Vec2(0, 0), c, 0.5, ObstacleKind.FRONT, 1, created_at=1.0)
    with pytest.raises(InvalidValueError):
        GaussianObstacle(Vec2(0, 0), c, 1.5, ObstacleKind.SIDE_LEFT, 1, created_at=1.0)


def test_contributors():
    c = Cov2(0.3, 0.0, 0.0, 0.3)
    raw = GaussianObstacle(Vec2(0, 0), c, 0.0, ObstacleKind.SIDE_LEFT, 4)
    assert raw.contributors == {4}
    fused = GaussianObstacle(Vec2(0, 0), c, 0.0, ObstacleKind.FUSED, sources=frozenset({1, 2}))
    assert fused.contributors == {1, 2}


def test_config_validation():
    with pytest.raises(InvalidValueError):
        PipelineConfig(epsilon=0.0)
    with pytest.raises(InvalidValueError):
        PipelineConfig(q_base=(1.0,) * 6)
    with pytest.raises(InvalidValueError):
        PipelineConfig(front_anchor="middle")
    assert "assoc_radius" in PipelineConfig.field_names()
