#!/usr/bin/env python3
"""Boundary charts: evaluation, derivatives and nearest-point projection."""

import math

import numpy as np
import pytest

from curvedhz import jets
from curvedhz.errors import ChartError, ProjectionError
from curvedhz.geometry import (ChartSegment, BoundaryChart, chart_from_expression, eval_chart,
                               make_builtin_chart, project_to_boundary)


def test_builtin_values(circle, three_leaf):
    assert np.allclose(eval_chart(circle, 0.0), [1.0, 0.0], atol=1e-15)
    assert np.allclose(eval_chart(circle, math.pi), [-1.0, 0.0], atol=1e-15)
    assert np.allclose(eval_chart(three_leaf, 0.0), [1.4, 0.0], atol=1e-15)
    assert np.allclose(eval_chart(three_leaf, math.pi / 2), [0.0, 1.0], atol=1e-14)
    _, tangent = eval_chart(circle, math.pi / 2, order=1)
    assert np.allclose(tangent, [-1.0, 0.0], atol=1e-15)


def test_closed_and_periodic(circle, three_leaf):
    for chart in (circle, three_leaf):
        assert chart.closed
        assert chart.period == pytest.approx(2 * math.pi)
        assert np.allclose(chart.point(0.0), chart.point(chart.period), atol=1e-12)


def test_unknown_chart():
    with pytest.raises(ChartError):
        make_builtin_chart("ellipse")


@pytest.mark.parametrize("name", ["circle", "three_leaf"])
def test_derivatives_match_finite_differences(name, rng):
    chart = make_builtin_chart(name)
    t = rng.uniform(0, 2 * math.pi, 100)
    d = 1e-6
    fd = (chart.point(t + d) - chart.point(t - d)) / (2 * d)
    exact = chart.tangent(t)
    assert np.all(np.linalg.norm(exact, axis=1) > 0)
    assert np.max(np.linalg.norm(fd - exact, axis=1) / np.linalg.norm(exact, axis=1)) <= 1e-6
    fd2 = (chart.tangent(t + d) - chart.tangent(t - d)) / (2 * d)
    assert np.allclose(fd2, chart.curvature_vector(t), atol=1e-5)


def test_projection_known_points(circle, three_leaf):
    cp = project_to_boundary(circle, [2.0, 0.0])
    assert cp.t == pytest.approx(0.0, abs=1e-10) or cp.t == pytest.approx(2 * math.pi, abs=1e-10)
    assert np.allclose(cp.x, [1.0, 0.0], atol=1e-12)

    cp = project_to_boundary(circle, [0.0, 0.5])
    assert cp.t == pytest.approx(math.pi / 2, abs=1e-10)
    assert np.allclose(cp.x, [0.0, 1.0], atol=1e-12)

    cp = project_to_boundary(three_leaf, [1.5, 0.0], hint=0.1)
    ts = np.linspace(-0.5, 0.5, 100_001)
    oracle = ts[np.argmin(np.sum((three_leaf.point(ts) - [1.5, 0.0]) ** 2, axis=1))]
    t = cp.t if cp.t < math.pi else cp.t - 2 * math.pi
    assert t == pytest.approx(oracle, abs=1e-5)


@pytest.mark.parametrize("name", ["circle", "three_leaf"])
def test_projection_idempotent(name, rng):
    chart = make_builtin_chart(name)
    for t in rng.uniform(0, 2 * math.pi, 25):
        cp = project_to_boundary(chart, chart.point(t), hint=t + 0.01)
        gap = (cp.t - t + math.pi) % (2 * math.pi) - math.pi
        assert abs(gap) <= 1e-10
        p, dp = chart.point(cp.t), chart.tangent(cp.t)
        assert abs(np.dot(p - chart.point(t), dp)) <= 1e-12 * np.dot(dp, dp) + 1e-15


def test_open_chart_range():
    seg = ChartSegment((0.0, 1.0), lambda t: np.stack([t, 0 * t], axis=-1),
                       lambda t: np.stack([1 + 0 * t, 0 * t], axis=-1),
                       lambda t: np.zeros(np.shape(t) + (2,)))
    line = BoundaryChart("segment", [seg], closed=False, period=1.0)
    assert np.allclose(line.point(0.25), [0.25, 0.0])
    with pytest.raises(ChartError):
        line.point(1.5)


def test_chart_from_expression_ellipse():
    ellipse = chart_from_expression("ellipse", lambda t: (2 * jets.cos(t), jets.sin(t)))
    assert np.allclose(ellipse.point(math.pi / 2), [0.0, 1.0])
    assert np.allclose(ellipse.tangent(0.0), [0.0, 1.0])
    assert np.allclose(ellipse.curvature_vector(0.0), [-2.0, 0.0])


def test_projection_error_carries_best(circle, monkeypatch):
    import curvedhz.geometry as geometry

    monkeypatch.setattr(geometry, "_newton", lambda chart, x, t: (t, False))
    with pytest.raises(ProjectionError) as err:
        project_to_boundary(circle, [0.0, 0.0])
    assert err.value.best is not None
