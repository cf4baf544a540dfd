#!/usr/bin/env python3
"""Second-order dual numbers against hand derivatives."""

import numpy as np
import pytest

from curvedhz import jets
from curvedhz.jets import Jet


def xy(points):
    points = np.asarray(points, dtype=float)
    return Jet.variable(points[:, 0], 0, 2), Jet.variable(points[:, 1], 1, 2)


def test_exp_cos_derivatives(rng):
    pts = rng.uniform(-1, 1, size=(20, 2))
    x, y = xy(pts)
    u = jets.exp(x * y) * jets.cos(x)
    X, Y = pts[:, 0], pts[:, 1]
    e = np.exp(X * Y)
    assert np.allclose(u.val, e * np.cos(X), atol=1e-14)
    assert np.allclose(u.grad[0], e * (Y * np.cos(X) - np.sin(X)), atol=1e-13)
    assert np.allclose(u.grad[1], e * X * np.cos(X), atol=1e-13)
    assert np.allclose(u.hess[1, 1], e * X ** 2 * np.cos(X), atol=1e-13)
    d_xy = e * ((1 + X * Y) * np.cos(X) - X * np.sin(X))
    assert np.allclose(u.hess[0, 1], d_xy, atol=1e-13)
    assert np.allclose(u.hess[1, 0], d_xy, atol=1e-13)


def test_powers_and_quotients(rng):
    pts = rng.uniform(0.5, 2.0, size=(10, 2))
    x, y = xy(pts)
    X, Y = pts[:, 0], pts[:, 1]

    cube = x ** 3
    assert np.allclose(cube.grad[0], 3 * X ** 2)
    assert np.allclose(cube.hess[0, 0], 6 * X)

    q = x / y
    assert np.allclose(q.grad[1], -X / Y ** 2)
    assert np.allclose(q.hess[1, 1], 2 * X / Y ** 3)

    r = jets.sqrt(x)
    assert np.allclose(r.hess[0, 0], -0.25 * X ** -1.5)

    assert np.allclose((x ** 0).val, 1.0)
    assert np.allclose((x ** 0).grad, 0.0)


def test_mixed_constant_arithmetic():
    x = Jet.variable(np.array([2.0]), 0, 1)
    f = 3 - 2 * x + 1 / x
    assert f.val[0] == pytest.approx(3 - 4 + 0.5)
    assert f.grad[0, 0] == pytest.approx(-2 - 0.25)
    assert f.hess[0, 0, 0] == pytest.approx(2 / 8)


def test_plain_arrays_pass_through():
    assert np.allclose(jets.sin(np.array([0.0, np.pi / 2])), [0.0, 1.0])
