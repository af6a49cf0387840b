import math

import numpy as np
import pytest

from polytrain.errors import DataError, ParameterError
from polytrain.losses import boundary_loss, composite_loss, cross_entropy

from conftest import central_diff, rel_err


def test_cross_entropy_uniform():
    loss, _ = cross_entropy(np.zeros((3, 10)), np.array([0, 4, 9]))
    assert loss == pytest.approx(math.log(10), abs=1e-12)


def test_cross_entropy_peaked():
    logits = np.zeros((2, 3))
    logits[0, 1] = logits[1, 2] = 100.0
    loss, _ = cross_entropy(logits, np.array([1, 2]))
    assert loss < 1e-6


def test_cross_entropy_bad_label():
    with pytest.raises(DataError):
        cross_entropy(np.zeros((2, 3)), np.array([0, 3]))


def test_cross_entropy_gradient(rng):
    logits = rng.normal((5, 4)) * 3
    y = np.array([0, 3, 1, 1, 2])
    _, g = cross_entropy(logits, y)
    fd = central_diff(lambda: cross_entropy(logits, y)[0], logits)
    assert rel_err(g, fd) < 1e-6


def test_boundary_inside_is_zero():
    x = np.array([[-3.0, 2.9], [0.0, 3.0]])
    loss, g = boundary_loss(x, 6.0, 0.5)
    assert loss == 0.0 and not g.any()


def test_boundary_single_element():
    loss, _ = boundary_loss(np.array([4.0]), 6.0, 0.5)
    assert loss == pytest.approx(1.718282, abs=1e-6)


def test_boundary_mean_over_elements():
    loss, _ = boundary_loss(np.array([4.0, 0.0]), 6.0, 0.5)
    assert loss == pytest.approx(0.859141, abs=1e-6)


def test_boundary_is_symmetric_and_monotone():
    xs = np.linspace(3.0, 9.0, 25)
    vals = [boundary_loss(np.array([v]), 6.0, 0.5)[0] for v in xs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert boundary_loss(np.array([-7.5]), 6.0, 0.5)[0] == boundary_loss(np.array([7.5]), 6.0, 0.5)[0]


def test_boundary_overflow_propagates():
    loss, _ = boundary_loss(np.array([1e4]), 1.0, 1.0)
    assert math.isinf(loss)


def test_boundary_gradient(rng):
    x = rng.normal((6, 5)) * 4
    # keep away from the kink at |x| = alpha*B
    x[np.abs(np.abs(x) - 3.0) < 1e-3] += 0.01
    _, g = boundary_loss(x, 6.0, 0.5)
    fd = central_diff(lambda: boundary_loss(x, 6.0, 0.5)[0], x)
    assert rel_err(g, fd) < 1e-6


def test_boundary_parameter_checks():
    with pytest.raises(ParameterError):
        boundary_loss(np.zeros(2), 0.0, 0.5)
    with pytest.raises(ParameterError):
        boundary_loss(np.zeros(2), 1.0, 0.0)


def test_composite_examples():
    assert composite_loss(0.7, [5.0, 2.0], 0.0) == 0.7
    assert composite_loss(1.0, [0.001, 0.001], 1000.0) == pytest.approx(3.0, abs=1e-12)
    assert composite_loss(0.42, [0.0, 0.0, 0.0], 1000.0) == 0.42
    with pytest.raises(ParameterError):
        composite_loss(1.0, [0.0], -1.0)
