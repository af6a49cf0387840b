import numpy as np
import pytest

from polytrain.errors import DimensionError, ParameterError
from polytrain.numeric import SeededRng, log_softmax, matmul, uniform_sample


def triple_loop(a, b):
    m, k = a.shape
    n = b.shape[1]
    c = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            c[i, j] = s
    return c


def test_matmul_identity_and_scalar():
    a = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(matmul(np.eye(3), a), a)
    assert matmul([[2.0]], [[3.0]]).tolist() == [[6.0]]


def test_matmul_matches_triple_loop(rng):
    a = rng.normal((4, 3))
    b = rng.normal((3, 5))
    assert np.max(np.abs(matmul(a, b) - triple_loop(a, b))) < 1e-12


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_scalar_associativity(rng):
    a, b = rng.normal((5, 4)), rng.normal((4, 6))
    assert np.allclose(matmul(2.5 * a, b), 2.5 * matmul(a, b), rtol=0, atol=1e-12)


def test_log_softmax_uniform():
    out = log_softmax(np.zeros((2, 10)))
    assert np.allclose(out, -np.log(10.0), atol=1e-15)
    assert out[0, 0] == pytest.approx(-2.302585, abs=1e-6)


def test_log_softmax_shift_invariance(rng):
    x = rng.normal((3, 5))
    assert np.allclose(log_softmax(x + 123.0), log_softmax(x), atol=1e-12)


def test_log_softmax_large_logits():
    out = log_softmax(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(out))
    assert out[0, 0] == pytest.approx(0.0, abs=1e-300)
    assert out[0, 1] == pytest.approx(-1000.0)


def test_log_softmax_rows_normalized(rng):
    x = 50 * rng.normal((20, 7))
    assert np.max(np.abs(np.exp(log_softmax(x)).sum(axis=1) - 1.0)) < 1e-12


def test_uniform_sample_bounds_and_determinism():
    a = uniform_sample((1000,), -2.0, 3.0, SeededRng(5))
    b = uniform_sample((1000,), -2.0, 3.0, SeededRng(5))
    assert np.array_equal(a, b)
    assert a.min() >= -2.0 and a.max() < 3.0


def test_uniform_sample_mean():
    s = uniform_sample((100_000,), 0.0, 1.0, SeededRng(0))
    assert abs(s.mean() - 0.5) < 0.01


def test_uniform_sample_rejects_empty_interval(rng):
    with pytest.raises(ParameterError):
        uniform_sample((3,), 1.0, 1.0, rng)


def test_spawned_streams_are_reproducible():
    a = [r.random(4) for r in SeededRng(9).spawn(3)]
    b = [r.random(4) for r in SeededRng(9).spawn(3)]
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    assert not np.array_equal(a[0], a[1])
