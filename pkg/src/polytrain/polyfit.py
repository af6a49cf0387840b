"""Least-squares polynomial approximations of activation functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import FitError, ParameterError

DEFAULT_FIT_SAMPLES = 200


def relu(x):
    return np.maximum(x, 0.0)


def silu(x):
    x = np.asarray(x, dtype=np.float64)
    return x / (1.0 + np.exp(-x))


def identity(x):
    return np.asarray(x, dtype=np.float64).copy()


TARGETS = {"relu": relu, "silu": silu, "identity": identity}


@dataclass
class PolynomialActivation:
    """Coefficients ``a_0..a_d`` of ``p(x) = sum a_i x**i`` plus the fit metadata.

    ``bound`` is the half-width B of the fitting interval and ``alpha`` the
    fraction of it beyond which the boundary penalty kicks in.
    """

    coeffs: np.ndarray
    bound: float
    alpha: float = 1.0
    fit_samples: int = DEFAULT_FIT_SAMPLES
    target: str = "relu"
    degree: int = field(init=False)

    def __post_init__(self):
        self.coeffs = np.array(self.coeffs, dtype=np.float64)
        if self.coeffs.ndim != 1 or self.coeffs.size < 1:
            raise ParameterError("coefficients must be a non-empty vector")
        self.degree = self.coeffs.size - 1
        if not self.bound > 0:
            raise ParameterError(f"fit bound must be positive, got {self.bound}")
        if not 0 < self.alpha <= 1:
            raise ParameterError(f"alpha must lie in (0, 1], got {self.alpha}")

    @property
    def threshold(self) -> float:
        return self.alpha * self.bound

    def __call__(self, x):
        return horner_eval(self, x)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "degree": self.degree,
            "B": self.bound,
            "alpha": self.alpha,
            "m": self.fit_samples,
            "coeffs": [float(c) for c in self.coeffs],
        }


def sample_target(target, bound: float, m: int):
    """Sample ``m`` equally spaced points of ``target`` on ``[-bound, bound]``.

    Returns ``(x, y)`` arrays; both endpoints are included.
    """
    if m < 2:
        raise ParameterError(f"need at least 2 sample points, got {m}")
    if not bound > 0:
        raise ParameterError(f"fit bound must be positive, got {bound}")
    fn = TARGETS[target] if isinstance(target, str) else target
    j = np.arange(m, dtype=np.float64)
    x = -bound + 2.0 * bound * j / (m - 1)
    return x, fn(x)


def least_squares_fit(x, y, degree: int) -> np.ndarray:
    """Coefficients ``a_0..a_degree`` minimizing the squared residuals.

    The Vandermonde system is built in the rescaled variable ``x / max|x|``
    and solved with a Householder QR factorization; coefficients are mapped
    back to the original variable afterwards.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if degree < 0:
        raise ParameterError(f"degree must be non-negative, got {degree}")
    if x.size < degree + 1:
        raise FitError(f"{x.size} points cannot determine a degree-{degree} polynomial")
    if np.unique(x).size < degree + 1:
        raise FitError("design matrix is rank deficient: too few distinct x values")
    scale = float(np.max(np.abs(x)))
    if scale == 0.0:
        scale = 1.0
    vander = np.vander(x / scale, degree + 1, increasing=True)
    q, r = np.linalg.qr(vander)
    diag = np.abs(np.diag(r))
    if diag.min() <= diag.max() * 1e-13:
        raise FitError("design matrix is numerically rank deficient")
    scaled = solve_triangular(r, q.T @ y)
    return scaled / scale ** np.arange(degree + 1)


def fit_activation(
    target: str = "relu",
    degree: int = 2,
    bound: float = 10.0,
    alpha: float = 1.0,
    fit_samples: int = DEFAULT_FIT_SAMPLES,
) -> PolynomialActivation:
    if target not in TARGETS:
        raise ParameterError(f"unknown fit target {target!r}; choose from {sorted(TARGETS)}")
    if fit_samples < degree + 1:
        raise ParameterError(f"fit_samples={fit_samples} is below degree+1={degree + 1}")
    x, y = sample_target(target, bound, fit_samples)
    coeffs = least_squares_fit(x, y, degree)
    return PolynomialActivation(coeffs, bound, alpha, fit_samples, target)


def _coeffs(poly) -> np.ndarray:
    if isinstance(poly, PolynomialActivation):
        return poly.coeffs
    return np.asarray(poly, dtype=np.float64)


def horner_eval(poly, x) -> np.ndarray:
    a = _coeffs(poly)
    x = np.asarray(x, dtype=np.float64)
    out = np.full(x.shape, a[-1])
    for c in a[-2::-1]:
        out = out * x + c
    return out


def horner_derivative(poly, x) -> np.ndarray:
    a = _coeffs(poly)
    x = np.asarray(x, dtype=np.float64)
    if a.size == 1:
        return np.zeros(x.shape)
    d = a[1:] * np.arange(1, a.size)
    out = np.full(x.shape, d[-1])
    for c in d[-2::-1]:
        out = out * x + c
    return out


def horner_backward(poly, x, upstream):
    """Gradients of ``sum(upstream * p(x))`` w.r.t. ``x`` and the coefficients."""
    a = _coeffs(poly)
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.shape != upstream.shape:
        raise ParameterError(f"x {x.shape} and upstream {upstream.shape} differ in shape")
    grad_x = upstream * horner_derivative(a, x)
    grad_coeffs = np.empty(a.size)
    power = np.ones(x.shape)
    for i in range(a.size):
        grad_coeffs[i] = np.sum(upstream * power)
        power = power * x
    return grad_x, grad_coeffs
