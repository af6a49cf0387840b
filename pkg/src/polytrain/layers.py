"""Fully connected layers with explicit forward/backward passes.

Only layers that reduce to additions and multiplications at inference time
are provided, plus :class:`ReLU` for building comparison models.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import DataError, DimensionError, ParameterError, StateError
from .numeric import SeededRng, uniform_sample
from .polyfit import PolynomialActivation, horner_backward, horner_eval


class Tag(str, Enum):
    BATCHNORM = "batchnorm"
    POLY = "poly_coeff"
    STANDARD = "standard"


@dataclass
class Parameter:
    value: np.ndarray
    tag: Tag


class Grad(NamedTuple):
    tag: Tag
    value: np.ndarray


def kaiming_uniform_init(shape, fan_in: int, rng: SeededRng, gain: float = 1.0) -> np.ndarray:
    """Uniform on ``[-gain*sqrt(3/fan_in), gain*sqrt(3/fan_in))``; gain 1 is 'linear'."""
    if fan_in < 1:
        raise ParameterError(f"fan_in must be >= 1, got {fan_in}")
    bound = gain * np.sqrt(3.0 / fan_in)
    return uniform_sample(shape, -bound, bound, rng)


class Layer:
    kind = "layer"

    def parameters(self) -> dict:
        return {}

    def forward(self, x, train: bool, rng: SeededRng | None = None):
        raise NotImplementedError

    def backward(self, grad):
        """Return the gradient w.r.t. the layer input; parameter grads land in ``self.grads``."""
        raise NotImplementedError


class Linear(Layer):
    kind = "linear"

    def __init__(self, in_features: int, out_features: int, rng: SeededRng | None = None):
        self.in_features = in_features
        self.out_features = out_features
        if rng is None:
            w = np.zeros((out_features, in_features))
        else:
            w = kaiming_uniform_init((out_features, in_features), in_features, rng)
        self.W = Parameter(w, Tag.STANDARD)
        self.b = Parameter(np.zeros(out_features), Tag.STANDARD)
        self.grads = {}
        self._x = None

    def parameters(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x, train, rng=None):
        if x.shape[1] != self.in_features:
            raise DimensionError(f"linear layer expects width {self.in_features}, got {x.shape[1]}")
        self._x = x if train else None
        return x @ self.W.value.T + self.b.value

    def backward(self, grad):
        if self._x is None:
            raise StateError("linear backward called without a training-mode forward")
        self.grads = {"W": grad.T @ self._x, "b": grad.sum(axis=0)}
        return grad @ self.W.value


class BatchNorm(Layer):
    """Per-feature batch normalization.

    Running variance is updated with the unbiased batch variance, the
    normalization itself uses the biased one.
    """

    kind = "batchnorm"

    def __init__(self, features: int, eps: float = 1e-5, momentum: float = 0.1):
        self.features = features
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(features), Tag.BATCHNORM)
        self.beta = Parameter(np.zeros(features), Tag.BATCHNORM)
        self.running_mean = np.zeros(features)
        self.running_var = np.ones(features)
        self.grads = {}
        self._cache = None

    def parameters(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def forward(self, x, train, rng=None):
        if x.shape[1] != self.features:
            raise DimensionError(f"batchnorm expects width {self.features}, got {x.shape[1]}")
        if not train:
            self._cache = None
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            return (x - self.running_mean) * inv_std * self.gamma.value + self.beta.value
        n = x.shape[0]
        if n < 2:
            raise ParameterError("batchnorm in training mode needs a batch of at least 2")
        mean = x.mean(axis=0)
        centered = x - mean
        var = (centered * centered).mean(axis=0)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = centered * inv_std
        m = self.momentum
        self.running_mean = (1 - m) * self.running_mean + m * mean
        self.running_var = (1 - m) * self.running_var + m * var * n / (n - 1)
        self._cache = (xhat, inv_std)
        return xhat * self.gamma.value + self.beta.value

    def backward(self, grad):
        if self._cache is None:
            raise StateError("batchnorm backward called without a training-mode forward")
        xhat, inv_std = self._cache
        n = grad.shape[0]
        self.grads = {"gamma": (grad * xhat).sum(axis=0), "beta": grad.sum(axis=0)}
        dxhat = grad * self.gamma.value
        return (inv_std / n) * (
            n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )


class PolyActivation(Layer):
    """Elementwise polynomial activation with trainable coefficients.

    With ``scaled=True`` the trainable parameter is ``c`` where
    ``a_i = c_i * B**(1 - i)``, keeping every coefficient of order one.
    """

    kind = "poly"

    def __init__(self, poly: PolynomialActivation, scaled: bool = True):
        self.poly = copy.deepcopy(poly)
        self.scaled = scaled
        powers = np.arange(self.poly.degree + 1)
        self.basis_scale = self.poly.bound ** (1.0 - powers) if scaled else np.ones(powers.size)
        self.coeffs = Parameter(self.poly.coeffs / self.basis_scale, Tag.POLY)
        self.grads = {}
        self._x = None

    def parameters(self):
        return {"coeffs": self.coeffs}

    @property
    def coefficients(self) -> np.ndarray:
        """Monomial coefficients ``a_0..a_d`` of the current polynomial."""
        return self.coeffs.value * self.basis_scale

    @property
    def cached_input(self):
        return self._x

    def forward(self, x, train, rng=None):
        a = self.coefficients
        self.poly.coeffs = a
        self._x = x if train else None
        return horner_eval(a, x)

    def backward(self, grad, boundary_grad=None):
        if self._x is None:
            raise StateError("activation backward called without a training-mode forward")
        grad_x, grad_a = horner_backward(self.coefficients, self._x, grad)
        self.grads = {"coeffs": grad_a * self.basis_scale}
        if boundary_grad is not None:
            grad_x = grad_x + boundary_grad
        return grad_x


class ReLU(Layer):
    """Comparison-only activation; rejected by the circuit lowering."""

    kind = "relu"

    def __init__(self):
        self.grads = {}
        self._mask = None

    def forward(self, x, train, rng=None):
        mask = x > 0
        self._mask = mask if train else None
        return np.where(mask, x, 0.0)

    def backward(self, grad):
        if self._mask is None:
            raise StateError("relu backward called without a training-mode forward")
        return np.where(self._mask, grad, 0.0)


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by ``1/(1-p)`` during training."""

    kind = "dropout"

    def __init__(self, p: float = 0.0):
        if not 0 <= p < 1:
            raise ParameterError(f"dropout probability must lie in [0, 1), got {p}")
        self.p = p
        self.grads = {}
        self._mask = None

    def forward(self, x, train, rng=None):
        if not train or self.p == 0:
            self._mask = np.ones_like(x) if train else None
            return x
        if rng is None:
            raise StateError("training-mode dropout needs an rng")
        self._mask = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            raise StateError("dropout backward called without a training-mode forward")
        return grad * self._mask


class Model:
    """Ordered layer list with a tagged parameter registry."""

    def __init__(self, layers):
        self.layers = list(layers)

    def parameters(self) -> dict:
        params = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.parameters().items():
                params[f"{i}.{name}"] = p
        return params

    @property
    def activation_layers(self):
        return [l for l in self.layers if isinstance(l, PolyActivation)]

    @property
    def in_features(self):
        for layer in self.layers:
            if isinstance(layer, Linear):
                return layer.in_features
        raise DimensionError("model has no linear layer")

    def forward(self, x, mode: str = "eval", rng: SeededRng | None = None):
        """Run the network; returns ``(logits, preactivations)``.

        ``preactivations`` holds the input of every polynomial activation,
        in layer order.
        """
        if mode not in ("train", "eval"):
            raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
        train = mode == "train"
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise DimensionError(f"model expects batch x {self.in_features} input, got {x.shape}")
        preacts = []
        for layer in self.layers:
            if isinstance(layer, PolyActivation):
                preacts.append(x)
            x = layer.forward(x, train, rng)
        return x, preacts

    def backward(self, upstream, boundary_grads=None) -> dict:
        """Backpropagate ``upstream`` (d loss / d logits).

        ``boundary_grads`` are added to the gradient arriving at each
        polynomial activation's input, aligned with the preactivation list.
        Returns ``{name: Grad(tag, value)}`` for every registered parameter.
        """
        acts = self.activation_layers
        if boundary_grads is None:
            boundary_grads = [None] * len(acts)
        if len(boundary_grads) != len(acts):
            raise StateError(f"got {len(boundary_grads)} boundary grads for {len(acts)} activations")
        pending = list(boundary_grads)
        grad = upstream
        for layer in reversed(self.layers):
            if isinstance(layer, PolyActivation):
                grad = layer.backward(grad, pending.pop())
            else:
                grad = layer.backward(grad)
        out = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.parameters().items():
                out[f"{i}.{name}"] = Grad(p.tag, layer.grads[name])
        return out

    def copy(self) -> "Model":
        return copy.deepcopy(self)


def build_mlp(
    in_features: int,
    hidden: list,
    out_features: int,
    rng: SeededRng,
    activation: str = "poly",
    poly: PolynomialActivation | None = None,
    batchnorm: bool = True,
    dropout: float = 0.0,
    bn_eps: float = 1e-5,
    bn_momentum: float = 0.1,
    scaled_coeffs: bool = True,
    bn_position: str = "pre",
) -> Model:
    """Per hidden width: Linear -> [BatchNorm] -> activation -> [Dropout], then a linear head.

    ``bn_position="post"`` moves BatchNorm after the activation instead.
    """
    if activation == "poly" and poly is None:
        raise ParameterError("a polynomial activation needs a fitted PolynomialActivation")
    if activation not in ("poly", "relu"):
        raise ParameterError(f"unknown activation {activation!r}")
    if bn_position not in ("pre", "post"):
        raise ParameterError(f"bn_position must be 'pre' or 'post', got {bn_position!r}")
    layers = []
    width = in_features
    for h in hidden:
        layers.append(Linear(width, h, rng))
        if batchnorm and bn_position == "pre":
            layers.append(BatchNorm(h, bn_eps, bn_momentum))
        layers.append(PolyActivation(poly, scaled_coeffs) if activation == "poly" else ReLU())
        if batchnorm and bn_position == "post":
            layers.append(BatchNorm(h, bn_eps, bn_momentum))
        if dropout > 0:
            layers.append(Dropout(dropout))
        width = h
    layers.append(Linear(width, out_features, rng))
    return Model(layers)


# checkpoint serialization: float64 values are stored as hex strings so that
# a save/load round trip is bit-exact


def _encode(a) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": [float(v).hex() for v in a.ravel()]}


def _decode(d) -> np.ndarray:
    data = np.array([float.fromhex(v) for v in d["data"]], dtype=np.float64)
    shape = tuple(d["shape"])
    if data.size != int(np.prod(shape)):
        raise DataError(f"array payload has {data.size} values for shape {shape}")
    return data.reshape(shape)


def model_to_dict(model: Model) -> dict:
    layers = []
    for layer in model.layers:
        entry = {"kind": layer.kind}
        if isinstance(layer, Linear):
            entry.update(in_features=layer.in_features, out_features=layer.out_features)
        elif isinstance(layer, BatchNorm):
            entry.update(
                features=layer.features,
                eps=layer.eps,
                momentum=layer.momentum,
                buffers={
                    "running_mean": _encode(layer.running_mean),
                    "running_var": _encode(layer.running_var),
                },
            )
        elif isinstance(layer, PolyActivation):
            meta = layer.poly.to_dict()
            meta["coeffs"] = _encode(layer.coefficients)
            meta["scaled"] = layer.scaled
            entry["poly"] = meta
        elif isinstance(layer, Dropout):
            entry["p"] = layer.p
        entry["params"] = {
            name: dict(_encode(p.value), tag=p.tag.value) for name, p in layer.parameters().items()
        }
        layers.append(entry)
    return {"format": "polytrain-checkpoint", "version": 1, "layers": layers}


def model_from_dict(d: dict) -> Model:
    if d.get("format") != "polytrain-checkpoint":
        raise DataError("not a polytrain checkpoint")
    layers = []
    for entry in d["layers"]:
        kind = entry["kind"]
        params = {k: _decode(v) for k, v in entry.get("params", {}).items()}
        if kind == "linear":
            layer = Linear(entry["in_features"], entry["out_features"])
            layer.W.value, layer.b.value = params["W"], params["b"]
        elif kind == "batchnorm":
            layer = BatchNorm(entry["features"], entry["eps"], entry["momentum"])
            layer.gamma.value, layer.beta.value = params["gamma"], params["beta"]
            layer.running_mean = _decode(entry["buffers"]["running_mean"])
            layer.running_var = _decode(entry["buffers"]["running_var"])
        elif kind == "poly":
            meta = entry["poly"]
            poly = PolynomialActivation(
                _decode(meta["coeffs"]), meta["B"], meta["alpha"], meta["m"], meta["target"]
            )
            layer = PolyActivation(poly, meta.get("scaled", True))
            # the stored parameter is authoritative; rescaling may not be bit-exact
            layer.coeffs.value = params["coeffs"]
        elif kind == "relu":
            layer = ReLU()
        elif kind == "dropout":
            layer = Dropout(entry["p"])
        else:
            raise DataError(f"unknown layer kind {kind!r} in checkpoint")
        layers.append(layer)
    return Model(layers)


def save_checkpoint(model: Model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_checkpoint(path) -> Model:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
