"""Dense float64 arithmetic and seeded randomness.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Reductions go
through numpy's single-threaded summation, which is deterministic for a given
shape and memory layout, so repeated runs of the same build are bit-identical.

Randomness comes from :class:`SeededRng`, a thin wrapper around numpy's PCG64
bit generator. PCG64's output stream is part of numpy's stability contract,
so a seed identifies a stream across platforms.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ParameterError

RNG_ALGORITHM = "PCG64"


class SeededRng:
    """Seeded PCG64 stream.

    ``spawn`` derives independent child streams from the seed, which lets the
    training harness give initialization, shuffling and dropout their own
    streams so that toggling one feature never perturbs the others.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed >= 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._seq = np.random.SeedSequence(self.seed)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    @classmethod
    def _from_sequence(cls, seed: int, seq: np.random.SeedSequence) -> "SeededRng":
        obj = cls.__new__(cls)
        obj.seed = seed
        obj._seq = seq
        obj.generator = np.random.Generator(np.random.PCG64(seq))
        return obj

    def spawn(self, n: int) -> list["SeededRng"]:
        return [SeededRng._from_sequence(self.seed, s) for s in self._seq.spawn(n)]

    def random(self, shape) -> np.ndarray:
        return self.generator.random(shape)

    def normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise DimensionError(f"log_softmax expects batch x K with K >= 2, got {logits.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def uniform_sample(shape, lo: float, hi: float, rng: SeededRng) -> np.ndarray:
    if not lo < hi:
        raise ParameterError(f"uniform_sample needs lo < hi, got [{lo}, {hi})")
    out = lo + (hi - lo) * rng.random(shape)
    # lo + (hi-lo)*u can round up to hi for u just below 1
    return np.minimum(out, np.nextafter(hi, lo))
