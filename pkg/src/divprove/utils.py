"""Input validation and seeding helpers."""
from __future__ import annotations

import hashlib
import numbers

import numpy as np
from sklearn.utils import check_array

from .errors import InvalidInputError


def check_rng(seed=None) -> np.random.Generator:
    """Turn ``None``, an int, a SeedSequence or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise InvalidInputError(f"cannot build a random generator from {seed!r}")


def stable_hash64(*parts) -> int:
    """64-bit hash that is stable across processes and Python versions."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def check_matrix(X, name="X", square=False) -> np.ndarray:
    try:
        X = check_array(X, dtype=np.float64, ensure_2d=True,
                        ensure_min_samples=0, ensure_min_features=0)
    except ValueError as exc:
        raise InvalidInputError(f"{name}: {exc}") from exc
    if square and X.shape[0] != X.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {X.shape}")
    return X


def check_vector(x, name="x", length=None, finite=True) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {x.shape}")
    if length is not None and x.shape[0] != length:
        raise InvalidInputError(f"{name} has length {x.shape[0]}, expected {length}")
    if finite and not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return x


def check_positive_int(value, name) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise InvalidInputError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
