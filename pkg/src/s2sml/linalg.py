"""Dense float64 helpers and seeded random streams.

Matrices and vectors are plain numpy arrays (2-D and 1-D, dtype float64).
Random streams are numpy ``Generator`` objects over the PCG64 bit generator,
seeded through ``SeedSequence`` so that any (seed, label...) tuple maps to an
independent, reproducible stream.
"""
from __future__ import annotations

import zlib

import numpy as np

Matrix = np.ndarray
Vector = np.ndarray
Rng = np.random.Generator

RNG_ALGORITHM = "PCG64"


class ShapeError(ValueError):
    """Raised when array dimensions do not line up."""


def matrix(rows, cols=None, data=None) -> Matrix:
    """Build a float64 matrix from nested lists, or zeros of the given shape."""
    if cols is None:
        m = np.array(rows, dtype=np.float64)
        if m.ndim != 2:
            raise ShapeError(f"expected a 2-D nested list, got ndim={m.ndim}")
    elif data is None:
        m = np.zeros((rows, cols))
    else:
        m = np.asarray(data, dtype=np.float64)
        if m.size != rows * cols:
            raise ShapeError(f"data length {m.size} != {rows}x{cols}")
        m = m.reshape(rows, cols)
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"matrix must be at least 1x1, got {m.shape}")
    return m


def vector(data) -> Vector:
    v = np.array(data, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a flat sequence, got ndim={v.ndim}")
    return v


def matvec(m: Matrix, v: Vector) -> Vector:
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"cannot multiply matrix {m.shape} by vector {v.shape}")
    return m @ v


def tanh_map(v: Vector) -> Vector:
    return np.tanh(v)


def make_rng(seed: int, *labels) -> Rng:
    """Return a PCG64 generator for ``seed`` split by optional ``labels``.

    Labels may be ints or strings; strings are hashed with CRC32 so the
    derivation is stable across processes and Python versions.
    """
    return np.random.Generator(np.random.PCG64(_seed_sequence(seed, labels)))


def derive_seed(seed: int, *labels) -> int:
    """Derive a 64-bit child seed from ``seed`` and ``labels``."""
    return int(_seed_sequence(seed, labels).generate_state(1, dtype=np.uint64)[0])


def _seed_sequence(seed, labels) -> np.random.SeedSequence:
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for lab in labels:
        if isinstance(lab, str):
            key.append(zlib.crc32(lab.encode()))
        else:
            key.append(int(lab))
    return np.random.SeedSequence(key)


def gauss(rng: Rng, size=None):
    """Standard normal draw(s)."""
    if size is None:
        return float(rng.standard_normal())
    return rng.standard_normal(size)
