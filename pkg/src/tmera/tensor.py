"""Dense complex tensor primitives.

Tensors are plain ``numpy.ndarray`` objects of dtype ``complex128`` stored in
row-major (C) order. Every reshape in the package assumes that order, so a
two-site index ``(a, b)`` linearizes to ``a * d_b + b``.
"""
from __future__ import annotations

import functools
import warnings

import numpy as np
import opt_einsum

DTYPE = np.complex128


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator used for every random draw in the package (PCG64)."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def contract(a, b, pairs):
    """Contract ``a`` and ``b`` over the listed ``(axis_of_a, axis_of_b)`` pairs.

    The result carries the unpaired axes of ``a`` followed by the unpaired
    axes of ``b``, each in their original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a = [int(p[0]) for p in pairs]
    axes_b = [int(p[1]) for p in pairs]
    if len(set(axes_a)) != len(axes_a) or len(set(axes_b)) != len(axes_b):
        raise ValueError("an axis may be paired at most once")
    for i, j in zip(axes_a, axes_b):
        if not (0 <= i < a.ndim and 0 <= j < b.ndim):
            raise ValueError(f"axis pair ({i}, {j}) out of range")
        if a.shape[i] != b.shape[j]:
            raise ContractShapeError(
                f"axis {i} of a has dimension {a.shape[i]}, axis {j} of b has {b.shape[j]}"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


class ContractShapeError(ValueError):
    pass


@functools.lru_cache(maxsize=None)
def _expression(subscripts: str, shapes: tuple):
    return opt_einsum.contract_expression(subscripts, *shapes, optimize="optimal")


def einsum(subscripts: str, *operands):
    """Cached multi-operand contraction; the path is found once per shape signature."""
    shapes = tuple(op.shape for op in operands)
    return _expression(subscripts, shapes)(*operands)


def polar(m):
    """Unitary factor of the polar decomposition, ``m = W P`` with ``W^dag W = 1``."""
    u, _, vh = np.linalg.svd(m, full_matrices=False)
    return u @ vh


def isometrize(m, rcond: float = 1e-12):
    """Closest isometry to ``m`` in Frobenius norm (D_in >= D_out).

    Rank-deficient input falls back to the canonical isometry made of the
    first ``D_out`` identity columns and emits a ``RuntimeWarning``.
    """
    m = np.asarray(m, dtype=DTYPE)
    if m.ndim != 2:
        raise ValueError("isometrize expects a matrix")
    d_in, d_out = m.shape
    if d_in < d_out:
        raise ValueError(f"need D_in >= D_out, got {m.shape}")
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[-1] <= rcond * max(s[0], 1.0):
        warnings.warn("rank-deficient input to isometrize; using canonical isometry",
                      RuntimeWarning, stacklevel=2)
        return np.eye(d_in, d_out, dtype=DTYPE)
    return polar(m)


def random_unitary(dim: int, rng: np.random.Generator):
    """Haar-random unitary from the QR decomposition of a complex Ginibre matrix."""
    if dim < 1:
        raise ValueError("dim must be positive")
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_isometry(d_in: int, d_out: int, rng: np.random.Generator):
    return random_unitary(d_in, rng)[:, :d_out]


def constraint_residual(w) -> float:
    """Frobenius norm of ``W^dag W - 1``."""
    w = np.asarray(w)
    return float(np.linalg.norm(w.conj().T @ w - np.eye(w.shape[1])))


def phase_distance(a, b) -> float:
    """``min_phi ||a - exp(i phi) b||`` in Frobenius norm."""
    a = np.asarray(a)
    b = np.asarray(b)
    overlap = np.vdot(b, a)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(a - phase * b))
