"""Dense-tensor algebra: unfoldings, products, contractions, norms, SVD.

Conventions fixed once for the whole library:

* tensors are ``numpy.ndarray`` values with float64 entries in row-major
  (C) layout; reshapes are row-major, i.e. the last index varies fastest;
* mode indices are 1-based in every public signature;
* every unfold/fold pair below is an exact inverse under these rules.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError, NumericalError

__all__ = [
    "SvdResult",
    "generalized_unfold",
    "generalized_fold",
    "mode_n_unfold",
    "mode_n_product",
    "tensor_contraction",
    "facewise_product",
    "hadamard",
    "frobenius_norm",
    "svd",
]


def as_tensor(x) -> np.ndarray:
    """Coerce ``x`` to a float64 C-order array of order >= 1."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return np.ascontiguousarray(arr)


def _check_perm(perm: Sequence[int], ndim: int) -> list[int]:
    perm = list(perm)
    if sorted(perm) != list(range(1, ndim + 1)):
        raise ArgumentError(
            f"perm {perm} is not a permutation of 1..{ndim}"
        )
    return [p - 1 for p in perm]


def _check_mode(n: int, ndim: int) -> int:
    if not 1 <= n <= ndim:
        raise ArgumentError(f"mode {n} out of range 1..{ndim}")
    return n - 1


def generalized_unfold(x: np.ndarray, perm: Sequence[int], q: int) -> np.ndarray:
    """Matricize ``x``: permute modes by ``perm``, split after position ``q``.

    Returns the matrix of shape (prod of the first ``q`` permuted sizes,
    prod of the rest), filled by a row-major reshape of the permuted tensor.
    """
    x = as_tensor(x)
    perm0 = _check_perm(perm, x.ndim)
    if not 1 <= q <= x.ndim - 1:
        raise ArgumentError(f"split point q={q} out of range 1..{x.ndim - 1}")
    xp = np.transpose(x, perm0)
    rows = int(np.prod(xp.shape[:q]))
    return np.ascontiguousarray(xp.reshape(rows, -1))


def generalized_fold(
    m: np.ndarray, perm: Sequence[int], q: int, shape: Sequence[int]
) -> np.ndarray:
    """Exact inverse of :func:`generalized_unfold` for the same (perm, q, shape)."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ArgumentError(f"expected a matrix, got order {m.ndim}")
    shape = tuple(int(s) for s in shape)
    perm0 = _check_perm(perm, len(shape))
    if not 1 <= q <= len(shape) - 1:
        raise ArgumentError(f"split point q={q} out of range 1..{len(shape) - 1}")
    permuted_shape = tuple(shape[p] for p in perm0)
    rows = int(np.prod(permuted_shape[:q]))
    cols = int(np.prod(permuted_shape[q:]))
    if m.shape != (rows, cols):
        raise ArgumentError(
            f"matrix shape {m.shape} inconsistent with shape {shape}, "
            f"perm {list(perm)}, q={q} (expected {(rows, cols)})"
        )
    inverse = np.argsort(perm0)
    return np.ascontiguousarray(np.transpose(m.reshape(permuted_shape), inverse))


def mode_n_unfold(x: np.ndarray, n: int) -> np.ndarray:
    """Mode-``n`` matricization: mode ``n`` as rows, remaining modes (in
    ascending order) flattened row-major as columns."""
    x = as_tensor(x)
    n0 = _check_mode(n, x.ndim)
    return np.ascontiguousarray(np.moveaxis(x, n0, 0).reshape(x.shape[n0], -1))


def mode_n_product(x: np.ndarray, a: np.ndarray, n: int) -> np.ndarray:
    """Contract matrix ``a`` against mode ``n`` of ``x``.

    The result replaces mode size ``I_n`` with ``a.shape[0]`` and satisfies
    ``mode_n_unfold(result, n) == a @ mode_n_unfold(x, n)``.
    """
    x = as_tensor(x)
    a = np.asarray(a, dtype=np.float64)
    n0 = _check_mode(n, x.ndim)
    if a.ndim != 2:
        raise ArgumentError(f"expected a matrix, got order {a.ndim}")
    if a.shape[1] != x.shape[n0]:
        raise ArgumentError(
            f"matrix has {a.shape[1]} columns but mode {n} has size {x.shape[n0]}"
        )
    return np.moveaxis(np.tensordot(a, x, axes=(1, n0)), 0, n0)


def tensor_contraction(
    a: np.ndarray,
    b: np.ndarray,
    modes_a: Sequence[int],
    modes_b: Sequence[int],
) -> np.ndarray:
    """Contract ``a`` and ``b`` over the paired mode lists.

    Free modes of ``a`` (ascending) come first in the output, then free
    modes of ``b`` (ascending).  A full contraction yields a 1-element
    tensor rather than a bare scalar.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    modes_a = list(modes_a)
    modes_b = list(modes_b)
    if len(modes_a) != len(modes_b) or not modes_a:
        raise ArgumentError(
            f"mode lists must be equal-length and non-empty, "
            f"got {len(modes_a)} and {len(modes_b)}"
        )
    if len(set(modes_a)) != len(modes_a) or len(set(modes_b)) != len(modes_b):
        raise ArgumentError("mode lists must be duplicate-free")
    ma = [_check_mode(m, a.ndim) for m in modes_a]
    mb = [_check_mode(m, b.ndim) for m in modes_b]
    for pos, (i, j) in enumerate(zip(ma, mb)):
        if a.shape[i] != b.shape[j]:
            raise ArgumentError(
                f"paired modes ({modes_a[pos]}, {modes_b[pos]}) have sizes "
                f"{a.shape[i]} != {b.shape[j]}"
            )
    out = np.tensordot(a, b, axes=(ma, mb))
    if out.ndim == 0:
        out = out.reshape(1)
    return out


def facewise_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Frontal-slice-wise matrix product of two third-order tensors.

    Slice ``t`` of the result is ``a[:, :, t] @ b[:, :, t]``.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 3 or b.ndim != 3:
        raise ArgumentError(
            f"face-wise product needs third-order tensors, got orders "
            f"{a.ndim} and {b.ndim}"
        )
    if a.shape[2] != b.shape[2]:
        raise ArgumentError(
            f"slice counts differ: {a.shape[2]} vs {b.shape[2]}"
        )
    if a.shape[1] != b.shape[0]:
        raise ArgumentError(
            f"inner dimensions differ: {a.shape[1]} vs {b.shape[0]}"
        )
    return np.einsum("irt,rjt->ijt", a, b)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise product of two same-shape tensors."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def frobenius_norm(x: np.ndarray) -> float:
    """Square root of the sum of squared entries."""
    return float(np.linalg.norm(as_tensor(x).ravel()))


@dataclass
class SvdResult:
    """Thin SVD ``u @ diag(s) @ v.T`` with a fixed sign convention.

    ``u`` holds left singular vectors as columns, ``v`` right singular
    vectors as columns, and ``s`` the singular values sorted
    non-increasing.  The first nonzero entry of each column of ``u`` is
    non-negative, which makes the factorization deterministic.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def svd(m: np.ndarray) -> SvdResult:
    """Deterministic thin SVD of a matrix."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ArgumentError(f"expected a matrix, got order {m.ndim}")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    v = vh.T.copy()
    u = u.copy()
    for j in range(u.shape[1]):
        nz = np.flatnonzero(u[:, j])
        if nz.size and u[nz[0], j] < 0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
    return SvdResult(u=u, s=s, v=v)
