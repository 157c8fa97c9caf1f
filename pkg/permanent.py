"""Matrix permanents: Ryser's formula with Gray-code updates, and the permutation sum."""

from itertools import permutations
from typing import Literal

import numba as nb
import numpy as np

from config import get_settings
from errors import IntractableError, InvalidDimensionError, UnsupportedInputError

Algorithm = Literal["ryser", "naive"]


@nb.njit(cache=True)
def _ryser(a):
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0.0j
    row_sums = np.zeros(n, dtype=np.complex128)
    total = 0.0 + 0.0j
    gray = 0
    size = 0
    for k in range(1, 1 << n):
        # consecutive Gray codes differ in the lowest set bit of k
        j = 0
        while not (k >> j) & 1:
            j += 1
        bit = 1 << j
        if gray & bit:
            for i in range(n):
                row_sums[i] -= a[i, j]
            size -= 1
        else:
            for i in range(n):
                row_sums[i] += a[i, j]
            size += 1
        gray ^= bit
        prod = 1.0 + 0.0j
        for i in range(n):
            prod *= row_sums[i]
        if size & 1:
            total -= prod
        else:
            total += prod
    if n & 1:
        return -total
    return total


@nb.njit(parallel=True, cache=True)
def _ryser_batch(stack):
    out = np.empty(stack.shape[0], dtype=np.complex128)
    for k in nb.prange(stack.shape[0]):
        out[k] = _ryser(stack[k])
    return out


def _naive(a: np.ndarray) -> complex:
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0.0j
    perms = np.array(list(permutations(range(n))))
    return complex(a[np.arange(n), perms].prod(axis=1).sum())


def _cap(algorithm: str, max_size: int | None) -> int:
    if max_size is not None:
        return max_size
    settings = get_settings()
    return settings.ryser_max if algorithm == "ryser" else settings.naive_max


def permanent(a, algorithm: Algorithm = "ryser", max_size: int | None = None) -> complex:
    """Permanent of a square complex matrix.

    Args:
        a: Square matrix
        algorithm: ``ryser`` (O(2^n n), production path) or ``naive`` (permutation sum)
        max_size: Largest accepted n; defaults to the configured cap of the algorithm

    Returns:
        The permanent as a Python complex
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidDimensionError(f"permanent needs a square matrix, got shape {a.shape}")
    if algorithm not in ("ryser", "naive"):
        raise UnsupportedInputError(f"unknown permanent algorithm {algorithm!r}")
    n = a.shape[0]
    cap = _cap(algorithm, max_size)
    if n > cap:
        raise IntractableError(f"{n}x{n} permanent exceeds the {algorithm} cap of {cap}")
    if algorithm == "naive":
        return _naive(a)
    return complex(_ryser(np.ascontiguousarray(a)))


def permanents_batch(stack, max_size: int | None = None) -> np.ndarray:
    """Ryser permanents of a (k, n, n) stack, evaluated in parallel.

    Each entry is computed independently, so the result equals k sequential calls.
    """
    stack = np.ascontiguousarray(stack, dtype=np.complex128)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise InvalidDimensionError(f"expected a stack of square matrices, got shape {stack.shape}")
    cap = _cap("ryser", max_size)
    if stack.shape[1] > cap:
        raise IntractableError(f"{stack.shape[1]}x{stack.shape[1]} permanent exceeds the ryser cap of {cap}")
    if stack.shape[0] == 0:
        return np.empty(0, dtype=np.complex128)
    return _ryser_batch(stack)
