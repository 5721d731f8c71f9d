"""Orthonormal polynomial basis on [0, 1] and its tensor products.

The 1D functions are rescaled shifted Legendre polynomials

    f_j(x) = sqrt(2j + 1) * P_j(2x - 1),

so that ``int_0^1 f_j f_k dx = delta_jk`` and ``f_0 = 1``.  Products
``f_j1(x_1) * ... * f_jd(x_d)`` form the d-dimensional basis, indexed by
multi-indices ``(j_1, ..., j_d)`` with every component in ``0..m``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import BasisTooLargeError, InvalidInputError

#: Largest dense basis we are willing to enumerate or materialize.
DEFAULT_BASIS_CAP = 10**7

MultiIndex = tuple[int, ...]


@dataclass(frozen=True)
class BasisSpec:
    """Dimension ``d`` and maximal per-coordinate degree ``m``."""

    d: int
    m: int

    def __post_init__(self):
        if self.d < 1:
            raise InvalidInputError(f"dimension must be >= 1, got {self.d}")
        if self.m < 0:
            raise InvalidInputError(f"degree must be >= 0, got {self.m}")

    @property
    def size(self) -> int:
        return (self.m + 1) ** self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m + 1,) * self.d

    def check_cap(self, cap: int = DEFAULT_BASIS_CAP) -> None:
        if self.size > cap:
            raise BasisTooLargeError(
                f"dense basis of (m+1)^d = {self.m + 1}^{self.d} = {self.size} "
                f"functions exceeds the cap of {cap}; lower the degree or "
                "dimension, or work with a pruned (sparse) coefficient set"
            )


def legendre_table(x, m: int) -> np.ndarray:
    """Evaluate ``f_0 .. f_m`` at every point of ``x``.

    Returns an array of shape ``x.shape + (m + 1,)``.  Uses the three-term
    Legendre recurrence on ``u = 2x - 1``; no expanded monomial coefficients
    are formed, so high degrees stay well conditioned.
    """
    x = np.asarray(x, dtype=float)
    u = 2.0 * x - 1.0
    out = np.empty(x.shape + (m + 1,))
    p_prev = np.ones_like(u)
    out[..., 0] = 1.0
    if m >= 1:
        p = u.copy()
        out[..., 1] = np.sqrt(3.0) * p
        for k in range(1, m):
            p_next = ((2 * k + 1) * u * p - k * p_prev) / (k + 1)
            p_prev, p = p, p_next
            out[..., k + 1] = np.sqrt(2.0 * (k + 1) + 1.0) * p
    return out


def poly_1d(j: int, x):
    """Value of the degree-``j`` orthonormal polynomial ``f_j`` at ``x``.

    Accepts scalars or arrays; returns the same shape.
    """
    if j < 0:
        raise InvalidInputError(f"degree must be non-negative, got {j}")
    values = legendre_table(x, j)[..., j]
    return values if values.ndim else float(values)


def product_eval(index: Sequence[int], x) -> float:
    """Evaluate the product basis function ``f_index`` at a d-vector ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(index) != x.shape[0]:
        raise InvalidInputError(
            f"multi-index of length {len(index)} does not match point of shape {x.shape}"
        )
    result = 1.0
    for j, xi in zip(index, x):
        result *= poly_1d(int(j), xi)
    return result


def enumerate_indices(spec: BasisSpec, cap: int = DEFAULT_BASIS_CAP) -> Iterator[MultiIndex]:
    """Yield every multi-index of ``spec`` in lexicographic order.

    The first index is all zeros; the last coordinate varies fastest.
    """
    spec.check_cap(cap)
    return itertools.product(range(spec.m + 1), repeat=spec.d)


def index_array(spec: BasisSpec, cap: int = DEFAULT_BASIS_CAP) -> np.ndarray:
    """All multi-indices as a ``(size, d)`` integer array, lexicographic order."""
    spec.check_cap(cap)
    grids = np.indices(spec.shape, dtype=np.int64)
    return grids.reshape(spec.d, -1).T.copy()
