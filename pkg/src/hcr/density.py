"""Polynomial densities on the unit hypercube.

A density is stored as coefficients ``a_j`` of the product basis, so that
``rho(x) = sum_j a_j f_j(x)``.  With an orthonormal basis the mean-square
optimal coefficients are plain sample averages of the basis functions,
which makes estimation, marginalization and conditioning cheap, exact
linear-algebra operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Mapping, Sequence

import numpy as np

from .basis import DEFAULT_BASIS_CAP, BasisSpec, MultiIndex, index_array, legendre_table
from .errors import InvalidInputError, NonPositiveContextDensityError

SUMMATION_MODES = ("blas", "sequential", "pairwise")

# rough number of float64 cells a single work buffer may hold
_BUFFER_CELLS = 1 << 23


@dataclass(frozen=True, eq=False)
class CoefficientTensor:
    """Sparse map from multi-index to coefficient.

    ``indices`` is a ``(k, d)`` integer array in strictly increasing
    lexicographic order and ``values`` the matching coefficients.  A full
    (dense) estimate simply lists every index.  ``n`` is the size of the
    sample the coefficients were estimated from, if any.
    """

    spec: BasisSpec
    indices: np.ndarray
    values: np.ndarray
    n: int | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.spec.d)
        val = np.asarray(self.values, dtype=float).ravel()
        if len(idx) != len(val):
            raise InvalidInputError(f"{len(idx)} indices for {len(val)} values")
        if idx.size and (idx.min() < 0 or idx.max() > self.spec.m):
            raise InvalidInputError(f"multi-index component outside 0..{self.spec.m}")
        if len(idx) > 1:
            flat = np.ravel_multi_index(idx.T, self.spec.shape) if self.spec.size < 2**62 else None
            if flat is not None and np.any(np.diff(flat) <= 0):
                raise InvalidInputError("indices must be unique and in lexicographic order")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, array, n=None) -> "CoefficientTensor":
        array = np.asarray(array, dtype=float)
        spec = BasisSpec(array.ndim, array.shape[0] - 1)
        if array.shape != spec.shape:
            raise InvalidInputError(f"dense coefficients must be a hypercube, got {array.shape}")
        tensor = cls(spec, index_array(spec), array.ravel(), n)
        tensor.__dict__["_dense"] = array.copy()
        return tensor

    @classmethod
    def from_entries(cls, spec: BasisSpec, entries: Mapping[Sequence[int], float], n=None):
        items = sorted((tuple(int(j) for j in k), float(v)) for k, v in entries.items())
        idx = np.array([k for k, _ in items], dtype=np.int64).reshape(-1, spec.d)
        return cls(spec, idx, [v for _, v in items], n)

    @classmethod
    def uniform(cls, spec: BasisSpec) -> "CoefficientTensor":
        return cls(spec, np.zeros((1, spec.d), dtype=np.int64), [1.0])

    def __len__(self):
        return len(self.values)

    def __getitem__(self, index) -> float:
        pos = self._position(tuple(index))
        return 0.0 if pos is None else float(self.values[pos])

    def __contains__(self, index) -> bool:
        return self._position(tuple(index)) is not None

    def _position(self, index):
        if len(index) != self.spec.d:
            raise InvalidInputError(f"index {index} has wrong arity for d={self.spec.d}")
        if any(j < 0 or j > self.spec.m for j in index):
            return None
        pos = self._lookup.get(index)
        return pos

    @cached_property
    def _lookup(self) -> dict:
        return {tuple(map(int, row)): i for i, row in enumerate(self.indices)}

    def items(self) -> Iterator[tuple[MultiIndex, float]]:
        for row, v in zip(self.indices, self.values):
            yield tuple(int(j) for j in row), float(v)

    def entries(self) -> dict[MultiIndex, float]:
        return dict(self.items())

    @property
    def is_dense(self) -> bool:
        return len(self) == self.spec.size

    def dense(self, cap: int = DEFAULT_BASIS_CAP) -> np.ndarray:
        """Coefficients as a full ``(m + 1,) * d`` array (missing entries are 0)."""
        if "_dense" not in self.__dict__:
            self.spec.check_cap(cap)
            out = np.zeros(self.spec.size)
            if len(self):
                out[np.ravel_multi_index(self.indices.T, self.spec.shape)] = self.values
            self.__dict__["_dense"] = out.reshape(self.spec.shape)
        arr = self.__dict__["_dense"]
        arr.setflags(write=False)
        return arr


def baseline_sigma(n: int) -> float:
    """Coefficient noise level ``1 / sqrt(n)`` under the uniform density."""
    if n < 1:
        raise InvalidInputError(f"sample size must be positive, got {n}")
    return 1.0 / math.sqrt(n)


# ---------------------------------------------------------------------------
# products of 1D basis values
# ---------------------------------------------------------------------------


def _check_sample(sample, d=None) -> np.ndarray:
    x = np.asarray(sample, dtype=float)
    if x.ndim == 1 and d is not None:
        x = x.reshape(-1, d) if d == 1 else x.reshape(1, -1)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InvalidInputError(f"expected a non-empty (n, d) sample, got shape {x.shape}")
    if d is not None and x.shape[1] != d:
        raise InvalidInputError(f"points have {x.shape[1]} coordinates, expected {d}")
    if not np.all((x >= 0.0) & (x <= 1.0)):
        raise InvalidInputError("points must lie in the unit hypercube [0, 1]^d")
    return x


def _khatri_rao(table: np.ndarray, coords) -> np.ndarray:
    """Row-wise products over ``coords``: shape (rows, (m+1)**len(coords)).

    Columns come out in lexicographic order of the per-coordinate degrees.
    """
    out = np.ones((table.shape[0], 1))
    for c in coords:
        out = (out[:, :, None] * table[:, c, None, :]).reshape(table.shape[0], -1)
    return out


def _halves(d: int):
    h = d // 2
    return range(h), range(h, d)


def _chunk_rows(width: int) -> int:
    return max(1, _BUFFER_CELLS // max(width, 1))


def _dense_sums(x: np.ndarray, m: int, power: int, summation: str) -> np.ndarray:
    """Sum over the sample of every product basis function (to ``power``)."""
    n, d = x.shape
    spec = BasisSpec(d, m)
    left, right = _halves(d)
    ml, mr = (m + 1) ** len(left), (m + 1) ** len(right)
    if summation == "blas":
        acc = np.zeros((ml, mr))
        step = _chunk_rows(ml + mr)
        for start in range(0, n, step):
            table = legendre_table(x[start:start + step], m) ** power
            acc += _khatri_rao(table, left).T @ _khatri_rao(table, right)
        return acc.ravel()
    if summation == "sequential":
        acc = np.zeros(spec.size)
        for row in x:
            table = legendre_table(row[None, :], m) ** power
            acc += _khatri_rao(table, range(d))[0]
        return acc
    if summation == "pairwise":
        acc = np.zeros(spec.size)
        step = _chunk_rows(spec.size)
        for start in range(0, n, step):
            table = legendre_table(x[start:start + step], m) ** power
            # contiguous along the sample axis so numpy reduces pairwise
            full = np.ascontiguousarray(_khatri_rao(table, range(d)).T)
            acc += full.sum(axis=1)
        return acc
    raise InvalidInputError(f"unknown summation mode {summation!r}; use one of {SUMMATION_MODES}")


def _sparse_products(x: np.ndarray, m: int, indices: np.ndarray, power: int = 1) -> np.ndarray:
    """``prod_i f_{j_i}(x_i) ** power`` for each point and each listed index: (n, k)."""
    table = legendre_table(x, m) ** power
    out = np.ones((x.shape[0], len(indices)))
    for i in range(x.shape[1]):
        out *= table[:, i, :][:, indices[:, i]]
    return out


def _sparse_sums(x: np.ndarray, m: int, indices: np.ndarray, power: int) -> np.ndarray:
    acc = np.zeros(len(indices))
    step = _chunk_rows(len(indices))
    for start in range(0, x.shape[0], step):
        acc += _sparse_products(x[start:start + step], m, indices, power).sum(axis=0)
    return acc


# ---------------------------------------------------------------------------
# estimation and noise
# ---------------------------------------------------------------------------


def estimate(
    sample,
    spec: BasisSpec,
    *,
    indices=None,
    summation: str = "blas",
    cap: int = DEFAULT_BASIS_CAP,
) -> CoefficientTensor:
    """Mean-square optimal coefficients: ``a_j = mean_t f_j(x_t)``.

    Parameters
    ----------
    sample : array_like, shape (n, d)
        Points in ``[0, 1]^d``.
    spec : BasisSpec
        Dimension and maximal degree.
    indices : array_like, shape (k, d), optional
        Estimate only these multi-indices (a sparse basis).  By default the
        full ``(m + 1)^d`` basis is used.
    summation : {"blas", "sequential", "pairwise"}
        How the per-index sums are accumulated.  ``"blas"`` splits the
        coordinates in two halves and reduces the sample with one matrix
        product per chunk; ``"sequential"`` adds points one at a time in
        sample order (slow, reference); ``"pairwise"`` uses pairwise
        summation for large samples.  All agree to about 1e-12.

    Returns
    -------
    CoefficientTensor
        With ``n`` set to the sample size.  The all-zeros coefficient is
        exactly 1.
    """
    x = _check_sample(sample, spec.d)
    n = x.shape[0]
    if indices is not None:
        idx = np.unique(np.asarray(indices, dtype=np.int64).reshape(-1, spec.d), axis=0)
        return CoefficientTensor(spec, idx, _sparse_sums(x, spec.m, idx, 1) / n, n)
    spec.check_cap(cap)
    sums = _dense_sums(x, spec.m, 1, summation)
    return CoefficientTensor.from_dense((sums / n).reshape(spec.shape), n)


def sigma(coeffs: CoefficientTensor, sample) -> np.ndarray:
    """Per-coefficient standard error ``std_t(f_j(x_t)) / sqrt(n)``.

    The standard deviation is the empirical (1/n) one over the sample,
    i.e. the error integral with the density replaced by the sample's
    empirical measure.  Returned in the order of ``coeffs.indices``; the
    all-zeros index always gets 0.  See :func:`baseline_sigma` for the
    uniform-density value ``1 / sqrt(n)``.
    """
    x = _check_sample(sample, coeffs.spec.d)
    n = x.shape[0]
    if n < 2:
        raise InvalidInputError("noise estimate needs at least 2 sample points")
    if coeffs.n is not None and coeffs.n != n:
        raise InvalidInputError(
            f"coefficients were estimated from {coeffs.n} points but sample has {n}"
        )
    m = coeffs.spec.m
    if coeffs.is_dense and coeffs.spec.size <= DEFAULT_BASIS_CAP:
        mean = _dense_sums(x, m, 1, "blas") / n
        second = _dense_sums(x, m, 2, "blas") / n
    else:
        mean = _sparse_sums(x, m, coeffs.indices, 1) / n
        second = _sparse_sums(x, m, coeffs.indices, 2) / n
    var = np.maximum(second - mean * mean, 0.0)
    out = np.sqrt(var / n)
    out[np.all(coeffs.indices == 0, axis=1)] = 0.0
    return out


@dataclass(frozen=True)
class CoefficientRow:
    index: MultiIndex
    value: float
    sigma: float
    z: float


@dataclass(frozen=True)
class CoefficientReport:
    """Coefficients ranked by magnitude, normalization entry first."""

    rows: tuple[CoefficientRow, ...]
    n: int
    baseline_sigma: float

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


def _z(value, s):
    if s > 0:
        return value / s
    return math.inf if value > 0 else (-math.inf if value < 0 else 0.0)


def top_k(coeffs: CoefficientTensor, sample, k: int) -> CoefficientReport:
    """The ``k`` largest non-trivial ``|a_j|`` with their noise levels.

    The all-zeros (normalization) index always comes first and is not
    counted in ``k``.  Ties are broken by lexicographic index order.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    sig = sigma(coeffs, sample)
    n = np.asarray(sample).shape[0]
    zero = np.all(coeffs.indices == 0, axis=1)
    rest = np.flatnonzero(~zero)
    order = rest[np.argsort(-np.abs(coeffs.values[rest]), kind="stable")][:k]
    chosen = list(np.flatnonzero(zero)) + list(order)
    rows = tuple(
        CoefficientRow(
            tuple(int(j) for j in coeffs.indices[p]),
            float(coeffs.values[p]),
            float(sig[p]),
            _z(float(coeffs.values[p]), float(sig[p])),
        )
        for p in chosen
    )
    return CoefficientReport(rows, n, baseline_sigma(n))


def prune(coeffs: CoefficientTensor, sample, threshold: float) -> CoefficientTensor:
    """Keep only coefficients with ``|a_j| >= threshold * sigma_j``.

    The all-zeros index is never dropped.
    """
    if not threshold >= 0:
        raise InvalidInputError(f"threshold must be non-negative, got {threshold}")
    zero = np.all(coeffs.indices == 0, axis=1)
    if math.isinf(threshold):
        keep = zero
    else:
        keep = zero | (np.abs(coeffs.values) >= threshold * sigma(coeffs, sample))
    return CoefficientTensor(coeffs.spec, coeffs.indices[keep], coeffs.values[keep], coeffs.n)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _use_dense(coeffs: CoefficientTensor) -> bool:
    size = coeffs.spec.size
    return size <= DEFAULT_BASIS_CAP and 8 * len(coeffs) * coeffs.spec.d >= size


def evaluate(coeffs: CoefficientTensor, x):
    """Density value(s) ``sum_j a_j f_j(x)``; may be negative.

    ``x`` is a single d-vector (returns a float) or an ``(N, d)`` array of
    points (returns an array of length N).
    """
    d = coeffs.spec.d
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1 and (d > 1 or arr.shape == (1,))
    if single:
        arr = arr[None, :]
    pts = _check_sample(arr, d)
    out = np.empty(pts.shape[0])
    m = coeffs.spec.m
    if _use_dense(coeffs):
        left, right = _halves(d)
        ml = (m + 1) ** len(left)
        a = coeffs.dense().reshape(ml, -1)
        step = _chunk_rows(a.size // ml + ml)
        for start in range(0, len(pts), step):
            table = legendre_table(pts[start:start + step], m)
            partial = _khatri_rao(table, left) @ a
            out[start:start + step] = np.einsum("ij,ij->i", partial, _khatri_rao(table, right))
    else:
        step = _chunk_rows(len(coeffs))
        for start in range(0, len(pts), step):
            out[start:start + step] = _sparse_products(pts[start:start + step], m, coeffs.indices) @ coeffs.values
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# algebra: marginals and conditional slices
# ---------------------------------------------------------------------------


def _coords(d: int, coords, what: str) -> list[int]:
    coords = [int(c) for c in coords]
    if len(set(coords)) != len(coords):
        raise InvalidInputError(f"duplicate coordinates in {what}: {coords}")
    bad = [c for c in coords if not 0 <= c < d]
    if bad:
        raise InvalidInputError(f"{what} coordinates {bad} outside 0..{d - 1}")
    return coords


def _regroup(spec: BasisSpec, indices: np.ndarray, weights: np.ndarray, n) -> CoefficientTensor:
    """Sum weights of equal rows of ``indices``; output sorted lexicographically."""
    if len(indices) == 0:
        return CoefficientTensor(spec, indices, weights, n)
    unique, inverse = np.unique(indices, axis=0, return_inverse=True)
    summed = np.bincount(inverse.ravel(), weights=weights, minlength=len(unique))
    return CoefficientTensor(spec, unique, summed, n)


def marginalize(coeffs: CoefficientTensor, keep: Sequence[int]) -> CoefficientTensor:
    """Integrate out every coordinate not in ``keep``.

    Exact: every ``f_j`` with ``j >= 1`` integrates to zero, so only the
    entries with index 0 on all dropped coordinates survive.  The result's
    coordinates follow the order given in ``keep``.
    """
    d = coeffs.spec.d
    keep = _coords(d, keep, "kept")
    if not keep:
        raise InvalidInputError("marginalization needs at least one kept coordinate")
    dropped = [c for c in range(d) if c not in keep]
    mask = np.all(coeffs.indices[:, dropped] == 0, axis=1)
    spec = BasisSpec(len(keep), coeffs.spec.m)
    idx = coeffs.indices[mask][:, keep]
    if keep == sorted(keep):
        return CoefficientTensor(spec, idx, coeffs.values[mask], coeffs.n)
    return _regroup(spec, idx, coeffs.values[mask], coeffs.n)


def condition_slice(
    coeffs: CoefficientTensor,
    ctx_coords: Sequence[int],
    ctx_values: Sequence[float],
    renormalize: bool = True,
) -> CoefficientTensor:
    """Fix the context coordinates and return the polynomial in the rest.

    ``b_k = sum a_j prod_{i in ctx} f_{j_i}(ctx_i)`` over all ``j`` that
    agree with ``k`` on the remaining coordinates.  With ``renormalize``
    the slice is divided by the context marginal density so it integrates
    to one; a non-positive marginal raises
    :class:`~hcr.errors.NonPositiveContextDensityError`.
    """
    d = coeffs.spec.d
    ctx = _coords(d, ctx_coords, "context")
    vals = np.asarray(ctx_values, dtype=float).ravel()
    if len(vals) != len(ctx):
        raise InvalidInputError(f"{len(ctx)} context coordinates but {len(vals)} values")
    if not ctx:
        return coeffs
    if np.any((vals < 0.0) | (vals > 1.0)):
        raise InvalidInputError("context values must lie in [0, 1]")
    remaining = [c for c in range(d) if c not in ctx]
    if not remaining:
        raise InvalidInputError("at least one coordinate must remain unconditioned")
    m = coeffs.spec.m
    table = legendre_table(vals, m)
    weights = coeffs.values.copy()
    for pos, c in enumerate(ctx):
        weights *= table[pos, coeffs.indices[:, c]]
    sliced = _regroup(BasisSpec(len(remaining), m), coeffs.indices[:, remaining], weights, coeffs.n)
    if not renormalize:
        return sliced
    marginal = sliced[(0,) * len(remaining)]
    if not marginal > 0:
        raise NonPositiveContextDensityError(
            f"context marginal density is {marginal:.6g} <= 0; cannot renormalize the slice",
            density=marginal,
        )
    return CoefficientTensor(sliced.spec, sliced.indices, sliced.values / marginal, sliced.n)


# ---------------------------------------------------------------------------
# region statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionStats:
    """Share of the cube (volume) and of the probability mass where ``rho > T``.

    Mass uses ``max(rho, 0)``: negative density is clamped to zero before
    integrating, both over the region and over the whole cube.
    """

    threshold: float
    volume_fraction: float
    mass_fraction: float
    method: str
    points: int
    seed: int | None = None


def cell_centers(resolution: int) -> np.ndarray:
    return (np.arange(resolution) + 0.5) / resolution


def region_stats(
    coeffs: CoefficientTensor,
    threshold: float,
    *,
    resolution: int = 100,
    mc_samples: int = 10**6,
    seed: int = 0,
) -> RegionStats:
    """Volume and mass of ``{x : rho(x) > threshold}``.

    For ``d <= 3`` a regular grid of ``resolution`` cell centers per axis
    is used (midpoint Riemann sum); for larger ``d`` uniform Monte Carlo
    with ``mc_samples`` points drawn from ``numpy.random.default_rng(seed)``.
    """
    d = coeffs.spec.d
    if d <= 3:
        if resolution < 2:
            raise InvalidInputError(f"resolution must be >= 2, got {resolution}")
        axes = [cell_centers(resolution)] * d
        total_points = resolution**d

        def batches():
            step = max(1, _BUFFER_CELLS // (8 * d))
            flat = np.arange(total_points)
            for start in range(0, total_points, step):
                ids = np.unravel_index(flat[start:start + step], (resolution,) * d)
                yield np.stack([axes[i][ids[i]] for i in range(d)], axis=1)

        method, used_seed = "grid", None
    else:
        if mc_samples < 1:
            raise InvalidInputError(f"mc_samples must be positive, got {mc_samples}")
        rng = np.random.default_rng(seed)
        total_points = mc_samples

        def batches():
            step = max(1, _BUFFER_CELLS // (8 * d))
            for start in range(0, total_points, step):
                yield rng.random((min(step, total_points - start), d))

        method, used_seed = "monte-carlo", seed

    above = 0
    mass_above = 0.0
    mass_total = 0.0
    for pts in batches():
        rho = evaluate(coeffs, pts)
        hit = rho > threshold
        pos = np.maximum(rho, 0.0)
        above += int(hit.sum())
        mass_above += float(pos[hit].sum())
        mass_total += float(pos.sum())
    volume = above / total_points
    mass = mass_above / mass_total if mass_total > 0 else 0.0
    return RegionStats(float(threshold), volume, mass, method, total_points, used_seed)
