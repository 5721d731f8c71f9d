"""Residuals and the probability integral transform.

Raw parameter series are turned into one-step residuals (current value
minus previous value, i.e. the previous value used as predictor), each
residual variable gets a fitted Laplace (or Gaussian) distribution, and
its CDF maps the residuals to nearly uniform values on (0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .errors import DegenerateScaleError, DomainError, InvalidInputError

#: Normalized values are clamped into [CLAMP_EPS, 1 - CLAMP_EPS].
CLAMP_EPS = 1e-12

LAPLACE = "laplace"
GAUSSIAN = "gaussian"
KINDS = (LAPLACE, GAUSSIAN)


def _as_matrix(values, names) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if len(names) == 1 else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InvalidInputError(f"expected a 2D table of values, got shape {arr.shape}")
    if arr.shape[1] != len(names):
        raise InvalidInputError(
            f"{len(names)} variable names for {arr.shape[1]} value columns"
        )
    if len(names) < 1:
        raise InvalidInputError("at least one variable is required")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("values must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RawSeries:
    """Parameter time series: ``values[t, i]`` is variable ``names[i]`` at ``times[t]``."""

    names: tuple[str, ...]
    values: np.ndarray
    times: tuple = None

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        values = _as_matrix(self.values, names)
        object.__setattr__(self, "values", values)
        times = tuple(range(len(values))) if self.times is None else tuple(self.times)
        if len(times) != len(values):
            raise InvalidInputError(f"{len(times)} time labels for {len(values)} rows")
        object.__setattr__(self, "times", times)

    def __len__(self):
        return len(self.values)

    def select(self, names: Sequence[str]) -> "RawSeries":
        cols = _column_positions(self.names, names)
        return RawSeries(tuple(names), self.values[:, cols], self.times)


@dataclass(frozen=True)
class ResidualSeries:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", _as_matrix(self.values, names))

    def __len__(self):
        return len(self.values)

    def select(self, names: Sequence[str]) -> "ResidualSeries":
        cols = _column_positions(self.names, names)
        return ResidualSeries(tuple(names), self.values[:, cols])


@dataclass(frozen=True)
class UniformSeries:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        values = _as_matrix(self.values, names)
        if np.any(values <= 0.0) or np.any(values >= 1.0):
            raise InvalidInputError("normalized values must lie strictly inside (0, 1)")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


def _column_positions(available, wanted) -> list[int]:
    missing = [n for n in wanted if n not in available]
    if missing:
        raise InvalidInputError(f"unknown variable(s): {', '.join(missing)}")
    return [available.index(n) for n in wanted]


@dataclass(frozen=True)
class NormalizerParams:
    """Location and scale of a fitted Laplace or Gaussian distribution.

    ``scale`` is ``b`` for Laplace and the standard deviation for Gaussian.
    """

    kind: str
    mu: float
    scale: float
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown normalizer kind {self.kind!r}; use one of {KINDS}")
        if not (math.isfinite(self.mu) and math.isfinite(self.scale)):
            raise InvalidInputError("normalizer parameters must be finite")
        if not self.scale > 0:
            raise DegenerateScaleError(f"scale must be positive, got {self.scale}")


def difference_series(raw: RawSeries) -> ResidualSeries:
    """One-step residuals ``raw[t + 1] - raw[t]``."""
    if len(raw) < 2:
        raise InvalidInputError(f"need at least 2 rows to difference, got {len(raw)}")
    return ResidualSeries(raw.names, np.diff(raw.values, axis=0))


def _samples(samples) -> np.ndarray:
    y = np.asarray(samples, dtype=float).ravel()
    if y.size < 2:
        raise InvalidInputError(f"need at least 2 samples, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("samples must be finite")
    return y


def fit_laplace(samples, name: str = "") -> NormalizerParams:
    """Maximum likelihood Laplace fit: median and mean absolute deviation."""
    y = _samples(samples)
    mu = float(np.median(y))
    b = float(np.mean(np.abs(y - mu)))
    if b <= 0.0:
        raise DegenerateScaleError(f"all {y.size} samples are identical; Laplace scale is 0")
    return NormalizerParams(LAPLACE, mu, b, name)


def fit_gaussian(samples, name: str = "") -> NormalizerParams:
    """Mean and population (1/n) standard deviation."""
    y = _samples(samples)
    mu = float(np.mean(y))
    sigma = float(np.sqrt(np.mean((y - mu) ** 2)))
    if sigma <= 0.0:
        raise DegenerateScaleError(f"all {y.size} samples are identical; Gaussian scale is 0")
    return NormalizerParams(GAUSSIAN, mu, sigma, name)


def fit_normalizers(res: ResidualSeries, kind: str = LAPLACE) -> list[NormalizerParams]:
    fitter = {LAPLACE: fit_laplace, GAUSSIAN: fit_gaussian}.get(kind)
    if fitter is None:
        raise InvalidInputError(f"unknown normalizer kind {kind!r}; use one of {KINDS}")
    return [fitter(res.values[:, i], name) for i, name in enumerate(res.names)]


def _scalar_or_array(values):
    return float(values) if np.ndim(values) == 0 else values


def cdf(params: NormalizerParams, y):
    """CDF of the fitted distribution; vectorized over ``y``."""
    z = (np.asarray(y, dtype=float) - params.mu) / params.scale
    if params.kind == LAPLACE:
        # both branches computed on clipped arguments to avoid overflow warnings
        u = np.where(
            z < 0,
            0.5 * np.exp(np.minimum(z, 0.0)),
            1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)),
        )
    else:
        u = special.ndtr(z)
    return _scalar_or_array(u)


def pdf(params: NormalizerParams, y):
    """Density ``g(y)`` of the fitted distribution."""
    z = (np.asarray(y, dtype=float) - params.mu) / params.scale
    if params.kind == LAPLACE:
        g = np.exp(-np.abs(z)) / (2.0 * params.scale)
    else:
        g = np.exp(-0.5 * z * z) / (params.scale * math.sqrt(2.0 * math.pi))
    return _scalar_or_array(g)


def quantile(params: NormalizerParams, u):
    """Inverse of :func:`cdf` on the open interval (0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0.0) | ~(u < 1.0)):
        raise DomainError("quantile is defined only for 0 < u < 1")
    if params.kind == LAPLACE:
        lo = np.minimum(u, 0.5)
        hi = np.maximum(u, 0.5)
        z = np.where(u < 0.5, np.log(2.0 * lo), -np.log(2.0 - 2.0 * hi))
    else:
        z = special.ndtri(u)
    return _scalar_or_array(params.mu + params.scale * z)


def normalize_series(res: ResidualSeries, params: Sequence[NormalizerParams]) -> UniformSeries:
    """Map every residual through its variable's CDF, clamped away from 0 and 1."""
    if len(params) != len(res.names):
        raise InvalidInputError(
            f"{len(params)} normalizers for {len(res.names)} residual variables"
        )
    out = np.empty(res.values.shape)
    for i, p in enumerate(params):
        out[:, i] = cdf(p, res.values[:, i])
    np.clip(out, CLAMP_EPS, 1.0 - CLAMP_EPS, out=out)
    return UniformSeries(res.names, out)


def unnormalize_density(rho_x, params: NormalizerParams, y):
    """Density in residual units: ``rho_x * g(y)``."""
    return _scalar_or_array(np.asarray(rho_x, dtype=float) * pdf(params, y))


def empirical_cdf(samples) -> list[tuple[float, float]]:
    """Sorted ``(value, rank / n)`` pairs; ties keep increasing ranks."""
    y = np.asarray(samples, dtype=float).ravel()
    if y.size == 0:
        raise InvalidInputError("empirical CDF of an empty sample")
    y = np.sort(y, kind="stable")
    n = y.size
    return [(float(v), (k + 1) / n) for k, v in enumerate(y)]
