"""CSV ingestion and the optional yield-curve factor fit."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .normalize import RawSeries

#: Decay per month commonly fixed for the Diebold-Li factor model.
DEFAULT_LAMBDA = 0.0609
FACTOR_NAMES = ("b1", "b2", "b3")


@dataclass(frozen=True)
class YieldTable:
    """Yields (percent) by date (rows) and maturity in months (columns)."""

    dates: tuple
    maturities: np.ndarray
    yields: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.maturities, dtype=float).ravel()
        y = np.asarray(self.yields, dtype=float)
        if tau.size < 3:
            raise InvalidInputError(f"need at least 3 maturities, got {tau.size}")
        if np.any(tau <= 0) or np.any(np.diff(tau) <= 0):
            raise InvalidInputError("maturities must be positive and strictly increasing")
        if y.ndim != 2 or y.shape[1] != tau.size:
            raise InvalidInputError(f"yields of shape {y.shape} do not match {tau.size} maturities")
        if len(self.dates) != y.shape[0]:
            raise InvalidInputError(f"{len(self.dates)} dates for {y.shape[0]} rows")
        object.__setattr__(self, "maturities", tau)
        object.__setattr__(self, "yields", y)
        object.__setattr__(self, "dates", tuple(self.dates))


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not rows:
        raise InvalidInputError(f"{path}: empty file (no header row)")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise InvalidInputError(f"{path}: header only, no data rows")
    return header, body


def _numeric_block(path, header, body, columns) -> np.ndarray:
    positions = []
    for name in columns:
        if name not in header:
            raise InvalidInputError(f"{path}: missing column {name!r} (have {', '.join(header)})")
        positions.append(header.index(name))
    out = np.empty((len(body), len(columns)))
    for r, row in enumerate(body):
        for c, pos in enumerate(positions):
            cell = row[pos].strip() if pos < len(row) else ""
            try:
                value = float(cell)
            except ValueError:
                raise InvalidInputError(
                    f"{path}: row {r + 2}, column {columns[c]!r}: non-numeric value {cell!r}"
                ) from None
            if not math.isfinite(value):
                raise InvalidInputError(f"{path}: row {r + 2}, column {columns[c]!r}: non-finite value")
            out[r, c] = value
    return out


def _labels(path, header, body, date_column):
    if date_column is None:
        return tuple(range(len(body)))
    if date_column not in header:
        raise InvalidInputError(f"{path}: missing date column {date_column!r}")
    pos = header.index(date_column)
    return tuple(row[pos].strip() if pos < len(row) else "" for row in body)


def load_csv(path, columns: Sequence[str] | None = None, date_column: str | None = None) -> RawSeries:
    """Read numeric columns of a CSV file into a :class:`RawSeries`.

    Without ``columns`` every column except ``date_column`` is used.  Rows
    keep file order; dates are opaque labels.
    """
    header, body = _read_rows(path)
    if columns is None:
        columns = [h for h in header if h != date_column]
    columns = list(columns)
    if not columns:
        raise InvalidInputError(f"{path}: no value columns selected")
    values = _numeric_block(path, header, body, columns)
    return RawSeries(tuple(columns), values, _labels(path, header, body, date_column))


def load_yields(path, columns: Sequence[str] | None = None, date_column: str | None = None) -> YieldTable:
    """Read a yield table whose value columns are named by maturity in months."""
    header, body = _read_rows(path)
    if columns is None:
        columns = [h for h in header if h != date_column]
    columns = list(columns)
    try:
        maturities = [float(c) for c in columns]
    except ValueError:
        raise InvalidInputError(
            f"{path}: yield columns must be named by maturity in months, got {columns}"
        ) from None
    values = _numeric_block(path, header, body, columns)
    return YieldTable(_labels(path, header, body, date_column), maturities, values)


def factor_loadings(maturities, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    """Level, slope and curvature loadings, shape ``(len(maturities), 3)``."""
    if not lam > 0:
        raise InvalidInputError(f"lambda must be positive, got {lam}")
    tau = np.asarray(maturities, dtype=float)
    x = lam * tau
    slope = -np.expm1(-x) / x
    return np.column_stack([np.ones_like(tau), slope, slope - np.exp(-x)])


def diebold_li_fit(table: YieldTable, lam: float = DEFAULT_LAMBDA) -> RawSeries:
    """Per-date least-squares ``(b1, b2, b3)`` for a fixed decay ``lam``."""
    loadings = factor_loadings(table.maturities, lam)
    if np.linalg.matrix_rank(loadings) < 3:
        raise InvalidInputError("factor loadings are rank deficient for these maturities")
    betas, *_ = np.linalg.lstsq(loadings, table.yields.T, rcond=None)
    return RawSeries(FACTOR_NAMES, betas.T, table.dates)
