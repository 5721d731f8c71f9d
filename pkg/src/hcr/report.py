"""Plot-ready tabular output.

Every table is comma-separated text with a header row, ``.`` as decimal
separator and floats written with 17 significant digits, optionally
preceded by ``# key=value`` metadata lines.  Outputs made of several
tables are written as a *document*: metadata lines followed by sections,
each introduced by a ``[name]`` line and holding one table.

Rendering the text of a parsed table reproduces the original bytes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import density as dens
from .errors import InvalidInputError
from .model import EvaluationReport


def fmt(value) -> str:
    """Locale-independent text for a number (17 significant digits for floats)."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


@dataclass
class Table:
    header: tuple[str, ...]
    rows: list[tuple[str, ...]]
    meta: dict[str, str] = field(default_factory=dict)

    @classmethod
    def build(cls, header: Sequence[str], rows, meta=None) -> "Table":
        return cls(
            tuple(header),
            [tuple(fmt(v) for v in row) for row in rows],
            {k: fmt(v) for k, v in (meta or {}).items()},
        )

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        try:
            pos = self.header.index(name)
        except ValueError:
            raise InvalidInputError(f"no column {name!r} in table {self.header}") from None
        return [row[pos] for row in self.rows]

    def floats(self, name: str) -> np.ndarray:
        return np.array([float(v) for v in self.column(name)])

    def _body(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        writer.writerows(self.rows)
        return buf.getvalue()

    def to_text(self) -> str:
        return _meta_text(self.meta) + self._body()

    @classmethod
    def from_text(cls, text: str) -> "Table":
        meta, lines = _split_meta(text.splitlines())
        return _parse_table(lines, meta)

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "Table":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _meta_text(meta: dict) -> str:
    return "".join(f"# {k}={v}\n" for k, v in meta.items())


def _split_meta(lines):
    meta = {}
    i = 0
    while i < len(lines) and lines[i].startswith("# "):
        key, sep, value = lines[i][2:].partition("=")
        if not sep:
            raise InvalidInputError(f"malformed metadata line {lines[i]!r}")
        meta[key] = value
        i += 1
    return meta, lines[i:]


def _parse_table(lines, meta=None) -> Table:
    if not lines:
        raise InvalidInputError("table has no header row")
    parsed = list(csv.reader(lines))
    header = tuple(parsed[0])
    rows = [tuple(r) for r in parsed[1:]]
    for k, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise InvalidInputError(f"table row {k} has {len(row)} fields, header has {len(header)}")
    return Table(header, rows, dict(meta or {}))


@dataclass
class Document:
    """Metadata plus named tables, in insertion order."""

    sections: dict[str, Table]
    meta: dict[str, str] = field(default_factory=dict)

    def to_text(self) -> str:
        parts = [_meta_text({k: fmt(v) for k, v in self.meta.items()})]
        for name, table in self.sections.items():
            parts.append(f"[{name}]\n")
            parts.append(table._body())
        return "".join(parts)

    @classmethod
    def from_text(cls, text: str) -> "Document":
        meta, lines = _split_meta(text.splitlines())
        sections: dict[str, Table] = {}
        name, block = None, []
        for line in lines + ["[]"]:
            if line.startswith("[") and line.endswith("]"):
                if name is not None:
                    sections[name] = _parse_table(block)
                elif block:
                    raise InvalidInputError("document content before the first section")
                name, block = line[1:-1], []
            else:
                block.append(line)
        return cls(sections, meta)

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "Document":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# evaluation reports
# ---------------------------------------------------------------------------


def emit_sorted_curve(report: EvaluationReport) -> Table:
    """(rank fraction, density) pairs; the first row holds the largest density."""
    n = len(report.sorted_densities)
    rows = [((i + 1) / n, rho) for i, rho in enumerate(report.sorted_densities)]
    return Table.build(("rank_fraction", "density"), rows)


def emit_threshold_table(report: EvaluationReport) -> Table:
    rows = [
        (t, f, f"{100.0 * f:.2f}%")
        for t, f in zip(report.thresholds, report.threshold_fractions)
    ]
    return Table.build(("threshold", "fraction", "percent"), rows)


def report_meta(report: EvaluationReport) -> dict:
    meta = {
        "label": report.label,
        "seed": "" if report.seed is None else report.seed,
        "n_train": "" if report.n_train is None else report.n_train,
        "n_test": report.n_test,
        "negative_fraction": report.negative_fraction,
        "mean_density": report.mean_density,
    }
    if report.config is not None:
        meta.update(
            variables=",".join(report.config.variables),
            order=report.config.order,
            degree=report.config.degree,
            normalizer=report.config.normalizer,
        )
    return meta


def report_document(report: EvaluationReport) -> Document:
    return Document(
        {"thresholds": emit_threshold_table(report), "sorted": emit_sorted_curve(report)},
        report_meta(report),
    )


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------


def index_string(index: Sequence[int], m: int) -> str:
    """``(1, 1, 0)`` -> ``"110"``; comma-separated once degrees exceed 9."""
    if m <= 9:
        return "".join(str(j) for j in index)
    return ",".join(str(j) for j in index)


def parse_index_string(text: str, m: int) -> tuple[int, ...]:
    """Inverse of :func:`index_string` for the same degree ``m``."""
    try:
        if m > 9:
            return tuple(int(p) for p in text.split(","))
        return tuple(int(c) for c in text)
    except ValueError:
        raise InvalidInputError(f"malformed coefficient index {text!r}") from None


def emit_coefficients(report: dens.CoefficientReport, m: int) -> Table:
    rows = [(index_string(r.index, m), r.value, r.sigma, r.z) for r in report]
    meta = {"n": report.n, "baseline_sigma": report.baseline_sigma}
    return Table.build(("index", "value", "sigma", "z"), rows, meta)


# ---------------------------------------------------------------------------
# 2D grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridSheet:
    """Marginal density of one coordinate pair on ``resolution`` x ``resolution`` cell centers.

    ``values[i, k]`` is the density at ``(centers[i], centers[k])``, first
    coordinate along rows.
    """

    names: tuple[str, str]
    resolution: int
    values: np.ndarray
    points: np.ndarray | None = None

    @property
    def centers(self) -> np.ndarray:
        return dens.cell_centers(self.resolution)

    def to_document(self) -> Document:
        c = self.centers
        header = (f"{self.names[0]}\\{self.names[1]}",) + tuple(fmt(v) for v in c)
        grid = Table(header, [(fmt(c[i]),) + tuple(fmt(v) for v in row) for i, row in enumerate(self.values)])
        sections = {"grid": grid}
        if self.points is not None:
            sections["points"] = Table.build(self.names, self.points)
        return Document(sections, {"resolution": self.resolution})

    @classmethod
    def from_document(cls, doc: Document) -> "GridSheet":
        grid = doc.sections["grid"]
        names = tuple(grid.header[0].split("\\", 1))
        values = np.array([[float(v) for v in row[1:]] for row in grid.rows])
        points = None
        if "points" in doc.sections:
            pts = doc.sections["points"]
            points = np.array([[float(v) for v in row] for row in pts.rows]).reshape(-1, 2)
        return cls(names, int(doc.meta["resolution"]), values, points)


def emit_pair_grid(
    coeffs: dens.CoefficientTensor,
    pair: Sequence[int],
    resolution: int,
    sample=None,
    names: Sequence[str] | None = None,
) -> GridSheet:
    """Evaluate the pair marginal on the regular cell-center grid.

    ``sample`` (an ``(n, d)`` array of the full vectors) is projected onto
    the pair and carried along as an overlay.
    """
    if len(pair) != 2:
        raise InvalidInputError(f"a grid needs exactly two coordinates, got {list(pair)}")
    if resolution < 2:
        raise InvalidInputError(f"resolution must be >= 2, got {resolution}")
    marginal = dens.marginalize(coeffs, pair)
    c = dens.cell_centers(resolution)
    xx, yy = np.meshgrid(c, c, indexing="ij")
    values = dens.evaluate(marginal, np.column_stack([xx.ravel(), yy.ravel()])).reshape(resolution, resolution)
    if names is None:
        names = (f"x{pair[0]}", f"x{pair[1]}")
    points = None if sample is None else np.asarray(sample, dtype=float)[:, list(pair)]
    return GridSheet((names[0], names[1]), resolution, values, points)


def region_table(stats: Sequence[dens.RegionStats]) -> Table:
    rows = [
        (s.threshold, s.volume_fraction, s.mass_fraction, s.method, s.points, "" if s.seed is None else s.seed)
        for s in stats
    ]
    return Table.build(("threshold", "volume_fraction", "mass_fraction", "method", "points", "seed"), rows)
