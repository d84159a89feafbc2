"""Dataset container, CSV ingestion, and validation.

Estimation runs on a fixed triple: outcome vector y, exposure vector d,
and an n x p instrument matrix z. Instruments are stored as reals even
when they are 0/1 coded, since nothing downstream requires binarity;
an optional strict flag in :func:`validate` checks binary coding.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError

__all__ = ["Dataset", "load_csv", "write_csv", "validate"]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable outcome/exposure/instrument bundle.

    Structural consistency (matching lengths, 2-D instrument matrix) is
    enforced at construction. Value-level invariants (finiteness, n >= 2,
    non-constant instruments) are reported by :func:`validate` so that
    questionable data can still be inspected rather than refused outright.
    """

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    instrument_names: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        y = np.ascontiguousarray(self.y, dtype=float)
        d = np.ascontiguousarray(self.d, dtype=float)
        z = np.ascontiguousarray(self.z, dtype=float)
        if y.ndim != 1 or d.ndim != 1:
            raise DataError("y and d must be one-dimensional vectors")
        if z.ndim != 2:
            raise DataError("z must be a two-dimensional matrix")
        if not (y.shape[0] == d.shape[0] == z.shape[0]):
            raise DataError(
                f"inconsistent lengths: y has {y.shape[0]} rows, d has "
                f"{d.shape[0]}, z has {z.shape[0]}"
            )
        names = self.instrument_names
        if names is not None:
            names = tuple(str(c) for c in names)
            if len(names) != z.shape[1]:
                raise DataError(
                    f"{len(names)} instrument names for {z.shape[1]} columns"
                )
        for arr in (y, d, z):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "instrument_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    def names(self) -> tuple[str, ...]:
        """Instrument labels, synthesized as z1..zp when none were given."""
        if self.instrument_names is not None:
            return self.instrument_names
        return tuple(f"z{j + 1}" for j in range(self.p))


def validate(ds: Dataset, require_binary: bool = False) -> list[str]:
    """Return a list of invariant violations; empty means the dataset is clean.

    Violations are data, not failures: this never raises. Each entry names
    the violated invariant and where it occurred.
    """
    report: list[str] = []
    names = ds.names()
    if ds.n < 2:
        report.append(f"too few observations: n={ds.n}, need n >= 2")
    for label, vec in (("y", ds.y), ("d", ds.d)):
        bad = np.flatnonzero(~np.isfinite(vec))
        if bad.size:
            report.append(
                f"non-finite value: column '{label}', row {bad[0] + 1}"
            )
    for j in range(ds.p):
        col = ds.z[:, j]
        bad = np.flatnonzero(~np.isfinite(col))
        if bad.size:
            report.append(
                f"non-finite value: column '{names[j]}', row {bad[0] + 1}"
            )
            continue
        if ds.n >= 2 and np.var(col) == 0.0:
            report.append(f"constant instrument: column '{names[j]}'")
        if require_binary and not np.all((col == 0.0) | (col == 1.0)):
            report.append(f"non-binary coding: column '{names[j]}'")
    return report


def load_csv(
    path: str | os.PathLike,
    outcome_col: str,
    exposure_col: str,
    instrument_cols: Sequence[str],
) -> Dataset:
    """Load a dataset from a headered CSV file, binding columns by name.

    The dialect is fixed: comma separator, first row header, '.' decimal
    point, no quoting of numeric fields. Row order is preserved. Any
    violation of the Dataset invariants (non-finite cell, constant
    instrument, n < 2) raises :class:`DataError` naming the offending cell
    or column.
    """
    instrument_cols = list(instrument_cols)
    if not instrument_cols:
        raise DataError("at least one instrument column is required")
    selected = [outcome_col, exposure_col, *instrument_cols]
    dupes = {c for c in selected if selected.count(c) > 1}
    if dupes:
        raise DataError(
            "duplicate column selection: " + ", ".join(sorted(dupes))
        )
    try:
        fh = open(path, "r", newline="")
    except OSError as exc:
        raise DataError(f"cannot open file: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty file: {path}") from None
        header = [h.strip() for h in header]
        positions: dict[str, int] = {}
        for name in selected:
            hits = [i for i, h in enumerate(header) if h == name]
            if not hits:
                raise DataError(f"missing column: '{name}'")
            if len(hits) > 1:
                raise DataError(f"ambiguous column: '{name}' appears twice in header")
            positions[name] = hits[0]
        rows: list[list[float]] = []
        for row_idx, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue  # ignore trailing blank lines
            if len(row) != len(header):
                raise DataError(
                    f"row {row_idx} has {len(row)} fields, header has {len(header)}"
                )
            parsed = []
            for name in selected:
                cell = row[positions[name]].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"cannot parse cell (row {row_idx}, column '{name}'): {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise DataError(
                        f"non-finite cell (row {row_idx}, column '{name}'): {cell!r}"
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise DataError(f"no data rows in {path}")
    table = np.asarray(rows, dtype=float)
    ds = Dataset(
        y=table[:, 0],
        d=table[:, 1],
        z=table[:, 2:],
        instrument_names=tuple(instrument_cols),
    )
    violations = validate(ds)
    if violations:
        raise DataError("; ".join(violations))
    return ds


def write_csv(ds: Dataset, path: str | os.PathLike) -> None:
    """Write a dataset back to CSV with full round-trip precision.

    Cells are written with ``repr(float)`` (shortest representation that
    parses back to the same double), so load_csv(write_csv(ds)) reproduces
    the arrays exactly.
    """
    names = ds.names()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "d", *names])
        for i in range(ds.n):
            writer.writerow(
                [repr(float(ds.y[i])), repr(float(ds.d[i]))]
                + [repr(float(v)) for v in ds.z[i]]
            )
