"""Labeled univariate series: ingestion, normalization and hold-out splitting."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

SPLIT_FRACTIONS = (0.49, 0.21, 0.30)

# Yahoo S5 A1 column layout.
A1_SCHEMA = {"timestamp": "timestamp", "value": "value", "label": "is_anomaly"}


class SeriesError(ValueError):
    """Raised for malformed series data."""


@dataclass(frozen=True)
class LabeledSeries:
    values: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = "series"
    timestamps: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size < 1:
            raise SeriesError("series must contain at least one value")
        if not np.all(np.isfinite(values)):
            raise SeriesError(f"series {self.name!r} contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != values.shape:
                raise SeriesError(
                    f"labels length {labels.size} does not match values length {values.size}"
                )
            if not np.all((labels == 0) | (labels == 1)):
                raise SeriesError("labels must be exactly 0 or 1")
            labels = labels.astype(np.int8)
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

        if self.timestamps is not None:
            ts = np.asarray(self.timestamps)
            if ts.shape != values.shape:
                raise SeriesError("timestamps length does not match values length")
            ts = ts.copy()
            ts.setflags(write=False)
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.values.size

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def slice(self, start: int, stop: int, name: Optional[str] = None) -> "LabeledSeries":
        return LabeledSeries(
            self.values[start:stop],
            None if self.labels is None else self.labels[start:stop],
            name or self.name,
            None if self.timestamps is None else self.timestamps[start:stop],
        )

    def with_values(self, values) -> "LabeledSeries":
        return LabeledSeries(values, self.labels, self.name, self.timestamps)


@dataclass(frozen=True)
class SplitSeries:
    train: LabeledSeries
    validation: LabeledSeries
    test: LabeledSeries
    fractions: tuple = SPLIT_FRACTIONS

    @property
    def bounds(self) -> tuple:
        """(train_end, validation_end) as absolute indices."""
        a = len(self.train)
        return a, a + len(self.validation)


def split_lengths(T: int, fractions: Sequence[float] = SPLIT_FRACTIONS) -> tuple:
    n_train = math.floor(fractions[0] * T)
    n_val = math.floor(fractions[1] * T)
    return n_train, n_val, T - n_train - n_val


def holdout_split(series: LabeledSeries, fractions: Sequence[float] = SPLIT_FRACTIONS) -> SplitSeries:
    """Contiguous train/validation/test split; floors for the first two, remainder to test."""
    T = len(series)
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise SeriesError(f"split fractions must be three values summing to 1, got {fractions}")
    n_train, n_val, n_test = split_lengths(T, fractions)
    if min(n_train, n_val, n_test) < 1:
        raise SeriesError(f"series of length {T} is too short to split into {tuple(fractions)}")
    a, b = n_train, n_train + n_val
    return SplitSeries(
        series.slice(0, a, f"{series.name}:train"),
        series.slice(a, b, f"{series.name}:validation"),
        series.slice(b, T, f"{series.name}:test"),
        tuple(fractions),
    )


def minmax_normalize(series: LabeledSeries, reference: Optional[np.ndarray] = None) -> LabeledSeries:
    """Map values to (u - min) / (max - min).

    ``reference`` supplies the values the extrema are taken from (e.g. the
    training segment only); by default the series itself. A constant
    reference maps every value to 0.
    """
    ref = series.values if reference is None else np.asarray(reference, dtype=float)
    lo, hi = float(np.min(ref)), float(np.max(ref))
    if hi == lo:
        return series.with_values(np.zeros_like(series.values))
    return series.with_values((series.values - lo) / (hi - lo))


def _resolve_column(spec, header: Optional[list], role: str) -> Optional[int]:
    if spec is None:
        return None
    if isinstance(spec, int):
        return spec
    if isinstance(spec, str) and spec.isdigit():
        return int(spec)
    if header is None:
        raise SeriesError(f"{role} column {spec!r} given by name but the file has no header")
    try:
        return header.index(spec)
    except ValueError:
        raise SeriesError(f"{role} column {spec!r} not found in header {header}") from None


def _looks_like_header(row: list) -> bool:
    for cell in row:
        try:
            float(cell)
        except ValueError:
            return True
    return False


def load_csv(
    path: Union[str, os.PathLike],
    schema: Optional[Mapping[str, Union[str, int, None]]] = None,
    name: Optional[str] = None,
) -> LabeledSeries:
    """Load a series from CSV.

    ``schema`` maps ``timestamp``, ``value`` and ``label`` to column names or
    zero-based indices; a missing or ``None`` entry means the column is not
    used. The default is positional ``timestamp=0, value=1, label=2`` for
    headerless files and the A1 names when a header is present. Row numbers in
    error messages are 1-based file lines.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such series file: {path}")

    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise SeriesError(f"{path}: file is empty")

    header = None
    first_line = 1
    if _looks_like_header(rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_line = 2

    if schema is None:
        schema = A1_SCHEMA if header is not None else {"timestamp": 0, "value": 1, "label": 2}
        if header is not None and schema["label"] not in header:
            schema = {**schema, "label": None}
        if header is None and rows and len(rows[0]) < 3:
            schema = {**schema, "label": None}

    ts_col = _resolve_column(schema.get("timestamp"), header, "timestamp")
    val_col = _resolve_column(schema.get("value"), header, "value")
    lab_col = _resolve_column(schema.get("label"), header, "label")
    if val_col is None:
        raise SeriesError("schema must map a value column")

    values, labels, stamps = [], [], []
    for offset, row in enumerate(rows):
        line = first_line + offset
        try:
            values.append(float(row[val_col]))
        except (ValueError, IndexError):
            raise SeriesError(f"{path}: row {line}: cannot parse value {row!r}") from None
        if lab_col is not None:
            try:
                lab = float(row[lab_col])
            except (ValueError, IndexError):
                raise SeriesError(f"{path}: row {line}: cannot parse label {row!r}") from None
            if lab not in (0.0, 1.0):
                raise SeriesError(f"{path}: row {line}: label {row[lab_col]!r} is not 0 or 1")
            labels.append(int(lab))
        if ts_col is not None:
            stamps.append(row[ts_col].strip() if ts_col < len(row) else "")

    if not values:
        raise SeriesError(f"{path}: no data rows")
    return LabeledSeries(
        np.array(values),
        np.array(labels, dtype=np.int8) if lab_col is not None else None,
        name or path.stem,
        np.array(stamps) if ts_col is not None else None,
    )


def write_csv(series: LabeledSeries, path: Union[str, os.PathLike]) -> None:
    """Write ``timestamp,value,is_anomaly`` rows; floats at full round-trip precision."""
    path = Path(path)
    stamps = series.timestamps if series.timestamps is not None else np.arange(len(series))
    lines = ["timestamp,value,is_anomaly" if series.has_labels else "timestamp,value"]
    for i, v in enumerate(series.values):
        row = f"{stamps[i]},{float(v)!r}"
        if series.has_labels:
            row += f",{int(series.labels[i])}"
        lines.append(row)
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path: Union[str, os.PathLike], text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with tmp.open("w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
