"""Dataset ingestion, validation, standardization, and group statistics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np


class DataError(ValueError):
    """Base class for dataset construction failures."""


class ParseError(DataError):
    """Malformed or incomplete row in the input table."""


class EncodingError(DataError):
    """A label/group cell does not match the declared encoding."""


class SizeError(DataError):
    """Table too small to form a dataset."""


class DegenerateFeatureError(DataError):
    """A feature column has zero variance and cannot be standardized."""


class GroupMissingError(DataError):
    """One of the two groups has no members."""


@dataclass(frozen=True)
class Dataset:
    """Immutable labeled dataset with a binary protected attribute.

    features: (n, d) real matrix.
    labels:   (n,) vector over {-1, +1}.
    groups:   (n,) vector over {0, 1}.
    ids:      n opaque record identifiers.
    """

    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        z = np.asarray(self.groups, dtype=int)
        if x.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {x.shape}")
        n, d = x.shape
        if n < 2:
            raise SizeError(f"need at least 2 rows, got {n}")
        if d < 1:
            raise DataError("need at least 1 feature column")
        if not np.all(np.isfinite(x)):
            bad = sorted(set(np.argwhere(~np.isfinite(x))[:, 0].tolist()))
            raise ParseError(f"non-finite feature values in rows {bad}")
        if y.shape != (n,) or z.shape != (n,):
            raise DataError("labels/groups length must match feature rows")
        if not np.all(np.isin(y, (-1, 1))):
            raise EncodingError("labels must be -1 or +1")
        if not np.all(np.isin(z, (0, 1))):
            raise EncodingError("groups must be 0 or 1")
        ids = tuple(str(i) for i in self.ids) if self.ids else tuple(
            str(i) for i in range(n)
        )
        if len(ids) != n:
            raise DataError("ids length must match feature rows")
        for arr in (x, y, z):
            arr.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "groups", z)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class GroupStats:
    """Group composition and the group-centered feature sum u = sum_i (z_i - z_bar) x_i."""

    z_bar: float
    n0: int
    n1: int
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        u.setflags(write=False)
        object.__setattr__(self, "u", u)


@dataclass(frozen=True)
class Schema:
    """Column roles and explicit value encodings for a delimited table.

    ``label_encoding`` / ``group_encoding`` map raw cell strings onto
    {-1,+1} / {0,1}; no value is inferred implicitly.
    """

    label: str
    group: str
    features: tuple[str, ...]
    label_encoding: dict[str, int]
    group_encoding: dict[str, int]
    id_column: str | None = None


def load_schema(source: str | Path | IO[str]) -> Schema:
    """Parse a key=value schema file.

    Plain ``column = role`` lines assign roles (feature, label, group, id,
    ignore).  ``encoding.label.<+1|-1> = value`` and
    ``encoding.group.<0|1> = value`` declare the cell encodings.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text()
    roles: dict[str, str] = {}
    label_enc: dict[str, int] = {}
    group_enc: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"schema line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key.startswith("encoding."):
            parts = key.split(".")
            if len(parts) != 3:
                raise ParseError(f"schema line {lineno}: bad encoding key {key!r}")
            _, which, code = parts
            if which == "label":
                if code not in ("+1", "-1", "1"):
                    raise ParseError(f"schema line {lineno}: label code must be +1/-1")
                label_enc[value] = 1 if code in ("+1", "1") else -1
            elif which == "group":
                if code not in ("0", "1"):
                    raise ParseError(f"schema line {lineno}: group code must be 0/1")
                group_enc[value] = int(code)
            else:
                raise ParseError(f"schema line {lineno}: unknown encoding {which!r}")
        else:
            roles[key] = value.lower()
    label_cols = [c for c, r in roles.items() if r == "label"]
    group_cols = [c for c, r in roles.items() if r == "group"]
    id_cols = [c for c, r in roles.items() if r == "id"]
    feature_cols = tuple(c for c, r in roles.items() if r == "feature")
    if len(label_cols) != 1:
        raise ParseError(f"schema must name exactly one label column, got {label_cols}")
    if len(group_cols) != 1:
        raise ParseError(f"schema must name exactly one group column, got {group_cols}")
    if len(id_cols) > 1:
        raise ParseError("schema may name at most one id column")
    if not feature_cols:
        raise ParseError("schema names no feature columns")
    if not label_enc:
        raise ParseError("schema declares no label encoding")
    if not group_enc:
        raise ParseError("schema declares no group encoding")
    return Schema(
        label=label_cols[0],
        group=group_cols[0],
        features=feature_cols,
        label_encoding=label_enc,
        group_encoding=group_enc,
        id_column=id_cols[0] if id_cols else None,
    )


def _open_text(source) -> IO[str]:
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            return io.StringIO(data.decode("utf-8"))
        return io.StringIO(data)
    return open(source, "r", newline="")


def load_dataset(source, schema: Schema, delimiter: str | None = None) -> Dataset:
    """Read a delimited text table (header row required) into a Dataset.

    Rows with missing or non-numeric feature cells abort the load; the
    error names the offending 1-based data row numbers.
    """
    fh = _open_text(source)
    try:
        head = fh.readline()
        if not head:
            raise SizeError("empty input")
        if delimiter is None:
            delimiter = "\t" if "\t" in head else ","
        header = [c.strip() for c in head.rstrip("\r\n").split(delimiter)]
        needed = [schema.label, schema.group, *schema.features]
        if schema.id_column:
            needed.append(schema.id_column)
        missing = [c for c in needed if c not in header]
        if missing:
            raise ParseError(f"columns missing from header: {missing}")
        col = {c: header.index(c) for c in needed}

        rows: list[list[float]] = []
        labels: list[int] = []
        groups: list[int] = []
        ids: list[str] = []
        bad_rows: list[int] = []
        reader = csv.reader(fh, delimiter=delimiter)
        rowno = 0
        for cells in reader:
            if not cells or all(not c.strip() for c in cells):
                continue
            rowno += 1
            if len(cells) != len(header):
                raise ParseError(
                    f"row {rowno}: expected {len(header)} cells, got {len(cells)}"
                )
            feats = []
            ok = True
            for c in schema.features:
                cell = cells[col[c]].strip()
                if cell == "":
                    ok = False
                    break
                try:
                    feats.append(float(cell))
                except ValueError:
                    ok = False
                    break
            if not ok:
                bad_rows.append(rowno)
                continue
            ycell = cells[col[schema.label]].strip()
            zcell = cells[col[schema.group]].strip()
            if ycell not in schema.label_encoding:
                raise EncodingError(
                    f"row {rowno}: label value {ycell!r} not in declared encoding"
                )
            if zcell not in schema.group_encoding:
                raise EncodingError(
                    f"row {rowno}: group value {zcell!r} not in declared encoding"
                )
            rows.append(feats)
            labels.append(schema.label_encoding[ycell])
            groups.append(schema.group_encoding[zcell])
            ids.append(
                cells[col[schema.id_column]].strip()
                if schema.id_column
                else str(rowno - 1)
            )
        if bad_rows:
            raise ParseError(f"rows with missing/invalid feature values: {bad_rows}")
        if len(rows) < 2:
            raise SizeError(f"need at least 2 data rows, got {len(rows)}")
        return Dataset(
            features=np.asarray(rows, dtype=float),
            labels=np.asarray(labels, dtype=int),
            groups=np.asarray(groups, dtype=int),
            ids=tuple(ids),
        )
    finally:
        fh.close()


def standardize(ds: Dataset) -> Dataset:
    """Center each feature column to mean 0 and scale to population (1/n) std 1."""
    x = ds.features
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population convention
    zero = np.flatnonzero(std <= 1e-15 * np.maximum(1.0, np.abs(mean)))
    if zero.size:
        raise DegenerateFeatureError(
            f"zero-variance feature column(s) at index {zero.tolist()}"
        )
    return Dataset(
        features=(x - mean) / std,
        labels=ds.labels,
        groups=ds.groups,
        ids=ds.ids,
    )


def group_stats(ds: Dataset) -> GroupStats:
    """Compute z_bar, group sizes, and u = sum_i (z_i - z_bar) x_i."""
    z = ds.groups
    n1 = int(z.sum())
    n0 = ds.n - n1
    if n0 == 0 or n1 == 0:
        raise GroupMissingError(f"both groups must be nonempty (n0={n0}, n1={n1})")
    z_bar = n1 / ds.n
    u = (z - z_bar) @ ds.features
    return GroupStats(z_bar=z_bar, n0=n0, n1=n1, u=u)
