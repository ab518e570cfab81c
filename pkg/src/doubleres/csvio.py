"""CSV sheets with ``name(unit)`` headers and ``#`` metadata lines."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .physcore import parse_unit_header, unit_info
from .scan import ScanResult

__all__ = ["CsvFormatError", "CsvSheet", "sheet_from_scans", "read_csv", "write_csv"]


class CsvFormatError(ValueError):
    pass


@dataclass
class CsvSheet:
    columns: list[tuple[str, str]]
    data: np.ndarray
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim == 1:
            d = d[:, None] if len(self.columns) == 1 else d[None, :]
        if d.ndim != 2 or d.shape[1] != len(self.columns):
            raise CsvFormatError(f"{len(self.columns)} columns but data of shape {d.shape}")
        for name, unit in self.columns:
            try:
                unit_info(unit)
            except (KeyError, ValueError):
                raise CsvFormatError(f"column {name!r} has unknown unit {unit!r}") from None
        self.data = d

    @property
    def names(self) -> list[str]:
        return [c[0] for c in self.columns]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no column {name!r}; have {self.names}") from None

    def column(self, name: str, si: bool = True) -> np.ndarray:
        """Values of ``name``, scaled to base SI units unless ``si`` is False."""
        i = self.index(name)
        v = self.data[:, i]
        if si:
            _, scale = unit_info(self.columns[i][1])
            v = v * scale
        return v


def sheet_from_scans(scans: list[ScanResult], meta: dict[str, str]) -> CsvSheet:
    """Long-format sheet of one or more scans sharing their axes (row-major)."""
    first = scans[0]
    cols = [(first.axis1.name, first.axis1.unit)]
    if first.is_2d:
        cols.append((first.axis2.name, first.axis2.unit))
        a1, a2 = np.meshgrid(first.axis1.values, first.axis2.values, indexing="ij")
        arrays = [a1.ravel(), a2.ravel()]
    else:
        arrays = [first.axis1.values]
    for s in scans:
        if s.shape != first.shape:
            raise CsvFormatError("scans in one sheet must share their grid")
        cols.append((s.name, s.unit))
        arrays.append(np.asarray(s.values, dtype=float).ravel())
    return CsvSheet(cols, np.column_stack(arrays), dict(meta))


def _format_value(v: float) -> str:
    return repr(float(v))


def write_csv(sheet: CsvSheet, fh=None) -> str:
    """Serialise ``sheet``; returns the text and writes it to ``fh`` if given."""
    buf = io.StringIO()
    for k, v in sheet.meta.items():
        buf.write(f"# {k}: {v}\n")
    buf.write(",".join(f"{n}({u})" for n, u in sheet.columns) + "\n")
    for row in sheet.data:
        buf.write(",".join(_format_value(v) for v in row) + "\n")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_csv(text: str) -> CsvSheet:
    meta: dict[str, str] = {}
    header = None
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                k, v = body.split(":", 1)
                meta[k.strip()] = v.strip()
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            try:
                header = [parse_unit_header(c) for c in cells]
            except ValueError as exc:
                raise CsvFormatError(f"line {lineno}: bad header: {exc}") from None
            continue
        if len(cells) != len(header):
            raise CsvFormatError(f"line {lineno}: {len(cells)} cells, expected {len(header)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise CsvFormatError(f"line {lineno}: non-numeric cell") from None
    if header is None:
        raise CsvFormatError("no header row")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return CsvSheet(header, data, meta)
