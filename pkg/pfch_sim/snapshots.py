# snapshots.py
"""Файлы результатов.

Снимок поля (двоичный, little-endian):
  b"PFCH1" | u32 nx | u32 ny | u32 count
  | count раз: u32 длина имени, имя в UTF-8
  | count раз: nx*ny чисел f64 построчно

Ряд диагностики: CSV, столбцы = поля SeriesRecord.
Вердикты: по строке на проверку: name,worst,threshold,pass|fail.
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from diagnostics import INT_COLUMNS, CheckReport, DiagnosticsSeries, SeriesRecord, column_names
from grid import DEFAULT_MAX_CELLS
from helpers import atomic_write_bytes, atomic_write_text

MAGIC = b"PFCH1"
_U32 = struct.Struct("<I")
_HEADER = struct.Struct("<III")
U32_MAX = 2**32 - 1


class SnapshotError(ValueError):
    pass


# ==========================================================
#                       SNAPSHOTS
# ==========================================================


def encode_snapshot(fields: Mapping[str, np.ndarray], shape: tuple[int, int] | None = None) -> bytes:
    arrays = {name: np.asarray(v, dtype=float) for name, v in fields.items()}
    if arrays:
        shapes = {a.shape for a in arrays.values()}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise SnapshotError(f"all fields must share one 2-D shape (got {sorted(shapes)})")
        ny, nx = next(iter(shapes))
        if shape is not None and tuple(shape) != (ny, nx):
            raise SnapshotError(f"fields of shape {(ny, nx)} do not match the declared shape {tuple(shape)}")
    else:
        ny, nx = shape if shape is not None else (0, 0)
    if nx > U32_MAX or ny > U32_MAX or len(arrays) > U32_MAX:
        raise SnapshotError("dimension overflow: sizes must fit in 32 bits")

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_HEADER.pack(nx, ny, len(arrays)))
    for name in arrays:
        raw = name.encode("utf-8")
        buf.write(_U32.pack(len(raw)))
        buf.write(raw)
    for a in arrays.values():
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def decode_snapshot(data: bytes, max_cells: int = DEFAULT_MAX_CELLS) -> dict[str, np.ndarray]:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise SnapshotError("bad magic: not a PFCH1 snapshot")
    pos = len(MAGIC)
    if len(data) < pos + _HEADER.size:
        raise SnapshotError("truncated header")
    nx, ny, count = _HEADER.unpack_from(data, pos)
    pos += _HEADER.size
    if nx * ny > max_cells:
        raise SnapshotError(f"dimension overflow: {nx}x{ny} exceeds the cell cap {max_cells}")

    names = []
    for _ in range(count):
        if len(data) < pos + _U32.size:
            raise SnapshotError("truncated name table")
        (n,) = _U32.unpack_from(data, pos)
        pos += _U32.size
        if len(data) < pos + n:
            raise SnapshotError("truncated name table")
        try:
            names.append(data[pos : pos + n].decode("utf-8"))
        except UnicodeDecodeError as e:
            raise SnapshotError(f"field name is not UTF-8: {e}") from None
        pos += n

    size = nx * ny * 8
    if count and len(data) - pos < size * count:
        raise SnapshotError(f"truncated data: need {size * count} bytes, have {len(data) - pos}")
    if len(data) - pos != size * count:
        raise SnapshotError("trailing bytes after field data")
    out: dict[str, np.ndarray] = {}
    for name in names:
        out[name] = np.frombuffer(data, dtype="<f8", count=nx * ny, offset=pos).reshape(ny, nx).astype(float)
        pos += size
    return out


def write_snapshot(path: str | Path, fields: Mapping[str, np.ndarray], shape: tuple[int, int] | None = None) -> None:
    atomic_write_bytes(Path(path), encode_snapshot(fields, shape))


def read_snapshot(path: str | Path, max_cells: int = DEFAULT_MAX_CELLS) -> dict[str, np.ndarray]:
    return decode_snapshot(Path(path).read_bytes(), max_cells)


def state_fields(c: np.ndarray, phi: np.ndarray | None = None) -> dict[str, np.ndarray]:
    out = {"c_a": c[0], "c_b": c[1], "c_s": c[2]}
    if phi is not None:
        out["phi"] = phi
    return out


# ==========================================================
#                     CSV SERIES
# ==========================================================


def series_to_csv(series: DiagnosticsSeries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = column_names()
    writer.writerow(names)
    for rec in series.records:
        writer.writerow([str(int(getattr(rec, n))) if n in INT_COLUMNS else repr(float(getattr(rec, n))) for n in names])
    return buf.getvalue()


def write_series_csv(path: str | Path, series: DiagnosticsSeries) -> None:
    atomic_write_text(Path(path), series_to_csv(series))


def read_series_csv(path: str | Path) -> DiagnosticsSeries:
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SnapshotError("empty series file") from None
    names = column_names()
    if header != names:
        raise SnapshotError(f"series header does not match the documented columns: {header}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(names):
            raise SnapshotError(f"series line {lineno}: expected {len(names)} columns, got {len(row)}")
        try:
            values = {n: (int(v) if n in INT_COLUMNS else float(v)) for n, v in zip(names, row)}
        except ValueError as e:
            raise SnapshotError(f"series line {lineno}: {e}") from None
        records.append(SeriesRecord(**values))
    return DiagnosticsSeries(records)


# ==========================================================
#                      VERDICTS
# ==========================================================


def verdicts_text(reports: Sequence[CheckReport]) -> str:
    return "".join(r.line() + "\n" for r in reports)


def write_verdicts(path: str | Path, reports: Sequence[CheckReport]) -> None:
    atomic_write_text(Path(path), verdicts_text(reports))
