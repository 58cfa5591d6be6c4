"""
On-disk artifacts.

Checkpoint layout (little-endian): 16-byte magic ``THINFILM-CKPT-01``,
int64 n, float64 wavenumber scale (2 pi or 1), float64 t, then the
n x (n/2+1) rfft2 coefficients as complex128 in row-major order.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import PersistenceError
from ..solvers.etd import COLUMNS, Trajectory
from ..spectral import Grid, SpectralField

MAGIC = b"THINFILM-CKPT-01"
_HEADER = np.dtype([("magic", "S16"), ("n", "<i8"), ("scale", "<f8"), ("t", "<f8")])
SCHEMA_VERSION = 1


def _scale_name(value: float) -> str:
    if value == 1.0:
        return "unit"
    if value == 2.0 * math.pi:
        return "two_pi"
    raise PersistenceError(f"unknown wavenumber scale {value!r} in checkpoint header")


def _ensure_parent(path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PersistenceError(f"cannot create directory {path.parent}: {exc.strerror}") from exc


def _write_bytes(path: Path, data: bytes) -> None:
    _ensure_parent(path)
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc.strerror}") from exc


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise PersistenceError(f"cannot read {path}: {exc.strerror}") from exc


# ----------------------------------------------------------------------------
# checkpoints


def checkpoint_bytes(u: SpectralField, t: float) -> bytes:
    head = np.array([(MAGIC, u.grid.n, u.grid.scale, float(t))], dtype=_HEADER)
    body = np.ascontiguousarray(u.coeffs, dtype="<c16")
    return head.tobytes() + body.tobytes()


def write_checkpoint(path: str | Path, u: SpectralField, t: float) -> Path:
    path = Path(path)
    _write_bytes(path, checkpoint_bytes(u, t))
    return path


def read_checkpoint(path: str | Path) -> tuple[SpectralField, float]:
    path = Path(path)
    raw = _read_bytes(path)
    if len(raw) < _HEADER.itemsize or raw[:16] != MAGIC:
        raise PersistenceError(f"{path}: not a thinfilm checkpoint")
    head = np.frombuffer(raw[:_HEADER.itemsize], dtype=_HEADER)[0]
    n = int(head["n"])
    shape = (n, n // 2 + 1)
    body = raw[_HEADER.itemsize:]
    if n <= 0 or len(body) != 16 * shape[0] * shape[1]:
        raise PersistenceError(f"{path}: truncated or inconsistent checkpoint (n={n})")
    coeffs = np.frombuffer(body, dtype="<c16").reshape(shape).astype(np.complex128)
    grid = Grid(n, _scale_name(float(head["scale"])))
    return SpectralField(grid, coeffs), float(head["t"])


# ----------------------------------------------------------------------------
# CSV


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    width = len(header)
    for row in rows:
        if len(row) != width:
            raise ValueError(f"row has {len(row)} fields, header has {width}")
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    _write_bytes(path, csv_text(header, rows).encode())
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    lines = list(csv.reader(io.StringIO(_read_bytes(path).decode())))
    if not lines:
        raise PersistenceError(f"{path}: empty CSV")
    return lines[0], lines[1:]


def write_trajectory(path: str | Path, traj: Trajectory) -> Path:
    return write_csv(path, COLUMNS, traj.rows)


def write_checkpoints(directory: str | Path, traj: Trajectory, stem: str = "ckpt") -> list[Path]:
    directory = Path(directory)
    out = []
    for i, (t, u) in enumerate(sorted(traj.checkpoints.items())):
        out.append(write_checkpoint(directory / f"{stem}_{i:05d}.bin", u, t))
    return out


# ----------------------------------------------------------------------------
# reports


def write_report(path: str | Path, report) -> Path:
    path = Path(path)
    _write_bytes(path, report.to_text().encode())
    return path


def parse_report(text: str) -> dict:
    """Inverse of RunReport.to_text: header keys plus ``metrics`` keyed by name."""
    out: dict = {"metrics": {}}
    current = out
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[metric ") and line.endswith("]"):
            current = out["metrics"].setdefault(line[8:-1], {})
            continue
        if "=" not in line:
            raise PersistenceError(f"report line {lineno}: expected key = value")
        k, v = (x.strip() for x in line.split("=", 1))
        current[k] = v
    return out


def read_report(path: str | Path) -> dict:
    return parse_report(_read_bytes(Path(path)).decode())


# ----------------------------------------------------------------------------
# plots


def write_gnuplot(path: str | Path, plots: Sequence[tuple[str, str, str, str, bool]]) -> Path:
    """Script plotting (csv, x column, y column, title, log y) panels, one png each."""
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set terminal pngcairo size 800,600"]
    for csv_name, x, y, title, logy in plots:
        stem = Path(csv_name).stem
        lines.append(f"set output '{stem}_{y}.png'")
        lines.append("set logscale y" if logy else "unset logscale y")
        lines.append(f"set title '{title}'")
        lines.append(f"plot '{csv_name}' using '{x}':'{y}' with linespoints")
    path = Path(path)
    _write_bytes(path, ("\n".join(lines) + "\n").encode())
    return path
