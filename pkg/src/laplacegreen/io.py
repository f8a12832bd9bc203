"""CSV and JSON output with embedded provenance, and series input."""
from __future__ import annotations

import csv
import json
import math
from importlib import metadata
from pathlib import Path

import numpy as np


class CsvFormatError(ValueError):
    pass


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        # shortest round-trip repr; identical bits give identical text
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows, meta: dict) -> Path:
    """Comma-separated table preceded by ``# key: value`` metadata lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])
    return path


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_table(path) -> tuple:
    """``(header, rows)`` of a CSV written by :func:`write_csv` (comments skipped)."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise CsvFormatError(f"{path}: {e.strerror}") from None
    body = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() and not ln.startswith("#")]
    if not body:
        raise CsvFormatError(f"{path}: no header row")
    parsed = list(csv.reader([ln for _, ln in body]))
    header = [h.strip() for h in parsed[0]]
    rows = []
    for (lineno, _), cells in zip(body[1:], parsed[1:]):
        if len(cells) != len(header):
            raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise CsvFormatError(f"{path}:{lineno}: non-numeric field in {cells!r}") from None
    return header, rows


def read_series(path) -> np.ndarray:
    """Nonnegative series ``h(m)`` from a CSV with columns ``m`` and ``h`` (m = 0, 1, 2, ...)."""
    header, rows = read_table(path)
    if "m" not in header or len(header) < 2:
        raise CsvFormatError(f"{path}: need columns 'm' and 'h', got {header}")
    im = header.index("m")
    ih = header.index("h") if "h" in header else 1 - im if len(header) == 2 else None
    if ih is None:
        raise CsvFormatError(f"{path}: no 'h' column in {header}")
    if not rows:
        raise CsvFormatError(f"{path}: series is empty")
    arr = np.array(rows)
    m = arr[:, im]
    if not np.array_equal(m, np.arange(len(m))):
        raise CsvFormatError(f"{path}: column 'm' must run 0, 1, 2, ... without gaps")
    h = arr[:, ih]
    if not np.all(np.isfinite(h)) or np.any(h < 0):
        raise CsvFormatError(f"{path}: h must be finite and nonnegative")
    return h
