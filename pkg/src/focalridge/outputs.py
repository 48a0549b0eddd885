"""File formats: CSV input tables, CSV/JSON outputs, run manifests.

Floats are written with ``repr`` (shortest round-trip decimal, always '.'
as separator, independent of locale). NaN is written as ``nan`` in CSV and
``null`` in JSON.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataValidationError

MANIFEST_NAME = "manifest.json"


def read_csv_table(path: str | Path) -> dict[str, list[str]]:
    """Read a UTF-8, header-first, RFC-4180 CSV into columns of raw strings."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file, expected a header row") from None
        if len(set(header)) != len(header):
            raise DataValidationError(f"{path}: duplicate column names in header")
        cols: dict[str, list[str]] = {h: [] for h in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataValidationError(
                    f"{path}: line {lineno} has {len(row)} fields, header has {len(header)}"
                )
            for h, v in zip(header, row):
                cols[h].append(v)
    return cols


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def format_number(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(value)


def to_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str] | None = None) -> str:
    columns = list(columns or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_number(row[c]) for c in columns])
    return buf.getvalue()


def jsonable(obj: Any) -> Any:
    """Recursively convert numpy types and NaN into plain JSON values."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    return obj


def to_json(obj: Any) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=False, allow_nan=False) + "\n"


def build_manifest(
    command: str,
    config: Mapping[str, Any],
    inputs: Iterable[str | Path] = (),
    seed: int | None = None,
    extra: Mapping[str, Any] | None = None,
) -> dict:
    from . import __version__

    manifest = {
        "command": command,
        "config": dict(config),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "seed": seed,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_outputs(out_dir: str | Path, files: Mapping[str, str]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8", newline="")
