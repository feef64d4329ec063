"""Deterministic, atomic file output (CSV text and JSON)."""

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path


def atomic_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def atomic_json(path, payload) -> None:
    atomic_text(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_rows(path, header, rows) -> None:
    """CSV with ``repr`` floats so values round-trip exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else repr(_num(v)) for v in row])
    atomic_text(path, buf.getvalue())


def _num(v):
    if v is None:
        return float("nan")
    if hasattr(v, "item"):
        v = v.item()
    return v
