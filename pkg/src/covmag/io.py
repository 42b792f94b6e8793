"""Atomic CSV/JSON output and CSV reading."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

SHOT_COLUMNS = ("shot", "tag", "photons", "seed_index", "point")


def _atomic_write(path: Path, text: str) -> None:
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


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def shot_csv_text(shots) -> str:
    """Per-shot table as CSV with columns :data:`SHOT_COLUMNS`."""
    n = shots.photons.shape[0]
    point = shots.point if shots.point is not None else np.zeros(n, dtype=np.int64)
    labels = np.asarray(shots.labels)[shots.tag]
    lines = ["%d,%s,%d,%d,%d" % r for r in zip(range(n), labels, shots.photons, shots.seed_index, point)]
    return ",".join(SHOT_COLUMNS) + "\n" + "".join(line + "\n" for line in lines)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n"


def write_outputs(out_dir, files: Mapping[str, str]) -> list[Path]:
    """Write every file atomically; nothing is written unless all contents are ready."""
    out_dir = Path(out_dir)
    paths = []
    for name, text in files.items():
        p = out_dir / name
        _atomic_write(p, text)
        paths.append(p)
    return paths


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns of a CSV written by this module; numeric columns become arrays of numbers."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        try:
            arr = np.array([int(v) for v in col])
        except ValueError:
            try:
                arr = np.array([float(v) for v in col])
            except ValueError:
                arr = np.array(col)
        out[name] = arr
    return out
