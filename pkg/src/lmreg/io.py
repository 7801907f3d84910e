"""Landmark CSV files, canonical JSON documents, and atomic writes."""

import csv
import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError


def _fmt(x):
    return repr(float(x))


def write_landmarks(path, points, ids=None):
    """Write ``id,x,y[,z]`` rows (header included) with round-trip float formatting."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise InvalidArgumentError(f"landmarks must have shape (N, 2) or (N, 3), got {pts.shape}")
    ids = list(range(1, len(pts) + 1)) if ids is None else list(ids)
    cols = ["id", "x", "y", "z"][: pts.shape[1] + 1]
    lines = [",".join(cols)]
    lines += [",".join([str(i)] + [_fmt(c) for c in row]) for i, row in zip(ids, pts)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_landmarks(path, dim=None):
    """Read a landmark CSV into an (N, 2) or (N, 3) float array.

    A header row is optional. Errors name the offending line and column.
    """
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and row[0].strip().lower() == "id":
                continue
            if len(row) not in (3, 4):
                raise InvalidArgumentError(
                    f"{path}:{lineno}: expected 3 or 4 fields (id,x,y[,z]), got {len(row)}")
            values = []
            for name, cell in zip("xyz", row[1:]):
                try:
                    val = float(cell)
                except ValueError:
                    raise InvalidArgumentError(
                        f"{path}:{lineno}: field {name!r} is not a number: {cell!r}") from None
                if not np.isfinite(val):
                    raise InvalidArgumentError(f"{path}:{lineno}: field {name!r} is not finite")
                values.append(val)
            rows.append(values)
    if not rows:
        raise InvalidArgumentError(f"{path}: no landmarks found")
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise InvalidArgumentError(f"{path}: rows mix 2-D and 3-D coordinates")
    arr = np.array(rows)
    if dim is not None and arr.shape[1] != dim:
        raise InvalidArgumentError(f"{path}: expected {dim}-D landmarks, got {arr.shape[1]}-D")
    return arr


def dumps(doc):
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def config_hash(config):
    """Short stable digest of a normalised (JSON-serialisable) config."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def atomic_write_bytes(path, data):
    """Write via a temp file in the target directory and rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, doc):
    atomic_write_text(path, dumps(doc))


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{path}:{exc.lineno}: malformed JSON: {exc.msg}") from None
