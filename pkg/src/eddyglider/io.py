"""CSV/JSON readers and writers for fields, sample sets and tracks."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .geo import Dataset, GridSpec, GriddedField3D, Region

COLUMNS = ("lon", "lat", "depth", "value")
_FMT = "%.17g"   # enough digits for an exact float round trip


class FormatError(ValueError):
    """Malformed input file; the message names the file and the row or column."""


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_json(path, obj) -> None:
    """Write JSON atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, indent=2, default=_json_default)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _write_rows(path, header, arr) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        if len(arr):
            np.savetxt(fh, np.asarray(arr, dtype=float), fmt=_FMT, delimiter=",")


def _read_rows(path, required) -> np.ndarray:
    """Parse a numeric CSV; returns columns in ``required`` order as an (n, k) array."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file, expected header {','.join(required)}") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise FormatError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [header.index(c) for c in required]
        rows = []
        for i, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
            try:
                vals = [float(row[c]) for c in cols]
            except ValueError:
                raise FormatError(f"{path}: row {i} has a non-numeric value") from None
            if not all(np.isfinite(vals)):
                raise FormatError(f"{path}: row {i} has a non-finite value")
            rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, len(required))


def store_field(f: GriddedField3D, path) -> Path:
    """Field CSV (node order lon-major, then lat, then depth) plus JSON sidecar."""
    path = Path(path)
    nodes = f.nodes()
    _write_rows(path, COLUMNS, np.column_stack([nodes, f.values.ravel()]))
    write_json(sidecar_path(path), {"name": f.name, "region": f.region.to_dict(),
                                    "grid": f.spec.to_dict()})
    return path


def load_field(path) -> GriddedField3D:
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise FormatError(f"{path}: sidecar {side.name} not found")
    meta = read_json(side)
    try:
        region = Region.from_dict(meta["region"])
        spec = GridSpec.from_dict(meta["grid"])
    except KeyError as exc:
        raise FormatError(f"{side}: missing key {exc.args[0]!r}") from None
    data = _read_rows(path, COLUMNS)
    if len(data) != spec.size:
        raise FormatError(f"{path}: {len(data)} rows but the grid has {spec.size} nodes")
    nodes = spec.nodes(region)
    off = np.abs(data[:, :3] - nodes) > 1e-6 * np.maximum(1.0, np.abs(nodes))
    if off.any():
        i = int(np.argmax(off.any(axis=1)))
        raise FormatError(f"{path}: row {i + 1} coordinates {data[i, :3].tolist()} do not match "
                          f"grid node {nodes[i].tolist()}")
    return GriddedField3D(region, spec, data[:, 3].reshape(spec.shape), meta.get("name", "value"))


def store_dataset(d: Dataset, path) -> Path:
    _write_rows(path, COLUMNS, np.column_stack([d.X, d.y]) if len(d) else np.empty((0, 4)))
    return Path(path)


def load_dataset(path) -> Dataset:
    data = _read_rows(path, COLUMNS)
    if len(data) == 0:
        return Dataset.empty()
    return Dataset(data[:, :3], data[:, 3])


def store_track(rows, path, header=("t", "lon", "lat", "depth")) -> Path:
    _write_rows(path, header, rows)
    return Path(path)


def load_track(path, header=("t", "lon", "lat", "depth")) -> np.ndarray:
    return _read_rows(path, header)


def store_table(path, header, rows) -> Path:
    """Generic CSV writer for mixed text/number rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path
