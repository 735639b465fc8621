"""CSV and JSON emitters. Floats are written with ``repr`` so they round-trip exactly."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_timeseries(path, taus, columns: dict) -> Path:
    """``tau`` followed by one column per named series."""
    names = list(columns)
    rows = zip(taus, *(columns[n] for n in names))
    return write_csv(path, ["tau", *names], rows)


def write_distribution(path, probabilities, tau=None) -> Path:
    """``photon_number, probability`` (single snapshot) or with a leading ``tau`` column.

    For the long form pass ``tau`` as a list aligned with a list of arrays.
    """
    if tau is None:
        return write_csv(path, ["photon_number", "probability"], enumerate(probabilities))
    rows = ((t, m, p) for t, probs in zip(tau, probabilities) for m, p in enumerate(probs))
    return write_csv(path, ["tau", "photon_number", "probability"], rows)


def write_wigner(path, grid) -> Path:
    pts = np.asarray(grid.points).ravel()
    vals = np.asarray(grid.values).ravel()
    return write_csv(path, ["re_alpha", "im_alpha", "w"], zip(pts.real, pts.imag, vals))


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(x) for x in row] for row in r])
    return header, data


def write_json_atomic(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
