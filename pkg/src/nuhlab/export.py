"""Plain-text outputs: CSV at 17 significant digits, JSON manifests, flat key=value configs."""
from __future__ import annotations

import csv
import json

import numpy as np


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def coord_columns(d: int) -> list:
    """x, y for surfaces, x1..xd otherwise."""
    return ["x", "y"] if d == 2 else [f"x{i + 1}" for i in range(d)]


def exponent_columns(d: int) -> list:
    return [f"lambda_{i + 1}" for i in range(d)]


def write_csv(path, header, rows):
    """Write rows of numbers; floats use '.17g' so values round-trip exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, np.array([[float(v) for v in row] for row in r])


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def write_manifest(path, payload: dict):
    with open(path, "w") as fh:
        json.dump(_plain(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def parse_flat_config(text: str) -> dict:
    """``key = value`` lines; '#' starts a comment; later keys override earlier ones."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected key=value, got {raw!r}")
        k, v = (t.strip() for t in line.split("=", 1))
        out[k] = v
    return out
