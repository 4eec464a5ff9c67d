"""Container files (one-line JSON header + little-endian complex payload) and %.17g CSV output."""
from __future__ import annotations

import csv
import json
import os
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .medium import Grid3, RefractiveIndex

MAGIC = "scatterlab-container"
LAYOUT = "re,im interleaved"
DTYPE = "<f8"


def write_container(path, field: str, data: np.ndarray, meta: dict | None = None,
                    grid: Grid3 | None = None, digest: str = "") -> None:
    """Header line (JSON, sorted keys) then the complex payload as interleaved little-endian float64."""
    data = np.ascontiguousarray(data, dtype=complex)
    header = {"format": MAGIC, "version": 1, "field": field, "shape": list(data.shape),
              "layout": LAYOUT, "dtype": DTYPE, "config_digest": digest, "meta": meta or {}}
    if grid is not None:
        header["grid"] = grid.describe()
    raw = data.view(np.float64).astype(DTYPE, copy=False).tobytes()
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(raw)


def read_container(path) -> tuple[dict, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            line = fh.readline()
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read container {path}: {exc.strerror}") from exc
    try:
        header = json.loads(line)
    except ValueError:
        raise ConfigError(f"{path}: missing or malformed container header") from None
    if not isinstance(header, dict) or header.get("format") != MAGIC:
        raise ConfigError(f"{path}: not a scatterlab container")
    if header.get("layout") != LAYOUT or header.get("dtype") != DTYPE:
        raise ConfigError(f"{path}: unsupported payload layout")
    shape = tuple(header["shape"])
    n = int(np.prod(shape)) * 2
    flat = np.frombuffer(raw, dtype=DTYPE)
    if flat.size != n:
        raise ConfigError(f"{path}: payload has {flat.size} values, header promises {n}")
    data = flat.astype(np.float64).view(complex).reshape(shape)
    return header, data


def save_phantom(path, n: RefractiveIndex, digest: str = "") -> None:
    meta = {"r1": n.support_radius, "m": n.smoothness, "norm_budget": n.norm_budget}
    write_container(path, "refractive_index", n.samples, meta, n.grid, digest)


def load_phantom(path) -> RefractiveIndex:
    header, data = read_container(path)
    if header.get("field") != "refractive_index" or "grid" not in header:
        raise ConfigError(f"{path}: container does not hold a refractive index")
    g = header["grid"]
    grid = Grid3(float(g["L"]), int(g["Nx"]))
    meta = header["meta"]
    return RefractiveIndex(grid, data.copy(), float(meta["r1"]), int(meta["m"]), meta.get("norm_budget"))


# ------------------------------------------------------------------- CSV

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], digest: str | None = None) -> None:
    """Header row first (after an optional '# config_digest=' comment); floats as %.17g."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if digest is not None:
            fh.write(f"# config_digest={digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            if len(r) != len(columns):
                raise ValueError(f"row has {len(r)} cells, header has {len(columns)}")
            w.writerow([_cell(v) for v in r])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
