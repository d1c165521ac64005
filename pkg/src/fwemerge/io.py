"""CSV tables and JSON run manifests.

Floats are written with ``repr`` so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import platform
import sys
from os import PathLike
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy

from . import __version__
from .kernels import BACKEND


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path: str | PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_csv(header, rows), encoding="utf-8")
    return path


def read_csv(path: str | PathLike) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def environment_info() -> dict:
    """Versions that determine numerical output."""
    return {
        "fwemerge": __version__,
        "kernel_backend": BACKEND,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def write_manifest(path: str | PathLike, command: str, config: Mapping, seeds: Mapping,
                   outputs: Sequence[str | PathLike], extra: Mapping | None = None) -> Path:
    """Record the full configuration, seeds, software versions and output files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "config": _jsonable(config),
        "seeds": _jsonable(seeds),
        "environment": environment_info(),
        "outputs": sorted(Path(p).name for p in outputs),
    }
    if extra:
        doc["results"] = _jsonable(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
