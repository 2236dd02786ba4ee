"""Deterministic CSV and JSON writers; floats always carry 17 significant digits."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return "%.17g" % x
    return str(x)


def provenance(subcommand: str, config_hash: str, seed: int) -> str:
    return f"# mixedbn {__version__} subcommand={subcommand} config_sha256={config_hash} seed={seed}"


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence], comment: str) -> None:
    buf = io.StringIO()
    buf.write(comment + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def _json(obj, indent: int) -> str:
    pad = " " * indent
    inner = " " * (indent + 2)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{_json_str(str(k))}: {_json(v, indent + 2)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_json(v, indent) for v in seq) + "]"
        return "[\n" + ",\n".join(inner + _json(v, indent + 2) for v in seq) + "\n" + pad + "]"
    if isinstance(obj, str):
        return _json_str(obj)
    if obj is None:
        return "null"
    if isinstance(obj, (float, np.floating)) and not math.isfinite(float(obj)):
        return "null"  # JSON has no inf/nan
    return fmt(obj)


def _json_str(s: str) -> str:
    return json.dumps(s)


def dumps_json(obj) -> str:
    return _json(obj, 0) + "\n"


def write_json(path: Path, obj) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8", newline="\n")
