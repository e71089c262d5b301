"""CSV/JSON emitters.  Every artifact starts with the tool version and the run
config; nothing time-dependent is written, so identical configs give identical bytes."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__


def plain(obj):
    """Recursively convert to JSON-safe values: complex -> [re, im], Fraction -> "p/q"."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [plain(obj.real), plain(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps_json(config: dict, payload: dict) -> str:
    doc = {"marytree": __version__, "config": plain(config)}
    doc.update(plain(payload))
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def _cell(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def dumps_csv(config: dict, tables: dict) -> str:
    """tables maps name -> (columns, rows); complex cells must already be split."""
    buf = io.StringIO()
    buf.write(f"# marytree {__version__}\n")
    buf.write("# config: " + json.dumps(plain(config), sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    for i, (name, (columns, rows)) in enumerate(tables.items()):
        if len(tables) > 1:
            if i:
                buf.write("\n")
            buf.write(f"# table: {name}\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def split_complex(columns, rows, complex_cols):
    """Replace each named complex column with <name>_re, <name>_im."""
    idx = [columns.index(c) for c in complex_cols]
    cols = []
    for i, c in enumerate(columns):
        cols.extend([f"{c}_re", f"{c}_im"] if i in idx else [c])
    out = []
    for row in rows:
        r = []
        for i, v in enumerate(row):
            if i in idx:
                v = complex(v)
                r.extend([v.real, v.imag])
            else:
                r.append(v)
        out.append(r)
    return cols, out


def emit(text: str, path=None):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def read_metadata(path) -> dict:
    """Config recorded in a CSV or JSON artifact."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return json.loads(text)["config"]
    for line in text.splitlines():
        if line.startswith("# config: "):
            return json.loads(line[len("# config: "):])
    raise ValueError(f"{path}: no config header")
