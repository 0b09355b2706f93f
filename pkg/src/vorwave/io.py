"""File formats: JSON records, JSON-lines branches and CSV tables.

Every float is written with 17 significant digits so values survive a round
trip bit for bit.  Each writer has a matching reader.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .residual import PhysicalParams, WaveState
from .spectral import PeriodicFunction

__all__ = [
    "dumps",
    "read_branch",
    "read_csv_table",
    "read_field",
    "read_json",
    "state_from_record",
    "state_record",
    "write_branch",
    "write_csv_table",
    "write_field",
    "write_json",
]


def _float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, ".17g")
    if not any(ch in text for ch in ".en"):
        text += ".0"
    return text


def dumps(obj) -> str:
    """Compact JSON with ``.17g`` floats; key order is preserved."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: Path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path: Path):
    return json.loads(Path(path).read_text())


# -- wave states and branches ----------------------------------------------------


def state_record(state: WaveState, **extra) -> dict:
    rec = {
        "params": state.params.to_record(),
        "s": state.amplitude(1),
        "lambda": state.lam,
        "mu": state.mu,
        "m": state.m,
        "Q": state.Q,
    }
    rec.update(extra)
    rec["w"] = state.w.to_record()
    return rec


def state_from_record(record: dict) -> WaveState:
    return WaveState(
        PhysicalParams.from_record(record["params"]),
        float(record["lambda"]),
        float(record["mu"]),
        PeriodicFunction.from_record(record["w"]),
    )


def write_branch(path: Path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")


def read_branch(path: Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- grid fields -----------------------------------------------------------------


def write_field(path: Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """``meta`` plus named 2-D arrays flattened row-major under ``shape``."""
    shapes = {arr.shape for arr in arrays.values()}
    if len(shapes) != 1:
        raise ValueError(f"field arrays disagree in shape: {shapes}")
    (shape,) = shapes
    rec = dict(meta)
    rec["shape"] = list(shape)
    for name, arr in arrays.items():
        rec[name] = np.ascontiguousarray(arr, dtype=float).ravel().tolist()
    write_json(path, rec)


def read_field(path: Path) -> tuple[dict, dict[str, np.ndarray]]:
    rec = read_json(path)
    shape = tuple(rec.pop("shape"))
    size = int(np.prod(shape))
    arrays, meta = {}, {}
    for key, value in rec.items():
        if isinstance(value, list) and len(value) == size and all(
            isinstance(v, (int, float)) for v in value
        ):
            arrays[key] = np.asarray(value, dtype=float).reshape(shape)
        else:
            meta[key] = value
    return meta, arrays


# -- CSV tables ------------------------------------------------------------------


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return _float(float(value))
    return str(value)


def write_csv_table(path: Path, columns: dict[str, list], header: dict | None = None) -> None:
    """CSV with optional ``# key=value`` metadata lines before the column row."""
    buf = io.StringIO()
    for key, value in (header or {}).items():
        buf.write(f"# {key}={_cell(value) if value is not None else 'none'}\n")
    writer = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    writer.writerow(names)
    for row in zip(*(columns[n] for n in names)):
        writer.writerow([_cell(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv_table(path: Path) -> tuple[dict, dict[str, np.ndarray]]:
    header, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            header[key] = None if value == "none" else float(value)
        elif line:
            body.append(line)
    rows = list(csv.reader(body))
    names = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(names))
    return header, {name: data[:, i] for i, name in enumerate(names)}
