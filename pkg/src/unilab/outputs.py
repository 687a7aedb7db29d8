"""CSV series, binary checkpoints and run manifests."""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointCorruption, UnilabError
from .tensorspace import SpaceLayout, StateVector

TIMESERIES_HEADER = ("t", "qubit_purity", "observer_purity", "mean_x")
DISTRIBUTION_HEADER = ("x", "probability")
CHECKPOINT_MAGIC = b"UNILAB01"


class OutputError(UnilabError):
    exit_code = 1


def fmt(v: float) -> str:
    return f"{float(v):.12g}"


def _write_rows(path: Path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def timeseries_rows(record):
    return list(zip(record.times, record.qubit_purity_series, record.observer_purity_series,
                    record.mean_x_series))


def emit_timeseries_csv(record, path, prefix_rows=()) -> Path:
    """``t,qubit_purity,observer_purity,mean_x``, one row per snapshot."""
    return _write_rows(path, TIMESERIES_HEADER, list(prefix_rows) + timeseries_rows(record))


def write_timeseries_rows(rows, path) -> Path:
    return _write_rows(path, TIMESERIES_HEADER, rows)


def emit_distribution_csv(record, path) -> Path:
    return _write_rows(path, DISTRIBUTION_HEADER, zip(record.x_nodes, record.final_distribution))


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    return header, np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def checkpoint_write(state: StateVector, meta: dict, path) -> Path:
    """Binary checkpoint: magic, u32 n, u32 dims[n], u64 snapshot, f64 time, (f64 re, f64 im)*."""
    factors = state.layout.factors
    head = CHECKPOINT_MAGIC + struct.pack(f"<I{len(factors)}I", len(factors), *factors)
    head += struct.pack("<Qd", int(meta.get("snapshot", 0)), float(meta.get("time", 0.0)))
    body = np.ascontiguousarray(state.amplitudes, dtype="<c16").tobytes()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(head)
        fh.write(body)
    tmp.replace(path)
    return path


def checkpoint_read(path, expected_layout: SpaceLayout | None = None) -> tuple[StateVector, dict]:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointCorruption(f"{path}: bad magic {data[:8]!r}")
    try:
        (n,) = struct.unpack_from("<I", data, 8)
        dims = struct.unpack_from(f"<{n}I", data, 12)
        off = 12 + 4 * n
        snapshot, time = struct.unpack_from("<Qd", data, off)
    except struct.error as exc:
        raise CheckpointCorruption(f"{path}: truncated header") from exc
    off += 16
    if n == 0 or any(d < 2 for d in dims):
        raise CheckpointCorruption(f"{path}: invalid factor dims {dims}")
    total = int(np.prod(dims, dtype=np.int64))
    if len(data) - off != 16 * total:
        raise CheckpointCorruption(
            f"{path}: expected {16 * total} amplitude bytes, found {len(data) - off}"
        )
    layout = SpaceLayout(dims)
    if expected_layout is not None and layout != expected_layout:
        raise CheckpointCorruption(
            f"{path}: checkpoint dims {dims} do not match configuration {expected_layout.factors}"
        )
    amps = np.frombuffer(data, dtype="<c16", offset=off, count=total).astype(complex)
    return StateVector(amps, layout), {"snapshot": snapshot, "time": time}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, payload: dict, files) -> Path:
    payload = dict(payload)
    payload["files"] = [{"path": Path(f).name, "sha256": sha256_file(f), "bytes": Path(f).stat().st_size}
                        for f in files]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n",
                          encoding="utf-8")
    return Path(path)


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")
