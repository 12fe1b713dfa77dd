"""Output files: trajectory CSV, tables, JSON documents and the run manifest.

Text files are UTF-8 with ``\\n`` line endings; floats use the shortest
round-trip representation; JSON keys are sorted.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(obj, path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dumps_json(obj), encoding="utf-8", newline="\n")
    return p


def write_table(rows: list, columns: list, path, fmt: str = "csv") -> Path:
    """Write a list of dicts as CSV (header row) or as a JSON array."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        return write_json([{c: r[c] for c in columns} for r in rows], p)
    with p.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return p


def write_trajectories(batch, path, fmt: str = "csv") -> Path:
    """Columns ``path_id, t, x_1..x_d``; one row per path and recorded time."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    d = batch.paths.shape[2]
    if fmt == "json":
        return write_json({"times": batch.times.tolist(), "paths": batch.paths.tolist(),
                           "scheme": batch.scheme, "seed": batch.seed}, p)
    with p.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["path_id", "t"] + [f"x_{k + 1}" for k in range(d)]) + "\n")
        times = [repr(float(t)) for t in batch.times]
        for i in range(batch.paths.shape[0]):
            rows = batch.paths[i].tolist()
            fh.write("".join(f"{i},{times[k]}," + ",".join(map(repr, row)) + "\n" for k, row in enumerate(rows)))
    return p


def read_trajectories(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_trajectories` for CSV: returns ``(times, paths)``."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[:2] != ["path_id", "t"]:
            raise ValueError("not a trajectory file")
        rows = [list(map(float, row)) for row in r]
    arr = np.asarray(rows)
    ids = arr[:, 0].astype(int)
    n_paths = ids.max() + 1
    n_times = arr.shape[0] // n_paths
    times = arr[:n_times, 1]
    paths = arr[:, 2:].reshape(n_paths, n_times, -1)
    return times, paths


def config_hash(doc: dict) -> str:
    """SHA-256 of the canonical JSON form, insensitive to key order."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    seed: int
    config_hash: str
    version: str = __version__
    argv: list = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: list = field(default_factory=list)

    def finish(self):
        self.finished = _now()

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, out_dir) -> Path:
        return write_json(self.to_dict(), Path(out_dir) / "manifest.json")
