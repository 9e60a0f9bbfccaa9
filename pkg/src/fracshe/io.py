"""Run directories: CSV tables, JSON documents, raw arrays and the manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np

OUTPUT_ROOT_ENV = "FRACSHE_OUTPUT_ROOT"
FORMAT_VERSION = 1


def output_root(override: str | os.PathLike | None = None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class RunDirectory:
    """Append-only output directory for one run.

    The directory is ``<root>/<hash[:12]>-<UTC timestamp>``.  Every file is
    written through this object so the manifest can list it.
    """

    def __init__(self, config_hash: str, root=None, stamp: str | None = None):
        stamp = stamp or time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
        self.config_hash = config_hash
        self.path = output_root(root) / f"{config_hash[:12]}-{stamp}"
        suffix = 1
        base = self.path
        while self.path.exists():
            self.path = base.with_name(f"{base.name}-{suffix}")
            suffix += 1
        self.path.mkdir(parents=True)
        self.files: list[str] = []

    def _register(self, name: str) -> Path:
        p = self.path / name
        p.parent.mkdir(parents=True, exist_ok=True)
        if name not in self.files:
            self.files.append(name)
        return p

    def write_json(self, name: str, obj) -> Path:
        p = self._register(name)
        dump_json(obj, p)
        return p

    def write_csv(self, name: str, header, rows) -> Path:
        p = self._register(name)
        with open(p, "w", newline="") as f:
            w = csv.writer(f, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(x) for x in r])
        return p

    def write_array(self, name: str, array: np.ndarray, **meta) -> Path:
        """Little-endian contiguous binary plus a ``.json`` sidecar describing it."""
        a = np.ascontiguousarray(array)
        le = a.astype(a.dtype.newbyteorder("<"), copy=False)
        p = self._register(name + ".bin")
        le.tofile(p)
        side = {"format_version": FORMAT_VERSION, "dtype": le.dtype.str, "shape": list(a.shape),
                "order": "C", "config_hash": self.config_hash}
        side.update(meta)
        self.write_json(name + ".json", side)
        return p

    def write_manifest(self, complete: bool, note: str | None = None) -> Path:
        entries = [{"file": n, "sha256": sha256_file(self.path / n), "bytes": (self.path / n).stat().st_size}
                   for n in sorted(self.files)]
        doc = {"format_version": FORMAT_VERSION, "config_hash": self.config_hash,
               "complete": bool(complete), "files": entries}
        if note:
            doc["note"] = note
        p = self.path / "MANIFEST.json"
        dump_json(doc, p)
        return p


def read_array(path) -> np.ndarray:
    """Load an array written by :meth:`RunDirectory.write_array` (path of the ``.bin``)."""
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    return np.fromfile(path, dtype=np.dtype(side["dtype"])).reshape(side["shape"])


def verify_manifest(run_path) -> list:
    """Files whose checksum no longer matches the manifest."""
    run_path = Path(run_path)
    doc = json.loads((run_path / "MANIFEST.json").read_text())
    return [e["file"] for e in doc["files"] if sha256_file(run_path / e["file"]) != e["sha256"]]


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x
