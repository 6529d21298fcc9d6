"""Persistent results: append-only CSV files and a control-limit cache.

Limits are stored with ``float.hex`` so a cache hit returns the exact bits
that calibration produced.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

from .calibrate import CalibrationResult
from .errors import ConfigError
from .runlength import ArlEstimate

__all__ = ["MemoryCache", "ResultsStore", "config_hash", "RESULTS_ENV"]

RESULTS_ENV = "VARCHART_RESULTS"
LIMITS_FILE = "limits.json"
CONFIGS_FILE = "configs.jsonl"


def config_hash(payload: dict) -> str:
    """Short digest of a JSON-serializable configuration."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class MemoryCache:
    """In-process limit cache with the same interface as :class:`ResultsStore`."""

    def __init__(self):
        self._data = {}

    def get(self, key):
        return self._data.get(key)

    def put(self, key, result):
        self._data[key] = result

    def __len__(self):
        return len(self._data)


def _encode(result: CalibrationResult):
    a = result.achieved_arl
    return {
        "c": float.hex(result.c),
        "arl": float.hex(a.mean),
        "std_err": float.hex(a.std_err),
        "reps": a.reps,
        "censored": a.censored,
        "cap": a.cap,
        "iterations": result.iterations,
        "xi": float.hex(result.xi),
        "rel_tol": float.hex(result.rel_tol),
    }


def _decode(entry):
    est = ArlEstimate(float.fromhex(entry["arl"]), float.fromhex(entry["std_err"]),
                      int(entry["reps"]), int(entry["censored"]), int(entry["cap"]))
    return CalibrationResult(float.fromhex(entry["c"]), est, int(entry["iterations"]), (),
                             float.fromhex(entry["xi"]), float.fromhex(entry["rel_tol"]))


class ResultsStore:
    """A results directory.

    ``get``/``put`` make the store usable as the ``cache`` argument of
    :func:`varchart.calibrate.calibrate_limit`.
    """

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._limits = None

    @classmethod
    def default_dir(cls, override=None):
        if override:
            return Path(override)
        return Path(os.environ.get(RESULTS_ENV) or "varchart-results")

    # limit cache
    def _load(self):
        if self._limits is None:
            path = self.dir / LIMITS_FILE
            self._limits = json.loads(path.read_text()) if path.exists() else {}
        return self._limits

    def get(self, key):
        entry = self._load().get(key)
        return None if entry is None else _decode(entry)

    def put(self, key, result):
        limits = self._load()
        limits[key] = _encode(result)
        tmp = self.dir / (LIMITS_FILE + ".tmp")
        tmp.write_text(json.dumps(limits, indent=1, sort_keys=True))
        os.replace(tmp, self.dir / LIMITS_FILE)

    def limit_keys(self):
        return sorted(self._load())

    # result rows
    def check_header(self, name, header):
        """True when ``<name>.csv`` is new; ConfigError when its header differs."""
        path = self.dir / f"{name}.csv"
        if not path.exists() or path.stat().st_size == 0:
            return True
        with path.open(newline="") as fh:
            existing = next(csv.reader(fh), None)
        if existing != list(header):
            raise ConfigError(f"{path} has a different header; use another results directory")
        return False

    def append(self, name, header, rows):
        """Append rows to ``<name>.csv``, writing the header on creation."""
        path = self.dir / f"{name}.csv"
        fresh = self.check_header(name, header)
        with path.open("a", newline="") as fh:
            w = csv.writer(fh)
            if fresh:
                w.writerow(header)
            w.writerows(rows)
        return path

    def read(self, name):
        path = self.dir / f"{name}.csv"
        if not path.exists():
            return []
        with path.open(newline="") as fh:
            return list(csv.DictReader(fh))

    def record_config(self, digest, payload):
        """Keep the full configuration behind a hash, once."""
        path = self.dir / CONFIGS_FILE
        if path.exists():
            with path.open() as fh:
                for line in fh:
                    if line.strip() and json.loads(line).get("config_hash") == digest:
                        return
        with path.open("a") as fh:
            fh.write(json.dumps({"config_hash": digest, "config": payload}, sort_keys=True) + "\n")

    def config(self, digest):
        path = self.dir / CONFIGS_FILE
        if path.exists():
            with path.open() as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        if rec.get("config_hash") == digest:
                            return rec["config"]
        return None
