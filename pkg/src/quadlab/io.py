"""Report writers and the all-or-nothing output directory."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import shutil
import tempfile
from datetime import datetime, timezone
from pathlib import Path

MANIFEST_FORMAT_VERSION = 1
TIMESTAMP_FIELDS = ("started_at", "finished_at")
TRAINING_LOG_COLUMNS = ("timestep", "episode", "episode_return", "critic_loss", "actor_loss")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_training_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAINING_LOG_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in TRAINING_LOG_COLUMNS])


def write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunOutputs:
    """Stage outputs in a temporary directory and publish them only on success.

    Use as a context manager; files are written under :attr:`staging` via
    :meth:`path`.  On a clean exit every staged file is renamed into the
    destination together with ``manifest.json``; on an exception the staging
    directory is removed and the destination is left untouched.
    """

    def __init__(self, out_dir, subcommand: str, config: dict):
        self.out_dir = Path(out_dir)
        self.subcommand = subcommand
        self.config = config
        self.files = []
        self.started_at = None

    def __enter__(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out_dir))
        self.started_at = now_iso()
        return self

    def path(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.staging / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        return p

    def manifest(self) -> dict:
        blob = json.dumps({"subcommand": self.subcommand, "config": self.config}, sort_keys=True)
        return {
            "format_version": MANIFEST_FORMAT_VERSION,
            "run_id": hashlib.sha256(blob.encode()).hexdigest()[:16],
            "subcommand": self.subcommand,
            "seed": self.config.get("seed"),
            "config": self.config,
            "outputs": sorted(self.files),
            "started_at": self.started_at,
            "finished_at": now_iso(),
            "timestamp_fields": list(TIMESTAMP_FIELDS),
        }

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                missing = [f for f in self.files if not (self.staging / f).exists()]
                if missing:
                    raise FileNotFoundError(f"declared outputs were not written: {missing}")
                (self.staging / "manifest.json").write_text(dump_json(self.manifest()))
                for name in self.files + ["manifest.json"]:
                    os.replace(self.staging / name, self.out_dir / name)
        finally:
            shutil.rmtree(self.staging, ignore_errors=True)
        return False
