"""Run artifacts: manifest.json, series.csv and summary.csv, plus dt-study output."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import ConfigError
from .sim import RunConfig, RunRecord, TaskGraph

MANIFEST_SCHEMA = "curricsim.manifest/1"
SERIES_COLUMNS = ("round", "task_id", "skill", "p_true", "p_fast", "p_slow", "lp_bi", "lp_uni",
                  "pi", "in_exploration_set")
SUMMARY_COLUMNS = ("round", "discovered_count")
DT_COLUMNS = ("delta_t", "analytic_err2", "empirical_err2", "empirical_stderr")


def code_version() -> str:
    return f"curricsim {__version__}"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def graph_fingerprint(graph: TaskGraph) -> str:
    doc = [{k: v for k, v in t.items() if k != "name"} for t in graph.to_config()]
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def load_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse a run config, or the ``config`` block of a manifest."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                          source) from None
    if isinstance(doc, dict) and doc.get("schema") == MANIFEST_SCHEMA:
        doc = doc["config"]
    return RunConfig.from_dict(doc)


def load_config(path: str | os.PathLike) -> RunConfig:
    return load_config_text(Path(path).read_text(), str(path))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_series(record: RunRecord, path: Path) -> None:
    cols = [record.skill, record.p_true, record.p_fast, record.p_slow, record.lp_bi,
            record.lp_uni, record.pi]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for row, t in enumerate(record.snapshot_rounds):
            for i in range(record.graph.task_count):
                w.writerow([int(t), i] + [_fmt(c[row, i]) for c in cols]
                           + [int(record.in_exploration_set[row, i])])


def write_summary(record: RunRecord, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for t, d in enumerate(record.discovered):
            w.writerow([t, int(d)])


def write_run(record: RunRecord, config: RunConfig, out_dir: str | os.PathLike,
              started_at: str | None = None) -> Path:
    """Write the three run artifacts into ``out_dir`` (created if needed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_series(record, out / "series.csv")
    write_summary(record, out / "summary.csv")
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "code_version": code_version(),
        "seed": config.seed,
        "treatment": record.treatment.name,
        "graph_fingerprint": graph_fingerprint(config.graph),
        "started_at": started_at or utc_now(),
        "finished_at": utc_now(),
        "artifacts": {"series": "series.csv", "summary": "summary.csv"},
        "config": config.to_dict(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return out


@dataclass
class RunArtifacts:
    """A completed run read back from disk."""

    path: Path
    manifest: dict[str, Any]
    rounds: np.ndarray
    discovered: np.ndarray
    snapshot_rounds: np.ndarray
    p_true: np.ndarray
    pi: np.ndarray

    @property
    def name(self) -> str:
        return self.path.name

    @property
    def fingerprint(self) -> str:
        return self.manifest["graph_fingerprint"]


def read_run(path: str | os.PathLike) -> RunArtifacts:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise ConfigError(f"unsupported manifest schema {manifest.get('schema')!r}",
                          str(path / "manifest.json"))
    summary = np.loadtxt(path / "summary.csv", delimiter=",", skiprows=1, dtype=np.int64,
                         ndmin=2)
    with open(path / "series.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != SERIES_COLUMNS:
            raise ConfigError(f"unexpected series header {header}", str(path / "series.csv"))
        rows = list(reader)
    n_tasks = len(manifest["config"]["tasks"])
    table = np.array([[float(v) for v in r] for r in rows]).reshape(-1, n_tasks, len(header))
    idx = {c: k for k, c in enumerate(SERIES_COLUMNS)}
    return RunArtifacts(path, manifest, summary[:, 0], summary[:, 1],
                        table[:, 0, idx["round"]].astype(np.int64),
                        table[:, :, idx["p_true"]], table[:, :, idx["pi"]])


def write_dt_study(result: dict[str, Any], out_dir: str | os.PathLike) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "dt.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DT_COLUMNS)
        for row in zip(*(result[c] if c != "delta_t" else result["grid"] for c in DT_COLUMNS)):
            w.writerow([_fmt(v) for v in row])
    json_path = out / "dt_summary.json"
    json_path.write_text(json.dumps(result["summary"], indent=1) + "\n")
    return csv_path, json_path
