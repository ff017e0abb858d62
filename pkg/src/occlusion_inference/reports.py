"""CSV and JSON report artifacts plus the run manifest."""

from __future__ import annotations

import csv
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .evaluation import CATEGORIES, COUNTING_NOTE, Category, DistanceBinReport, ScatterData

BIN_COLUMNS = ("range", "agent_pct", "obstacle_pct", "incorrect_pct", "unseen_pct", "n")
SCATTER_COLUMNS = ("cost", "error", "category", "robot_distance")


def _pct(v: float | None) -> str:
    return "" if v is None else f"{v:.2f}"


def write_bins_csv(report: DistanceBinReport, path: str | Path) -> Path:
    """One row per distance bin; percentages are blank for empty bins."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BIN_COLUMNS)
        for row in report.rows:
            w.writerow([
                row.label,
                _pct(row.pct(Category.AGENT)),
                _pct(row.pct(Category.OBSTACLE)),
                _pct(row.pct(Category.INCORRECT)),
                _pct(row.pct(Category.UNSEEN)),
                row.n,
            ])
    return path


def write_scatter_csv(data: ScatterData, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCATTER_COLUMNS)
        for r in data.records:
            err = repr(r.error) if r.error != float("inf") else "inf"
            w.writerow([repr(r.cost), err, r.category.value, repr(r.robot_distance)])
    return path


def decile_table(data: ScatterData) -> dict:
    return {c.value: list(data.decile_means[c]) for c in CATEGORIES}


def _finite(obj):
    # strict JSON has no infinities
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def write_summary_json(summary: dict, data: ScatterData, path: str | Path) -> Path:
    payload = dict(summary)
    payload["decile_mean_error"] = decile_table(data)
    payload.setdefault("counting", COUNTING_NOTE)
    path = Path(path)
    path.write_text(json.dumps(_finite(payload), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


@dataclass
class RunManifest:
    """Everything needed to reproduce a run; written before any result."""

    command: str
    config: dict
    seeds: Sequence[int]
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    version: str = __version__
    python: str = field(default_factory=platform.python_version)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seeds": list(self.seeds),
            "artifacts": dict(self.artifacts),
            "timings": dict(self.timings),
            "version": self.version,
            "python": self.python,
        }

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path
