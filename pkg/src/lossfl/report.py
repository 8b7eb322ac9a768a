"""Fairness statistics and CSV output.  All accuracies are in percent."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_COLUMNS = ["round", "sample_acc", "avg_client_acc", "best10", "worst10", "variance",
               "personalized_acc", "global_acc", "sim_time"]

SUMMARY_COLUMNS = ["algorithm", "dataset", "eligible_ratio", "loss_ratio", "sample_acc",
                   "average", "best10", "worst10", "variance", "status"]


@dataclass(frozen=True)
class FairnessStats:
    average: float
    best10: float
    worst10: float
    variance: float


@dataclass
class RoundRecord:
    round: int
    sample_accuracy: float
    per_client_accuracy: np.ndarray = field(repr=False)
    fairness: FairnessStats
    personalized_accuracy: float | None = None
    global_accuracy_pfedme: float | None = None
    sim_time: float | None = None


def fairness_stats(per_client_accuracy) -> FairnessStats:
    """Mean, mean of the best/worst ``ceil(N/10)`` clients, population variance."""
    acc = np.sort(np.asarray(per_client_accuracy, dtype=float))
    if acc.size == 0:
        raise ValueError("no client accuracies")
    k = math.ceil(0.1 * acc.size)
    return FairnessStats(
        average=float(acc.mean()),
        best10=float(acc[-k:].mean()),
        worst10=float(acc[:k].mean()),
        variance=float(acc.var()),
    )


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def _atomic_write(path: Path, rows: list[list[str]]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_csv(records: list[RoundRecord], path: str | Path) -> Path:
    rows = [CSV_COLUMNS]
    for r in records:
        f = r.fairness
        rows.append([str(r.round), _fmt(r.sample_accuracy), _fmt(f.average), _fmt(f.best10),
                     _fmt(f.worst10), _fmt(f.variance), _fmt(r.personalized_accuracy),
                     _fmt(r.global_accuracy_pfedme), _fmt(r.sim_time)])
    _atomic_write(Path(path), rows)
    return Path(path)


def read_csv(path: str | Path) -> list[dict[str, float | int | None]]:
    """Parse a per-round CSV back into dicts (blank cells become None)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [{k: (int(v) if k == "round" else (float(v) if v else None)) for k, v in row.items()}
                for row in reader]


def summarize_final(records: list[RoundRecord], algorithm: str = "", dataset: str = "",
                    eligible_ratio: float | None = None, loss_ratio: float | None = None) -> dict:
    """Final-round fairness statistics and sample accuracy for one cell."""
    if not records:
        raise ValueError("need at least one round record")
    last = records[-1]
    f = last.fairness
    return {
        "algorithm": algorithm, "dataset": dataset,
        "eligible_ratio": eligible_ratio, "loss_ratio": loss_ratio,
        "sample_acc": last.sample_accuracy,
        "average": f.average, "best10": f.best10, "worst10": f.worst10, "variance": f.variance,
        "status": "ok",
    }


def emit_summary(rows: list[dict], path: str | Path) -> Path:
    out = [SUMMARY_COLUMNS]
    for row in rows:
        line = []
        for col in SUMMARY_COLUMNS:
            v = row.get(col)
            line.append(_fmt(v) if isinstance(v, float) else ("" if v is None else str(v)))
        out.append(line)
    _atomic_write(Path(path), out)
    return Path(path)
